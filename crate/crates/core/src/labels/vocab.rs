//! Token inventory and the three output regimes.
//!
//! Ids `0..K` are the base vocabulary with blank at id 0. The regimes add
//! reserved ids after the base block:
//!
//! | regime | size | extra ids           |
//! |--------|------|---------------------|
//! | single | K    | none                |
//! | tsot   | K+1  | `<sc>` = K          |
//! | aft    | K+2  | `<spk1>` = K, `<spk2>` = K+1 |

use crate::error::{MtlabError, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub type TokenId = usize;

pub const BLANK: TokenId = 0;
pub const BLANK_SYMBOL: &str = "<blank>";
pub const SC_SYMBOL: &str = "<sc>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Single,
    Tsot,
    Aft,
}

impl Regime {
    pub fn extra_tokens(self) -> usize {
        match self {
            Regime::Single => 0,
            Regime::Tsot => 1,
            Regime::Aft => 2,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Single => "single",
            Regime::Tsot => "tsot",
            Regime::Aft => "aft",
        })
    }
}

impl FromStr for Regime {
    type Err = MtlabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Regime::Single),
            "tsot" => Ok(Regime::Tsot),
            "aft" => Ok(Regime::Aft),
            other => Err(MtlabError::Parse(format!("unknown regime `{other}`"))),
        }
    }
}

pub fn prompt_symbol(slot: usize) -> String {
    format!("<spk{}>", slot + 1)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    /// Base symbols, `base[0]` is blank.
    base: Vec<String>,
    regime: Regime,
}

impl Vocabulary {
    /// Base vocabulary of size `k` (blank included) with generated symbols.
    pub fn synthetic(k: usize, regime: Regime) -> Result<Self> {
        if k < 2 {
            return Err(MtlabError::Config(format!(
                "vocabulary needs blank plus at least one token, got K={k}"
            )));
        }
        let mut base = vec![BLANK_SYMBOL.to_string()];
        base.extend((1..k).map(|i| format!("w{i:02}")));
        Ok(Self { base, regime })
    }

    pub fn from_symbols(base: Vec<String>, regime: Regime) -> Result<Self> {
        if base.first().map(String::as_str) != Some(BLANK_SYMBOL) {
            return Err(MtlabError::Config("id 0 must be <blank>".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for s in &base {
            if !seen.insert(s.as_str()) {
                return Err(MtlabError::Config(format!("duplicate symbol `{s}`")));
            }
            if s == SC_SYMBOL || s.starts_with("<spk") || (s.starts_with('<') && s != BLANK_SYMBOL)
            {
                return Err(MtlabError::Config(format!(
                    "reserved symbol `{s}` in base vocabulary"
                )));
            }
        }
        Ok(Self { base, regime })
    }

    pub fn with_regime(&self, regime: Regime) -> Self {
        Self {
            base: self.base.clone(),
            regime,
        }
    }

    /// K: base size including blank.
    pub fn base_size(&self) -> usize {
        self.base.len()
    }

    /// K̃: model output size for this regime.
    pub fn size(&self) -> usize {
        self.base.len() + self.regime.extra_tokens()
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn blank(&self) -> TokenId {
        BLANK
    }

    pub fn sc(&self) -> Option<TokenId> {
        (self.regime == Regime::Tsot).then_some(self.base.len())
    }

    /// Prompt token for speaker slot `slot` (0-based), AFT regime only.
    pub fn prompt(&self, slot: usize) -> Option<TokenId> {
        (self.regime == Regime::Aft && slot < 2).then_some(self.base.len() + slot)
    }

    pub fn prompt_slot(&self, id: TokenId) -> Option<usize> {
        (0..2).find(|&s| self.prompt(s) == Some(id))
    }

    /// A lexical token: in the base vocabulary and not blank.
    pub fn is_lexical(&self, id: TokenId) -> bool {
        id != BLANK && id < self.base.len()
    }

    /// Blank, `<sc>` or a prompt.
    pub fn is_control(&self, id: TokenId) -> bool {
        id < self.size() && !self.is_lexical(id)
    }

    pub fn lexical_ids(&self) -> impl Iterator<Item = TokenId> {
        1..self.base.len()
    }

    pub fn symbol(&self, id: TokenId) -> &str {
        if id < self.base.len() {
            &self.base[id]
        } else if Some(id) == self.sc() {
            SC_SYMBOL
        } else if let Some(slot) = self.prompt_slot(id) {
            ["<spk1>", "<spk2>"][slot]
        } else {
            "<unk>"
        }
    }

    pub fn id_of(&self, symbol: &str) -> Option<TokenId> {
        (0..self.size()).find(|&i| self.symbol(i) == symbol)
    }

    /// Drop control tokens (prompts, `<sc>`, blank) before scoring.
    pub fn strip_control(&self, tokens: &[TokenId]) -> Vec<TokenId> {
        tokens
            .iter()
            .copied()
            .filter(|&t| self.is_lexical(t))
            .collect()
    }

    /// Text form: a header block declaring the reserved ids, then one symbol
    /// per line where the line index (after the header) is the id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::from("#mtlab-vocab v1\n");
        s.push_str(&format!("#regime {}\n", self.regime));
        s.push_str(&format!("#reserved {} {}\n", BLANK_SYMBOL, BLANK));
        if let Some(sc) = self.sc() {
            s.push_str(&format!("#reserved {SC_SYMBOL} {sc}\n"));
        }
        for slot in 0..2 {
            if let Some(p) = self.prompt(slot) {
                s.push_str(&format!("#reserved {} {p}\n", prompt_symbol(slot)));
            }
        }
        s.push_str("#end\n");
        for id in 0..self.size() {
            s.push_str(self.symbol(id));
            s.push('\n');
        }
        s
    }

    pub fn parse_file(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("#mtlab-vocab v1") {
            return Err(MtlabError::Parse("missing `#mtlab-vocab v1` header".into()));
        }
        let mut regime = None;
        let mut reserved = Vec::new();
        for line in lines.by_ref() {
            if line == "#end" {
                break;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some("#regime"), Some(r), None) => regime = Some(r.parse::<Regime>()?),
                (Some("#reserved"), Some(sym), Some(id)) => {
                    let id: usize = id
                        .parse()
                        .map_err(|_| MtlabError::Parse(format!("bad reserved id in `{line}`")))?;
                    reserved.push((sym.to_string(), id));
                }
                _ => return Err(MtlabError::Parse(format!("bad header line `{line}`"))),
            }
        }
        let regime = regime.ok_or_else(|| MtlabError::Parse("header lacks #regime".into()))?;
        let symbols: Vec<String> = lines.map(str::to_string).collect();
        let k = symbols.len().checked_sub(regime.extra_tokens()).ok_or_else(|| {
            MtlabError::Parse("vocabulary shorter than its reserved block".into())
        })?;
        let vocab = Self::from_symbols(symbols[..k].to_vec(), regime)?;
        for (id, sym) in symbols.iter().enumerate() {
            if vocab.symbol(id) != sym {
                return Err(MtlabError::Parse(format!(
                    "line {id}: `{sym}` conflicts with reserved layout"
                )));
            }
        }
        for (sym, id) in reserved {
            if vocab.id_of(&sym) != Some(id) {
                return Err(MtlabError::Parse(format!(
                    "reserved `{sym}` declared at {id}, layout puts it elsewhere"
                )));
            }
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_sizes_and_reserved_ids() {
        let single = Vocabulary::synthetic(20, Regime::Single).unwrap();
        let tsot = single.with_regime(Regime::Tsot);
        let aft = single.with_regime(Regime::Aft);
        assert_eq!((single.size(), tsot.size(), aft.size()), (20, 21, 22));
        assert_eq!(tsot.sc(), Some(20));
        assert_eq!(aft.sc(), None);
        assert_eq!((aft.prompt(0), aft.prompt(1)), (Some(20), Some(21)));
        assert_eq!(single.prompt(0), None);
        assert!(aft.is_control(0) && aft.is_control(21) && !aft.is_control(5));
        assert_eq!(aft.symbol(21), "<spk2>");
        assert_eq!(aft.strip_control(&[20, 3, 4, 21, 0]), vec![3, 4]);
    }

    #[test]
    fn file_round_trip_and_rejections() {
        for regime in [Regime::Single, Regime::Tsot, Regime::Aft] {
            let v = Vocabulary::synthetic(6, regime).unwrap();
            let text = v.to_file_string();
            assert_eq!(Vocabulary::parse_file(&text).unwrap(), v);
        }
        let bad = "#mtlab-vocab v1\n#regime single\n#end\nfoo\nbar\n";
        assert!(Vocabulary::parse_file(bad).is_err());
        assert!(Vocabulary::from_symbols(
            vec!["<blank>".into(), "<sc>".into()],
            Regime::Single
        )
        .is_err());
    }
}
