//! `MTLAB1` checkpoint container.
//!
//! Layout:
//!
//! ```text
//! "MTLAB1\n"
//! key=value\n            (zero or more, UTF-8, no '\n' or '=' in keys)
//! "\n"                   (blank line ends the header)
//! u32 LE                 number of arrays
//! repeated:
//!   u32 LE name length, name bytes (UTF-8)
//!   u64 LE rows, u64 LE cols
//!   rows·cols f64 LE values, row-major
//! ```
//!
//! Reading then writing reproduces the input bytes exactly.

use super::array::Array2;
use crate::error::{MtlabError, Result};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &str = "MTLAB1";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    /// Header entries in file order.
    pub meta: Vec<(String, String)>,
    pub arrays: Vec<(String, Array2)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string();
        match self.meta.iter_mut().find(|(k, _)| *k == key) {
            Some(entry) => entry.1 = value,
            None => self.meta.push((key, value)),
        }
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self
            .meta(key)
            .ok_or_else(|| MtlabError::Checkpoint(format!("missing header key `{key}`")))?;
        raw.parse()
            .map_err(|_| MtlabError::Checkpoint(format!("bad value `{raw}` for header key `{key}`")))
    }

    pub fn push_array(&mut self, name: impl Into<String>, value: Array2) {
        self.arrays.push((name.into(), value));
    }

    pub fn array(&self, name: &str) -> Option<&Array2> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, a)| a)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC.as_bytes())?;
        w.write_all(b"\n")?;
        for (k, v) in &self.meta {
            if k.is_empty() || k.contains(['=', '\n']) || v.contains('\n') {
                return Err(MtlabError::Checkpoint(format!(
                    "header entry `{k}` cannot be encoded"
                )));
            }
            writeln!(w, "{k}={v}")?;
        }
        w.write_all(b"\n")?;
        let count = u32::try_from(self.arrays.len())
            .map_err(|_| MtlabError::Checkpoint("too many arrays".into()))?;
        w.write_all(&count.to_le_bytes())?;
        for (name, a) in &self.arrays {
            let len = u32::try_from(name.len())
                .map_err(|_| MtlabError::Checkpoint("array name too long".into()))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(a.rows() as u64).to_le_bytes())?;
            w.write_all(&(a.cols() as u64).to_le_bytes())?;
            for v in a.as_slice() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let ck = Self::read_from(&mut cur)?;
        if !cur.is_empty() {
            return Err(MtlabError::Checkpoint(format!(
                "{} trailing bytes after last array",
                cur.len()
            )));
        }
        Ok(ck)
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let magic = read_line(r)?;
        if magic != MAGIC {
            return Err(MtlabError::Checkpoint(format!(
                "bad magic `{magic}`, expected `{MAGIC}`"
            )));
        }
        let mut meta = Vec::new();
        loop {
            let line = read_line(r)?;
            if line.is_empty() {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| MtlabError::Checkpoint(format!("malformed header line `{line}`")))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let count = read_u32(r)? as usize;
        let mut arrays = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let len = read_u32(r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)?;
            let name = String::from_utf8(name)
                .map_err(|_| MtlabError::Checkpoint("array name is not UTF-8".into()))?;
            let rows = read_u64(r)? as usize;
            let cols = read_u64(r)? as usize;
            let n = rows
                .checked_mul(cols)
                .ok_or_else(|| MtlabError::Checkpoint(format!("array `{name}` too large")))?;
            let mut data = Vec::with_capacity(n.min(1 << 24));
            let mut buf = [0u8; 8];
            for _ in 0..n {
                r.read_exact(&mut buf)?;
                data.push(f64::from_le_bytes(buf));
            }
            arrays.push((name, Array2::from_vec(rows, cols, data)));
        }
        Ok(Self { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

fn read_line(r: &mut impl Read) -> Result<String> {
    let mut out = Vec::new();
    let mut b = [0u8; 1];
    loop {
        r.read_exact(&mut b)?;
        if b[0] == b'\n' {
            break;
        }
        out.push(b[0]);
        if out.len() > 1 << 20 {
            return Err(MtlabError::Checkpoint("header line too long".into()));
        }
    }
    String::from_utf8(out).map_err(|_| MtlabError::Checkpoint("header is not UTF-8".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("system", "aft");
        ck.set_meta("epoch", 3);
        ck.push_array("enc.w", Array2::from_fn(2, 3, |i, j| i as f64 - 0.5 * j as f64));
        ck.push_array("empty", Array2::zeros(0, 4));
        ck
    }

    #[test]
    fn header_starts_with_magic() {
        let bytes = sample().to_bytes().unwrap();
        assert!(bytes.starts_with(b"MTLAB1\nsystem=aft\nepoch=3\n\n"));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let ck = sample();
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.meta_parse::<u32>("epoch").unwrap(), 3);
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let mut bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn byte_exact_round_trip(
            vals in prop::collection::vec(any::<f64>(), 0..24),
            cols in 1usize..5,
            key in "[a-z_]{1,8}",
            value in "[ -~&&[^=]]{0,12}",
        ) {
            let rows = vals.len() / cols;
            let data = vals[..rows * cols].to_vec();
            let mut ck = Checkpoint::new();
            ck.set_meta(key, value);
            ck.push_array("a", Array2::from_vec(rows, cols, data));
            let bytes = ck.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }
}
