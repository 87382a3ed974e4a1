use crate::error::{MtlabError, Result};
use crate::numerics::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Global gain plus time and feature masking, applied to mixtures at
/// training time only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub enabled: bool,
    pub gain_min: f64,
    pub gain_max: f64,
    pub time_masks: usize,
    pub time_mask_width: usize,
    pub freq_masks: usize,
    pub freq_mask_width: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            gain_min: 0.8,
            gain_max: 1.25,
            time_masks: 1,
            time_mask_width: 2,
            freq_masks: 1,
            freq_mask_width: 2,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain_min > 0.0 && self.gain_min <= self.gain_max && self.gain_max.is_finite()) {
            return Err(MtlabError::Config("need 0 < gain_min <= gain_max".into()));
        }
        Ok(())
    }
}

/// Returns the augmented copy of `features`. Each mask has a width drawn
/// uniformly from `0..=max_width` and a uniform start; masks may overlap.
pub fn augment(features: &Array2, rng: &mut impl Rng, config: &AugmentConfig) -> Array2 {
    if !config.enabled {
        return features.clone();
    }
    let gain = rng.gen_range(config.gain_min..=config.gain_max);
    let mut out = features.map(|x| x * gain);
    let (frames, dims) = out.shape();
    for _ in 0..config.time_masks {
        let w = rng.gen_range(0..=config.time_mask_width.min(frames));
        let start = rng.gen_range(0..=frames - w);
        for t in start..start + w {
            out.row_mut(t).fill(0.0);
        }
    }
    for _ in 0..config.freq_masks {
        let w = rng.gen_range(0..=config.freq_mask_width.min(dims));
        let start = rng.gen_range(0..=dims - w);
        for t in 0..frames {
            out.row_mut(t)[start..start + w].fill(0.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn nonzero(rows: usize, cols: usize, seed: u64) -> Array2 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_fn(rows, cols, |_, _| rng.gen_range(0.5..1.5) * if rng.gen() { 1.0 } else { -1.0 })
    }

    #[test]
    fn disabled_is_identity() {
        let x = nonzero(10, 4, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&x, &mut rng, &AugmentConfig::disabled()), x);
    }

    #[test]
    fn masks_and_gain_bounds_hold() {
        let cfg = AugmentConfig {
            time_masks: 2,
            time_mask_width: 3,
            freq_masks: 2,
            freq_mask_width: 2,
            ..AugmentConfig::default()
        };
        let x = nonzero(20, 8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let y = augment(&x, &mut rng, &cfg);
            let zero_rows: Vec<usize> = (0..20).filter(|&t| y.row(t).iter().all(|&v| v == 0.0)).collect();
            let zero_cols: Vec<usize> =
                (0..8).filter(|&f| (0..20).all(|t| y.get(t, f) == 0.0)).collect();
            assert!(zero_rows.len() <= cfg.time_masks * cfg.time_mask_width);
            assert!(zero_cols.len() <= cfg.freq_masks * cfg.freq_mask_width);
            // Every surviving entry is the input times one common gain.
            let mut gain = None;
            for t in 0..20 {
                for f in 0..8 {
                    let v = y.get(t, f);
                    if v == 0.0 {
                        assert!(zero_rows.contains(&t) || zero_cols.contains(&f));
                        continue;
                    }
                    let g = v / x.get(t, f);
                    assert!((0.8..=1.25).contains(&g));
                    let g0 = *gain.get_or_insert(g);
                    assert!((g - g0).abs() < 1e-12);
                }
            }
        }
    }
}
