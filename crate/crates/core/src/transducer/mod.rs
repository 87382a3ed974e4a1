//! The transducer lattice: joint scoring, forward–backward loss with its
//! analytic gradient, the brute-force path oracle, and lattice distillation.

pub mod dump;
pub mod kd;
pub mod lattice;
pub mod loss;

pub use kd::{kd_loss, lattice_entropy, KdOutput};
pub use lattice::{JointCache, JointNetwork, LogitLattice, PosteriorLattice};
pub use loss::{
    bruteforce_path_count, forward_backward, rnnt_loss, rnnt_loss_bruteforce, ForwardBackward,
    RnntOutput,
};

use serde::{Deserialize, Serialize};

/// Loss components for one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Per-speaker transducer losses, in slot order.
    pub per_speaker: Vec<f64>,
    /// Sum of `per_speaker`.
    pub rnnt: f64,
    /// Summed distillation loss (0 when distillation is off).
    pub kd: f64,
    pub lambda: f64,
    /// `rnnt + lambda · kd`
    pub combined: f64,
}

impl LossReport {
    pub fn new(per_speaker: Vec<f64>, kd: f64, lambda: f64) -> Self {
        let rnnt = per_speaker.iter().sum::<f64>();
        Self {
            combined: rnnt + lambda * kd,
            per_speaker,
            rnnt,
            kd,
            lambda,
        }
    }

    pub fn rnnt_only(per_speaker: Vec<f64>) -> Self {
        Self::new(per_speaker, 0.0, 0.0)
    }
}
