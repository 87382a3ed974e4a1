//! Logit and posterior lattices, and the joint network that produces them.

use crate::error::{MtlabError, Result};
use crate::numerics::{log_softmax_into, Array2, Array3, Gradients, Linear, ParamStore};
use rand::Rng;

/// Raw joint-network outputs, `T × (U+1) × K̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitLattice(pub Array3);

/// Per-cell log-probabilities, `T × (U+1) × K̃`.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorLattice(pub Array3);

impl LogitLattice {
    pub fn frames(&self) -> usize {
        self.0.dims().0
    }

    pub fn rows(&self) -> usize {
        self.0.dims().1
    }

    pub fn classes(&self) -> usize {
        self.0.dims().2
    }

    pub fn log_softmax(&self) -> PosteriorLattice {
        let (t, u, k) = self.0.dims();
        let mut out = Array3::zeros(t, u, k);
        for a in 0..t {
            for b in 0..u {
                log_softmax_into(self.0.cell(a, b), out.cell_mut(a, b));
            }
        }
        PosteriorLattice(out)
    }
}

impl PosteriorLattice {
    pub fn frames(&self) -> usize {
        self.0.dims().0
    }

    pub fn rows(&self) -> usize {
        self.0.dims().1
    }

    pub fn classes(&self) -> usize {
        self.0.dims().2
    }

    #[inline]
    pub fn logp(&self, t: usize, u: usize, k: usize) -> f64 {
        self.0.get(t, u, k)
    }

    /// Build from probabilities given per cell (tests, oracles).
    pub fn from_probs(probs: Array3) -> Self {
        let (t, u, k) = probs.dims();
        PosteriorLattice(Array3::from_vec(
            t,
            u,
            k,
            probs.into_vec().into_iter().map(f64::ln).collect(),
        ))
    }

    /// Largest deviation of any cell's probability mass from 1.
    pub fn max_normalization_error(&self) -> f64 {
        let (t, u, _) = self.0.dims();
        let mut worst = 0.0f64;
        for a in 0..t {
            for b in 0..u {
                let s: f64 = self.0.cell(a, b).iter().map(|x| x.exp()).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        worst
    }
}

/// `f_joint(h_enc, h_pred) = W_out · tanh(W_enc h_enc + W_pred h_pred + b) + b_out`.
///
/// The encoder projection has no bias, so zeroing the encoder contribution
/// is the same as zeroing its input.
#[derive(Clone, Debug)]
pub struct JointNetwork {
    pub enc_proj: Linear,
    pub pred_proj: Linear,
    pub out: Linear,
}

/// Saved activations for [`JointNetwork::backward`].
#[derive(Clone, Debug)]
pub struct JointCache {
    enc: Array2,
    pred: Array2,
    hidden: Array2,
    frames: usize,
    rows: usize,
}

impl JointNetwork {
    pub fn new(
        store: &mut ParamStore,
        enc_dim: usize,
        pred_dim: usize,
        joint_dim: usize,
        vocab: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            enc_proj: Linear::new(store, "joint.enc", enc_dim, joint_dim, false, rng),
            pred_proj: Linear::new(store, "joint.pred", pred_dim, joint_dim, true, rng),
            out: Linear::new(store, "joint.out", joint_dim, vocab, true, rng),
        }
    }

    pub fn vocab(&self) -> usize {
        self.out.output
    }

    pub fn project_encoder(&self, store: &ParamStore, enc: &Array2) -> Array2 {
        self.enc_proj.forward(store, enc)
    }

    pub fn project_prediction(&self, store: &ParamStore, pred: &Array2) -> Array2 {
        self.pred_proj.forward(store, pred)
    }

    /// Logits for paired rows of already-projected encoder and prediction
    /// states. Row `i` depends only on row `i` of each input.
    pub fn logits_from_projections(
        &self,
        store: &ParamStore,
        enc_proj: &Array2,
        pred_proj: &Array2,
    ) -> Array2 {
        assert_eq!(enc_proj.shape(), pred_proj.shape(), "joint projection shapes");
        let mut hidden = enc_proj.clone();
        for (h, &p) in hidden.as_mut_slice().iter_mut().zip(pred_proj.as_slice()) {
            *h = (*h + p).tanh();
        }
        self.out.forward(store, &hidden)
    }

    /// Logits with the encoder contribution removed (internal-LM estimate).
    pub fn logits_without_encoder(&self, store: &ParamStore, pred_proj: &Array2) -> Array2 {
        let hidden = pred_proj.map(f64::tanh);
        self.out.forward(store, &hidden)
    }

    /// Full lattice for encoder states `T × D_enc` and prediction states
    /// `(U+1) × D_pred`. Cell `(t, u)` depends only on rows `t` and `u`.
    pub fn forward(
        &self,
        store: &ParamStore,
        enc: &Array2,
        pred: &Array2,
    ) -> Result<(LogitLattice, JointCache)> {
        if enc.cols() != self.enc_proj.input || pred.cols() != self.pred_proj.input {
            return Err(MtlabError::Shape(format!(
                "joint expects enc dim {} / pred dim {}, got {} / {}",
                self.enc_proj.input,
                self.pred_proj.input,
                enc.cols(),
                pred.cols()
            )));
        }
        let (frames, rows) = (enc.rows(), pred.rows());
        let e = self.project_encoder(store, enc);
        let p = self.project_prediction(store, pred);
        let jd = e.cols();
        let mut hidden = Array2::zeros(frames * rows, jd);
        for t in 0..frames {
            let et = e.row(t);
            for u in 0..rows {
                let pu = p.row(u);
                for ((h, &a), &b) in hidden.row_mut(t * rows + u).iter_mut().zip(et).zip(pu) {
                    *h = (a + b).tanh();
                }
            }
        }
        let logits = self.out.forward(store, &hidden);
        let lattice = LogitLattice(Array3::from_array2(logits, frames, rows));
        Ok((
            lattice,
            JointCache {
                enc: enc.clone(),
                pred: pred.clone(),
                hidden,
                frames,
                rows,
            },
        ))
    }

    /// Backward from `∂L/∂logits`; returns `(∂L/∂enc, ∂L/∂pred)`.
    pub fn backward(
        &self,
        store: &ParamStore,
        cache: &JointCache,
        d_logits: &Array3,
        grads: &mut Gradients,
    ) -> (Array2, Array2) {
        let (frames, rows) = (cache.frames, cache.rows);
        assert_eq!(
            d_logits.dims(),
            (frames, rows, self.vocab()),
            "joint backward lattice shape"
        );
        let dl = Array2::from_vec(frames * rows, self.vocab(), d_logits.as_slice().to_vec());
        let mut dh = self.out.backward(store, &cache.hidden, &dl, grads);
        for (d, &h) in dh.as_mut_slice().iter_mut().zip(cache.hidden.as_slice()) {
            *d *= 1.0 - h * h;
        }
        let jd = dh.cols();
        let mut de = Array2::zeros(frames, jd);
        let mut dp = Array2::zeros(rows, jd);
        for t in 0..frames {
            for u in 0..rows {
                let src = dh.row(t * rows + u);
                for (a, &b) in de.row_mut(t).iter_mut().zip(src) {
                    *a += b;
                }
                for (a, &b) in dp.row_mut(u).iter_mut().zip(src) {
                    *a += b;
                }
            }
        }
        let d_enc = self.enc_proj.backward(store, &cache.enc, &de, grads);
        let d_pred = self.pred_proj.backward(store, &cache.pred, &dp, grads);
        (d_enc, d_pred)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (ParamStore, JointNetwork, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let joint = JointNetwork::new(&mut store, 4, 3, 5, 6, &mut rng);
        (store, joint, rng)
    }

    fn rand_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> Array2 {
        Array2::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn single_cell_shape() {
        let (store, joint, mut rng) = setup(1);
        let (lat, _) = joint
            .forward(&store, &rand_matrix(1, 4, &mut rng), &rand_matrix(1, 3, &mut rng))
            .unwrap();
        assert_eq!(lat.0.dims(), (1, 1, 6));
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let (store, joint, mut rng) = setup(1);
        let r = joint.forward(&store, &rand_matrix(2, 5, &mut rng), &rand_matrix(1, 3, &mut rng));
        assert!(matches!(r, Err(MtlabError::Shape(_))));
    }

    #[test]
    fn permuting_encoder_rows_permutes_lattice() {
        let (store, joint, mut rng) = setup(2);
        let enc = rand_matrix(4, 4, &mut rng);
        let pred = rand_matrix(3, 3, &mut rng);
        let perm = [2, 0, 3, 1];
        let enc_p = Array2::from_fn(4, 4, |i, j| enc.get(perm[i], j));
        let (a, _) = joint.forward(&store, &enc, &pred).unwrap();
        let (b, _) = joint.forward(&store, &enc_p, &pred).unwrap();
        for t in 0..4 {
            for u in 0..3 {
                assert_eq!(b.0.cell(t, u), a.0.cell(perm[t], u));
            }
        }
    }

    #[test]
    fn matches_cell_by_cell_recomputation() {
        let (store, joint, mut rng) = setup(3);
        let enc = rand_matrix(3, 4, &mut rng);
        let pred = rand_matrix(2, 3, &mut rng);
        let (lat, _) = joint.forward(&store, &enc, &pred).unwrap();
        let we = store.value(joint.enc_proj.w);
        let wp = store.value(joint.pred_proj.w);
        let bp = store.value(joint.pred_proj.b.unwrap());
        let wo = store.value(joint.out.w);
        let bo = store.value(joint.out.b.unwrap());
        for t in 0..3 {
            for u in 0..2 {
                let mut h = vec![0.0; 5];
                for (j, hj) in h.iter_mut().enumerate() {
                    let mut s = bp.get(0, j);
                    for i in 0..4 {
                        s += enc.get(t, i) * we.get(i, j);
                    }
                    for i in 0..3 {
                        s += pred.get(u, i) * wp.get(i, j);
                    }
                    *hj = s.tanh();
                }
                for k in 0..6 {
                    let mut s = bo.get(0, k);
                    for (j, hj) in h.iter().enumerate() {
                        s += hj * wo.get(j, k);
                    }
                    assert!((lat.0.get(t, u, k) - s).abs() < 1e-13);
                }
            }
        }
        // Per-row decoding path agrees with the full lattice.
        let e = joint.project_encoder(&store, &enc);
        let p = joint.project_prediction(&store, &pred);
        let row = joint.logits_from_projections(&store, &e.slice_rows(2, 3), &p.slice_rows(1, 2));
        for k in 0..6 {
            assert!((row.get(0, k) - lat.0.get(2, 1, k)).abs() < 1e-13);
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (store, joint, mut rng) = setup(4);
        let enc = rand_matrix(3, 4, &mut rng);
        let pred = rand_matrix(2, 3, &mut rng);
        let w = Array3::from_fn(3, 2, 6, |_, _, _| rng.gen_range(-1.0..1.0));
        let f = |enc: &Array2, pred: &Array2| -> f64 {
            let (lat, _) = joint.forward(&store, enc, pred).unwrap();
            lat.0.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = joint.forward(&store, &enc, &pred).unwrap();
        let mut grads = store.zero_gradients();
        let (de, dp) = joint.backward(&store, &cache, &w, &mut grads);
        let eps = 1e-6;
        for (x, dx, is_enc) in [(&enc, &de, true), (&pred, &dp, false)] {
            for e in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp.as_mut_slice()[e] += eps;
                xm.as_mut_slice()[e] -= eps;
                let fd = if is_enc {
                    (f(&xp, &pred) - f(&xm, &pred)) / (2.0 * eps)
                } else {
                    (f(&enc, &xp) - f(&enc, &xm)) / (2.0 * eps)
                };
                assert!((fd - dx.as_slice()[e]).abs() < 1e-7);
            }
        }
    }
}
