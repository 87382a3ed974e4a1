//! Layers with hand-derived backward passes.
//!
//! Each layer only holds [`ParamId`]s; values live in a [`ParamStore`] and
//! gradients are written into a [`Gradients`] buffer supplied by the caller.

use super::array::Array2;
use super::params::{Gradients, ParamId, ParamStore};
use rand::Rng;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `y = x·W + b`.
pub fn linear(x: &Array2, w: &Array2, b: Option<&Array2>) -> Array2 {
    let mut y = x.matmul(w);
    if let Some(b) = b {
        y.add_row_broadcast(b);
    }
    y
}

/// Backward of [`linear`]: accumulates `∂W`, `∂b` and returns `∂x`.
pub fn linear_backward(
    x: &Array2,
    w: &Array2,
    dy: &Array2,
    dw: &mut Array2,
    db: Option<&mut Array2>,
) -> Array2 {
    x.t_matmul_acc(dy, dw);
    if let Some(db) = db {
        dy.sum_rows_acc(db);
    }
    dy.matmul_t(w)
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let scale = (1.0 / input as f64).sqrt();
        let w = store.add_uniform(format!("{name}.w"), input, output, scale, rng);
        let b = bias.then(|| store.add(format!("{name}.b"), Array2::zeros(1, output)));
        Self {
            w,
            b,
            input,
            output,
        }
    }

    pub fn forward(&self, store: &ParamStore, x: &Array2) -> Array2 {
        linear(x, store.value(self.w), self.b.map(|b| store.value(b)))
    }

    pub fn backward(
        &self,
        store: &ParamStore,
        x: &Array2,
        dy: &Array2,
        grads: &mut Gradients,
    ) -> Array2 {
        x.t_matmul_acc(dy, grads.get_mut(self.w));
        if let Some(b) = self.b {
            dy.sum_rows_acc(grads.get_mut(b));
        }
        dy.matmul_t(store.value(self.w))
    }
}

#[derive(Clone, Debug)]
pub struct Embedding {
    pub table: ParamId,
    pub vocab: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        vocab: usize,
        dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let table = store.add_uniform(format!("{name}.table"), vocab, dim, 0.5, rng);
        Self { table, vocab, dim }
    }

    pub fn forward(&self, store: &ParamStore, ids: &[usize]) -> Array2 {
        let table = store.value(self.table);
        let rows: Vec<&[f64]> = ids
            .iter()
            .map(|&id| {
                assert!(id < self.vocab, "embedding id {id} out of range {}", self.vocab);
                table.row(id)
            })
            .collect();
        if rows.is_empty() {
            return Array2::zeros(0, self.dim);
        }
        Array2::from_rows(&rows)
    }

    pub fn backward(&self, ids: &[usize], dy: &Array2, grads: &mut Gradients) {
        let g = grads.get_mut(self.table);
        for (i, &id) in ids.iter().enumerate() {
            for (a, &b) in g.row_mut(id).iter_mut().zip(dy.row(i)) {
                *a += b;
            }
        }
    }
}

/// Gated recurrent unit, gate order `[reset, update, new]`:
///
/// ```text
/// r = σ(x·Wᵢᵣ + bᵢᵣ + h·Wₕᵣ + bₕᵣ)
/// z = σ(x·Wᵢ𝓏 + bᵢ𝓏 + h·Wₕ𝓏 + bₕ𝓏)
/// n = tanh(x·Wᵢₙ + bᵢₙ + r ⊙ (h·Wₕₙ + bₕₙ))
/// h' = (1 − z) ⊙ n + z ⊙ h
/// ```
#[derive(Clone, Debug)]
pub struct Gru {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input: usize,
    pub hidden: usize,
}

/// Activations saved by [`Gru::forward_seq`] for the backward pass.
#[derive(Clone, Debug)]
pub struct GruCache {
    x: Array2,
    reverse: bool,
    h_prev: Array2,
    r: Array2,
    z: Array2,
    n: Array2,
    hn: Array2,
}

impl Gru {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let scale = (1.0 / hidden as f64).sqrt();
        Self {
            w_ih: store.add_uniform(format!("{name}.w_ih"), input, 3 * hidden, scale, rng),
            w_hh: store.add_uniform(format!("{name}.w_hh"), hidden, 3 * hidden, scale, rng),
            b_ih: store.add(format!("{name}.b_ih"), Array2::zeros(1, 3 * hidden)),
            b_hh: store.add(format!("{name}.b_hh"), Array2::zeros(1, 3 * hidden)),
            input,
            hidden,
        }
    }

    /// One step for a batch of rows. Row `i` of the result depends only on
    /// row `i` of the inputs, and is bitwise equal to an unbatched call.
    pub fn step_batch(&self, store: &ParamStore, x: &Array2, h_prev: &Array2) -> Array2 {
        assert_eq!(x.cols(), self.input, "gru input dim");
        assert_eq!(h_prev.cols(), self.hidden, "gru hidden dim");
        assert_eq!(x.rows(), h_prev.rows(), "gru batch mismatch");
        let gx = linear(x, store.value(self.w_ih), Some(store.value(self.b_ih)));
        let gh = linear(h_prev, store.value(self.w_hh), Some(store.value(self.b_hh)));
        let hd = self.hidden;
        let mut out = Array2::zeros(x.rows(), hd);
        for b in 0..x.rows() {
            let (gxr, ghr, hp) = (gx.row(b), gh.row(b), h_prev.row(b));
            let o = out.row_mut(b);
            for j in 0..hd {
                let r = sigmoid(gxr[j] + ghr[j]);
                let z = sigmoid(gxr[hd + j] + ghr[hd + j]);
                let n = (gxr[2 * hd + j] + r * ghr[2 * hd + j]).tanh();
                o[j] = (1.0 - z) * n + z * hp[j];
            }
        }
        out
    }

    /// Single recurrent step on vectors.
    pub fn step(&self, store: &ParamStore, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let x = Array2::from_vec(1, x.len(), x.to_vec());
        let h = Array2::from_vec(1, h_prev.len(), h_prev.to_vec());
        self.step_batch(store, &x, &h).into_vec()
    }

    /// Run over all rows of `x` (time-major), from a zero initial state.
    /// With `reverse`, time runs from the last row to the first and output
    /// row `t` is the state after consuming frames `t..T`.
    pub fn forward_seq(&self, store: &ParamStore, x: &Array2, reverse: bool) -> (Array2, GruCache) {
        assert_eq!(x.cols(), self.input, "gru input dim");
        let steps = x.rows();
        let hd = self.hidden;
        let gx = linear(x, store.value(self.w_ih), Some(store.value(self.b_ih)));
        let w_hh = store.value(self.w_hh);
        let b_hh = store.value(self.b_hh);

        let mut out = Array2::zeros(steps, hd);
        let mut h_prev = Array2::zeros(steps, hd);
        let mut r_all = Array2::zeros(steps, hd);
        let mut z_all = Array2::zeros(steps, hd);
        let mut n_all = Array2::zeros(steps, hd);
        let mut hn_all = Array2::zeros(steps, hd);
        let mut h = vec![0.0; hd];
        let mut gh = vec![0.0; 3 * hd];

        for s in 0..steps {
            let t = if reverse { steps - 1 - s } else { s };
            gh.copy_from_slice(b_hh.as_slice());
            for (k, &hk) in h.iter().enumerate() {
                if hk == 0.0 {
                    continue;
                }
                for (g, &w) in gh.iter_mut().zip(w_hh.row(k)) {
                    *g += hk * w;
                }
            }
            let gxr = gx.row(t);
            h_prev.row_mut(t).copy_from_slice(&h);
            for j in 0..hd {
                let r = sigmoid(gxr[j] + gh[j]);
                let z = sigmoid(gxr[hd + j] + gh[hd + j]);
                let hn = gh[2 * hd + j];
                let n = (gxr[2 * hd + j] + r * hn).tanh();
                r_all.set(t, j, r);
                z_all.set(t, j, z);
                n_all.set(t, j, n);
                hn_all.set(t, j, hn);
                h[j] = (1.0 - z) * n + z * h[j];
            }
            out.row_mut(t).copy_from_slice(&h);
        }
        let cache = GruCache {
            x: x.clone(),
            reverse,
            h_prev,
            r: r_all,
            z: z_all,
            n: n_all,
            hn: hn_all,
        };
        (out, cache)
    }

    /// Backpropagation through time. `d_out` is `∂L/∂outputs`; returns `∂L/∂x`.
    pub fn backward_seq(
        &self,
        store: &ParamStore,
        cache: &GruCache,
        d_out: &Array2,
        grads: &mut Gradients,
    ) -> Array2 {
        let steps = cache.x.rows();
        let hd = self.hidden;
        assert_eq!(d_out.shape(), (steps, hd), "gru d_out shape");
        let w_hh = store.value(self.w_hh);

        let mut dgx = Array2::zeros(steps, 3 * hd);
        let mut dgh = Array2::zeros(steps, 3 * hd);
        let mut dh_next = vec![0.0; hd];

        for s in (0..steps).rev() {
            let t = if cache.reverse { steps - 1 - s } else { s };
            let (r, z, n, hn, hp) = (
                cache.r.row(t),
                cache.z.row(t),
                cache.n.row(t),
                cache.hn.row(t),
                cache.h_prev.row(t),
            );
            let dout = d_out.row(t);
            let mut dh_prev = vec![0.0; hd];
            {
                let gxr = dgx.row_mut(t);
                let ghr = dgh.row_mut(t);
                for j in 0..hd {
                    let dh = dout[j] + dh_next[j];
                    let dn = dh * (1.0 - z[j]);
                    let dz = dh * (hp[j] - n[j]);
                    dh_prev[j] = dh * z[j];
                    let da_n = dn * (1.0 - n[j] * n[j]);
                    let dr = da_n * hn[j];
                    let da_z = dz * z[j] * (1.0 - z[j]);
                    let da_r = dr * r[j] * (1.0 - r[j]);
                    gxr[j] = da_r;
                    gxr[hd + j] = da_z;
                    gxr[2 * hd + j] = da_n;
                    ghr[j] = da_r;
                    ghr[hd + j] = da_z;
                    ghr[2 * hd + j] = da_n * r[j];
                }
            }
            let ghr = dgh.row(t);
            for (k, d) in dh_prev.iter_mut().enumerate() {
                *d += super::array::dot(ghr, w_hh.row(k));
            }
            dh_next = dh_prev;
        }

        cache.h_prev.t_matmul_acc(&dgh, grads.get_mut(self.w_hh));
        dgh.sum_rows_acc(grads.get_mut(self.b_hh));
        cache.x.t_matmul_acc(&dgx, grads.get_mut(self.w_ih));
        dgx.sum_rows_acc(grads.get_mut(self.b_ih));
        dgx.matmul_t(store.value(self.w_ih))
    }
}
