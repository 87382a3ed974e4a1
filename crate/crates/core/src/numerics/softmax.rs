//! Log-domain helpers: stabilized log-softmax and log-sum-exp.

/// Stand-in for `ln 0` in lattice arithmetic. Large enough that `exp` of any
/// difference against it underflows to zero, small enough that sums of a few
/// of them stay finite.
pub const LOG_ZERO: f64 = -1.0e30;

/// `ln(eᵃ + eᵇ)` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a <= LOG_ZERO {
        return b;
    }
    if b <= LOG_ZERO {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || max <= LOG_ZERO {
        return if max.is_nan() { f64::NAN } else { LOG_ZERO };
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// Log-softmax of `z` written into `out`, max-subtracted.
pub fn log_softmax_into(z: &[f64], out: &mut [f64]) {
    debug_assert_eq!(z.len(), out.len());
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for &x in z {
        s += (x - max).exp();
    }
    let lse = max + s.ln();
    for (o, &x) in out.iter_mut().zip(z) {
        *o = x - lse;
    }
}

pub fn log_softmax(z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    log_softmax_into(z, &mut out);
    out
}

/// Backward of `logp = log_softmax(z)`: given `∂L/∂logp`, returns `∂L/∂z`.
///
/// `∂L/∂z_k = g_k − p_k Σ_j g_j`.
pub fn log_softmax_backward(logp: &[f64], grad_logp: &[f64], grad_z: &mut [f64]) {
    let total: f64 = grad_logp.iter().sum();
    for ((gz, &lp), &g) in grad_z.iter_mut().zip(logp).zip(grad_logp) {
        *gz = g - lp.exp() * total;
    }
}
