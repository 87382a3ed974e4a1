//! Central finite-difference gradient checking.

use super::params::{Gradients, ParamStore};
use serde::Serialize;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    pub eps: f64,
    pub tol: f64,
    /// Relative errors are taken against `max(|analytic|, |numeric|, floor)`;
    /// entries whose true gradient is tiny are thus compared absolutely, where
    /// f64 cancellation noise would otherwise dominate.
    pub floor: f64,
    /// Check at most this many entries per parameter (evenly strided).
    pub max_entries_per_param: Option<usize>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-5,
            tol: 1e-4,
            floor: 1e-5,
            max_entries_per_param: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tol: f64,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compare `grad_fn` against central differences of `loss_fn`, parameter by
/// parameter. The store is restored bitwise before returning.
pub fn grad_check(
    store: &mut ParamStore,
    loss_fn: &mut dyn FnMut(&ParamStore) -> f64,
    grad_fn: &mut dyn FnMut(&ParamStore) -> Gradients,
    config: GradCheckConfig,
) -> GradCheckReport {
    let analytic = grad_fn(store);
    assert_eq!(analytic.0.len(), store.len(), "gradient buffer layout");
    let mut params = Vec::with_capacity(store.len());
    let names: Vec<String> = store.iter().map(|p| p.name.clone()).collect();

    for (pi, name) in names.into_iter().enumerate() {
        let n = analytic.0[pi].len();
        let stride = match config.max_entries_per_param {
            Some(m) if m > 0 && n > m => n.div_ceil(m),
            _ => 1,
        };
        let mut check = ParamCheck {
            name,
            checked: 0,
            max_rel_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for e in (0..n).step_by(stride) {
            let orig = value_at(store, pi, e);
            set_value(store, pi, e, orig + config.eps);
            let lp = loss_fn(store);
            set_value(store, pi, e, orig - config.eps);
            let lm = loss_fn(store);
            set_value(store, pi, e, orig);
            let numeric = (lp - lm) / (2.0 * config.eps);
            let a = analytic.0[pi].as_slice()[e];
            let err = relative_error(a, numeric, config.floor);
            check.checked += 1;
            if err > check.max_rel_err || !err.is_finite() {
                check.max_rel_err = if err.is_finite() { err } else { f64::INFINITY };
                check.worst_index = e;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        params.push(check);
    }
    let max_rel_err = params.iter().fold(0.0f64, |m, p| m.max(p.max_rel_err));
    GradCheckReport {
        passed: max_rel_err <= config.tol,
        params,
        max_rel_err,
        tol: config.tol,
    }
}

fn value_at(store: &ParamStore, pi: usize, e: usize) -> f64 {
    store.iter().nth(pi).expect("param index").value.as_slice()[e]
}

fn set_value(store: &mut ParamStore, pi: usize, e: usize, v: f64) {
    store.iter_mut().nth(pi).expect("param index").value.as_mut_slice()[e] = v;
}
