//! Named parameter storage with gradient accumulators.

use super::array::Array2;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

/// Index of a parameter inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Array2,
    pub grad: Array2,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Array2) -> Self {
        let grad = Array2::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
        }
    }
}

/// Ordered parameter collection. The insertion order is the canonical order
/// for checkpoints, gradient reduction and the optimizer.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2) -> ParamId {
        let name = name.into();
        assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        self.params.push(Parameter::new(name, value));
        ParamId(self.params.len() - 1)
    }

    /// Uniform(-scale, scale) initialisation.
    pub fn add_uniform(
        &mut self,
        name: impl Into<String>,
        rows: usize,
        cols: usize,
        scale: f64,
        rng: &mut impl Rng,
    ) -> ParamId {
        let value = if scale > 0.0 {
            let dist = Uniform::new_inclusive(-scale, scale);
            Array2::from_fn(rows, cols, |_, _| dist.sample(rng))
        } else {
            Array2::zeros(rows, cols)
        };
        self.add(name, value)
    }

    #[inline]
    pub fn value(&self, id: ParamId) -> &Array2 {
        &self.params[id.0].value
    }

    #[inline]
    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2 {
        &mut self.params[id.0].value
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Fresh zeroed gradient buffer aligned with this store.
    pub fn zero_gradients(&self) -> Gradients {
        Gradients(
            self.params
                .iter()
                .map(|p| Array2::zeros(p.value.rows(), p.value.cols()))
                .collect(),
        )
    }

    /// Add a buffer into the stored accumulators.
    pub fn accumulate(&mut self, grads: &Gradients) {
        assert_eq!(grads.0.len(), self.params.len());
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            p.grad.add_assign(g);
        }
    }

    pub fn grads(&self) -> Gradients {
        Gradients(self.params.iter().map(|p| p.grad.clone()).collect())
    }
}

/// A gradient buffer laid out like a [`ParamStore`]; per-sample backward passes
/// write here so samples can run concurrently.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients(pub Vec<Array2>);

impl Gradients {
    #[inline]
    pub fn get_mut(&mut self, id: ParamId) -> &mut Array2 {
        &mut self.0[id.0]
    }

    #[inline]
    pub fn get(&self, id: ParamId) -> &Array2 {
        &self.0[id.0]
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.0.iter_mut().for_each(|a| a.scale(s));
    }

    pub fn global_norm(&self) -> f64 {
        self.0.iter().map(Array2::sum_squares).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.0.iter().all(Array2::all_finite)
    }
}
