//! Distillation cross-entropy between posterior lattices.

use super::lattice::PosteriorLattice;
use crate::error::{MtlabError, Result};
use crate::numerics::Array3;

#[derive(Clone, Debug)]
pub struct KdOutput {
    pub loss: f64,
    /// `∂loss/∂student_logits`; the teacher is a constant.
    pub grad_logits: Array3,
}

/// `−Σ_{t,u,k} p_teacher · ln q_student` over every cell and class.
/// Per cell the gradient wrt the student logits is `q − p`.
pub fn kd_loss(teacher: &PosteriorLattice, student: &PosteriorLattice) -> Result<KdOutput> {
    if teacher.0.dims() != student.0.dims() {
        return Err(MtlabError::Shape(format!(
            "teacher lattice {:?} vs student lattice {:?}",
            teacher.0.dims(),
            student.0.dims()
        )));
    }
    let (t, u, k) = student.0.dims();
    let mut grad = Array3::zeros(t, u, k);
    let mut loss = 0.0;
    for ((g, &tp), &sq) in grad
        .as_mut_slice()
        .iter_mut()
        .zip(teacher.0.as_slice())
        .zip(student.0.as_slice())
    {
        let p = tp.exp();
        loss -= p * sq;
        *g = sq.exp() - p;
    }
    Ok(KdOutput {
        loss,
        grad_logits: grad,
    })
}

/// Total Shannon entropy of a lattice, `−Σ p ln p` (nats).
pub fn lattice_entropy(post: &PosteriorLattice) -> f64 {
    -post
        .0
        .as_slice()
        .iter()
        .map(|&lp| if lp.exp() > 0.0 { lp.exp() * lp } else { 0.0 })
        .sum::<f64>()
}
