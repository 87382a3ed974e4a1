//! Transducer loss by forward–backward over the `T × (U+1)` lattice, plus an
//! exhaustive path-enumeration oracle for small lattices.

use super::lattice::PosteriorLattice;
use crate::error::{MtlabError, Result};
use crate::labels::{TokenId, BLANK};
use crate::numerics::{log_add, Array2, Array3, LOG_ZERO};

/// Forward (`alpha`) and backward (`beta`) log-variables, both `T × (U+1)`.
/// `beta(t, u)` includes the terminal blank, so `beta(0, 0) = ln P(y|x)`.
#[derive(Clone, Debug)]
pub struct ForwardBackward {
    pub alpha: Array2,
    pub beta: Array2,
    pub log_likelihood: f64,
}

#[derive(Clone, Debug)]
pub struct RnntOutput {
    pub loss: f64,
    /// `∂loss/∂logits`, same shape as the lattice.
    pub grad_logits: Array3,
}

fn check_inputs(post: &PosteriorLattice, labels: &[TokenId]) -> Result<()> {
    let (frames, rows, classes) = post.0.dims();
    if frames == 0 {
        return Err(MtlabError::ImpossibleAlignment {
            frames,
            labels: labels.len(),
        });
    }
    if rows != labels.len() + 1 {
        return Err(MtlabError::Shape(format!(
            "lattice has {rows} label rows, labels need {}",
            labels.len() + 1
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y == BLANK || y >= classes) {
        return Err(MtlabError::Label(format!(
            "label id {bad} invalid for a {classes}-class lattice"
        )));
    }
    Ok(())
}

pub fn forward_backward(post: &PosteriorLattice, labels: &[TokenId]) -> Result<ForwardBackward> {
    check_inputs(post, labels)?;
    let frames = post.frames();
    let u_max = labels.len();
    let lp = |t: usize, u: usize, k: usize| post.logp(t, u, k);

    let mut alpha = Array2::zeros(frames, u_max + 1);
    for t in 0..frames {
        for u in 0..=u_max {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = LOG_ZERO;
            if t > 0 {
                a = alpha.get(t - 1, u) + lp(t - 1, u, BLANK);
            }
            if u > 0 {
                a = log_add(a, alpha.get(t, u - 1) + lp(t, u - 1, labels[u - 1]));
            }
            alpha.set(t, u, a);
        }
    }
    let log_likelihood = alpha.get(frames - 1, u_max) + lp(frames - 1, u_max, BLANK);

    let mut beta = Array2::zeros(frames, u_max + 1);
    for t in (0..frames).rev() {
        for u in (0..=u_max).rev() {
            let b = if t == frames - 1 && u == u_max {
                lp(t, u, BLANK)
            } else {
                let mut b = LOG_ZERO;
                if t + 1 < frames {
                    b = beta.get(t + 1, u) + lp(t, u, BLANK);
                }
                if u < u_max {
                    b = log_add(b, beta.get(t, u + 1) + lp(t, u, labels[u]));
                }
                b
            };
            beta.set(t, u, b);
        }
    }
    Ok(ForwardBackward {
        alpha,
        beta,
        log_likelihood,
    })
}

/// `−ln Σ_paths P(path)` and its gradient with respect to the logits that
/// produced `post` through a per-cell softmax.
///
/// Per cell: `∂/∂z_k = ŷ_k·γ(t,u) − occ_k(t,u)`, where `γ` is the cell
/// occupancy and `occ_k` the posterior mass leaving the cell through `k`.
pub fn rnnt_loss(post: &PosteriorLattice, labels: &[TokenId]) -> Result<RnntOutput> {
    let fb = forward_backward(post, labels)?;
    let (frames, rows, classes) = post.0.dims();
    let u_max = rows - 1;
    let ll = fb.log_likelihood;
    if !ll.is_finite() {
        return Err(MtlabError::NonFinite(format!("log-likelihood {ll}")));
    }
    let mut grad = Array3::zeros(frames, rows, classes);
    for t in 0..frames {
        for u in 0..rows {
            let a = fb.alpha.get(t, u);
            let gamma = (a + fb.beta.get(t, u) - ll).exp();
            let cell_lp = post.0.cell(t, u);
            let g = grad.cell_mut(t, u);
            if gamma > 0.0 {
                for (gk, &lpk) in g.iter_mut().zip(cell_lp) {
                    *gk = lpk.exp() * gamma;
                }
            }
            let beta_after_blank = if t + 1 < frames {
                Some(fb.beta.get(t + 1, u))
            } else if u == u_max {
                Some(0.0)
            } else {
                None
            };
            if let Some(b) = beta_after_blank {
                g[BLANK] -= (a + cell_lp[BLANK] + b - ll).exp();
            }
            if u < u_max {
                let y = labels[u];
                g[y] -= (a + cell_lp[y] + fb.beta.get(t, u + 1) - ll).exp();
            }
        }
    }
    Ok(RnntOutput {
        loss: -ll,
        grad_logits: grad,
    })
}

pub const BRUTE_FORCE_MAX_FRAMES: usize = 6;
pub const BRUTE_FORCE_MAX_LABELS: usize = 4;

/// Exhaustive enumeration of every monotone path ending with blank at
/// `(T−1, U)`; returns `−ln Σ P(path)`. Only for `T ≤ 6`, `U ≤ 4`.
pub fn rnnt_loss_bruteforce(post: &PosteriorLattice, labels: &[TokenId]) -> Result<f64> {
    let (paths, _) = enumerate_paths(post, labels)?;
    let max = paths.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = paths.iter().map(|p| (p - max).exp()).sum();
    Ok(-(max + s.ln()))
}

/// Number of monotone paths the brute-force oracle visits.
pub fn bruteforce_path_count(post: &PosteriorLattice, labels: &[TokenId]) -> Result<usize> {
    Ok(enumerate_paths(post, labels)?.1)
}

fn enumerate_paths(post: &PosteriorLattice, labels: &[TokenId]) -> Result<(Vec<f64>, usize)> {
    check_inputs(post, labels)?;
    let frames = post.frames();
    if frames > BRUTE_FORCE_MAX_FRAMES || labels.len() > BRUTE_FORCE_MAX_LABELS {
        return Err(MtlabError::OracleTooLarge {
            frames,
            labels: labels.len(),
        });
    }
    fn walk(
        post: &PosteriorLattice,
        labels: &[TokenId],
        t: usize,
        u: usize,
        acc: f64,
        out: &mut Vec<f64>,
    ) {
        let frames = post.frames();
        let u_max = labels.len();
        if t == frames - 1 && u == u_max {
            out.push(acc + post.logp(t, u, BLANK));
            return;
        }
        if t + 1 < frames {
            walk(post, labels, t + 1, u, acc + post.logp(t, u, BLANK), out);
        }
        if u < u_max {
            walk(post, labels, t, u + 1, acc + post.logp(t, u, labels[u]), out);
        }
    }
    let mut out = Vec::new();
    walk(post, labels, 0, 0, 0.0, &mut out);
    let n = out.len();
    Ok((out, n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transducer::lattice::LogitLattice;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_post(t: usize, u: usize, k: usize, rng: &mut ChaCha8Rng) -> PosteriorLattice {
        LogitLattice(Array3::from_fn(t, u + 1, k, |_, _, _| rng.gen_range(-2.0..2.0))).log_softmax()
    }

    fn uniform(t: usize, u: usize, k: usize) -> PosteriorLattice {
        PosteriorLattice(Array3::from_fn(t, u + 1, k, |_, _, _| -(k as f64).ln()))
    }

    #[test]
    fn single_frame_no_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let post = random_post(1, 0, 4, &mut rng);
        let out = rnnt_loss(&post, &[]).unwrap();
        assert!((out.loss + post.logp(0, 0, BLANK)).abs() < 1e-15);
    }

    #[test]
    fn single_frame_one_label() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let post = random_post(1, 1, 4, &mut rng);
        let out = rnnt_loss(&post, &[3]).unwrap();
        let want = -post.logp(0, 0, 3) - post.logp(0, 1, BLANK);
        assert!((out.loss - want).abs() < 1e-14);
    }

    #[test]
    fn two_frames_one_label_uniform() {
        // Two paths, each of three uniform steps: 3 ln K − ln 2.
        let k = 5;
        let out = rnnt_loss(&uniform(2, 1, k), &[2]).unwrap();
        let want = 3.0 * (k as f64).ln() - 2f64.ln();
        assert!((out.loss - want).abs() < 1e-13);
    }

    #[test]
    fn errors() {
        let empty = PosteriorLattice(Array3::zeros(0, 2, 4));
        assert!(matches!(
            rnnt_loss(&empty, &[1]),
            Err(MtlabError::ImpossibleAlignment { frames: 0, labels: 1 })
        ));
        assert!(rnnt_loss(&uniform(2, 1, 4), &[0]).is_err());
        assert!(rnnt_loss(&uniform(2, 2, 4), &[1]).is_err());
        assert!(matches!(
            rnnt_loss_bruteforce(&uniform(7, 1, 3), &[1]),
            Err(MtlabError::OracleTooLarge { .. })
        ));
    }

    #[test]
    fn brute_force_path_counts() {
        fn binom(n: usize, k: usize) -> usize {
            (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
        }
        assert_eq!(bruteforce_path_count(&uniform(3, 0, 3), &[]).unwrap(), 1);
        for t in 1..=6 {
            for u in 0..=4 {
                let labels = vec![1; u];
                let n = bruteforce_path_count(&uniform(t, u, 3), &labels).unwrap();
                assert_eq!(n, binom(t + u - 1, u), "T={t} U={u}");
            }
        }
    }

    #[test]
    fn agrees_with_brute_force_on_random_lattices() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let t = rng.gen_range(1..=4);
            let u = rng.gen_range(0..=3);
            let k = rng.gen_range(2..=5);
            let labels: Vec<TokenId> = (0..u).map(|_| rng.gen_range(1..k)).collect();
            let post = random_post(t, u, k, &mut rng);
            let a = rnnt_loss(&post, &labels).unwrap().loss;
            let b = rnnt_loss_bruteforce(&post, &labels).unwrap();
            assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
            assert!(a >= 0.0);
        }
    }

    #[test]
    fn anti_diagonal_occupancy_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let labels = [3, 1, 2];
        let post = random_post(5, 3, 4, &mut rng);
        let fb = forward_backward(&post, &labels).unwrap();
        assert!((fb.beta.get(0, 0) - fb.log_likelihood).abs() < 1e-12);
        for n in 0..(5 + 3) {
            let mut s = 0.0;
            for t in 0..5 {
                if n >= t && n - t <= 3 {
                    s += (fb.alpha.get(t, n - t) + fb.beta.get(t, n - t) - fb.log_likelihood).exp();
                }
            }
            assert!((s - 1.0).abs() < 1e-12, "diagonal {n}: {s}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (t, u, k) = (4, 2, 5);
        let labels = [4, 2];
        let logits = Array3::from_fn(t, u + 1, k, |_, _, _| rng.gen_range(-2.0..2.0));
        let loss_of = |z: &Array3| rnnt_loss(&LogitLattice(z.clone()).log_softmax(), &labels).unwrap().loss;
        let out = rnnt_loss(&LogitLattice(logits.clone()).log_softmax(), &labels).unwrap();
        let eps = 1e-5;
        for e in 0..logits.as_slice().len() {
            let mut zp = logits.clone();
            let mut zm = logits.clone();
            zp.as_mut_slice()[e] += eps;
            zm.as_mut_slice()[e] -= eps;
            let fd = (loss_of(&zp) - loss_of(&zm)) / (2.0 * eps);
            let an = out.grad_logits.as_slice()[e];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            assert!(rel <= 1e-4, "elem {e}: {an} vs {fd}");
        }
    }
}
