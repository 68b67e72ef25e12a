//! Link-prediction scoring functions and their analytic gradients.
//!
//! Complex-valued vectors are stored interleaved: `[re₀, im₀, re₁, im₁, …]`.

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

/// Distance used by TransE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Norm {
    L1,
    L2,
}

/// Gradient of a score with respect to each argument.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrad {
    pub head: Vec<f64>,
    pub predicate: Vec<f64>,
    pub tail: Vec<f64>,
}

fn check_same(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(())
}

fn check_three(h: &[f64], p: &[f64], t: &[f64]) -> Result<()> {
    check_same(h, p)?;
    check_same(h, t)
}

fn check_complex(h: &[f64], p: &[f64], t: &[f64]) -> Result<()> {
    check_three(h, p, t)?;
    if !h.len().is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "complex-interleaved vectors need an even dimension, got {}",
            h.len()
        )));
    }
    Ok(())
}

/// `−‖h + p − t‖` under the chosen norm.
pub fn score_transe(h: &[f64], p: &[f64], t: &[f64], norm: Norm) -> Result<f64> {
    check_three(h, p, t)?;
    Ok(transe(h, p, t, norm))
}

pub(crate) fn transe(h: &[f64], p: &[f64], t: &[f64], norm: Norm) -> f64 {
    let residual = h.iter().zip(p).zip(t).map(|((h, p), t)| h + p - t);
    match norm {
        Norm::L1 => -residual.map(f64::abs).sum::<f64>(),
        Norm::L2 => -residual.map(|r| r * r).sum::<f64>().sqrt(),
    }
}

pub fn transe_grad(h: &[f64], p: &[f64], t: &[f64], norm: Norm) -> Result<ScoreGrad> {
    check_three(h, p, t)?;
    let r: Vec<f64> = h.iter().zip(p).zip(t).map(|((h, p), t)| h + p - t).collect();
    // ∂f/∂h = ∂f/∂p = −∂‖r‖/∂r, ∂f/∂t = +∂‖r‖/∂r
    let d: Vec<f64> = match norm {
        Norm::L1 => r.iter().map(|&v| if v == 0.0 { 0.0 } else { v.signum() }).collect(),
        Norm::L2 => {
            let n = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n == 0.0 {
                vec![0.0; r.len()]
            } else {
                r.iter().map(|v| v / n).collect()
            }
        }
    };
    let neg: Vec<f64> = d.iter().map(|v| -v).collect();
    Ok(ScoreGrad {
        head: neg.clone(),
        predicate: neg,
        tail: d,
    })
}

/// `Σᵢ hᵢ·pᵢ·tᵢ`
pub fn score_distmult(h: &[f64], p: &[f64], t: &[f64]) -> Result<f64> {
    check_three(h, p, t)?;
    Ok(distmult(h, p, t))
}

pub(crate) fn distmult(h: &[f64], p: &[f64], t: &[f64]) -> f64 {
    // p·(h·t) keeps the value bit-identical under h ↔ t
    h.iter().zip(p).zip(t).map(|((h, p), t)| p * (h * t)).sum()
}

pub fn distmult_grad(h: &[f64], p: &[f64], t: &[f64]) -> Result<ScoreGrad> {
    check_three(h, p, t)?;
    Ok(ScoreGrad {
        head: p.iter().zip(t).map(|(p, t)| p * t).collect(),
        predicate: h.iter().zip(t).map(|(h, t)| h * t).collect(),
        tail: h.iter().zip(p).map(|(h, p)| h * p).collect(),
    })
}

/// `Re(Σᵢ hᵢ·pᵢ·conj(tᵢ))` over interleaved complex slots.
pub fn score_complex(h: &[f64], p: &[f64], t: &[f64]) -> Result<f64> {
    check_complex(h, p, t)?;
    Ok(complex(h, p, t))
}

pub(crate) fn complex(h: &[f64], p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in (0..h.len()).step_by(2) {
        let (a, b) = (h[k], h[k + 1]);
        let (c, d) = (p[k], p[k + 1]);
        let (e, f) = (t[k], t[k + 1]);
        s += (a * c - b * d) * e + (a * d + b * c) * f;
    }
    s
}

pub fn complex_grad(h: &[f64], p: &[f64], t: &[f64]) -> Result<ScoreGrad> {
    check_complex(h, p, t)?;
    let n = h.len();
    let mut g = ScoreGrad {
        head: vec![0.0; n],
        predicate: vec![0.0; n],
        tail: vec![0.0; n],
    };
    for k in (0..n).step_by(2) {
        let (a, b) = (h[k], h[k + 1]);
        let (c, d) = (p[k], p[k + 1]);
        let (e, f) = (t[k], t[k + 1]);
        g.head[k] = c * e + d * f;
        g.head[k + 1] = -d * e + c * f;
        g.predicate[k] = a * e + b * f;
        g.predicate[k + 1] = -b * e + a * f;
        g.tail[k] = a * c - b * d;
        g.tail[k + 1] = a * d + b * c;
    }
    Ok(g)
}

/// Tolerance on `|pₖ| = 1` for RotatE predicates.
pub const UNIT_MODULUS_TOL: f64 = 1e-6;

/// `−‖h∘p − t‖₂` where `∘` is slotwise complex multiplication and every slot
/// of `p` has unit modulus.
pub fn score_rotate(h: &[f64], p: &[f64], t: &[f64]) -> Result<f64> {
    check_complex(h, p, t)?;
    for k in (0..p.len()).step_by(2) {
        let modulus = p[k].hypot(p[k + 1]);
        if (modulus - 1.0).abs() > UNIT_MODULUS_TOL {
            return Err(Error::invalid(format!(
                "RotatE predicate slot {} has modulus {modulus}, expected 1",
                k / 2
            )));
        }
    }
    Ok(rotate(h, p, t))
}

pub(crate) fn rotate(h: &[f64], p: &[f64], t: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in (0..h.len()).step_by(2) {
        let (x, y) = rotate_residual(h, p, t, k);
        s += x * x + y * y;
    }
    -s.sqrt()
}

#[inline]
fn rotate_residual(h: &[f64], p: &[f64], t: &[f64], k: usize) -> (f64, f64) {
    let (a, b) = (h[k], h[k + 1]);
    let (c, d) = (p[k], p[k + 1]);
    (a * c - b * d - t[k], a * d + b * c - t[k + 1])
}

/// Gradient of [`score_rotate`] treating every component of `p` as free.
/// See [`rotate_phase_grad`] for the phase parameterization used in training.
pub fn rotate_grad(h: &[f64], p: &[f64], t: &[f64]) -> Result<ScoreGrad> {
    check_complex(h, p, t)?;
    let n = h.len();
    let norm = -rotate(h, p, t);
    let mut g = ScoreGrad {
        head: vec![0.0; n],
        predicate: vec![0.0; n],
        tail: vec![0.0; n],
    };
    if norm == 0.0 {
        return Ok(g);
    }
    for k in (0..n).step_by(2) {
        let (x, y) = rotate_residual(h, p, t, k);
        let (x, y) = (x / norm, y / norm);
        let (a, b) = (h[k], h[k + 1]);
        let (c, d) = (p[k], p[k + 1]);
        g.head[k] = -(x * c + y * d);
        g.head[k + 1] = -(-x * d + y * c);
        g.predicate[k] = -(x * a + y * b);
        g.predicate[k + 1] = -(-x * b + y * a);
        g.tail[k] = x;
        g.tail[k + 1] = y;
    }
    Ok(g)
}

/// Unit-modulus predicate `[cos θ₀, sin θ₀, cos θ₁, …]` from phases.
pub fn phases_to_rotation(phases: &[f64]) -> Vec<f64> {
    phases.iter().flat_map(|th| [th.cos(), th.sin()]).collect()
}

/// `∂ score_rotate / ∂θ` for `p = phases_to_rotation(θ)`.
pub fn rotate_phase_grad(h: &[f64], phases: &[f64], t: &[f64]) -> Result<Vec<f64>> {
    let p = phases_to_rotation(phases);
    let g = rotate_grad(h, &p, t)?;
    // chain rule through (cos θ, sin θ)
    Ok(phases
        .iter()
        .enumerate()
        .map(|(k, th)| -th.sin() * g.predicate[2 * k] + th.cos() * g.predicate[2 * k + 1])
        .collect())
}

/// Bilinear `hᵀ P t`.
pub fn score_rescal(h: &[f64], relation: &Matrix, t: &[f64]) -> Result<f64> {
    if relation.rows() != h.len() {
        return Err(Error::DimensionMismatch {
            expected: h.len(),
            actual: relation.rows(),
        });
    }
    if relation.cols() != t.len() {
        return Err(Error::DimensionMismatch {
            expected: t.len(),
            actual: relation.cols(),
        });
    }
    Ok(relation.iter_rows().zip(h).map(|(row, hi)| hi * dot(row, t)).sum())
}

/// Gradients of [`score_rescal`]; `predicate` is the row-major `h tᵀ`.
pub fn rescal_grad(h: &[f64], relation: &Matrix, t: &[f64]) -> Result<ScoreGrad> {
    score_rescal(h, relation, t)?;
    let mut head = vec![0.0; h.len()];
    relation.matvec(t, &mut head);
    let mut tail = vec![0.0; t.len()];
    relation.matvec_t_acc(h, &mut tail);
    let predicate = h.iter().flat_map(|hi| t.iter().map(move |tj| hi * tj)).collect();
    Ok(ScoreGrad { head, predicate, tail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn transe_examples() {
        assert_eq!(
            score_transe(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], Norm::L2).unwrap(),
            0.0
        );
        assert_eq!(
            score_transe(&[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0], Norm::L2).unwrap(),
            -5.0
        );
        assert_eq!(
            score_transe(&[1.0, 2.0], &[0.5, -1.0], &[0.0, 0.0], Norm::L1).unwrap(),
            -2.5
        );
        assert!(score_transe(&[1.0], &[1.0, 2.0], &[0.0], Norm::L1).is_err());
    }

    #[test]
    fn distmult_examples() {
        assert_eq!(score_distmult(&[1.0, 1.0], &[1.0, 1.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(score_distmult(&[4.0, -2.0], &[0.0, 0.0], &[7.0, 1.0]).unwrap(), 0.0);
        assert_eq!(score_distmult(&[1.0, 2.0], &[3.0, -1.0], &[0.5, 2.0]).unwrap(), -2.5);
        assert!(score_distmult(&[1.0], &[1.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn complex_examples() {
        assert_eq!(score_complex(&[0.0, 1.0], &[0.0, 1.0], &[1.0, 0.0]).unwrap(), -1.0);
        assert_eq!(score_complex(&[1.0, 1.0], &[1.0, 0.0], &[1.0, 1.0]).unwrap(), 2.0);
        // zero imaginary parts reduce to DistMult on the real parts
        let h = [0.3, 0.0, -1.2, 0.0];
        let p = [2.0, 0.0, 0.5, 0.0];
        let t = [1.5, 0.0, 0.7, 0.0];
        let dm = score_distmult(&[0.3, -1.2], &[2.0, 0.5], &[1.5, 0.7]).unwrap();
        assert!((score_complex(&h, &p, &t).unwrap() - dm).abs() < 1e-15);
        assert!(score_complex(&[1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn rotate_examples() {
        let h = [0.4, -0.3, 1.0, 2.0];
        assert_eq!(score_rotate(&h, &[1.0, 0.0, 1.0, 0.0], &h).unwrap(), 0.0);
        assert_eq!(score_rotate(&[1.0, 0.0], &[0.0, 1.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = score_rotate(&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((s + 2f64.sqrt()).abs() < 1e-15);
        assert!(score_rotate(&[1.0, 0.0], &[0.5, 0.5], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn rescal_examples() {
        let h = [0.3, -1.0, 2.0];
        let t = [1.0, 4.0, 0.5];
        let s = score_rescal(&h, &Matrix::identity(3), &t).unwrap();
        assert!((s - dot(&h, &t)).abs() < 1e-15);
        let p = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(score_rescal(&[1.0, 0.0], &p, &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(score_rescal(&[1.0, 0.0], &p, &[0.0, 0.0]).unwrap(), 0.0);
        assert!(score_rescal(&[1.0], &p, &[0.0, 1.0]).is_err());
    }

    fn vec_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, n)
    }

    proptest! {
        #[test]
        fn transe_nonpositive(h in vec_strategy(6), p in vec_strategy(6), t in vec_strategy(6)) {
            for norm in [Norm::L1, Norm::L2] {
                let s = score_transe(&h, &p, &t, norm).unwrap();
                prop_assert!(s.is_finite() && s <= 0.0);
            }
        }

        #[test]
        fn distmult_symmetric(h in vec_strategy(6), p in vec_strategy(6), t in vec_strategy(6)) {
            prop_assert_eq!(
                score_distmult(&h, &p, &t).unwrap(),
                score_distmult(&t, &p, &h).unwrap()
            );
        }
    }

    #[test]
    fn complex_is_asymmetric_somewhere() {
        let h = [1.0, 0.5, -0.2, 0.7];
        let p = [0.3, 1.1, 0.9, -0.4];
        let t = [0.2, -0.6, 1.3, 0.1];
        let forward = score_complex(&h, &p, &t).unwrap();
        let backward = score_complex(&t, &p, &h).unwrap();
        assert!((forward - backward).abs() > 1e-3);
    }
}
