use super::matrix::softmax_in_place;
use super::{DenseMatrix, NumericsError};

/// Probabilities are clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]` before taking logs.
pub const PROB_EPSILON: f64 = 1e-12;

/// Mean binary cross-entropy and its gradient with respect to `p`.
pub fn bce_loss(p: &[f64], y: &[f64]) -> Result<(f64, Vec<f64>), NumericsError> {
    if p.len() != y.len() {
        return Err(NumericsError::Shape(format!(
            "bce_loss: {} probabilities vs {} labels",
            p.len(),
            y.len()
        )));
    }
    if p.is_empty() {
        return Ok((0.0, Vec::new()));
    }
    let n = p.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(p.len());
    for (&pi, &yi) in p.iter().zip(y) {
        let q = pi.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON);
        loss -= yi * q.ln() + (1.0 - yi) * (1.0 - q).ln();
        grad.push((-yi / q + (1.0 - yi) / (1.0 - q)) / n);
    }
    Ok((loss / n, grad))
}

/// Mean softmax cross-entropy over score rows; returns the loss and dL/dscores.
pub fn softmax_cross_entropy(
    scores: &DenseMatrix,
    classes: &[usize],
) -> Result<(f64, DenseMatrix), NumericsError> {
    if scores.rows() != classes.len() {
        return Err(NumericsError::Shape(format!(
            "softmax_cross_entropy: {} score rows vs {} labels",
            scores.rows(),
            classes.len()
        )));
    }
    let n = scores.rows().max(1) as f64;
    let mut grad = scores.clone();
    let mut loss = 0.0;
    for (r, &c) in classes.iter().enumerate() {
        let row = grad.row_mut(r);
        if c >= row.len() {
            return Err(NumericsError::Shape(format!(
                "class {c} out of range for {} scores",
                row.len()
            )));
        }
        softmax_in_place(row);
        loss -= row[c].max(PROB_EPSILON).ln();
        row[c] -= 1.0;
        row.iter_mut().for_each(|g| *g /= n);
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{grad_check, seeded_rng};
    use rand::Rng;

    #[test]
    fn bce_half_is_ln2() {
        let (loss, _) = bce_loss(&[0.5], &[1.0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_confident_correct_is_near_zero() {
        let (loss, _) = bce_loss(&[1.0 - PROB_EPSILON], &[1.0]).unwrap();
        assert!(loss < 1e-11);
    }

    #[test]
    fn bce_length_mismatch() {
        assert!(bce_loss(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(21);
        let p: Vec<f64> = (0..7).map(|_| rng.gen_range(0.05..0.95)).collect();
        let y: Vec<f64> = (0..7).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let err = grad_check(|theta| bce_loss(theta, &y).unwrap(), &p, 1e-5).unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn softmax_ce_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(8);
        let raw: Vec<f64> = (0..12).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let classes = vec![0, 1, 1, 0, 1, 0];
        let err = grad_check(
            |theta| {
                let m = DenseMatrix::from_vec(6, 2, theta.to_vec()).unwrap();
                let (l, g) = softmax_cross_entropy(&m, &classes).unwrap();
                (l, g.into_vec())
            },
            &raw,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }
}
