use super::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Mean negative log-likelihood of the true class over `mask`, taken from
/// row-softmaxed `logits`. Returns the loss and its gradient w.r.t. the logits.
pub fn cross_entropy(
    logits: &DenseMatrix,
    labels: &[Option<usize>],
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if mask.is_empty() {
        return Err(Error::EmptyMask("cross_entropy"));
    }
    let probs = logits.row_softmax();
    let scale = 1.0 / mask.len() as f64;
    let mut grad = DenseMatrix::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &v in mask {
        let y = labels
            .get(v)
            .copied()
            .flatten()
            .ok_or(Error::Unlabeled(v))?;
        if y >= logits.cols() {
            return Err(Error::shape(
                "cross_entropy",
                format!("label {y} >= {} classes", logits.cols()),
            ));
        }
        loss -= probs.get(v, y).max(PROB_FLOOR).ln();
        let g = grad.row_mut(v);
        for (gi, &p) in g.iter_mut().zip(probs.row(v)) {
            *gi = p * scale;
        }
        g[y] -= scale;
    }
    Ok((loss * scale, grad))
}

/// Sum over `mask` of the Euclidean distance between student and teacher
/// rows, with the gradient w.r.t. the student. Rows that coincide exactly
/// get subgradient zero.
pub fn l2_distill_loss(
    student: &DenseMatrix,
    teacher: &DenseMatrix,
    mask: &[usize],
) -> Result<(f64, DenseMatrix)> {
    if student.shape() != teacher.shape() {
        return Err(Error::shape(
            "l2_distill_loss",
            format!(
                "student {:?} vs teacher {:?}",
                student.shape(),
                teacher.shape()
            ),
        ));
    }
    if mask.is_empty() {
        return Err(Error::EmptyMask("l2_distill_loss"));
    }
    let mut grad = DenseMatrix::zeros(student.rows(), student.cols());
    let mut loss = 0.0;
    for &v in mask {
        let norm = student
            .row(v)
            .iter()
            .zip(teacher.row(v))
            .map(|(s, t)| (s - t) * (s - t))
            .sum::<f64>()
            .sqrt();
        loss += norm;
        if norm > 0.0 {
            for ((g, s), t) in grad
                .row_mut(v)
                .iter_mut()
                .zip(student.row(v))
                .zip(teacher.row(v))
            {
                *g = (s - t) / norm;
            }
        }
    }
    Ok((loss, grad))
}
