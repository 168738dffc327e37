//! Forward kernels on dense matrices.
//!
//! These are the only places values are computed; the tape calls the same
//! functions, so taped and untaped forward passes agree bit for bit.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

/// Smallest probability admitted inside a logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

pub fn matmul<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.rows() {
        return Err(Error::Dimension {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(m, n);
    let bd = b.as_slice();
    let od = out.as_mut_slice();
    for i in 0..m {
        let arow = a.row(i);
        let orow = &mut od[i * n..(i + 1) * n];
        for (p, &aip) in arow.iter().enumerate().take(k) {
            if aip == T::zero() {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    Ok(out)
}

/// `aᵀ · b` without materializing the transpose.
pub fn matmul_tn<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension {
            op: "matmul_tn",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (p, q) = (a.cols(), b.cols());
    let mut out = Matrix::zeros(p, q);
    let od = out.as_mut_slice();
    for r in 0..a.rows() {
        let brow = b.row(r);
        for (i, &ari) in a.row(r).iter().enumerate() {
            if ari == T::zero() {
                continue;
            }
            let orow = &mut od[i * q..(i + 1) * q];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += ari * bv;
            }
        }
    }
    Ok(out)
}

/// `a · bᵀ` without materializing the transpose.
pub fn matmul_nt<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.cols() != b.cols() {
        return Err(Error::Dimension {
            op: "matmul_nt",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (m, n) = (a.rows(), b.rows());
    let mut out = Matrix::zeros(m, n);
    for i in 0..m {
        let arow = a.row(i);
        for j in 0..n {
            let mut acc = T::zero();
            for (&x, &y) in arow.iter().zip(b.row(j)) {
                acc += x * y;
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

pub fn add<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.ensure_shape("add", b)?;
    let mut out = a.clone();
    for (o, &v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o += v;
    }
    Ok(out)
}

pub fn sub<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    a.ensure_shape("sub", b)?;
    let mut out = a.clone();
    for (o, &v) in out.as_mut_slice().iter_mut().zip(b.as_slice()) {
        *o -= v;
    }
    Ok(out)
}

/// Adds the `1 × cols` row vector `bias` to every row of `m`.
pub fn add_bias<T: Scalar>(m: &Matrix<T>, bias: &Matrix<T>) -> Result<Matrix<T>> {
    if bias.rows() != 1 || bias.cols() != m.cols() {
        return Err(Error::Dimension {
            op: "add_bias",
            lhs: m.shape(),
            rhs: bias.shape(),
        });
    }
    let mut out = m.clone();
    let b = bias.as_slice();
    for i in 0..out.rows() {
        for (o, &bv) in out.row_mut(i).iter_mut().zip(b) {
            *o += bv;
        }
    }
    Ok(out)
}

pub fn relu<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    m.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn scale<T: Scalar>(m: &Matrix<T>, c: T) -> Matrix<T> {
    m.map(|v| v * c)
}

pub fn concat_cols<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != b.rows() {
        return Err(Error::Dimension {
            op: "concat_cols",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let cols = a.cols() + b.cols();
    let mut data = Vec::with_capacity(a.rows() * cols);
    for i in 0..a.rows() {
        data.extend_from_slice(a.row(i));
        data.extend_from_slice(b.row(i));
    }
    Matrix::from_vec(a.rows(), cols, data)
}

/// Row-wise softmax with per-row max subtraction.
pub fn softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

/// Row-wise log-softmax, computed as `z - max - ln Σ exp(z - max)`.
pub fn log_softmax_rows<T: Scalar>(m: &Matrix<T>) -> Matrix<T> {
    let mut out = m.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}

pub(crate) fn check_labels<T: Scalar>(m: &Matrix<T>, labels: &[usize], op: &'static str) -> Result<()> {
    if m.rows() != labels.len() {
        return Err(Error::Dimension {
            op,
            lhs: m.shape(),
            rhs: (labels.len(), 1),
        });
    }
    if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= m.cols()) {
        return Err(Error::Index(format!(
            "{op}: label {y} at row {i} out of range for {} classes",
            m.cols()
        )));
    }
    Ok(())
}

pub(crate) fn check_weights(rows: usize, weights: Option<&[f64]>, op: &'static str) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != rows {
            return Err(Error::Dimension {
                op,
                lhs: (rows, 1),
                rhs: (w.len(), 1),
            });
        }
    }
    Ok(())
}

/// Normalizer for a (possibly weighted) row mean.
pub(crate) fn weight_total<T: Scalar>(rows: usize, weights: Option<&[f64]>) -> T {
    match weights {
        Some(w) => T::lit(w.iter().sum()),
        None => T::lit(rows as f64),
    }
}

/// Mean over rows of `-ln probs[i, labels[i]]`, logs clamped at `ln 1e-12`.
pub fn cross_entropy<T: Scalar>(
    probs: &Matrix<T>,
    labels: &[usize],
    weights: Option<&[f64]>,
) -> Result<T> {
    check_labels(probs, labels, "cross_entropy")?;
    check_weights(probs.rows(), weights, "cross_entropy")?;
    let floor = T::lit(PROB_FLOOR).ln();
    let mut total = T::zero();
    for (i, &y) in labels.iter().enumerate() {
        let w = weights.map_or(T::one(), |w| T::lit(w[i]));
        total += w * -(probs[(i, y)].ln().max(floor));
    }
    Ok(total / weight_total(probs.rows(), weights))
}

/// Mean over rows of `Σ_c p ln(p / q)`, with `0 ln 0 = 0` and `q` floored at `1e-12`.
pub fn kl_div_rows<T: Scalar>(p: &Matrix<T>, q: &Matrix<T>) -> Result<T> {
    p.ensure_shape("kl_div_rows", q)?;
    let floor = T::lit(PROB_FLOOR);
    let mut total = T::zero();
    for (&pv, &qv) in p.as_slice().iter().zip(q.as_slice()) {
        if pv > T::zero() {
            total += pv * (pv.max(floor).ln() - qv.max(floor).ln());
        }
    }
    Ok(total / T::lit(p.rows().max(1) as f64))
}
