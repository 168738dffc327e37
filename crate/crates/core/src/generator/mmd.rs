use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise squared distance of the pooled sample.
    Auto,
    Fixed(f64),
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x - y).as_f64();
            d * d
        })
        .sum()
}

fn median_bandwidth<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> f64 {
    let rows: Vec<&[T]> = (0..a.rows()).map(|i| a.row(i)).chain((0..b.rows()).map(|i| b.row(i))).collect();
    let mut d = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            d.push(sq_dist(rows[i], rows[j]));
        }
    }
    let mid = d.len() / 2;
    let (_, &mut m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn sorted_sum(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.into_iter().sum()
}

/// Unbiased MMD² between the row samples `a` and `b` under the kernel
/// `exp(-|x - y|² / h)`.
pub fn mmd_rbf<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>, bandwidth: Bandwidth) -> Result<f64> {
    if a.rows() < 2 || b.rows() < 2 {
        return Err(Error::SampleSize(format!(
            "MMD needs at least 2 rows per sample, got {} and {}",
            a.rows(),
            b.rows()
        )));
    }
    if a.cols() != b.cols() {
        return Err(Error::Dimension {
            op: "mmd_rbf",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let h = match bandwidth {
        Bandwidth::Auto => median_bandwidth(a, b),
        Bandwidth::Fixed(h) if h > 0.0 && h.is_finite() => h,
        Bandwidth::Fixed(h) => return Err(Error::Config(format!("bandwidth {h} must be positive"))),
    };
    let k = |x: &[T], y: &[T]| (-sq_dist(x, y) / h).exp();
    let (m, n) = (a.rows(), b.rows());
    if m == n {
        let mut terms = Vec::with_capacity(m * (m - 1));
        for i in 0..m {
            for j in 0..m {
                if i != j {
                    let same = k(a.row(i), a.row(j)) + k(b.row(i), b.row(j));
                    let cross = k(a.row(i), b.row(j)) + k(a.row(j), b.row(i));
                    terms.push(same - cross);
                }
            }
        }
        return Ok(sorted_sum(terms) / (m * (m - 1)) as f64);
    }
    let within = |s: &Matrix<T>| {
        let r = s.rows();
        let mut v = Vec::with_capacity(r * (r - 1) / 2);
        for i in 0..r {
            for j in i + 1..r {
                v.push(k(s.row(i), s.row(j)));
            }
        }
        2.0 * sorted_sum(v) / (r * (r - 1)) as f64
    };
    let mut cross = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            cross.push(k(a.row(i), b.row(j)));
        }
    }
    Ok(within(a) + within(b) - 2.0 * sorted_sum(cross) / (m * n) as f64)
}
