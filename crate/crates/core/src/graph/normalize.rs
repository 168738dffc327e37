use crate::graph::Graph;
use crate::scalar::Scalar;
use crate::tensor::SparseCsr;

/// `(D+I)^{-1/2} (A+I) (D+I)^{-1/2}`.
pub fn normalize_gcn<T: Scalar>(g: &Graph<T>) -> SparseCsr<T> {
    let n = g.n();
    let inv_sqrt: Vec<T> = (0..n)
        .map(|v| T::one() / T::lit((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.adjacency().nnz() + n);
    let mut vals = Vec::with_capacity(g.adjacency().nnz() + n);
    row_ptr.push(0);
    for u in 0..n {
        let nb = g.neighbors(u);
        let split = nb.partition_point(|&v| v < u);
        for &v in nb[..split].iter().chain(std::iter::once(&u)).chain(&nb[split..]) {
            cols.push(v);
            vals.push(inv_sqrt[u] * inv_sqrt[v]);
        }
        row_ptr.push(cols.len());
    }
    SparseCsr::new(n, n, row_ptr, cols, vals).expect("normalized adjacency is well formed")
}

/// Row-stochastic mean over `{v} ∪ N(v)`.
pub fn normalize_mean<T: Scalar>(g: &Graph<T>) -> SparseCsr<T> {
    let n = g.n();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for u in 0..n {
        let nb = g.neighbors(u);
        let w = T::one() / T::lit((nb.len() + 1) as f64);
        let split = nb.partition_point(|&v| v < u);
        for &v in nb[..split].iter().chain(std::iter::once(&u)).chain(&nb[split..]) {
            cols.push(v);
            vals.push(w);
        }
        row_ptr.push(cols.len());
    }
    SparseCsr::new(n, n, row_ptr, cols, vals).expect("mean operator is well formed")
}

pub fn identity_propagation<T: Scalar>(n: usize) -> SparseCsr<T> {
    SparseCsr::identity(n)
}
