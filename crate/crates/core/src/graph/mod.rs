//! Graph data model, file ingestion, propagation operators, splits,
//! homophily analysis and a stochastic block model generator.

mod homophily;
mod io;
mod normalize;
mod sbm;
mod splits;

pub use homophily::{homophily, HomophilyReport};
pub use io::{load_graph, read_splits, write_graph, write_splits};
pub use normalize::{identity_propagation, normalize_gcn, normalize_mean};
pub use sbm::{synth_sbm, SbmSpec};
pub use splits::{make_inductive, make_splits, SplitMasks};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Matrix, SparseCsr};

/// Undirected, unweighted node-labelled graph with dense node features.
///
/// The adjacency is symmetric and never stores self-loops; those are
/// added by the normalizations that need them.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph<T> {
    adj: SparseCsr<T>,
    features: Matrix<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Graph<T> {
    /// Builds a graph from an edge list. Edges are symmetrized and
    /// deduplicated; self-loops are dropped with a warning.
    pub fn from_edges(
        edges: impl IntoIterator<Item = (usize, usize)>,
        features: Matrix<T>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let n = labels.len();
        if features.rows() != n {
            return Err(Error::Consistency(format!(
                "{} feature rows for {n} labelled nodes",
                features.rows()
            )));
        }
        if let Some((v, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Range(format!(
                "node {v} has label {y}, expected < {num_classes}"
            )));
        }
        let mut trip = Vec::new();
        let mut self_loops = 0usize;
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Range(format!("edge ({u}, {v}) references a node >= {n}")));
            }
            if u == v {
                self_loops += 1;
                continue;
            }
            trip.push((u, v, T::one()));
            trip.push((v, u, T::one()));
        }
        if self_loops > 0 {
            log::warn!("dropped {self_loops} self-loop(s) from the edge list");
        }
        trip.sort_by_key(|&(i, j, _)| (i, j));
        trip.dedup_by_key(|&mut (i, j, _)| (i, j));
        let adj = SparseCsr::from_triplets(n, n, trip)?;
        Ok(Self {
            adj,
            features,
            labels,
            num_classes,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn adjacency(&self) -> &SparseCsr<T> {
        &self.adj
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    #[inline]
    pub fn neighbors(&self, v: usize) -> &[usize] {
        self.adj.row(v).0
    }

    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        self.neighbors(v).len()
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adj.nnz() / 2
    }

    /// Undirected edges as `(u, v)` with `u < v`, in row order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n()).flat_map(move |u| {
            self.neighbors(u).iter().filter(move |&&v| u < v).map(move |&v| (u, v))
        })
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Copy of the graph without any edge incident to a node in `drop`.
    pub fn without_edges_touching(&self, drop: &[bool]) -> Self {
        let kept: Vec<(usize, usize)> = self.edges().filter(|&(u, v)| !drop[u] && !drop[v]).collect();
        Self::from_edges(kept, self.features.clone(), self.labels.clone(), self.num_classes)
            .expect("subgraph of a valid graph is valid")
    }
}
