use serde::Serialize;

use crate::graph::Graph;
use crate::scalar::Scalar;

pub const DISASSORTATIVE_BELOW: f64 = 0.2;
pub const ASSORTATIVE_ABOVE: f64 = 0.8;

/// Per-node homophily ratios and the node sets they induce.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HomophilyReport {
    /// `None` for isolated nodes.
    pub ratios: Vec<Option<f64>>,
    pub assortative: Vec<usize>,
    pub disassortative: Vec<usize>,
}

impl HomophilyReport {
    /// Mean ratio over non-isolated nodes.
    pub fn mean(&self) -> Option<f64> {
        let defined: Vec<f64> = self.ratios.iter().flatten().copied().collect();
        if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        }
    }

    /// Non-isolated nodes in neither set.
    pub fn middle(&self) -> Vec<usize> {
        self.ratios
            .iter()
            .enumerate()
            .filter_map(|(v, h)| h.filter(|h| (DISASSORTATIVE_BELOW..=ASSORTATIVE_ABOVE).contains(h)).map(|_| v))
            .collect()
    }
}

pub fn homophily<T: Scalar>(g: &Graph<T>) -> HomophilyReport {
    let y = g.labels();
    let ratios: Vec<Option<f64>> = (0..g.n())
        .map(|v| {
            let nb = g.neighbors(v);
            (!nb.is_empty()).then(|| nb.iter().filter(|&&u| y[u] == y[v]).count() as f64 / nb.len() as f64)
        })
        .collect();
    let select = |pred: fn(f64) -> bool| -> Vec<usize> {
        ratios
            .iter()
            .enumerate()
            .filter_map(|(v, h)| h.filter(|&h| pred(h)).map(|_| v))
            .collect()
    };
    HomophilyReport {
        assortative: select(|h| h > ASSORTATIVE_ABOVE),
        disassortative: select(|h| h < DISASSORTATIVE_BELOW),
        ratios,
    }
}
