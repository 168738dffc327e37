use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{self, streams};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    pub observed: Vec<bool>,
}

fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

impl SplitMasks {
    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn train_idx(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn val_idx(&self) -> Vec<usize> {
        indices(&self.val)
    }

    pub fn test_idx(&self) -> Vec<usize> {
        indices(&self.test)
    }

    pub fn observed_idx(&self) -> Vec<usize> {
        indices(&self.observed)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.train.len();
        if [self.val.len(), self.test.len(), self.observed.len()].iter().any(|&l| l != n) {
            return Err(Error::Consistency("split masks differ in length".into()));
        }
        for v in 0..n {
            let k = self.train[v] as u8 + self.val[v] as u8 + self.test[v] as u8;
            if k > 1 {
                return Err(Error::Consistency(format!("node {v} is in more than one split")));
            }
            if (self.train[v] || self.val[v]) && !self.observed[v] {
                return Err(Error::Consistency(format!("train/val node {v} is unobserved")));
            }
        }
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` over `sizes`, giving every
/// non-empty group at least one slot when `total` allows it.
fn apportion(total: usize, sizes: &[usize]) -> Vec<usize> {
    let n: usize = sizes.iter().sum();
    if n == 0 {
        return vec![0; sizes.len()];
    }
    let exact: Vec<f64> = sizes.iter().map(|&s| total as f64 * s as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (exact[a] - exact[a].floor(), exact[b] - exact[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = total - alloc.iter().sum::<usize>();
    for &c in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[c] < sizes[c] {
            alloc[c] += 1;
            left -= 1;
        }
    }
    let nonempty = sizes.iter().filter(|&&s| s > 0).count();
    if total >= nonempty {
        while let Some(c) = (0..sizes.len()).find(|&c| sizes[c] > 0 && alloc[c] == 0) {
            let donor = (0..sizes.len()).max_by_key(|&d| (alloc[d], std::cmp::Reverse(d))).expect("non-empty");
            alloc[donor] -= 1;
            alloc[c] += 1;
        }
    }
    alloc
}

/// Random train/val/test split with `round(frac * n)` train and val nodes.
pub fn make_splits<T: Scalar>(
    g: &Graph<T>,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
    stratified: bool,
) -> Result<SplitMasks> {
    if !(0.0..1.0).contains(&train_frac) || !(0.0..1.0).contains(&val_frac) || train_frac + val_frac >= 1.0 {
        return Err(Error::Config(format!(
            "split fractions {train_frac}/{val_frac} must be non-negative and sum to < 1"
        )));
    }
    let n = g.n();
    let n_train = (train_frac * n as f64).round() as usize;
    let n_val = (val_frac * n as f64).round() as usize;
    let mut rng = rng::stream(seed, streams::SPLIT);
    let mut role = vec![2u8; n];
    if stratified {
        let c = g.num_classes();
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for (v, &y) in g.labels().iter().enumerate() {
            by_class[y].push(v);
        }
        if let Some(empty) = by_class.iter().position(Vec::is_empty) {
            return Err(Error::Stratification(format!("class {empty} has no nodes")));
        }
        for members in &mut by_class {
            members.shuffle(&mut rng);
        }
        let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
        let train_alloc = apportion(n_train, &sizes);
        let rest: Vec<usize> = sizes.iter().zip(&train_alloc).map(|(s, t)| s - t).collect();
        let val_alloc = apportion(n_val, &rest);
        for (k, members) in by_class.iter().enumerate() {
            for &v in &members[..train_alloc[k]] {
                role[v] = 0;
            }
            for &v in &members[train_alloc[k]..train_alloc[k] + val_alloc[k]] {
                role[v] = 1;
            }
        }
    } else {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        for &v in &perm[..n_train] {
            role[v] = 0;
        }
        for &v in &perm[n_train..n_train + n_val] {
            role[v] = 1;
        }
    }
    Ok(SplitMasks {
        train: role.iter().map(|&r| r == 0).collect(),
        val: role.iter().map(|&r| r == 1).collect(),
        test: role.iter().map(|&r| r == 2).collect(),
        observed: vec![true; n],
    })
}

/// Hides `round(holdout_frac * |test|)` random test nodes from training
/// and strips their edges from the returned training graph.
pub fn make_inductive<T: Scalar>(
    g: &Graph<T>,
    masks: &SplitMasks,
    holdout_frac: f64,
    seed: u64,
) -> Result<(Graph<T>, SplitMasks)> {
    if !(0.0..1.0).contains(&holdout_frac) {
        return Err(Error::Config(format!("holdout fraction {holdout_frac} outside [0, 1)")));
    }
    let mut test = masks.test_idx();
    let k = (holdout_frac * test.len() as f64).round() as usize;
    if k == 0 {
        return Ok((g.clone(), masks.clone()));
    }
    let mut rng = rng::stream(seed, streams::INDUCTIVE);
    test.shuffle(&mut rng);
    let mut out = masks.clone();
    for &v in &test[..k] {
        out.observed[v] = false;
    }
    let hidden: Vec<bool> = out.observed.iter().map(|&o| !o).collect();
    Ok((g.without_edges_touching(&hidden), out))
}
