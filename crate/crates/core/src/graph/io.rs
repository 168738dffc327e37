use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Graph, SplitMasks};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())).into())
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut next = || -> Result<usize> {
            let tok = parts.next().ok_or_else(|| parse_err(path, k + 1, "expected two node ids"))?;
            tok.parse()
                .map_err(|_| parse_err(path, k + 1, format!("invalid node id {tok:?}")))
        };
        let (u, v) = (next()?, next()?);
        if parts.next().is_some() {
            return Err(parse_err(path, k + 1, "expected exactly two node ids"));
        }
        edges.push((k + 1, u, v));
    }
    Ok(edges)
}

fn read_csv_rows(path: &Path) -> Result<Vec<(usize, Vec<String>)>> {
    let text = read_text(path)?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| (k + 1, l.split(',').map(|s| s.trim().to_string()).collect()))
        .collect())
}

/// Reads the edge list, feature CSV and label CSV of a dataset.
///
/// The node count is the number of label rows.
pub fn load_graph<T: Scalar>(
    edge_list_path: impl AsRef<Path>,
    features_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<Graph<T>> {
    let (ep, fp, lp) = (edge_list_path.as_ref(), features_path.as_ref(), labels_path.as_ref());

    let mut labels = Vec::new();
    for (line, cells) in read_csv_rows(lp)? {
        if cells.len() != 1 {
            return Err(parse_err(lp, line, "expected a single label column"));
        }
        labels.push(
            cells[0]
                .parse::<usize>()
                .map_err(|_| parse_err(lp, line, format!("invalid label {:?}", cells[0])))?,
        );
    }
    let n = labels.len();

    let rows = read_csv_rows(fp)?;
    if rows.len() != n {
        return Err(Error::Consistency(format!(
            "{} has {} feature rows but {} has {n} labels",
            fp.display(),
            rows.len(),
            lp.display()
        )));
    }
    let d = rows.first().map_or(0, |(_, c)| c.len());
    let mut data = Vec::with_capacity(n * d);
    for (line, cells) in rows {
        if cells.len() != d {
            return Err(parse_err(fp, line, format!("expected {d} columns, found {}", cells.len())));
        }
        for c in cells {
            let v: f64 = c
                .parse()
                .map_err(|_| parse_err(fp, line, format!("invalid number {c:?}")))?;
            data.push(T::lit(v));
        }
    }
    let features = Matrix::from_vec(n, d, data)?;

    let mut edges = Vec::new();
    for (line, u, v) in read_edges(ep)? {
        if u >= n || v >= n {
            return Err(Error::Range(format!(
                "{}:{line}: node id out of range for {n} nodes",
                ep.display()
            )));
        }
        edges.push((u, v));
    }
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    Graph::from_edges(edges, features, labels, classes)
}

/// Writes `edges.txt`, `features.csv` and `labels.csv` into `dir`.
pub fn write_graph<T: Scalar>(g: &Graph<T>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(fs::File::create(dir.join("edges.txt"))?);
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("features.csv"))?);
    for i in 0..g.n() {
        let row: Vec<String> = g.features().row(i).iter().map(|v| format!("{:?}", v.as_f64())).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    let mut w = BufWriter::new(fs::File::create(dir.join("labels.csv"))?);
    for y in g.labels() {
        writeln!(w, "{y}")?;
    }
    w.flush()?;
    Ok(())
}

fn ids(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &m)| m).map(|(i, _)| i).collect()
}

/// Writes `{"train":[..],"val":[..],"test":[..],"unobserved":[..]}`.
pub fn write_splits(masks: &SplitMasks, path: impl AsRef<Path>) -> Result<()> {
    let unobserved: Vec<bool> = masks.observed.iter().map(|&o| !o).collect();
    let mut obj = BTreeMap::new();
    obj.insert("train", ids(&masks.train));
    obj.insert("val", ids(&masks.val));
    obj.insert("test", ids(&masks.test));
    obj.insert("unobserved", ids(&unobserved));
    fs::write(path, serde_json::to_string(&obj)?)?;
    Ok(())
}

pub fn read_splits(path: impl AsRef<Path>, n: usize) -> Result<SplitMasks> {
    let obj: BTreeMap<String, Vec<usize>> = serde_json::from_str(&read_text(path.as_ref())?)?;
    let to_mask = |key: &str| -> Result<Vec<bool>> {
        let mut m = vec![false; n];
        for &i in obj.get(key).map(Vec::as_slice).unwrap_or(&[]) {
            if i >= n {
                return Err(Error::Range(format!("split {key:?} lists node {i} >= {n}")));
            }
            m[i] = true;
        }
        Ok(m)
    };
    let unobserved = to_mask("unobserved")?;
    let masks = SplitMasks {
        train: to_mask("train")?,
        val: to_mask("val")?,
        test: to_mask("test")?,
        observed: unobserved.iter().map(|&u| !u).collect(),
    };
    masks.validate()?;
    Ok(masks)
}
