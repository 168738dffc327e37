use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::models::{LayerSpec, ModelParams};
use crate::scalar::Scalar;
use crate::tensor::Matrix;

const MODEL_MAGIC: &[u8; 4] = b"BIKT";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(truncated)?;
    Ok(u32::from_le_bytes(b))
}

fn truncated(e: std::io::Error) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Checkpoint("file is truncated".into())
    } else {
        Error::Io(e)
    }
}

fn get_f64s(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf).map_err(truncated)?;
    Ok(buf
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect())
}

/// Header followed by per-layer `rows, cols, weights, biases`.
pub(crate) fn write_layers<T: Scalar>(
    w: &mut impl Write,
    magic: &[u8; 4],
    layers: &[(&Matrix<T>, &Matrix<T>)],
) -> Result<()> {
    w.write_all(magic)?;
    put_u32(w, VERSION)?;
    put_u32(w, layers.len() as u32)?;
    for (weight, bias) in layers {
        put_u32(w, weight.rows() as u32)?;
        put_u32(w, weight.cols() as u32)?;
        for v in weight.as_slice().iter().chain(bias.as_slice()) {
            w.write_all(&v.as_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

pub(crate) fn read_layers<T: Scalar>(r: &mut impl Read, magic: &[u8; 4]) -> Result<Vec<(Matrix<T>, Matrix<T>)>> {
    let mut m = [0u8; 4];
    r.read_exact(&mut m).map_err(truncated)?;
    if &m != magic {
        return Err(Error::Checkpoint(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(&m),
            String::from_utf8_lossy(magic)
        )));
    }
    let version = get_u32(r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let rows = get_u32(r)? as usize;
        let cols = get_u32(r)? as usize;
        let cast = |v: Vec<f64>| v.into_iter().map(T::lit).collect::<Vec<T>>();
        let weight = Matrix::from_vec(rows, cols, cast(get_f64s(r, rows * cols)?))?;
        let bias = Matrix::from_vec(1, cols, cast(get_f64s(r, cols)?))?;
        layers.push((weight, bias));
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after the last layer".into()));
    }
    Ok(layers)
}

pub fn save_checkpoint<T: Scalar>(params: &ModelParams<T>, path: impl AsRef<Path>) -> Result<()> {
    let layers: Vec<_> = params.weights.iter().zip(&params.biases).collect();
    let mut w = BufWriter::new(fs::File::create(path)?);
    write_layers(&mut w, MODEL_MAGIC, &layers)?;
    w.flush()?;
    Ok(())
}

/// Reads a model checkpoint. Dropout is not stored and comes back as 0.
pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<ModelParams<T>> {
    let layers = read_layers::<T>(&mut BufReader::new(fs::File::open(path)?), MODEL_MAGIC)?;
    let last = layers.len().saturating_sub(1);
    let specs = layers
        .iter()
        .enumerate()
        .map(|(l, (w, _))| LayerSpec {
            in_dim: w.rows(),
            out_dim: w.cols(),
            has_activation: l != last,
            dropout_p: 0.0,
        })
        .collect();
    let (weights, biases) = layers.into_iter().unzip();
    let params = ModelParams { specs, weights, biases };
    params.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok(params)
}
