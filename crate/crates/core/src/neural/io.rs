//! Weights file: the line `FPNN1`, one JSON header line (model spec plus the
//! ordered tensor names and shapes), then every tensor as little-endian f32.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{ModelSpec, Params};
use super::NeuralError;

const MAGIC: &str = "FPNN1";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<TensorEntry>,
}

pub fn write_weights<W: Write>(params: &Params<f32>, mut out: W) -> Result<(), NeuralError> {
    let named = params.named();
    let header = Header {
        spec: params.spec.clone(),
        tensors: named
            .iter()
            .map(|(name, shape, _)| TensorEntry {
                name: name.clone(),
                shape: shape.clone(),
            })
            .collect(),
    };
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for (_, _, data) in named {
        for v in data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_weights<R: Read>(input: R) -> Result<Params<f32>, NeuralError> {
    let mut r = BufReader::new(input);
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(NeuralError::Format("bad magic".into()));
    }
    line.clear();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())?;
    header.spec.validate()?;
    let mut params = Params::<f32>::zeros(&header.spec);
    let expected: Vec<(String, Vec<usize>)> = params.named().into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected.len() != header.tensors.len()
        || expected
            .iter()
            .zip(&header.tensors)
            .any(|((n, s), e)| *n != e.name || *s != e.shape)
    {
        return Err(NeuralError::Format("tensor list does not match the model spec".into()));
    }
    let mut buf = [0u8; 4];
    for slice in params.slices_mut() {
        for v in slice.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| NeuralError::Format("truncated tensor data".into()))?;
            *v = f32::from_le_bytes(buf);
        }
    }
    if r.read(&mut buf)? != 0 {
        return Err(NeuralError::Format("trailing bytes".into()));
    }
    Ok(params)
}

pub fn save_weights(params: &Params<f32>, path: impl AsRef<Path>) -> Result<(), NeuralError> {
    write_weights(params, BufWriter::new(File::create(path)?))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<Params<f32>, NeuralError> {
    read_weights(File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::build_model;

    #[test]
    fn roundtrip_is_bit_exact() {
        let p: Params<f32> = build_model(&ModelSpec::cnn2(4), 7).unwrap();
        let mut buf = Vec::new();
        write_weights(&p, &mut buf).unwrap();
        assert!(buf.starts_with(b"FPNN1\n"));
        let q = read_weights(buf.as_slice()).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rejects_corruption() {
        let p: Params<f32> = build_model(&ModelSpec::cnn1(2), 7).unwrap();
        let mut buf = Vec::new();
        write_weights(&p, &mut buf).unwrap();
        assert!(read_weights(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_weights(extra.as_slice()).is_err());
        assert!(read_weights(&b"FPNN2\n{}\n"[..]).is_err());
    }
}
