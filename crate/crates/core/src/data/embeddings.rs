use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};

/// Word vectors read from a text file: a `count dim` header, then
/// `token v1 … vdim` per line.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedEmbeddings {
    pub dim: usize,
    pub vectors: HashMap<String, Vec<f64>>,
}

pub fn read_embeddings(path: &Path) -> Result<PretrainedEmbeddings> {
    let reader = BufReader::new(fs::File::open(path)?);
    let err = |line: usize, msg: String| Error::Data {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| err(1, "empty embedding file".into()))??;
    let mut parts = header.split_whitespace();
    let mut field = |name: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err(1, format!("header must be `count dim`; bad {name}")))
    };
    let count = field("count")?;
    let dim = field("dim")?;

    let mut vectors = HashMap::with_capacity(count);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let token = fields.next().unwrap_or_default().to_string();
        let values: Vec<f64> = fields
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| err(i + 2, format!("bad number: {e}")))?;
        if values.len() != dim {
            return Err(err(
                i + 2,
                format!("expected {dim} values for `{token}`, found {}", values.len()),
            ));
        }
        vectors.insert(token, values);
    }
    Ok(PretrainedEmbeddings { dim, vectors })
}
