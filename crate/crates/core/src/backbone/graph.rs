use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Node adjacency plus its symmetric renormalization `D^{-1/2}(A+I)D^{-1/2}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub adjacency: Array2<f64>,
    pub normalized: Array2<f64>,
}

impl GraphSpec {
    pub fn new(adjacency: Array2<f64>) -> Result<Self> {
        let normalized = normalize_adjacency(&adjacency)?;
        Ok(Self {
            adjacency,
            normalized,
        })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.nrows()
    }
}

pub fn normalize_adjacency(adjacency: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = adjacency.dim();
    if rows != cols {
        return Err(Error::shape(
            "normalize_adjacency",
            format!("adjacency is {rows}x{cols}, expected square"),
        ));
    }
    if rows == 0 {
        return Err(Error::Empty("adjacency has no nodes".into()));
    }
    for i in 0..rows {
        for j in 0..cols {
            let v = adjacency[[i, j]];
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "adjacency[{i},{j}] = {v} is not a finite nonnegative weight"
                )));
            }
            if v != adjacency[[j, i]] {
                return Err(Error::shape(
                    "normalize_adjacency",
                    format!("adjacency is not symmetric at ({i},{j})"),
                ));
            }
        }
    }
    let mut with_loops = adjacency.clone();
    for i in 0..rows {
        with_loops[[i, i]] += 1.0;
    }
    let inv_sqrt_deg: Vec<f64> = with_loops
        .rows()
        .into_iter()
        .map(|r| 1.0 / r.sum().sqrt())
        .collect();
    let mut out = with_loops;
    for ((i, j), v) in out.indexed_iter_mut() {
        *v *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
    }
    Ok(out)
}
