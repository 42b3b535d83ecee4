use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::GraphSpec;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GraphModel {
    #[default]
    Ring,
    StochasticBlock,
    RandomGeometric,
}

impl FromStr for GraphModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ring" => Ok(GraphModel::Ring),
            "stochastic-block" | "sbm" => Ok(GraphModel::StochasticBlock),
            "random-geometric" | "rgg" => Ok(GraphModel::RandomGeometric),
            other => Err(Error::InvalidArgument(format!("unknown graph model '{other}'"))),
        }
    }
}

/// Symmetric 0/1 adjacency for `node_count` nodes under `model`.
pub fn gen_graph(model: GraphModel, node_count: usize, seed: u64) -> Result<GraphSpec> {
    if node_count == 0 {
        return Err(Error::InvalidArgument("graph needs at least one node".into()));
    }
    let n = node_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adj = Array2::<f64>::zeros((n, n));
    let link = |adj: &mut Array2<f64>, i: usize, j: usize| {
        if i != j {
            adj[[i, j]] = 1.0;
            adj[[j, i]] = 1.0;
        }
    };
    match model {
        GraphModel::Ring => {
            for i in 0..n {
                link(&mut adj, i, (i + 1) % n);
            }
        }
        GraphModel::StochasticBlock => {
            // two blocks; dense inside, sparse across
            let (p_in, p_out) = (0.6, 0.05);
            for i in 0..n {
                for j in i + 1..n {
                    let same = (i < n / 2) == (j < n / 2);
                    if rng.random::<f64>() < if same { p_in } else { p_out } {
                        link(&mut adj, i, j);
                    }
                }
            }
        }
        GraphModel::RandomGeometric => {
            let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.random(), rng.random())).collect();
            let radius = (2.0 * (n as f64).ln().max(1.0) / n as f64).sqrt().min(1.5);
            for i in 0..n {
                for j in i + 1..n {
                    let d = ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt();
                    if d <= radius {
                        link(&mut adj, i, j);
                    }
                }
            }
        }
    }
    GraphSpec::new(adj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_degrees() {
        let g = gen_graph(GraphModel::Ring, 3, 0).unwrap();
        for row in g.adjacency.rows() {
            assert_eq!(row.sum(), 2.0);
        }
    }

    #[test]
    fn single_node_is_empty() {
        for m in [GraphModel::Ring, GraphModel::StochasticBlock, GraphModel::RandomGeometric] {
            let g = gen_graph(m, 1, 0).unwrap();
            assert_eq!(g.adjacency, Array2::<f64>::zeros((1, 1)));
        }
    }

    #[test]
    fn seeded_and_symmetric() {
        for m in [GraphModel::StochasticBlock, GraphModel::RandomGeometric] {
            let a = gen_graph(m, 12, 9).unwrap();
            assert_eq!(a, gen_graph(m, 12, 9).unwrap());
            assert_eq!(a.adjacency, a.adjacency.t());
        }
    }

    #[test]
    fn unknown_model_name() {
        assert!("lattice".parse::<GraphModel>().is_err());
        assert_eq!("ring".parse::<GraphModel>().unwrap(), GraphModel::Ring);
    }
}
