use std::ops::Range;
use std::sync::Arc;

use ndarray::{Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use super::split::{window_starts, Splits};
use crate::backbone::{GraphSpec, WindowBatch};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { seed: u64, rho: f64, domain: usize },
    File { path: String },
    Derived { from: String, note: String },
}

/// A `T × N` series with its observation mask. `segments` lists the
/// contiguous time ranges; windows never straddle a segment boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSeries {
    pub id: usize,
    pub source: String,
    pub values: Array2<f64>,
    pub mask: Array2<f64>,
    pub segments: Vec<Range<usize>>,
    pub provenance: Provenance,
}

impl DomainSeries {
    pub fn new(id: usize, source: impl Into<String>, values: Array2<f64>, provenance: Provenance) -> Self {
        let mask = Array2::ones(values.dim());
        let t = values.nrows();
        Self {
            id,
            source: source.into(),
            values,
            mask,
            segments: vec![0..t],
            provenance,
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node_count(&self) -> usize {
        self.values.ncols()
    }

    /// Mean over nodes at each step, counting only observed entries.
    pub fn pooled(&self) -> Vec<f64> {
        self.values
            .rows()
            .into_iter()
            .zip(self.mask.rows())
            .map(|(v, m)| {
                let w = m.sum();
                if w > 0.0 {
                    (&v * &m).sum() / w
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// One domain's windowed samples with chronological train/val/test splits:
/// the unit that is ordered, gated and absorbed.
#[derive(Debug, Clone)]
pub struct DomainGroup {
    pub id: usize,
    pub source: String,
    pub series: DomainSeries,
    pub graph: Arc<GraphSpec>,
    pub t_in: usize,
    pub t_out: usize,
    pub splits: Splits,
}

impl DomainGroup {
    pub fn new(
        series: DomainSeries,
        graph: Arc<GraphSpec>,
        t_in: usize,
        t_out: usize,
        ratios: [f64; 3],
    ) -> Result<Self> {
        if series.node_count() != graph.node_count() {
            return Err(Error::shape(
                "DomainGroup",
                format!(
                    "series has {} nodes, graph {}",
                    series.node_count(),
                    graph.node_count()
                ),
            ));
        }
        let starts = window_starts(&series.segments, t_in, t_out)?;
        let splits = Splits::chronological(starts, ratios)?;
        Ok(Self {
            id: series.id,
            source: series.source.clone(),
            series,
            graph,
            t_in,
            t_out,
            splits,
        })
    }

    pub fn window_count(&self) -> usize {
        self.splits.len()
    }

    /// Materialize windows starting at `starts`.
    pub fn batch(&self, starts: &[usize]) -> Result<WindowBatch> {
        let n = self.series.node_count();
        let b = starts.len();
        let mut inputs = Array4::<f64>::zeros((b, self.t_in, n, 1));
        let mut targets = Array3::<f64>::zeros((b, self.t_out, n));
        let mut mask = Array3::<f64>::zeros((b, self.t_out, n));
        let v = &self.series.values;
        let m = &self.series.mask;
        for (w, &s) in starts.iter().enumerate() {
            if s + self.t_in + self.t_out > self.series.len() {
                return Err(Error::shape("window", format!("start {s} runs past series end")));
            }
            for t in 0..self.t_in {
                for node in 0..n {
                    inputs[[w, t, node, 0]] = v[[s + t, node]] * m[[s + t, node]];
                }
            }
            for t in 0..self.t_out {
                for node in 0..n {
                    targets[[w, t, node]] = v[[s + self.t_in + t, node]];
                    mask[[w, t, node]] = m[[s + self.t_in + t, node]];
                }
            }
        }
        WindowBatch::new(inputs, targets, mask)
    }

    pub fn train_batch(&self) -> Result<WindowBatch> {
        if self.splits.train.is_empty() {
            return Err(Error::Empty(format!("group {} has no training windows", self.id)));
        }
        self.batch(&self.splits.train)
    }

    pub fn val_batch(&self) -> Result<WindowBatch> {
        self.batch(&self.splits.val)
    }

    pub fn test_batch(&self) -> Result<WindowBatch> {
        self.batch(&self.splits.test)
    }

    /// Every window regardless of split.
    pub fn all_batch(&self) -> Result<WindowBatch> {
        self.batch(&self.splits.all())
    }
}
