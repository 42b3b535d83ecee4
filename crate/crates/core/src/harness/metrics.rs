use ndarray::{Array, Dimension};
use serde::{Deserialize, Serialize};

use crate::backbone::{forward, GraphSpec, ModelParams, WindowBatch};
use crate::error::{Error, Result};

/// Targets with `|y|` at or below this are left out of MAPE.
pub const MAPE_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mae: f64,
    pub rmse: f64,
    /// `None` when no observed target is nonzero.
    pub mape: Option<f64>,
    pub count: usize,
}

/// Masked MAE, RMSE and MAPE.
pub fn metrics<D: Dimension>(
    pred: &Array<f64, D>,
    target: &Array<f64, D>,
    mask: &Array<f64, D>,
) -> Result<Metrics> {
    if pred.shape() != target.shape() || pred.shape() != mask.shape() {
        return Err(Error::shape(
            "metrics",
            format!("pred {:?}, target {:?}, mask {:?}", pred.shape(), target.shape(), mask.shape()),
        ));
    }
    let (mut abs, mut sq, mut w) = (0.0, 0.0, 0.0);
    let (mut pct, mut pw) = (0.0, 0.0);
    let mut count = 0usize;
    for ((&p, &y), &m) in pred.iter().zip(target.iter()).zip(mask.iter()) {
        if m == 0.0 {
            continue;
        }
        let e = p - y;
        abs += e.abs() * m;
        sq += e * e * m;
        w += m;
        count += 1;
        if y.abs() > MAPE_EPSILON {
            pct += e.abs() / y.abs() * m;
            pw += m;
        }
    }
    if w <= 0.0 {
        return Err(Error::Empty("mask selects no entries".into()));
    }
    Ok(Metrics {
        mae: abs / w,
        rmse: (sq / w).sqrt(),
        mape: (pw > 0.0).then(|| pct / pw),
        count,
    })
}

/// Forecast `batch` with `params` and score it.
pub fn evaluate(params: &ModelParams, batch: &WindowBatch, graph: &GraphSpec) -> Result<Metrics> {
    let pred = forward(params, batch, graph, None)?;
    metrics(&pred, &batch.targets, &batch.mask)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub group_id: usize,
    pub model: String,
    pub metrics: Metrics,
}

/// Per-domain metrics with their unweighted means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub domains: Vec<DomainMetrics>,
    pub mean_mae: f64,
    pub mean_rmse: f64,
    pub mean_mape: Option<f64>,
}

impl MetricsReport {
    pub fn from_domains(domains: Vec<DomainMetrics>) -> Result<Self> {
        if domains.is_empty() {
            return Err(Error::Empty("no evaluation domains".into()));
        }
        let n = domains.len() as f64;
        let mean_mae = domains.iter().map(|d| d.metrics.mae).sum::<f64>() / n;
        let mean_rmse = domains.iter().map(|d| d.metrics.rmse).sum::<f64>() / n;
        let mapes: Vec<f64> = domains.iter().filter_map(|d| d.metrics.mape).collect();
        let mean_mape = (!mapes.is_empty()).then(|| mapes.iter().sum::<f64>() / mapes.len() as f64);
        Ok(Self {
            domains,
            mean_mae,
            mean_rmse,
            mean_mape,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn examples() {
        let m = metrics(&array![3.0], &array![1.0], &array![1.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.mape), (2.0, 2.0, Some(2.0)));

        let m = metrics(&array![2.0, 0.0], &array![1.0, 0.0], &array![1.0, 1.0]).unwrap();
        assert_eq!(m.mae, 0.5);
        assert_eq!(m.rmse, 0.5f64.sqrt());
        assert_eq!(m.mape, Some(1.0));

        let m = metrics(&array![1.0, 2.0], &array![1.0, 2.0], &array![1.0, 1.0]).unwrap();
        assert_eq!((m.mae, m.rmse, m.mape), (0.0, 0.0, Some(0.0)));
    }

    #[test]
    fn zero_targets_leave_mape_undefined() {
        let m = metrics(&array![1.0], &array![0.0], &array![1.0]).unwrap();
        assert_eq!(m.mae, 1.0);
        assert_eq!(m.mape, None);
    }

    #[test]
    fn bad_inputs() {
        assert!(metrics(&array![1.0], &array![1.0, 2.0], &array![1.0]).is_err());
        assert!(metrics(&array![1.0], &array![1.0], &array![0.0]).is_err());
    }
}
