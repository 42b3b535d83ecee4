//! Plug-in histogram estimates of entropy and mutual information over pooled
//! domain summaries.
//!
//! Entropies are in nats. Joint histograms use the same per-variable binning
//! as the marginals, which makes `I(x, x) = H(x)` exact and `I ≥ 0` hold by
//! clamping the identity `I = H(x) + H(y) - H(x, y)`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::datagen::DomainSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Binning {
    EqualWidth,
    #[default]
    EqualFrequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramEstimator {
    pub bins: usize,
    pub binning: Binning,
}

impl Default for HistogramEstimator {
    fn default() -> Self {
        Self {
            bins: 16,
            binning: Binning::EqualFrequency,
        }
    }
}

impl HistogramEstimator {
    pub fn new(bins: usize, binning: Binning) -> Result<Self> {
        if bins < 2 {
            return Err(Error::InvalidArgument(format!("bin count {bins} must be >= 2")));
        }
        Ok(Self { bins, binning })
    }

    /// Bin index of every sample.
    pub fn assign(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.is_empty() {
            return Err(Error::Empty("no samples".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("samples must be finite".into()));
        }
        let b = self.bins;
        Ok(match self.binning {
            Binning::EqualWidth => {
                let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let width = (hi - lo) / b as f64;
                x.iter()
                    .map(|&v| {
                        if width > 0.0 {
                            (((v - lo) / width) as usize).min(b - 1)
                        } else {
                            0
                        }
                    })
                    .collect()
            }
            Binning::EqualFrequency => {
                let mut sorted = x.to_vec();
                sorted.sort_by(f64::total_cmp);
                let n = sorted.len();
                let edges: Vec<f64> = (1..b).map(|j| sorted[j * n / b]).collect();
                // ties land in one bin, so a constant series occupies a single bin
                x.iter()
                    .map(|&v| edges.partition_point(|&e| e <= v))
                    .collect()
            }
        })
    }
}

fn entropy_of_counts(mut counts: Vec<usize>, n: usize) -> f64 {
    counts.retain(|&c| c > 0);
    counts.sort_unstable();
    let n = n as f64;
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum();
    h.max(0.0)
}

fn entropy_of_bins(bins: &[usize], width: usize) -> f64 {
    let mut counts = vec![0usize; width];
    for &b in bins {
        counts[b] += 1;
    }
    entropy_of_counts(counts, bins.len())
}

fn joint_entropy_of_bins(a: &[usize], b: &[usize], width: usize) -> f64 {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for (&i, &j) in a.iter().zip(b) {
        *counts.entry(i * width + j).or_default() += 1;
    }
    entropy_of_counts(counts.into_values().collect(), a.len())
}

pub fn entropy(samples: &[f64], estimator: &HistogramEstimator) -> Result<f64> {
    let bins = estimator.assign(samples)?;
    Ok(entropy_of_bins(&bins, estimator.bins))
}

pub fn joint_entropy(x: &[f64], y: &[f64], estimator: &HistogramEstimator) -> Result<f64> {
    check_pair(x, y)?;
    let bx = estimator.assign(x)?;
    let by = estimator.assign(y)?;
    Ok(joint_entropy_of_bins(&bx, &by, estimator.bins))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(
            "mutual_information",
            format!("lengths {} and {}", x.len(), y.len()),
        ));
    }
    Ok(())
}

pub fn mutual_information(x: &[f64], y: &[f64], estimator: &HistogramEstimator) -> Result<f64> {
    check_pair(x, y)?;
    let bx = estimator.assign(x)?;
    let by = estimator.assign(y)?;
    let w = estimator.bins;
    let hx = entropy_of_bins(&bx, w);
    let hy = entropy_of_bins(&by, w);
    let hxy = joint_entropy_of_bins(&bx, &by, w);
    Ok((hx + hy - hxy).max(0.0))
}

/// `H(X | Y) = H(X) - I(X; Y)`.
pub fn conditional_entropy(x: &[f64], y: &[f64], estimator: &HistogramEstimator) -> Result<f64> {
    let hx = entropy(x, estimator)?;
    Ok(hx - mutual_information(x, y, estimator)?)
}

fn standardize(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd > 0.0 {
        x.iter().map(|v| (v - mean) / sd).collect()
    } else {
        vec![0.0; x.len()]
    }
}

/// Projection of the standardized columns onto their first principal axis,
/// oriented so the loadings sum to a nonnegative value.
pub fn first_principal_projection(columns: &[&[f64]]) -> Result<Vec<f64>> {
    let k = columns.len();
    if k == 0 {
        return Err(Error::Empty("no columns".into()));
    }
    let n = columns[0].len();
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::shape("principal projection", "columns differ in length"));
    }
    let z: Vec<Vec<f64>> = columns.iter().map(|c| standardize(c)).collect();
    if k == 1 {
        return Ok(z.into_iter().next().expect("one column"));
    }
    let mut cov = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let c = z[i].iter().zip(&z[j]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
            cov[i][j] = c;
            cov[j][i] = c;
        }
    }
    let mut v = vec![1.0 / (k as f64).sqrt(); k];
    for _ in 0..500 {
        let next: Vec<f64> = (0..k).map(|i| (0..k).map(|j| cov[i][j] * v[j]).sum()).collect();
        let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        let next: Vec<f64> = next.iter().map(|x| x / norm).collect();
        let shift: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if shift < 1e-12 {
            break;
        }
    }
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    Ok((0..n)
        .map(|t| (0..k).map(|i| v[i] * z[i][t]).sum())
        .collect())
}

/// `[H(X_1), H(X_2 | X_1), …, H(X_k | X_1..X_{k-1})]`, each prior condensed
/// to its first principal projection.
pub fn conditional_entropy_chain(summaries: &[Vec<f64>], estimator: &HistogramEstimator) -> Result<Vec<f64>> {
    if summaries.len() < 2 {
        return Err(Error::InvalidArgument("chain needs at least two domains".into()));
    }
    let n = summaries[0].len();
    if summaries.iter().any(|s| s.len() != n) {
        return Err(Error::shape("conditional chain", "domain summaries differ in length"));
    }
    let mut chain = vec![entropy(&summaries[0], estimator)?];
    for i in 1..summaries.len() {
        let prior: Vec<&[f64]> = summaries[..i].iter().map(|s| s.as_slice()).collect();
        let z = first_principal_projection(&prior)?;
        chain.push(conditional_entropy(&summaries[i], &z, estimator)?);
    }
    Ok(chain)
}

/// `I(X; Z) - β I(Z; Y)`.
pub fn ib_objective(i_xz: f64, i_zy: f64, beta: f64) -> Result<f64> {
    if !(i_xz >= 0.0 && i_zy >= 0.0) {
        return Err(Error::InvalidArgument("mutual informations must be >= 0".into()));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must be > 0")));
    }
    Ok(i_xz - beta * i_zy)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairInformation {
    pub i: usize,
    pub j: usize,
    pub mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub estimator: HistogramEstimator,
    pub sample_count: usize,
    pub domain_ids: Vec<usize>,
    pub entropies: Vec<f64>,
    pub pairwise_mi: Vec<PairInformation>,
    pub chain: Vec<f64>,
    /// `I(X_1; Z) - I(Z; X_k)` with `Z` the principal projection of all domains.
    pub ib_value: Option<f64>,
}

impl EntropyReport {
    pub fn min_pairwise_mi(&self) -> Option<f64> {
        self.pairwise_mi.iter().map(|p| p.mi).reduce(f64::min)
    }

    /// Largest increase between consecutive chain entries beyond the first.
    pub fn max_chain_increase(&self) -> f64 {
        self.chain
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Audit domains through their pooled per-step summaries.
pub fn audit(domains: &[DomainSeries], estimator: &HistogramEstimator) -> Result<EntropyReport> {
    let summaries: Vec<Vec<f64>> = domains.iter().map(|d| d.pooled()).collect();
    audit_summaries(&domains.iter().map(|d| d.id).collect::<Vec<_>>(), &summaries, estimator)
}

pub fn audit_summaries(ids: &[usize], summaries: &[Vec<f64>], estimator: &HistogramEstimator) -> Result<EntropyReport> {
    if summaries.is_empty() {
        return Err(Error::Empty("no domains to audit".into()));
    }
    let entropies = summaries
        .iter()
        .map(|s| entropy(s, estimator))
        .collect::<Result<Vec<_>>>()?;
    let mut pairwise_mi = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            pairwise_mi.push(PairInformation {
                i: ids[i],
                j: ids[j],
                mi: mutual_information(&summaries[i], &summaries[j], estimator)?,
            });
        }
    }
    let (chain, ib_value) = if summaries.len() >= 2 {
        let chain = conditional_entropy_chain(summaries, estimator)?;
        let cols: Vec<&[f64]> = summaries.iter().map(|s| s.as_slice()).collect();
        let z = first_principal_projection(&cols)?;
        let i_xz = mutual_information(&summaries[0], &z, estimator)?;
        let i_zy = mutual_information(&z, &summaries[summaries.len() - 1], estimator)?;
        (chain, Some(ib_objective(i_xz, i_zy, 1.0)?))
    } else {
        (entropies.clone(), None)
    };
    Ok(EntropyReport {
        estimator: *estimator,
        sample_count: summaries[0].len(),
        domain_ids: ids.to_vec(),
        entropies,
        pairwise_mi,
        chain,
        ib_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_entropy() {
        let est = HistogramEstimator::default();
        assert_eq!(entropy(&[3.0; 100], &est).unwrap(), 0.0);
        let w = HistogramEstimator::new(8, Binning::EqualWidth).unwrap();
        assert_eq!(entropy(&[3.0; 100], &w).unwrap(), 0.0);
    }

    #[test]
    fn uniform_equal_frequency_is_log_b() {
        let est = HistogramEstimator::new(8, Binning::EqualFrequency).unwrap();
        let x: Vec<f64> = (0..800).map(|v| v as f64).collect();
        assert!((entropy(&x, &est).unwrap() - 8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn self_information_is_entropy() {
        let est = HistogramEstimator::default();
        let x: Vec<f64> = (0..500).map(|v| ((v * 37) % 101) as f64).collect();
        assert_eq!(mutual_information(&x, &x, &est).unwrap(), entropy(&x, &est).unwrap());
    }

    #[test]
    fn ib_examples() {
        assert_eq!(ib_objective(0.0, 2.0, 3.0).unwrap(), -6.0);
        assert_eq!(ib_objective(1.5, 1.5, 1.0).unwrap(), 0.0);
        assert_eq!(ib_objective(2.0, 3.0, 0.5).unwrap(), 0.5);
        assert!(ib_objective(-1.0, 1.0, 1.0).is_err());
        assert!(ib_objective(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn errors() {
        let est = HistogramEstimator::default();
        assert!(entropy(&[], &est).is_err());
        assert!(mutual_information(&[1.0], &[1.0, 2.0], &est).is_err());
        assert!(HistogramEstimator::new(1, Binning::EqualWidth).is_err());
        assert!(conditional_entropy_chain(&[vec![1.0]], &est).is_err());
    }

    #[test]
    fn identical_domains_chain_collapses() {
        let est = HistogramEstimator::default();
        let x: Vec<f64> = (0..1000).map(|v| ((v * 7919) % 1009) as f64).collect();
        let chain = conditional_entropy_chain(&[x.clone(), x.clone(), x], &est).unwrap();
        assert!(chain[0] > 2.0);
        assert_eq!(&chain[1..], &[0.0, 0.0]);
    }
}
