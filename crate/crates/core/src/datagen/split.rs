use std::ops::Range;

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::group::{DomainSeries, Provenance};
use crate::error::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.7, 0.1, 0.2];

/// Window start indices per split, chronologically ordered.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// Contiguous split by window order; train and val counts are rounded to
    /// the nearest window and the remainder goes to test.
    pub fn chronological(starts: Vec<usize>, ratios: [f64; 3]) -> Result<Self> {
        if ratios.iter().any(|r| !(*r >= 0.0)) || ratios.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(format!("bad split ratios {ratios:?}")));
        }
        let total: f64 = ratios.iter().sum();
        let n = starts.len();
        let n_train = ((n as f64) * ratios[0] / total).round() as usize;
        let n_train = n_train.min(n);
        let n_val = (((n as f64) * ratios[1] / total).round() as usize).min(n - n_train);
        let mut rest = starts;
        let test = rest.split_off(n_train + n_val);
        let val = rest.split_off(n_train);
        Ok(Self {
            train: rest,
            val,
            test,
        })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Vec<usize> {
        self.train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .copied()
            .collect()
    }
}

/// Stride-1 window starts that fit entirely inside one segment.
pub fn window_starts(segments: &[Range<usize>], t_in: usize, t_out: usize) -> Result<Vec<usize>> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::InvalidArgument("t_in and t_out must be >= 1".into()));
    }
    let span = t_in + t_out;
    let starts: Vec<usize> = segments
        .iter()
        .filter(|seg| seg.len() >= span)
        .flat_map(|seg| seg.start..=seg.end - span)
        .collect();
    if starts.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "series too short: no segment holds t_in + t_out = {span} steps"
        )));
    }
    Ok(starts)
}

/// Sliding windows over a plain series of length `t`, split 7:1:2 (or `ratios`).
pub fn window_and_split(t: usize, t_in: usize, t_out: usize, ratios: [f64; 3]) -> Result<Splits> {
    let starts = window_starts(&[0..t], t_in, t_out)?;
    Splits::chronological(starts, ratios)
}

/// Step ranges (in the original series) belonging to each class of the
/// per-day period partition. `holdout == true` marks the held-out period.
fn period_runs(
    len: usize,
    steps_per_day: usize,
    periods_per_day: usize,
    holdout_period: usize,
) -> Result<Vec<(Range<usize>, bool)>> {
    if periods_per_day < 2 {
        return Err(Error::InvalidArgument(
            "need at least two periods per day to hold one out".into(),
        ));
    }
    if steps_per_day == 0 || !steps_per_day.is_multiple_of(periods_per_day) {
        return Err(Error::InvalidArgument(format!(
            "{steps_per_day} steps per day not divisible into {periods_per_day} periods"
        )));
    }
    if holdout_period >= periods_per_day {
        return Err(Error::InvalidArgument(format!(
            "holdout period {holdout_period} out of range 0..{periods_per_day}"
        )));
    }
    let period_len = steps_per_day / periods_per_day;
    let is_holdout = |t: usize| (t % steps_per_day) / period_len == holdout_period;
    let mut runs: Vec<(Range<usize>, bool)> = Vec::new();
    for t in 0..len {
        let h = is_holdout(t);
        match runs.last_mut() {
            Some((r, flag)) if *flag == h && r.end == t => r.end = t + 1,
            _ => runs.push((t..t + 1, h)),
        }
    }
    Ok(runs)
}

fn gather(series: &DomainSeries, runs: &[Range<usize>], tag: &str) -> DomainSeries {
    let n = series.node_count();
    let total: usize = runs.iter().map(|r| r.len()).sum();
    let mut values = Array2::<f64>::zeros((total, n));
    let mut mask = Array2::<f64>::zeros((total, n));
    let mut segments = Vec::with_capacity(runs.len());
    let mut at = 0;
    for r in runs {
        values
            .slice_mut(s![at..at + r.len(), ..])
            .assign(&series.values.slice(s![r.clone(), ..]));
        mask.slice_mut(s![at..at + r.len(), ..])
            .assign(&series.mask.slice(s![r.clone(), ..]));
        segments.push(at..at + r.len());
        at += r.len();
    }
    debug_assert_eq!(values.len_of(Axis(0)), total);
    DomainSeries {
        id: series.id,
        source: format!("{}:{tag}", series.source),
        values,
        mask,
        segments,
        provenance: Provenance::Derived {
            from: series.source.clone(),
            note: tag.to_string(),
        },
    }
}

/// Split each day into `periods_per_day` equal periods; the `holdout_period`
/// steps form the evaluation temporal domain, the rest the training one.
pub fn temporal_domain_split(
    series: &DomainSeries,
    steps_per_day: usize,
    periods_per_day: usize,
    holdout_period: usize,
) -> Result<(DomainSeries, DomainSeries)> {
    let runs = period_runs(series.len(), steps_per_day, periods_per_day, holdout_period)?;
    // runs are built over the raw index; intersect with existing segments
    let mut train = Vec::new();
    let mut hold = Vec::new();
    for (r, h) in runs {
        for seg in &series.segments {
            let lo = r.start.max(seg.start);
            let hi = r.end.min(seg.end);
            if lo < hi {
                if h {
                    hold.push(lo..hi)
                } else {
                    train.push(lo..hi)
                }
            }
        }
    }
    Ok((
        gather(series, &train, "train-periods"),
        gather(series, &hold, &format!("period{holdout_period}")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_single_window_goes_to_train() {
        let s = window_and_split(24, 12, 12, DEFAULT_RATIOS).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (1, 0, 0));
    }

    #[test]
    fn hundred_steps_split() {
        let s = window_and_split(100, 12, 12, DEFAULT_RATIOS).unwrap();
        assert_eq!(s.len(), 77);
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (54, 8, 15));
        assert!(s.train.iter().max() < s.val.iter().min());
        assert!(s.val.iter().max() < s.test.iter().min());
        let mut all = s.all();
        all.dedup();
        assert_eq!(all, (0..77).collect::<Vec<_>>());
    }

    #[test]
    fn too_short_series() {
        assert!(window_and_split(23, 12, 12, DEFAULT_RATIOS).is_err());
    }

    fn ramp(t: usize) -> DomainSeries {
        let values = Array2::from_shape_fn((t, 2), |(i, j)| (i * 2 + j) as f64);
        DomainSeries::new(0, "ramp", values, Provenance::File { path: "-".into() })
    }

    #[test]
    fn four_periods_hold_out_a_quarter() {
        let s = ramp(96 * 3);
        let (train, hold) = temporal_domain_split(&s, 96, 4, 3).unwrap();
        assert_eq!(train.len(), 72 * 3);
        assert_eq!(hold.len(), 24 * 3);
        assert_eq!(hold.segments.len(), 3);
        assert_eq!(hold.values[[0, 0]], 72.0 * 2.0);
        assert_eq!(train.segments, vec![0..72, 72..144, 144..216]);
    }

    #[test]
    fn six_periods_hold_out_a_sixth() {
        let s = ramp(288 * 2);
        let (train, hold) = temporal_domain_split(&s, 288, 6, 5).unwrap();
        assert_eq!(train.len(), 240 * 2);
        assert_eq!(hold.len(), 48 * 2);
    }

    #[test]
    fn split_errors() {
        let s = ramp(96);
        assert!(temporal_domain_split(&s, 96, 1, 0).is_err());
        assert!(temporal_domain_split(&s, 96, 5, 4).is_err());
        assert!(temporal_domain_split(&s, 96, 4, 4).is_err());
    }
}
