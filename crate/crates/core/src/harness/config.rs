use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backbone::{AdamConfig, ArchConfig, ConvergenceConfig};
use crate::coupler::{EvolveConfig, GatePolicy, OrderPolicy, SchedulePolicy};
use crate::datagen::{CsvLayout, GraphModel, SyntheticConfig};
use crate::elastic::ContainerConfig;
use crate::error::{Error, Result};
use crate::info_audit::{Binning, HistogramEstimator};
use crate::personality::ExtractorTrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Variant {
    #[default]
    #[serde(rename = "full")]
    Full,
    /// Random group order.
    #[serde(rename = "REO")]
    Reo,
    /// Static dropout and decay instead of the elastic schedule.
    #[serde(rename = "Ela")]
    Ela,
    /// No gate: every group is absorbed.
    #[serde(rename = "PE")]
    Pe,
    /// Hard-to-easy order.
    #[serde(rename = "H2E")]
    H2e,
    /// One isolated model per group.
    #[serde(rename = "IL")]
    Il,
    /// `p = p_0 / l` expansion rate.
    #[serde(rename = "DER")]
    Der,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Full,
        Variant::Reo,
        Variant::Ela,
        Variant::Pe,
        Variant::H2e,
        Variant::Il,
        Variant::Der,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Reo => "REO",
            Variant::Ela => "Ela",
            Variant::Pe => "PE",
            Variant::H2e => "H2E",
            Variant::Il => "IL",
            Variant::Der => "DER",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic(SyntheticConfig),
    /// One file per source domain, all on the same node set.
    Csv {
        paths: Vec<PathBuf>,
        #[serde(default)]
        layout: CsvLayout,
        #[serde(default)]
        graph_model: GraphModel,
        steps_per_day: usize,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic(SyntheticConfig::default())
    }
}

/// Everything a run depends on besides the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub t_in: usize,
    pub t_out: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Temporal domains per day; the holdout one is never trained on.
    pub periods_per_day: usize,
    /// Defaults to the last period.
    pub holdout_period: Option<usize>,
    pub split_ratios: [f64; 3],
    pub p0: f64,
    pub lambda0: f64,
    pub kappa: Option<f64>,
    pub kappa_factor: f64,
    pub margin: f64,
    pub embed_dim: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs_per_group: usize,
    pub extractor_epochs: usize,
    pub extractor_pairs: usize,
    pub probe_max_epochs: usize,
    pub cycles: usize,
    pub seed: u64,
    pub variant: Variant,
    pub audit_bins: usize,
    pub audit_binning: Binning,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            t_in: 12,
            t_out: 3,
            hidden1: 32,
            hidden2: 32,
            periods_per_day: 4,
            holdout_period: None,
            split_ratios: crate::datagen::DEFAULT_RATIOS,
            p0: 0.5,
            lambda0: 0.05,
            kappa: None,
            kappa_factor: 2.0,
            margin: 1.0,
            embed_dim: 16,
            learning_rate: 0.01,
            weight_decay: 0.001,
            batch_size: 32,
            epochs_per_group: 30,
            extractor_epochs: 50,
            extractor_pairs: 512,
            probe_max_epochs: 100,
            cycles: 1,
            seed: 0,
            variant: Variant::Full,
            audit_bins: 16,
            audit_binning: Binning::EqualFrequency,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    /// Read JSON, or TOML when the extension is `.toml`.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let is_toml = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
        let config: Self = if is_toml {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        config.validate()?;
        Ok(config)
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            t_in: self.t_in,
            t_out: self.t_out,
            feature_count: 1,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }

    pub fn estimator(&self) -> Result<HistogramEstimator> {
        HistogramEstimator::new(self.audit_bins, self.audit_binning)
    }

    pub fn holdout(&self) -> usize {
        self.holdout_period
            .unwrap_or(self.periods_per_day.saturating_sub(1))
    }

    pub fn steps_per_day(&self) -> usize {
        match &self.dataset {
            DatasetSpec::Synthetic(s) => s.steps_per_day,
            DatasetSpec::Csv { steps_per_day, .. } => *steps_per_day,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p0 > 0.0 && self.p0 <= 1.0) {
            return Err(Error::Config(format!("p0 = {} outside (0, 1]", self.p0)));
        }
        if !(self.lambda0 > 0.0 && self.lambda0 < 1.0) {
            return Err(Error::Config(format!("lambda0 = {} outside (0, 1)", self.lambda0)));
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) {
                return Err(Error::Config(format!("kappa = {k} must be > 0")));
            }
        }
        if self.periods_per_day < 2 {
            return Err(Error::Config("periods_per_day must be >= 2".into()));
        }
        if self.holdout() >= self.periods_per_day {
            return Err(Error::Config("holdout_period out of range".into()));
        }
        if let DatasetSpec::Synthetic(s) = &self.dataset {
            s.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.arch().validate()?;
        self.estimator()?;
        Ok(())
    }

    /// Evolution settings with the variant's switch applied.
    pub fn evolve_config(&self) -> EvolveConfig {
        let adam = self.adam();
        let mut c = EvolveConfig {
            arch: self.arch(),
            container: ContainerConfig {
                adam,
                batch_size: self.batch_size,
                epochs_per_group: self.epochs_per_group,
            },
            probe: ConvergenceConfig {
                max_epochs: self.probe_max_epochs,
                batch_size: self.batch_size,
                seed: self.seed,
                ..ConvergenceConfig::default()
            },
            p0: self.p0,
            lambda0: self.lambda0,
            kappa: self.kappa,
            kappa_factor: self.kappa_factor,
            margin: self.margin,
            embed_dim: self.embed_dim,
            extractor_epochs: self.extractor_epochs,
            extractor: ExtractorTrainConfig {
                pairs_per_epoch: self.extractor_pairs,
                seed: self.seed,
                ..ExtractorTrainConfig::default()
            },
            cycles: self.cycles,
            seed: self.seed,
            order: OrderPolicy::Curriculum,
            schedule: SchedulePolicy::Elastic,
            gate: GatePolicy::Judged,
        };
        match self.variant {
            Variant::Full | Variant::Il => {}
            Variant::Reo => c.order = OrderPolicy::Shuffled,
            Variant::Ela => {
                c.schedule = SchedulePolicy::Static {
                    p: 0.1,
                    lambda: 0.001,
                }
            }
            Variant::Pe => c.gate = GatePolicy::AbsorbAll,
            Variant::H2e => c.order = OrderPolicy::Reversed,
            Variant::Der => c.schedule = SchedulePolicy::Divided,
        }
        c
    }
}
