use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig, Variant};
use super::metrics::{evaluate, DomainMetrics, MetricsReport};
use crate::backbone::{train_epochs, GraphSpec, ModelParams};
use crate::coupler::{evolve_with_order, Evolution, RecordKind};
use crate::curriculum::{reorder, OrderingReport, Reordering};
use crate::datagen::{
    gen_domains, gen_graph, load_csv, temporal_domain_split, CsvSchema, DomainGroup, DomainSeries,
};
use crate::error::{Error, Result};
use crate::info_audit::{audit as audit_domains, EntropyReport};
use crate::seed::derive_seed;

/// Source domains split into training periods and the held-out period.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub domains: Vec<DomainSeries>,
    pub graph: Arc<GraphSpec>,
    pub train: Vec<DomainGroup>,
    pub holdout: Vec<DomainGroup>,
}

pub fn load_domains(config: &ExperimentConfig) -> Result<(Vec<DomainSeries>, GraphSpec)> {
    match &config.dataset {
        DatasetSpec::Synthetic(s) => {
            let graph = s.graph()?;
            let domains = gen_domains(s, &graph)?;
            Ok((domains, graph))
        }
        DatasetSpec::Csv {
            paths,
            layout,
            graph_model,
            ..
        } => {
            if paths.is_empty() {
                return Err(Error::Config("csv dataset lists no paths".into()));
            }
            let domains = paths
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    load_csv(
                        p,
                        &CsvSchema {
                            layout: *layout,
                            group_id: i,
                        },
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let n = domains[0].node_count();
            if domains.iter().any(|d| d.node_count() != n) {
                return Err(Error::Config("csv domains have different node counts".into()));
            }
            let graph = gen_graph(*graph_model, n, derive_seed(config.seed, 0))?;
            Ok((domains, graph))
        }
    }
}

pub fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let (domains, graph) = load_domains(config)?;
    let graph = Arc::new(graph);
    let mut train = Vec::with_capacity(domains.len());
    let mut holdout = Vec::with_capacity(domains.len());
    for d in &domains {
        let (tr, ho) = temporal_domain_split(d, config.steps_per_day(), config.periods_per_day, config.holdout())?;
        train.push(DomainGroup::new(tr, graph.clone(), config.t_in, config.t_out, config.split_ratios)?);
        holdout.push(DomainGroup::new(ho, graph.clone(), config.t_in, config.t_out, [1.0, 0.0, 0.0])?);
    }
    Ok(Prepared {
        domains,
        graph,
        train,
        holdout,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleLoss {
    pub group_id: usize,
    pub cycle: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub group_id: usize,
    pub cycle: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub variant: Variant,
    pub seed: u64,
    /// Held-out temporal period of every source domain.
    pub holdout: MetricsReport,
    /// Test split of each training group.
    pub in_domain: MetricsReport,
    pub ordering: Option<OrderingReport>,
    pub stream: Vec<usize>,
    pub kappa: Option<f64>,
    pub gate_decisions: usize,
    pub absorbed: Vec<usize>,
    pub isolated: Vec<usize>,
    pub final_losses: Vec<CycleLoss>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub evolution: Option<Evolution>,
    /// Per-group models of the isolated variant.
    pub isolated_models: BTreeMap<usize, ModelParams>,
    pub losses: Vec<LossRow>,
}

fn score<'a>(
    groups: &[DomainGroup],
    model_for: impl Fn(usize) -> (&'a ModelParams, &'static str),
    all_windows: bool,
) -> Result<MetricsReport> {
    let domains = groups
        .iter()
        .map(|g| {
            let batch = if all_windows { g.all_batch()? } else { g.test_batch()? };
            let (params, model) = model_for(g.id);
            Ok(DomainMetrics {
                group_id: g.id,
                model: model.to_string(),
                metrics: evaluate(params, &batch, &g.graph)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    MetricsReport::from_domains(domains)
}

fn evolution_model(evo: &Evolution, id: usize) -> (&ModelParams, &'static str) {
    match evo.isolated.get(&id) {
        Some(p) => (p, "isolated"),
        None => (&evo.container.params, "container"),
    }
}

fn run_isolated(config: &ExperimentConfig, prepared: &Prepared) -> Result<RunOutput> {
    let epochs = config.epochs_per_group * config.cycles;
    let trained = prepared
        .train
        .iter()
        .map(|g| {
            let init = ModelParams::init(config.arch(), derive_seed(config.seed, 1000 + g.id as u64));
            let data = g.train_batch()?;
            let seed = derive_seed(config.seed, 2000 + g.id as u64);
            train_epochs(&init, &data, &g.graph, config.adam(), config.batch_size, epochs, seed)
                .map(|r| (g.id, r))
                .map_err(|e| e.in_group(g.id))
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_phase("train"))?;
    let mut losses = Vec::new();
    let mut final_losses = Vec::new();
    let mut models = BTreeMap::new();
    for (id, (params, trace)) in trained {
        losses.extend(trace.iter().enumerate().map(|(epoch, &loss)| LossRow {
            group_id: id,
            cycle: 1,
            epoch,
            loss,
        }));
        if let Some(&l) = trace.last() {
            final_losses.push(CycleLoss {
                group_id: id,
                cycle: 1,
                final_loss: l,
            });
        }
        models.insert(id, params);
    }
    let holdout = score(&prepared.holdout, |id| (&models[&id], "isolated"), true)
        .map_err(|e| e.in_phase("evaluate"))?;
    let in_domain = score(&prepared.train, |id| (&models[&id], "isolated"), false)
        .map_err(|e| e.in_phase("evaluate"))?;
    let report = RunReport {
        variant: config.variant,
        seed: config.seed,
        holdout,
        in_domain,
        ordering: None,
        stream: prepared.train.iter().map(|g| g.id).collect(),
        kappa: None,
        gate_decisions: 0,
        absorbed: Vec::new(),
        isolated: models.keys().copied().collect(),
        final_losses,
    };
    Ok(RunOutput {
        report,
        evolution: None,
        isolated_models: models,
        losses,
    })
}

/// Evolve on prepared data, reusing `reordering` when given.
pub fn run_prepared(
    config: &ExperimentConfig,
    prepared: &Prepared,
    reordering: Option<Reordering>,
) -> Result<RunOutput> {
    if config.variant == Variant::Il {
        return run_isolated(config, prepared);
    }
    let evolve_config = config.evolve_config();
    let reordering = match reordering {
        Some(r) => r,
        None => reorder(&prepared.train, &evolve_config.probe_config()).map_err(|e| e.in_phase("reorder"))?,
    };
    let evo = evolve_with_order(&prepared.train, &evolve_config, reordering).map_err(|e| match e {
        Error::Phase { .. } => e,
        other => other.in_phase("evolve"),
    })?;
    let holdout = score(&prepared.holdout, |id| evolution_model(&evo, id), true)
        .map_err(|e| e.in_phase("evaluate"))?;
    let in_domain = score(&prepared.train, |id| evolution_model(&evo, id), false)
        .map_err(|e| e.in_phase("evaluate"))?;
    let records = evo.log.records();
    let losses = records
        .iter()
        .flat_map(|r| {
            r.loss_trace.iter().enumerate().map(move |(epoch, &loss)| LossRow {
                group_id: r.group_id,
                cycle: r.cycle,
                epoch,
                loss,
            })
        })
        .collect();
    let final_losses = records
        .iter()
        .filter(|r| r.h == 1)
        .filter_map(|r| {
            r.final_loss.map(|l| CycleLoss {
                group_id: r.group_id,
                cycle: r.cycle,
                final_loss: l,
            })
        })
        .collect();
    let report = RunReport {
        variant: config.variant,
        seed: config.seed,
        holdout,
        in_domain,
        ordering: Some(evo.reordering.report()),
        stream: evo.stream.clone(),
        kappa: Some(evo.kappa),
        gate_decisions: evo.log.gate_decisions().count(),
        absorbed: evo.absorbed_groups.iter().map(|g| g.id).collect(),
        isolated: evo.isolated.keys().copied().collect(),
        final_losses,
    };
    Ok(RunOutput {
        report,
        evolution: Some(evo),
        isolated_models: BTreeMap::new(),
        losses,
    })
}

/// Generate or load the data, order, evolve and evaluate.
pub fn run_full(config: &ExperimentConfig) -> Result<RunOutput> {
    let prepared = prepare(config).map_err(|e| e.in_phase("datagen"))?;
    run_prepared(config, &prepared, None)
}

pub fn run_ablation(config: &ExperimentConfig) -> Result<RunOutput> {
    if config.variant == Variant::Full {
        return Err(Error::Config("ablation needs a variant other than full".into()));
    }
    run_full(config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub absorbed: usize,
    pub group_id: usize,
    pub mean_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroShotReport {
    pub synevo: MetricsReport,
    pub baseline: MetricsReport,
    pub baseline_domain: usize,
    pub baseline_epochs: usize,
    /// `1 - synevo / baseline` on mean MAE.
    pub relative_improvement: f64,
    /// Held-out MAE of the container after each first-cycle absorption.
    pub absorb_curve: Vec<CurvePoint>,
}

/// Compare the evolved models with a single-domain backbone on the held-out
/// period; neither sees holdout data during training.
pub fn run_zero_shot(config: &ExperimentConfig) -> Result<ZeroShotReport> {
    let prepared = prepare(config).map_err(|e| e.in_phase("datagen"))?;
    let run = run_prepared(config, &prepared, None)?;
    zero_shot_from(config, &prepared, &run)
}

pub fn zero_shot_from(config: &ExperimentConfig, prepared: &Prepared, run: &RunOutput) -> Result<ZeroShotReport> {
    let source = prepared
        .train
        .iter()
        .min_by_key(|g| g.id)
        .ok_or_else(|| Error::Empty("no source domains".into()))?;
    let epochs = config.epochs_per_group * prepared.train.len() * config.cycles;
    let init = ModelParams::init(config.arch(), config.seed);
    let (baseline_params, _) = train_epochs(
        &init,
        &source.train_batch()?,
        &source.graph,
        config.adam(),
        config.batch_size,
        epochs,
        derive_seed(config.seed, 3000),
    )
    .map_err(|e| e.in_phase("baseline"))?;
    let baseline = score(&prepared.holdout, |_| (&baseline_params, "baseline"), true)?;
    let mut absorb_curve = Vec::new();
    if let Some(evo) = &run.evolution {
        for (k, (id, params)) in evo.snapshots.iter().enumerate() {
            let m = score(&prepared.holdout, |_| (params, "container"), true)?;
            absorb_curve.push(CurvePoint {
                absorbed: k + 1,
                group_id: *id,
                mean_mae: m.mean_mae,
            });
        }
    }
    let synevo = run.report.holdout.clone();
    Ok(ZeroShotReport {
        relative_improvement: 1.0 - synevo.mean_mae / baseline.mean_mae,
        synevo,
        baseline,
        baseline_domain: source.id,
        baseline_epochs: epochs,
        absorb_curve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub p0: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Default for SweepGrid {
    fn default() -> Self {
        Self {
            p0: vec![0.1, 0.3, 0.5, 0.7, 1.0],
            lambda0: vec![0.01, 0.03, 0.05, 0.07, 0.1],
            kappa: vec![1e3, 1e4, 1e5, 1e6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub p0: f64,
    pub lambda0: f64,
    pub kappa: f64,
    pub mean_mae: Option<f64>,
    pub mean_rmse: Option<f64>,
    pub absorbed: Option<usize>,
    pub isolated: Option<usize>,
    pub error: Option<String>,
}

/// Cartesian sweep; each cell is an independent seeded run. Failed cells are
/// recorded and the sweep continues.
pub fn sweep(config: &ExperimentConfig, grid: &SweepGrid) -> Result<Vec<SweepCell>> {
    if grid.p0.is_empty() || grid.lambda0.is_empty() || grid.kappa.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let prepared = prepare(config).map_err(|e| e.in_phase("datagen"))?;
    let base = config.evolve_config();
    let reordering = if config.variant == Variant::Il {
        None
    } else {
        Some(reorder(&prepared.train, &base.probe_config()).map_err(|e| e.in_phase("reorder"))?)
    };
    let mut cells = Vec::new();
    for &p0 in &grid.p0 {
        for &lambda0 in &grid.lambda0 {
            for &kappa in &grid.kappa {
                cells.push((p0, lambda0, kappa));
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(p0, lambda0, kappa)| {
            let cell_config = ExperimentConfig {
                p0,
                lambda0,
                kappa: Some(kappa),
                ..config.clone()
            };
            let outcome = cell_config
                .validate()
                .and_then(|_| run_prepared(&cell_config, &prepared, reordering.clone()));
            match outcome {
                Ok(run) => SweepCell {
                    p0,
                    lambda0,
                    kappa,
                    mean_mae: Some(run.report.holdout.mean_mae),
                    mean_rmse: Some(run.report.holdout.mean_rmse),
                    absorbed: Some(gated_count(&run, 1)),
                    isolated: Some(gated_count(&run, 0)),
                    error: None,
                },
                Err(e) => SweepCell {
                    p0,
                    lambda0,
                    kappa,
                    mean_mae: None,
                    mean_rmse: None,
                    absorbed: None,
                    isolated: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect())
}

fn gated_count(run: &RunOutput, h: u8) -> usize {
    run.evolution.as_ref().map_or(0, |evo| {
        evo.log
            .records()
            .iter()
            .filter(|r| r.kind == RecordKind::Gated && r.h == h)
            .count()
    })
}

/// Entropy audit of the generated or loaded source domains.
pub fn audit(config: &ExperimentConfig) -> Result<EntropyReport> {
    let (domains, _) = load_domains(config).map_err(|e| e.in_phase("datagen"))?;
    audit_domains(&domains, &config.estimator()?).map_err(|e| e.in_phase("audit"))
}

/// Score a stored container on the held-out period.
pub fn evaluate_params(config: &ExperimentConfig, params: &ModelParams) -> Result<MetricsReport> {
    let prepared = prepare(config).map_err(|e| e.in_phase("datagen"))?;
    score(&prepared.holdout, |_| (params, "checkpoint"), true).map_err(|e| e.in_phase("evaluate"))
}
