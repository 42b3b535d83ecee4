//! Adaptive dynamic coupler and the evolution loop.
//!
//! A new group is embedded by the personality extractor and compared with the
//! stored embeddings of absorbed groups. With `D_min` the smallest distance,
//! the gate is `h = 1` iff `0 < D_min < κ`, and the group contributes
//!
//! ```text
//! h · (L(θ) + λ‖θ‖²) + (1 - h) · L(θ_init)
//! ```
//!
//! Absorbed groups train the common container under their elastic schedule;
//! rejected groups get a fresh model and the extractor is re-instantiated.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backbone::{train_epochs, ArchConfig, ConvergenceConfig, ModelParams};
use crate::curriculum::{difficulty, profile_group, reorder, GradientProfile, ProbeConfig, Reordering};
use crate::datagen::DomainGroup;
use crate::elastic::{
    schedule_clamped, train_on_group, CommonContainerState, ContainerConfig, ElasticSchedule,
};
use crate::error::{Error, Result};
use crate::harness::metrics::{evaluate, Metrics};
use crate::personality::{
    distance, train_extractor, DomainEmbedding, EmbeddingTable, Extractor, ExtractorTrainConfig,
};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceRegistry {
    pub entries: Vec<(usize, f64)>,
    pub d_min: f64,
    pub kappa: f64,
}

pub fn build_registry(
    new_embedding: &[f64],
    stored: &[DomainEmbedding],
    kappa: f64,
) -> Result<DistanceRegistry> {
    if stored.is_empty() {
        return Err(Error::Empty("no stored embeddings to compare against".into()));
    }
    let entries = stored
        .iter()
        .map(|e| Ok((e.group_id, distance(new_embedding, &e.vector)?)))
        .collect::<Result<Vec<_>>>()?;
    let d_min = entries.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    Ok(DistanceRegistry {
        entries,
        d_min,
        kappa,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Absorb,
    Isolate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub h: u8,
    pub d_min: f64,
    pub kappa: f64,
    pub branch: Branch,
}

/// `h = 1` iff `0 < d_min < kappa`.
pub fn gate(d_min: f64, kappa: f64) -> GateDecision {
    let h = d_min > 0.0 && d_min < kappa;
    GateDecision {
        h: h as u8,
        d_min,
        kappa,
        branch: if h { Branch::Absorb } else { Branch::Isolate },
    }
}

pub fn assemble_loss(
    decision: &GateDecision,
    container_loss: f64,
    lambda: f64,
    theta_norm_sq: f64,
    isolated_loss: f64,
) -> f64 {
    if decision.h == 1 {
        container_loss + lambda * theta_norm_sq
    } else {
        isolated_loss
    }
}

/// `factor ×` the largest pairwise distance among `embeddings`.
pub fn calibrate_kappa(embeddings: &[DomainEmbedding], factor: f64) -> Result<f64> {
    let mut widest = 0.0f64;
    for (i, a) in embeddings.iter().enumerate() {
        for b in &embeddings[i + 1..] {
            widest = widest.max(distance(&a.vector, &b.vector)?);
        }
    }
    Ok(factor * widest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrderPolicy {
    /// Ascending difficulty.
    #[default]
    Curriculum,
    /// Descending difficulty.
    Reversed,
    /// Seeded random permutation.
    Shuffled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SchedulePolicy {
    /// `p_0 (1 - e^{l - d_max})`, likewise for λ.
    #[default]
    Elastic,
    /// The same `(p, λ)` for every group.
    Static { p: f64, lambda: f64 },
    /// `p = p_0 / l`, falling back to `p_0` when `l ≤ 1`; λ stays elastic.
    Divided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GatePolicy {
    #[default]
    Judged,
    AbsorbAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolveConfig {
    pub arch: ArchConfig,
    pub container: ContainerConfig,
    /// Probe training for difficulty profiling.
    pub probe: ConvergenceConfig,
    pub p0: f64,
    pub lambda0: f64,
    /// Fixed threshold; `None` calibrates it from the stream's embeddings.
    pub kappa: Option<f64>,
    pub kappa_factor: f64,
    pub margin: f64,
    pub embed_dim: usize,
    pub extractor_epochs: usize,
    pub extractor: ExtractorTrainConfig,
    pub cycles: usize,
    pub seed: u64,
    pub order: OrderPolicy,
    pub schedule: SchedulePolicy,
    pub gate: GatePolicy,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            arch: ArchConfig::default(),
            container: ContainerConfig::default(),
            probe: ConvergenceConfig::default(),
            p0: 0.5,
            lambda0: 0.05,
            kappa: None,
            kappa_factor: 2.0,
            margin: 1.0,
            embed_dim: 16,
            extractor_epochs: 50,
            extractor: ExtractorTrainConfig::default(),
            cycles: 1,
            seed: 0,
            order: OrderPolicy::Curriculum,
            schedule: SchedulePolicy::Elastic,
            gate: GatePolicy::Judged,
        }
    }
}

impl EvolveConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
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
        if !(self.kappa_factor > 0.0) {
            return Err(Error::Config("kappa_factor must be > 0".into()));
        }
        if !(self.margin > 0.0) || self.embed_dim == 0 {
            return Err(Error::Config("margin must be > 0 and embed_dim >= 1".into()));
        }
        if self.cycles == 0 {
            return Err(Error::Config("cycles must be >= 1".into()));
        }
        if let SchedulePolicy::Static { p, lambda } = self.schedule {
            if !(0.0..1.0).contains(&p) || !(lambda >= 0.0) {
                return Err(Error::Config(format!("static schedule ({p}, {lambda}) out of range")));
            }
        }
        Ok(())
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            arch: self.arch,
            adam: self.container.adam,
            convergence: self.probe,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    /// First group of the stream; absorbed without a gate.
    Bootstrap,
    Gated,
    /// A later cycle over an already absorbed group.
    Revisit,
}

/// One processed group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionRecord {
    pub group_id: usize,
    pub cycle: usize,
    pub kind: RecordKind,
    pub d_min: Option<f64>,
    pub kappa: f64,
    pub h: u8,
    pub length: f64,
    pub p: f64,
    pub lambda: f64,
    pub final_loss: Option<f64>,
    pub eval_metrics: Option<Metrics>,
    pub loss_trace: Vec<f64>,
    pub extractor_generation: u32,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub flags: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

/// Append-only record of the evolution, one entry per processed group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct EvolutionLog {
    records: Vec<EvolutionRecord>,
}

impl EvolutionLog {
    pub fn push(&mut self, record: EvolutionRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[EvolutionRecord] {
        &self.records
    }

    pub fn gate_decisions(&self) -> impl Iterator<Item = &EvolutionRecord> {
        self.records.iter().filter(|r| r.kind == RecordKind::Gated)
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_jsonl()?.as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }
}

/// Everything the loop carries between groups.
#[derive(Debug, Clone)]
pub struct Evolution {
    pub config: EvolveConfig,
    pub container: CommonContainerState,
    pub extractor: Extractor,
    pub kappa: f64,
    pub reordering: Reordering,
    /// Sequence actually fed to the container.
    pub stream: Vec<usize>,
    /// Embeddings of the absorbed groups under the current extractor.
    pub stored: Vec<DomainEmbedding>,
    pub absorbed_groups: Vec<DomainGroup>,
    pub schedules: BTreeMap<usize, ElasticSchedule>,
    /// Fresh models trained for rejected groups.
    pub isolated: BTreeMap<usize, ModelParams>,
    /// Container parameters after each first-cycle absorption.
    pub snapshots: Vec<(usize, ModelParams)>,
    pub log: EvolutionLog,
}

fn eval_on(params: &ModelParams, group: &DomainGroup) -> Option<Metrics> {
    let starts = if !group.splits.test.is_empty() {
        &group.splits.test
    } else if !group.splits.val.is_empty() {
        &group.splits.val
    } else {
        &group.splits.train
    };
    let batch = group.batch(starts).ok()?;
    evaluate(params, &batch, &group.graph).ok()
}

impl Evolution {
    /// Apply the configured schedule policy to a difficulty length.
    pub fn schedule_for(&self, group_id: usize, length: f64) -> Result<(ElasticSchedule, Vec<String>)> {
        let c = &self.config;
        let d_max = self.reordering.d_max;
        let mut flags = Vec::new();
        let s = match c.schedule {
            SchedulePolicy::Elastic => schedule_clamped(group_id, length, d_max, c.p0, c.lambda0)?,
            SchedulePolicy::Static { p, lambda } => ElasticSchedule::fixed(group_id, p, lambda),
            SchedulePolicy::Divided => {
                let mut s = schedule_clamped(group_id, length, d_max, c.p0, c.lambda0)?;
                s.p = if length <= 1.0 {
                    log::info!("group {group_id}: l = {length} <= 1, divided rate guarded to p_0");
                    flags.push("divided_guard".to_string());
                    c.p0
                } else {
                    c.p0 / length
                };
                s
            }
        };
        if s.clamped {
            flags.push("clamped".to_string());
        }
        Ok((s, flags))
    }

    /// Difficulty length of `group`: the stored one for stream groups, else
    /// profiled against the frozen bench.
    fn length_of(&self, group: &DomainGroup) -> Result<f64> {
        if let Some(l) = self.reordering.length_of(group.id) {
            return Ok(l);
        }
        let profile: GradientProfile = profile_group(group, &self.config.probe_config())?;
        Ok(difficulty(&profile, self.reordering.bench_profile())?.length)
    }

    fn store_embedding(&mut self, emb: DomainEmbedding) {
        match self.stored.iter_mut().find(|e| e.group_id == emb.group_id) {
            Some(slot) => *slot = emb,
            None => self.stored.push(emb),
        }
    }

    fn absorb(&mut self, group: &DomainGroup, cycle: usize, kind: RecordKind, decision: Option<GateDecision>) -> Result<()> {
        let length = self.length_of(group)?;
        let (sched, mut flags) = self.schedule_for(group.id, length)?;
        if decision.is_some_and(|d| d.d_min == 0.0) {
            flags.push("d_min_zero".into());
        }
        let epochs = self.config.container.epochs_per_group;
        let result = train_on_group(&mut self.container, group, &sched, epochs, cycle);
        let mut record = EvolutionRecord {
            group_id: group.id,
            cycle,
            kind,
            d_min: decision.map(|d| d.d_min),
            kappa: self.kappa,
            h: 1,
            length,
            p: sched.p,
            lambda: sched.lambda,
            final_loss: None,
            eval_metrics: None,
            loss_trace: Vec::new(),
            extractor_generation: self.extractor.generation,
            flags,
            error: None,
        };
        match result {
            Ok(trace) => {
                record.final_loss = trace.last().copied();
                record.loss_trace = trace;
                record.eval_metrics = eval_on(&self.container.params, group);
                self.log.push(record);
            }
            Err(e) => {
                record.error = Some(e.to_string());
                self.log.push(record);
                return Err(e);
            }
        }
        self.schedules.insert(group.id, sched);
        if !self.absorbed_groups.iter().any(|g| g.id == group.id) {
            self.absorbed_groups.push(group.clone());
        }
        if cycle == 1 {
            self.snapshots.push((group.id, self.container.params.clone()));
        }
        Ok(())
    }

    fn isolate(&mut self, group: &DomainGroup, cycle: usize, decision: GateDecision) -> Result<()> {
        let c = self.config;
        let init = ModelParams::init(c.arch, derive_seed(c.seed, 1000 + group.id as u64));
        let result = group.train_batch().and_then(|data| {
            train_epochs(
                &init,
                &data,
                &group.graph,
                c.container.adam,
                c.container.batch_size,
                c.container.epochs_per_group,
                derive_seed(c.seed, 2000 + group.id as u64),
            )
        });
        let mut flags = Vec::new();
        if decision.d_min == 0.0 {
            flags.push("d_min_zero".to_string());
        }
        let mut record = EvolutionRecord {
            group_id: group.id,
            cycle,
            kind: RecordKind::Gated,
            d_min: Some(decision.d_min),
            kappa: self.kappa,
            h: 0,
            length: f64::NAN,
            p: 0.0,
            lambda: c.container.adam.weight_decay,
            final_loss: None,
            eval_metrics: None,
            loss_trace: Vec::new(),
            extractor_generation: self.extractor.generation,
            flags,
            error: None,
        };
        let (params, trace) = match result {
            Ok(v) => v,
            Err(e) => {
                let e = e.in_group(group.id);
                record.error = Some(e.to_string());
                self.log.push(record);
                return Err(e);
            }
        };

        // Warm-started extractor adapted to the absorbed groups plus the new one.
        let mut next = self.extractor.reinstantiate();
        let mut pool: Vec<&DomainGroup> = self.absorbed_groups.iter().collect();
        pool.push(group);
        train_extractor(&mut next, &pool, &c.extractor, c.extractor_epochs)?;
        self.extractor = next;
        self.stored = self
            .absorbed_groups
            .iter()
            .map(|g| self.extractor.embed(g))
            .collect::<Result<Vec<_>>>()?;

        record.final_loss = trace.last().copied();
        record.loss_trace = trace;
        record.eval_metrics = eval_on(&params, group);
        record.extractor_generation = self.extractor.generation;
        self.log.push(record);
        self.isolated.insert(group.id, params);
        Ok(())
    }

    /// Gate a new group and route it to the container or to a fresh model.
    pub fn incorporate(&mut self, group: &DomainGroup) -> Result<GateDecision> {
        self.incorporate_in_cycle(group, 1)
    }

    fn incorporate_in_cycle(&mut self, group: &DomainGroup, cycle: usize) -> Result<GateDecision> {
        let emb = self.extractor.embed(group)?;
        let registry = build_registry(&emb.vector, &self.stored, self.kappa)?;
        let judged = gate(registry.d_min, self.kappa);
        let decision = match self.config.gate {
            GatePolicy::Judged => judged,
            GatePolicy::AbsorbAll => GateDecision {
                h: 1,
                branch: Branch::Absorb,
                ..judged
            },
        };
        if registry.d_min == 0.0 {
            log::warn!("group {}: D_min = 0, gate rejects by construction", group.id);
        }
        if decision.h == 1 {
            self.absorb(group, cycle, RecordKind::Gated, Some(decision))?;
            self.store_embedding(emb);
        } else {
            self.isolate(group, cycle, decision)?;
        }
        Ok(decision)
    }

    pub fn embedding_table(&self) -> EmbeddingTable {
        EmbeddingTable {
            generation: self.extractor.generation,
            entries: self.stored.clone(),
        }
    }

    /// The model that answers for `group_id`: its isolated model if it was
    /// rejected, otherwise the container.
    pub fn model_for(&self, group_id: usize) -> &ModelParams {
        self.isolated.get(&group_id).unwrap_or(&self.container.params)
    }
}

fn stream_order(reordering: &Reordering, policy: OrderPolicy, seed: u64) -> Vec<usize> {
    let mut ids = reordering.order.ids.clone();
    match policy {
        OrderPolicy::Curriculum => {}
        OrderPolicy::Reversed => ids.reverse(),
        OrderPolicy::Shuffled => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 11));
            ids.shuffle(&mut rng);
        }
    }
    ids
}

/// Order the groups, pre-train the extractor, then absorb or isolate each
/// group in turn. Later cycles revisit the absorbed groups in the same order.
pub fn evolve(groups: &[DomainGroup], config: &EvolveConfig) -> Result<Evolution> {
    config.validate()?;
    if groups.is_empty() {
        return Err(Error::Empty("evolve needs at least one group".into()));
    }
    let reordering = reorder(groups, &config.probe_config()).map_err(|e| e.in_phase("reorder"))?;
    evolve_with_order(groups, config, reordering)
}

/// [`evolve`] with a precomputed ordering.
pub fn evolve_with_order(
    groups: &[DomainGroup],
    config: &EvolveConfig,
    reordering: Reordering,
) -> Result<Evolution> {
    config.validate()?;
    let by_id: BTreeMap<usize, &DomainGroup> = groups.iter().map(|g| (g.id, g)).collect();
    if by_id.len() != groups.len() {
        return Err(Error::InvalidArgument("group ids must be unique".into()));
    }
    let stream = stream_order(&reordering, config.order, config.seed);
    if let Some(id) = stream.iter().find(|id| !by_id.contains_key(id)) {
        return Err(Error::InvalidArgument(format!("ordering names unknown group {id}")));
    }

    let first = by_id[&stream[0]];
    let input_dim = first.t_in * first.series.node_count() * config.arch.feature_count;
    let mut extractor = Extractor::new(input_dim, config.embed_dim, config.margin, derive_seed(config.seed, 7))?;
    let all: Vec<&DomainGroup> = stream.iter().map(|id| by_id[id]).collect();
    train_extractor(&mut extractor, &all, &config.extractor, config.extractor_epochs)
        .map_err(|e| e.in_phase("extractor"))?;
    let kappa = match config.kappa {
        Some(k) => k,
        None => {
            let embs = all.iter().map(|g| extractor.embed(g)).collect::<Result<Vec<_>>>()?;
            let k = calibrate_kappa(&embs, config.kappa_factor)?;
            if k > 0.0 {
                k
            } else {
                config.kappa_factor * config.margin
            }
        }
    };

    let container = CommonContainerState::new(config.arch, config.container, config.seed);
    let mut evo = Evolution {
        config: *config,
        container,
        extractor,
        kappa,
        reordering,
        stream: stream.clone(),
        stored: Vec::new(),
        absorbed_groups: Vec::new(),
        schedules: BTreeMap::new(),
        isolated: BTreeMap::new(),
        snapshots: Vec::new(),
        log: EvolutionLog::default(),
    };

    evo.absorb(first, 1, RecordKind::Bootstrap, None)
        .map_err(|e| e.in_phase("evolve"))?;
    let emb = evo.extractor.embed(first)?;
    evo.store_embedding(emb);
    for id in &stream[1..] {
        evo.incorporate_in_cycle(by_id[id], 1)
            .map_err(|e| e.in_phase("evolve"))?;
    }

    for cycle in 2..=config.cycles {
        let revisit: Vec<usize> = evo.absorbed_groups.iter().map(|g| g.id).collect();
        for id in revisit {
            let group = by_id[&id];
            let sched = evo.schedules[&id];
            let epochs = config.container.epochs_per_group;
            let trace = train_on_group(&mut evo.container, group, &sched, epochs, cycle)
                .map_err(|e| e.in_phase("evolve"))?;
            evo.log.push(EvolutionRecord {
                group_id: id,
                cycle,
                kind: RecordKind::Revisit,
                d_min: None,
                kappa: evo.kappa,
                h: 1,
                length: sched.length,
                p: sched.p,
                lambda: sched.lambda,
                final_loss: trace.last().copied(),
                eval_metrics: eval_on(&evo.container.params, group),
                loss_trace: trace,
                extractor_generation: evo.extractor.generation,
                flags: Vec::new(),
                error: None,
            });
        }
    }
    Ok(evo)
}
