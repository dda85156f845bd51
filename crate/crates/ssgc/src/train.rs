//! End-to-end training: dataset assembly, plain training, interleaved ADMM
//! pruning with retraining, evaluation metrics, and sweep experiments.

use std::path::PathBuf;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{build_with_stats, SparseGraph, WnfgConfig};
use crate::nn::{adam_step, count_params, AdamState, ModelSpec, NnError, ParamSet};
use crate::prune::{
    admm_w_step, AdmmTrace, PruneConfig, PruneError, PruneState, TraceRow,
};
use crate::report::{EpochRecord, GraphStatsSummary, LayerReport, RunReport, TimingInfo};
use crate::signal::{load_bonn_record, load_csv_record, segment, to_spectrum, SignalError, Spectrum};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Prune(#[from] PruneError),
    #[error(transparent)]
    Checkpoint(#[from] crate::checkpoint::CheckpointError),
    #[error("dataset unavailable: {0}")]
    DatasetMissing(String),
    #[error("evaluation set is empty")]
    EmptyEvalSet,
    #[error("label {label} out of range for {classes} classes in {record}")]
    BadLabel {
        label: usize,
        classes: usize,
        record: String,
    },
    #[error("loss diverged at {phase} epoch {epoch}")]
    Diverged {
        phase: String,
        epoch: usize,
        partial: Box<RunReport>,
    },
}

/// Which pruning pipeline a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PruneMethod {
    /// ADMM cycles, then hard mask, then retrain.
    #[default]
    Admm,
    /// One-shot magnitude mask, then retrain.
    Magnitude,
}

impl std::fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PruneMethod::Admm => write!(f, "admm"),
            PruneMethod::Magnitude => write!(f, "magnitude"),
        }
    }
}

/// Dataset selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    /// Two synthetic spectral classes, linearly separable by construction.
    Synthetic {
        samples_per_class: usize,
        noise: f64,
    },
    /// Public EEG corpus layout: per-subset ASCII files, one value per line.
    Bonn {
        dir: PathBuf,
        /// Subset letters, in label order (for example `["A", "E"]`).
        subsets: Vec<String>,
    },
    /// Labeled CSV files fed through the generic loader.
    Csv { paths: Vec<(PathBuf, usize)> },
}

/// One classification task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub dataset: DatasetSpec,
    pub seg_len: usize,
    pub overlap: usize,
    pub half_spectrum: bool,
    /// Neighborhood distance, as a rate or an explicit K.
    pub near_field_rate: Option<f64>,
    pub k: Option<usize>,
    /// `mlp`, `gnn`, or `ssgcnet`.
    pub model: String,
    pub seed: u64,
    /// Train fraction of the stratified split.
    pub split_ratio: f64,
    /// Class treated as positive for sensitivity/specificity.
    pub positive_class: usize,
}

impl TaskSpec {
    pub fn synthetic(model: &str, seed: u64) -> TaskSpec {
        TaskSpec {
            dataset: DatasetSpec::Synthetic {
                samples_per_class: 200,
                noise: 0.5,
            },
            seg_len: 256,
            overlap: 0,
            half_spectrum: false,
            near_field_rate: Some(0.1),
            k: None,
            model: model.to_string(),
            seed,
            split_ratio: 0.8,
            positive_class: 1,
        }
    }

    fn wnfg_config(&self) -> WnfgConfig {
        match (self.k, self.near_field_rate) {
            (Some(k), _) => WnfgConfig::K(k),
            (None, Some(rate)) => WnfgConfig::NearFieldRate(rate),
            (None, None) => WnfgConfig::NearFieldRate(0.1),
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub prune: Option<PruneConfig>,
    pub prune_method: PruneMethod,
    /// Evaluate the held-out set every this many epochs.
    pub eval_every: usize,
    /// Omit wall-clock fields so report files are bitwise reproducible.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            prune: None,
            prune_method: PruneMethod::Admm,
            eval_every: 1,
            deterministic: false,
        }
    }
}

/// Confusion counts and derived rates, positive class fixed by the task.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub true_pos: usize,
    pub true_neg: usize,
    pub false_pos: usize,
    pub false_neg: usize,
}

impl Metrics {
    pub fn from_counts(tp: usize, tn: usize, fp: usize, fneg: usize) -> Metrics {
        let total = (tp + tn + fp + fneg) as f64;
        let div = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        Metrics {
            accuracy: if total == 0.0 {
                0.0
            } else {
                (tp + tn) as f64 / total
            },
            sensitivity: div(tp, tp + fneg),
            specificity: div(tn, tn + fp),
            true_pos: tp,
            true_neg: tn,
            false_pos: fp,
            false_neg: fneg,
        }
    }
}

/// One row of a near-field-rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NfrRow {
    pub rate: f64,
    pub accuracy: f64,
    pub mean_nnz: f64,
    pub build_seconds: f64,
    pub bytes: usize,
    pub error: Option<String>,
}

/// One row of a connection-rate sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub method: String,
    pub rate: f64,
    pub accuracy: f64,
    pub surviving_params: usize,
    pub error: Option<String>,
}

/// Graphs ready for training, plus build accounting.
pub struct PreparedData {
    pub train: Vec<SparseGraph>,
    pub test: Vec<SparseGraph>,
    pub n: usize,
    pub class_count: usize,
    pub stats: GraphStatsSummary,
}

/// Synthetic two-class segments: a shared low-frequency component plus a
/// class-specific oscillation and Gaussian noise. The spectral peaks sit
/// far enough apart that the classes are separable by construction.
pub fn synthetic_spectra(
    samples_per_class: usize,
    seg_len: usize,
    noise: f64,
    half_spectrum: bool,
    seed: u64,
) -> Vec<Spectrum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spectra = Vec::with_capacity(2 * samples_per_class);
    let class_freq = [12.0, 40.0];
    for (label, freq) in class_freq.iter().enumerate() {
        for idx in 0..samples_per_class {
            let amp = rng.gen_range(0.8..1.2);
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let common_phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let samples: Vec<f64> = (0..seg_len)
                .map(|t| {
                    let t = t as f64 / seg_len as f64;
                    let class_part = amp * (std::f64::consts::TAU * freq * t + phase).sin();
                    let common = 0.5 * (std::f64::consts::TAU * 3.0 * t + common_phase).sin();
                    let jitter: f64 = rng.sample(StandardNormal);
                    class_part + common + noise * jitter
                })
                .collect();
            let seg = crate::signal::Segment {
                samples,
                label,
                source_id: format!("synth-{label}-{idx}"),
                offset: 0,
            };
            spectra.push(to_spectrum(&seg, half_spectrum));
        }
    }
    spectra
}

// Box-Muller standard normal, kept local so the synthetic task only needs
// the plain `rand` uniform API.
struct StandardNormal;

impl rand::distributions::Distribution<f64> for StandardNormal {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn bonn_prefix(subset: &str) -> Result<char, TrainError> {
    match subset.to_ascii_uppercase().as_str() {
        "A" => Ok('Z'),
        "B" => Ok('O'),
        "C" => Ok('N'),
        "D" => Ok('F'),
        "E" => Ok('S'),
        other => Err(TrainError::DatasetMissing(format!(
            "unknown subset {other:?}, expected A-E"
        ))),
    }
}

fn collect_files(dir: &PathBuf, prefix: char, out: &mut Vec<PathBuf>) {
    if let Ok(entries) = std::fs::read_dir(dir) {
        for entry in entries.flatten() {
            let path = entry.path();
            if path.is_dir() {
                collect_files(&path, prefix, out);
            } else if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                let upper = name.to_ascii_uppercase();
                if upper.starts_with(prefix) && upper.ends_with(".TXT") {
                    out.push(path);
                }
            }
        }
    }
}

/// Load every record of a task's dataset as labeled spectra.
pub fn load_spectra(task: &TaskSpec) -> Result<(Vec<Spectrum>, usize), TrainError> {
    match &task.dataset {
        DatasetSpec::Synthetic {
            samples_per_class,
            noise,
        } => Ok((
            synthetic_spectra(
                *samples_per_class,
                task.seg_len,
                *noise,
                task.half_spectrum,
                task.seed,
            ),
            2,
        )),
        DatasetSpec::Bonn { dir, subsets } => {
            if subsets.len() < 2 {
                return Err(TrainError::DatasetMissing(
                    "need at least two subsets".into(),
                ));
            }
            let mut spectra = Vec::new();
            for (label, subset) in subsets.iter().enumerate() {
                let prefix = bonn_prefix(subset)?;
                let mut files = Vec::new();
                collect_files(dir, prefix, &mut files);
                if files.is_empty() {
                    return Err(TrainError::DatasetMissing(format!(
                        "no {prefix}*.txt files for subset {subset} under {}",
                        dir.display()
                    )));
                }
                files.sort();
                for path in files {
                    let record =
                        load_bonn_record(&path, label, crate::signal::DEFAULT_SAMPLE_RATE)?;
                    for seg in segment(&record, task.seg_len, task.overlap)? {
                        spectra.push(to_spectrum(&seg, task.half_spectrum));
                    }
                }
            }
            Ok((spectra, subsets.len()))
        }
        DatasetSpec::Csv { paths } => {
            if paths.is_empty() {
                return Err(TrainError::DatasetMissing("no csv files listed".into()));
            }
            let mut spectra = Vec::new();
            let mut max_label = 0;
            for (path, label) in paths {
                let record = load_csv_record(path, *label, 200.0)?;
                max_label = max_label.max(record.label);
                for seg in segment(&record, task.seg_len, task.overlap)? {
                    spectra.push(to_spectrum(&seg, task.half_spectrum));
                }
            }
            Ok((spectra, max_label + 1))
        }
    }
}

/// Stratified shuffle split: per class, `split_ratio` of the samples go to
/// the train side (at least one sample on each side when possible).
pub fn stratified_split(
    spectra: Vec<Spectrum>,
    class_count: usize,
    split_ratio: f64,
    seed: u64,
) -> (Vec<Spectrum>, Vec<Spectrum>) {
    let mut by_class: Vec<Vec<Spectrum>> = (0..class_count).map(|_| Vec::new()).collect();
    for sp in spectra {
        by_class[sp.label].push(sp);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E3779B97F4A7C15));
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut group in by_class {
        group.shuffle(&mut rng);
        let len = group.len();
        let mut take = (split_ratio * len as f64).round() as usize;
        if len >= 2 {
            take = take.clamp(1, len - 1);
        }
        for (i, sp) in group.into_iter().enumerate() {
            if i < take {
                train.push(sp);
            } else {
                test.push(sp);
            }
        }
    }
    (train, test)
}

/// Build graphs once for the whole dataset.
pub fn prepare(task: &TaskSpec) -> Result<PreparedData, TrainError> {
    let (spectra, class_count) = load_spectra(task)?;
    if spectra.is_empty() {
        return Err(TrainError::DatasetMissing("dataset produced no segments".into()));
    }
    let n = spectra[0].magnitudes.len();
    for sp in &spectra {
        if sp.label >= class_count {
            return Err(TrainError::BadLabel {
                label: sp.label,
                classes: class_count,
                record: sp.source_id.clone(),
            });
        }
    }
    let (train_sp, test_sp) = stratified_split(spectra, class_count, task.split_ratio, task.seed);
    if test_sp.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    let k = task.wnfg_config().resolve(n);
    let mut stats = GraphStatsSummary {
        k,
        ..GraphStatsSummary::default()
    };
    let mut build = |spectra: Vec<Spectrum>| -> Vec<SparseGraph> {
        spectra
            .iter()
            .map(|sp| {
                let (g, s) = build_with_stats(sp, k);
                stats.graphs += 1;
                stats.total_nnz += s.nnz;
                stats.total_bytes += s.bytes;
                stats.build_seconds += s.build_seconds;
                g
            })
            .collect()
    };
    let train = build(train_sp);
    let test = build(test_sp);
    stats.mean_nnz = stats.total_nnz as f64 / stats.graphs as f64;
    Ok(PreparedData {
        train,
        test,
        n,
        class_count,
        stats,
    })
}

/// Argmax-of-softmax evaluation with one-vs-rest confusion counts for the
/// positive class.
pub fn evaluate(
    spec: &ModelSpec,
    params: &ParamSet,
    eval: &[SparseGraph],
    positive_class: usize,
) -> Result<Metrics, TrainError> {
    if eval.is_empty() {
        return Err(TrainError::EmptyEvalSet);
    }
    let (mut tp, mut tn, mut fp, mut fneg) = (0usize, 0usize, 0usize, 0usize);
    for g in eval {
        let pred = spec.predict(params, g)?;
        match (g.label == positive_class, pred == positive_class) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, tn, fp, fneg))
}

/// Mean loss over one shuffled epoch of minibatch Adam updates. Gradients
/// are reduced by deterministic ordered summation; `mask` freezes pruned
/// weights by zeroing their gradients.
fn train_epoch(
    spec: &ModelSpec,
    params: &mut ParamSet,
    adam: &mut AdamState,
    data: &[SparseGraph],
    batch_size: usize,
    lr: f64,
    rng: &mut ChaCha8Rng,
    mask: Option<&PruneState>,
) -> Result<f64, NnError> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let mut total_loss = 0.0;
    for batch in order.chunks(batch_size) {
        let mut grads = ParamSet::zeros_like(params);
        let mut batch_loss = 0.0;
        for &i in batch {
            let (loss, g) = spec.sample_loss_and_grad(params, &data[i])?;
            batch_loss += loss;
            grads.add_scaled(&g, 1.0);
        }
        let scale = 1.0 / batch.len() as f64;
        grads.scale(scale);
        if let Some(state) = mask {
            state.mask_gradients(&mut grads);
        }
        adam_step(params, &grads, adam, lr);
        total_loss += batch_loss;
    }
    Ok(total_loss / data.len() as f64)
}

fn mean_loss(spec: &ModelSpec, params: &ParamSet, data: &[SparseGraph]) -> Result<f64, NnError> {
    let mut total = 0.0;
    for g in data {
        let (logits, _) = spec.forward(params, g)?;
        let (loss, _) = crate::nn::softmax_cross_entropy(&logits, g.label)?;
        total += loss;
    }
    Ok(total / data.len() as f64)
}

struct RunState<'a> {
    spec: &'a ModelSpec,
    data: &'a PreparedData,
    task: &'a TaskSpec,
    cfg: &'a TrainConfig,
    epochs: Vec<EpochRecord>,
}

impl<'a> RunState<'a> {
    fn partial_report(&self, params: &ParamSet, trace: Option<AdmmTrace>) -> RunReport {
        let metrics = evaluate(self.spec, params, &self.data.test, self.task.positive_class)
            .unwrap_or(Metrics::from_counts(0, 0, 0, 0));
        build_report(
            self.task,
            self.cfg,
            self.spec,
            params,
            self.epochs.clone(),
            metrics,
            trace,
            &self.data.stats,
            None,
        )
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    task: &TaskSpec,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    params: &ParamSet,
    epochs: Vec<EpochRecord>,
    final_metrics: Metrics,
    admm_trace: Option<AdmmTrace>,
    stats: &GraphStatsSummary,
    timing: Option<TimingInfo>,
) -> RunReport {
    let counts = count_params(spec);
    let param_table: Vec<LayerReport> = counts
        .per_layer
        .iter()
        .map(|row| {
            let surviving = params.blocks[row.layer_index]
                .weights
                .iter()
                .filter(|w| **w != 0.0)
                .count();
            LayerReport {
                layer_index: row.layer_index,
                kind: row.kind.clone(),
                total_weights: row.weights,
                surviving_weights: surviving,
            }
        })
        .collect();
    RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: task.seed,
        task: task.clone(),
        epochs,
        final_metrics,
        param_table,
        non_trainable: counts.non_trainable,
        total_params: counts.total,
        surviving_weights: params.nonzero_weight_count(),
        admm_trace,
        graph_stats: stats.clone(),
        timing: if cfg.deterministic { None } else { timing },
    }
}

/// A finished run: the report plus the trained model state, for
/// checkpointing.
pub struct TrainOutcome {
    pub report: RunReport,
    pub model: ModelSpec,
    pub params: ParamSet,
    /// Per-block weight keep masks when the run pruned, aligned with
    /// `params.blocks`.
    pub masks: Option<Vec<Vec<bool>>>,
}

/// Execute a full run: plain training, then (optionally) ADMM or magnitude
/// pruning with hard masking and retraining, then final evaluation.
pub fn run_training(task: &TaskSpec, cfg: &TrainConfig) -> Result<RunReport, TrainError> {
    run_pipeline(task, cfg, None).map(|o| o.report)
}

/// Same as [`run_training`] but returns the trained parameters and masks.
pub fn run_training_full(task: &TaskSpec, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    run_pipeline(task, cfg, None)
}

/// Resume from a checkpoint: the stored parameters replace fresh
/// initialization, then the configured phases run as usual (set
/// `max_epochs = 0` to go straight to pruning).
pub fn run_training_from_checkpoint(
    task: &TaskSpec,
    cfg: &TrainConfig,
    checkpoint: &std::path::Path,
) -> Result<TrainOutcome, TrainError> {
    let data = prepare(task)?;
    let spec = ModelSpec::by_name(&task.model, data.n, data.class_count)?;
    let (params, _) = crate::checkpoint::load_checkpoint(checkpoint, &spec)?;
    run_pipeline_with(task, cfg, data, Some(params))
}

fn run_pipeline(
    task: &TaskSpec,
    cfg: &TrainConfig,
    initial: Option<ParamSet>,
) -> Result<TrainOutcome, TrainError> {
    let data = prepare(task)?;
    run_pipeline_with(task, cfg, data, initial)
}

fn run_pipeline_with(
    task: &TaskSpec,
    cfg: &TrainConfig,
    mut data: PreparedData,
    initial: Option<ParamSet>,
) -> Result<TrainOutcome, TrainError> {
    let started = Instant::now();
    let started_unix_ms = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0);
    if cfg.deterministic {
        // Wall-clock noise would break bitwise report reproducibility.
        data.stats.build_seconds = 0.0;
    }
    let spec = ModelSpec::by_name(&task.model, data.n, data.class_count)?;
    spec.validate()?;
    let mut params = initial.unwrap_or_else(|| spec.init_params(task.seed));
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed ^ 0xD1B54A32D192ED03);
    let mut run = RunState {
        spec: &spec,
        data: &data,
        task,
        cfg,
        epochs: Vec::new(),
    };

    // Plain training.
    for epoch in 1..=cfg.max_epochs {
        let loss = train_epoch(
            &spec,
            &mut params,
            &mut adam,
            &data.train,
            cfg.batch_size,
            cfg.learning_rate,
            &mut rng,
            None,
        )?;
        if !loss.is_finite() || !params.all_finite() {
            let partial = run.partial_report(&params, None);
            return Err(TrainError::Diverged {
                phase: "train".into(),
                epoch,
                partial: Box::new(partial),
            });
        }
        let accuracy = (epoch % cfg.eval_every == 0).then(|| {
            evaluate(&spec, &params, &data.test, task.positive_class)
                .map(|m| m.accuracy)
                .unwrap_or(f64::NAN)
        });
        run.epochs.push(EpochRecord {
            epoch,
            phase: "train".into(),
            loss,
            accuracy,
        });
    }

    // Pruning.
    let mut trace = None;
    let mut masks: Option<Vec<Vec<bool>>> = None;
    if let Some(pc) = &cfg.prune {
        let mut state = PruneState::new(&params, pc);
        if cfg.prune_method == PruneMethod::Admm {
            let mut admm_trace = AdmmTrace::default();
            let mut order: Vec<usize> = (0..data.train.len()).collect();
            order.shuffle(&mut rng);
            let mut cursor = 0usize;
            for outer in 1..=pc.admm_outer_iters {
                let result = admm_w_step(
                    &mut params,
                    &state,
                    pc,
                    &mut adam,
                    cfg.learning_rate,
                    pc.w_inner_steps,
                    |p| {
                        // Next minibatch, reshuffling on wrap.
                        if cursor + cfg.batch_size > order.len() {
                            order.shuffle(&mut rng);
                            cursor = 0;
                        }
                        let batch = &order[cursor..(cursor + cfg.batch_size).min(order.len())];
                        cursor += cfg.batch_size;
                        let mut grads = ParamSet::zeros_like(p);
                        let mut loss = 0.0;
                        for &i in batch {
                            let (l, g) = spec
                                .sample_loss_and_grad(p, &data.train[i])
                                .expect("validated shapes");
                            loss += l;
                            grads.add_scaled(&g, 1.0);
                        }
                        let scale = 1.0 / batch.len() as f64;
                        grads.scale(scale);
                        (loss * scale, grads)
                    },
                );
                if let Err(PruneError::NonFiniteLoss { .. }) = result {
                    let partial = run.partial_report(&params, Some(admm_trace.clone()));
                    return Err(TrainError::Diverged {
                        phase: "admm".into(),
                        epoch: outer,
                        partial: Box::new(partial),
                    });
                }
                let (primal_residuals, dual_step_norm) = state.z_and_eta_step(&params, pc);
                let loss = mean_loss(&spec, &params, &data.train)?;
                let lagrangian = state.lagrangian(loss, &params, pc);
                admm_trace.rows.push(TraceRow {
                    iteration: outer,
                    loss,
                    lagrangian,
                    primal_residuals,
                    dual_step_norm,
                });
                run.epochs.push(EpochRecord {
                    epoch: outer,
                    phase: "admm".into(),
                    loss,
                    accuracy: None,
                });
            }
            trace = Some(admm_trace);
        } else {
            // One-shot magnitude: z is already the plain projection of the
            // trained weights (eta = 0); no ADMM cycles.
        }
        state.hard_mask_and_freeze(&mut params, pc);
        // Full per-block keep masks for the checkpoint (untouched blocks
        // keep everything).
        let mut all = params
            .blocks
            .iter()
            .map(|b| vec![true; b.weights.len()])
            .collect::<Vec<_>>();
        for bs in &state.blocks {
            if !bs.block.exempt {
                if let Some(m) = &bs.mask {
                    all[bs.block.layer] = m.clone();
                }
            }
        }
        masks = Some(all);
        // Fresh optimizer for retraining so stale moments cannot push
        // masked weights off zero.
        adam.reset();
        for epoch in 1..=pc.retrain_epochs {
            let loss = train_epoch(
                &spec,
                &mut params,
                &mut adam,
                &data.train,
                cfg.batch_size,
                cfg.learning_rate,
                &mut rng,
                Some(&state),
            )?;
            if !loss.is_finite() || !params.all_finite() {
                let partial = run.partial_report(&params, trace.clone());
                return Err(TrainError::Diverged {
                    phase: "retrain".into(),
                    epoch,
                    partial: Box::new(partial),
                });
            }
            let accuracy = (epoch % cfg.eval_every == 0).then(|| {
                evaluate(&spec, &params, &data.test, task.positive_class)
                    .map(|m| m.accuracy)
                    .unwrap_or(f64::NAN)
            });
            run.epochs.push(EpochRecord {
                epoch,
                phase: "retrain".into(),
                loss,
                accuracy,
            });
        }
    }

    let final_metrics = evaluate(&spec, &params, &data.test, task.positive_class)?;
    let timing = Some(TimingInfo {
        started_unix_ms,
        total_seconds: started.elapsed().as_secs_f64(),
    });
    let report = build_report(
        task,
        cfg,
        &spec,
        &params,
        run.epochs,
        final_metrics,
        trace,
        &data.stats,
        timing,
    );
    Ok(TrainOutcome {
        report,
        model: spec,
        params,
        masks,
    })
}

/// Train the same task at several near-field rates with an identical seed.
/// Rows come back ordered by decreasing rate; per-row errors are recorded
/// and do not stop the sweep.
pub fn sweep_near_field_rate(task: &TaskSpec, cfg: &TrainConfig, rates: &[f64]) -> Vec<NfrRow> {
    let mut rates: Vec<f64> = rates.to_vec();
    rates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    rates
        .into_iter()
        .map(|rate| {
            let mut cell = task.clone();
            cell.near_field_rate = Some(rate);
            cell.k = None;
            match run_training(&cell, cfg) {
                Ok(report) => NfrRow {
                    rate,
                    accuracy: report.final_metrics.accuracy,
                    mean_nnz: report.graph_stats.mean_nnz,
                    build_seconds: report.graph_stats.build_seconds,
                    bytes: report.graph_stats.total_bytes,
                    error: None,
                },
                Err(err) => NfrRow {
                    rate,
                    accuracy: f64::NAN,
                    mean_nnz: f64::NAN,
                    build_seconds: f64::NAN,
                    bytes: 0,
                    error: Some(err.to_string()),
                },
            }
        })
        .collect()
}

/// Full train+prune+retrain for every method x rate cell.
pub fn sweep_connection_rate(
    task: &TaskSpec,
    cfg: &TrainConfig,
    rates: &[f64],
    methods: &[PruneMethod],
) -> Vec<RateRow> {
    let mut rows = Vec::new();
    for &method in methods {
        for &rate in rates {
            let mut cell_cfg = cfg.clone();
            let mut pc = cfg.prune.clone().unwrap_or_else(|| PruneConfig::new(rate));
            pc.connection_rate = rate;
            cell_cfg.prune = Some(pc);
            cell_cfg.prune_method = method;
            match run_training(task, &cell_cfg) {
                Ok(report) => rows.push(RateRow {
                    method: method.to_string(),
                    rate,
                    accuracy: report.final_metrics.accuracy,
                    surviving_params: report.surviving_weights,
                    error: None,
                }),
                Err(err) => rows.push(RateRow {
                    method: method.to_string(),
                    rate,
                    accuracy: f64::NAN,
                    surviving_params: 0,
                    error: Some(err.to_string()),
                }),
            }
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_task(seed: u64) -> TaskSpec {
        let mut task = TaskSpec::synthetic("mlp", seed);
        task.dataset = DatasetSpec::Synthetic {
            samples_per_class: 40,
            noise: 0.3,
        };
        task.seg_len = 64;
        task
    }

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            max_epochs: 8,
            batch_size: 16,
            learning_rate: 2e-3,
            deterministic: true,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn metrics_arithmetic() {
        let m = Metrics::from_counts(3, 4, 1, 2);
        assert!((m.accuracy - 0.7).abs() < 1e-12);
        assert!((m.sensitivity - 0.6).abs() < 1e-12);
        assert!((m.specificity - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        // Perfect predictor: all counts on the diagonal.
        let m = Metrics::from_counts(5, 5, 0, 0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.sensitivity, 1.0);
        assert_eq!(m.specificity, 1.0);
        // Constant negative predictor on a balanced set.
        let m = Metrics::from_counts(0, 5, 0, 5);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.sensitivity, 0.0);
        assert_eq!(m.specificity, 1.0);
    }

    #[test]
    fn stratified_split_proportions() {
        let spectra = synthetic_spectra(50, 32, 0.2, false, 7);
        let (train, test) = stratified_split(spectra, 2, 0.8, 7);
        assert_eq!(train.len() + test.len(), 100);
        for label in 0..2 {
            let tr = train.iter().filter(|s| s.label == label).count();
            let te = test.iter().filter(|s| s.label == label).count();
            assert_eq!(tr + te, 50);
            assert!((tr as f64 - 40.0).abs() <= 1.0, "train count {tr}");
            assert!((te as f64 - 10.0).abs() <= 1.0, "test count {te}");
        }
    }

    #[test]
    fn synthetic_task_trains_to_high_accuracy() {
        let report = run_training(&quick_task(5), &quick_cfg()).unwrap();
        assert!(
            report.final_metrics.accuracy >= 0.95,
            "accuracy {}",
            report.final_metrics.accuracy
        );
        assert!(report.epochs.iter().all(|e| e.loss.is_finite()));
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let task = quick_task(9);
        let cfg = quick_cfg();
        let a = run_training(&task, &cfg).unwrap();
        let b = run_training(&task, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn pruned_run_respects_budgets_and_masks() {
        let task = quick_task(3);
        let mut cfg = quick_cfg();
        cfg.prune = Some(PruneConfig {
            admm_outer_iters: 5,
            w_inner_steps: 5,
            retrain_epochs: 3,
            ..PruneConfig::new(0.1)
        });
        let report = run_training(&task, &cfg).unwrap();
        // Budgets: ceil(0.1 * count) per prunable layer.
        let budget_total: usize = report
            .param_table
            .iter()
            .map(|l| crate::prune::budget_for(0.1, l.total_weights))
            .sum();
        assert!(report.surviving_weights <= budget_total);
        assert!(report.admm_trace.is_some());
        let trace = report.admm_trace.as_ref().unwrap();
        assert_eq!(trace.rows.len(), 5);
        assert!(trace
            .rows
            .iter()
            .all(|r| r.loss.is_finite() && r.lagrangian.is_finite()));
        // Retraining never increases the nonzero count.
        for row in &report.param_table {
            assert!(row.surviving_weights <= row.total_weights);
        }
    }

    #[test]
    fn magnitude_method_skips_admm_trace() {
        let task = quick_task(4);
        let mut cfg = quick_cfg();
        cfg.prune = Some(PruneConfig {
            retrain_epochs: 2,
            ..PruneConfig::new(0.2)
        });
        cfg.prune_method = PruneMethod::Magnitude;
        let report = run_training(&task, &cfg).unwrap();
        assert!(report.admm_trace.is_none());
        let budget_total: usize = report
            .param_table
            .iter()
            .map(|l| crate::prune::budget_for(0.2, l.total_weights))
            .sum();
        assert!(report.surviving_weights <= budget_total);
    }

    #[test]
    fn nfr_sweep_orders_rows_and_tracks_nnz() {
        let task = quick_task(11);
        let mut cfg = quick_cfg();
        cfg.max_epochs = 3;
        let rows = sweep_near_field_rate(&task, &cfg, &[0.1, 1.0, 0.4]);
        let rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
        assert_eq!(rates, vec![1.0, 0.4, 0.1]);
        assert!(rows.windows(2).all(|w| w[0].mean_nnz >= w[1].mean_nnz));
        assert!(rows.iter().all(|r| r.error.is_none()));
        // Shrinking the neighborhood hardly moves accuracy on this task.
        let full = rows.iter().find(|r| r.rate == 1.0).unwrap().accuracy;
        let tenth = rows.iter().find(|r| r.rate == 0.1).unwrap().accuracy;
        assert!(
            (full - tenth).abs() <= 0.02,
            "accuracy gap {} between rates 1.0 and 0.1",
            (full - tenth).abs()
        );
    }

    #[test]
    fn rate_sweep_reports_surviving_counts() {
        let task = quick_task(13);
        let mut cfg = quick_cfg();
        cfg.max_epochs = 3;
        cfg.prune = Some(PruneConfig {
            admm_outer_iters: 3,
            w_inner_steps: 3,
            retrain_epochs: 1,
            ..PruneConfig::new(1.0)
        });
        let rows = sweep_connection_rate(&task, &cfg, &[1.0], &[PruneMethod::Admm]);
        assert_eq!(rows.len(), 1);
        // rate = 1.0 keeps every trainable weight.
        let spec = ModelSpec::by_name("mlp", 64, 2).unwrap();
        let counts = count_params(&spec);
        assert_eq!(rows[0].surviving_params, counts.trainable_total);
    }

    #[test]
    fn non_finite_loss_aborts_with_partial_report() {
        // Resume from a checkpoint poisoned with a NaN weight: the first
        // epoch's loss is non-finite and the run must abort, carrying the
        // report accumulated so far.
        let task = quick_task(2);
        let data = prepare(&task).unwrap();
        let spec = ModelSpec::by_name(&task.model, data.n, data.class_count).unwrap();
        let mut params = spec.init_params(task.seed);
        params.blocks[1].weights[0] = f64::NAN;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poisoned.ckpt");
        crate::checkpoint::save_checkpoint(&path, &spec, &params, None).unwrap();
        match run_training_from_checkpoint(&task, &quick_cfg(), &path) {
            Err(TrainError::Diverged { phase, epoch, partial }) => {
                assert_eq!(phase, "train");
                assert_eq!(epoch, 1);
                assert!(partial.epochs.len() <= 1);
            }
            other => panic!("expected divergence, got {:?}", other.map(|o| o.report)),
        }
    }

    #[test]
    fn bonn_dataset_missing_is_reported() {
        let mut task = quick_task(1);
        task.dataset = DatasetSpec::Bonn {
            dir: PathBuf::from("/nonexistent/bonn"),
            subsets: vec!["A".into(), "E".into()],
        };
        assert!(matches!(
            run_training(&task, &quick_cfg()),
            Err(TrainError::DatasetMissing(_))
        ));
    }
}
