use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use dagcd_core::data::{load_embeddings, write_split_dir, DatasetSplit};
use dagcd_core::estimate::{
    distribution_error, estimate_round, ClassDistribution, EstimationRecord,
};
use dagcd_core::eval::{aggregate, evaluate, AggregateReport, EvalReport, EvalSummary};
use dagcd_core::nn::{Checkpoint, Model, ModelConfig};
use dagcd_core::train::{self, unlabeled_features, EpochRecord, LossMode, TrainState, Trainer};
use dagcd_core::transfer::SimilarityMetric;
use dagcd_core::util::write_string_atomic;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const EFFECTIVE_CONFIG_FILE: &str = "config.effective.json";
pub const TELEMETRY_FILE: &str = "telemetry.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EVAL_JSON: &str = "eval.json";
pub const EVAL_CSV: &str = "eval.csv";
pub const AGGREGATE_JSON: &str = "aggregate.json";
pub const AGGREGATE_CSV: &str = "aggregate.csv";
pub const ESTIMATE_JSON: &str = "estimate.json";

/// Directory holding one seed's training artifacts.
pub fn run_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output.dir.join(format!("seed-{}", cfg.train.seed))
}

pub fn periodic_checkpoint_name(epoch: usize) -> String {
    format!("checkpoint-epoch-{epoch:04}.json")
}

fn with_seed(cfg: &ExperimentConfig, seed: u64) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.train.seed = seed;
    c
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_string_atomic(path, &text)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

/// Per-class counts of a split, one row per class.
pub fn class_count_table(split: &DatasetSplit) -> String {
    let mut labeled = vec![0usize; split.num_classes];
    for s in &split.labeled {
        labeled[s.label.expect("labeled")] += 1;
    }
    let mut unlabeled = vec![0usize; split.num_classes];
    for t in split.evaluation_unlabeled_truth().iter().flatten() {
        unlabeled[*t] += 1;
    }
    let mut out = String::from("class  kind   labeled  unlabeled\n");
    for c in 0..split.num_classes {
        let kind = if c < split.num_known {
            "known"
        } else {
            "novel"
        };
        let _ = writeln!(
            out,
            "{c:>5}  {kind:<5}  {:>7}  {:>9}",
            labeled[c], unlabeled[c]
        );
    }
    let _ = writeln!(
        out,
        "total         {:>7}  {:>9}",
        split.labeled.len(),
        split.unlabeled.len()
    );
    out
}

/// Builds the training split and writes it to `cfg.output.dir`, returning
/// the class-count table.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<String> {
    let split = cfg.build_split()?;
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    write_split_dir(dir, &split)?;
    write_json(&dir.join(EFFECTIVE_CONFIG_FILE), cfg)?;
    Ok(class_count_table(&split))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub dir: PathBuf,
    pub telemetry: Vec<EpochRecord>,
}

fn telemetry_text(records: &[EpochRecord]) -> dagcd_core::Result<String> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    Ok(text)
}

fn save_checkpoint(
    state: &TrainState,
    cfg: &ExperimentConfig,
    hash: &str,
    path: &Path,
) -> dagcd_core::Result<()> {
    let mut ck = state.to_checkpoint(hash)?;
    if let serde_json::Value::Object(meta) = &mut ck.meta {
        meta.insert("config".into(), serde_json::to_value(cfg)?);
    }
    ck.save(path)
}

fn load_checked_checkpoint(path: &Path, cfg: &ExperimentConfig) -> Result<Checkpoint> {
    let ck = Checkpoint::load(path)?;
    let hash = cfg.training_hash()?;
    ensure!(
        ck.config_hash == hash,
        "{}: checkpoint was produced by a different configuration (hash {}, expected {hash})",
        path.display(),
        ck.config_hash
    );
    Ok(ck)
}

/// Trains one seed, writing config, telemetry and checkpoints under
/// [`run_dir`]. With `resume`, training continues from that checkpoint.
pub fn cmd_train(cfg: &ExperimentConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    let split = cfg.build_split()?;
    let model_cfg = cfg.model.model_config(split.dim, split.num_classes);
    let hash = cfg.training_hash()?;
    let dir = run_dir(cfg);
    create_dir(&dir)?;
    write_json(&dir.join(EFFECTIVE_CONFIG_FILE), cfg)?;

    let state = match resume {
        Some(path) => {
            let ck = load_checked_checkpoint(path, cfg)?;
            let state = TrainState::from_checkpoint(&ck, &model_cfg, &cfg.train)?;
            tracing::info!(path = %path.display(), epoch = state.epoch, "resuming");
            state
        }
        None => TrainState::new(&model_cfg, &cfg.train)?,
    };
    let trainer = Trainer::new(&split, &cfg.train)?;
    let every = cfg.output.checkpoint_every;
    let state = trainer.run(state, |state, _| {
        write_string_atomic(
            &dir.join(TELEMETRY_FILE),
            &telemetry_text(&state.telemetry)?,
        )?;
        if every > 0 && state.epoch % every == 0 {
            save_checkpoint(
                state,
                cfg,
                &hash,
                &dir.join(periodic_checkpoint_name(state.epoch)),
            )?;
        }
        Ok(())
    })?;
    // the loop body never ran when resuming a finished run
    write_string_atomic(
        &dir.join(TELEMETRY_FILE),
        &telemetry_text(&state.telemetry)?,
    )?;
    save_checkpoint(&state, cfg, &hash, &dir.join(CHECKPOINT_FILE))?;
    Ok(TrainOutcome {
        dir,
        telemetry: state.telemetry,
    })
}

/// Evaluation features and labels: the unlabeled training pool, or a
/// separate labeled test file mapped into the split's class ids.
fn eval_inputs(
    cfg: &ExperimentConfig,
    split: &DatasetSplit,
    model: &Model,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let Some(path) = &cfg.eval.test_embeddings else {
        return Ok(unlabeled_features(model, split)?);
    };
    let pool = load_embeddings(path, Some(split.num_classes))?;
    ensure!(
        pool.dim == split.dim,
        "{}: feature dimension {} differs from training data ({})",
        path.display(),
        pool.dim,
        split.dim
    );
    let mut truth = Vec::with_capacity(pool.len());
    for s in &pool.samples {
        let Some(orig) = s.label else {
            bail!("{}: test sample {} has no label", path.display(), s.id);
        };
        truth.push(split.class_map[orig]);
    }
    let x = Array2::from_shape_fn((pool.len(), pool.dim), |(i, j)| pool.samples[i].features[j]);
    Ok((model.encode_batch(x.view())?.z, truth))
}

fn score_model(cfg: &ExperimentConfig, split: &DatasetSplit, model: &Model) -> Result<EvalReport> {
    let (features, truth) = eval_inputs(cfg, split, model)?;
    Ok(evaluate(
        features.view(),
        &truth,
        split.num_classes,
        split.num_known,
        split.evaluation_true_counts(),
        cfg.train.seed,
        cfg.eval.kmeans,
    )?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReport {
    pub seed: u64,
    pub checkpoint_hash: String,
    pub config: ExperimentConfig,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateFile {
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
    pub per_seed: Vec<EvalSummary>,
    pub aggregate: AggregateReport,
}

pub const AGGREGATE_HEADER: &str = "Stat,All,Old,New,Old_Std,New_Std";

fn summary_row(label: &str, s: &EvalSummary) -> String {
    format!(
        "{label},{},{},{},{},{}\n",
        s.acc_all, s.acc_old, s.acc_new, s.std_known, s.std_novel
    )
}

pub fn aggregate_csv(agg: &AggregateReport) -> String {
    let mut out = format!("{AGGREGATE_HEADER}\n");
    out.push_str(&summary_row("mean", &agg.mean));
    out.push_str(&summary_row("std", &agg.std));
    out
}

fn load_model(path: &Path, cfg: &ExperimentConfig, model_cfg: &ModelConfig) -> Result<Model> {
    let ck = load_checked_checkpoint(path, cfg)?;
    let mut model = Model::new(model_cfg, cfg.train.seed)?;
    ck.load_model("model.", &mut model)?;
    Ok(model)
}

/// Scores the trained checkpoint of every seed, writing per-seed reports
/// and a mean/std aggregate into `cfg.output.dir`. `checkpoint` overrides
/// the default location and needs exactly one seed.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    seeds: &[u64],
    checkpoint: Option<&Path>,
) -> Result<AggregateFile> {
    ensure!(!seeds.is_empty(), "at least one --seed is required");
    ensure!(
        checkpoint.is_none() || seeds.len() == 1,
        "--checkpoint needs exactly one --seed"
    );
    let mut reports = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let run_cfg = with_seed(cfg, seed);
        let dir = run_dir(&run_cfg);
        let ck_path = checkpoint.map_or_else(|| dir.join(CHECKPOINT_FILE), Path::to_path_buf);
        let split = run_cfg.build_split()?;
        let model_cfg = run_cfg.model.model_config(split.dim, split.num_classes);
        let model = load_model(&ck_path, &run_cfg, &model_cfg)?;
        let report = score_model(&run_cfg, &split, &model)?;
        create_dir(&dir)?;
        write_string_atomic(&dir.join(EVAL_CSV), &report.to_csv()?)?;
        let file = SeedReport {
            seed,
            checkpoint_hash: run_cfg.training_hash()?,
            config: run_cfg,
            report: report.clone(),
        };
        write_json(&dir.join(EVAL_JSON), &file)?;
        reports.push(report);
    }
    let agg = aggregate(&reports)?;
    let file = AggregateFile {
        seeds: seeds.to_vec(),
        config: cfg.clone(),
        per_seed: reports.iter().map(EvalSummary::from).collect(),
        aggregate: agg,
    };
    create_dir(&cfg.output.dir)?;
    write_json(&cfg.output.dir.join(AGGREGATE_JSON), &file)?;
    write_string_atomic(
        &cfg.output.dir.join(AGGREGATE_CSV),
        &aggregate_csv(&file.aggregate),
    )?;
    Ok(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateFile {
    pub config: ExperimentConfig,
    /// `raw` input features or `checkpoint` encoder features.
    pub features: String,
    pub true_distribution: Option<ClassDistribution>,
    /// Known classes compared by index, novel classes after sorting.
    pub l1_error: Option<f64>,
    pub record: EstimationRecord,
}

/// One distribution-estimation round over the training set, on raw features
/// or on the encoder features of `checkpoint`.
pub fn cmd_estimate(cfg: &ExperimentConfig, checkpoint: Option<&Path>) -> Result<EstimateFile> {
    let split = cfg.build_split()?;
    let x = Array2::from_shape_fn((split.len(), split.dim), |(i, j)| {
        let n_l = split.labeled.len();
        if i < n_l {
            split.labeled[i].features[j]
        } else {
            split.unlabeled[i - n_l].features[j]
        }
    });
    let (features, kind) = match checkpoint {
        Some(path) => {
            let model_cfg = cfg.model.model_config(split.dim, split.num_classes);
            let model = load_model(path, cfg, &model_cfg)?;
            (model.encode_batch(x.view())?.z, "checkpoint")
        }
        None => (x, "raw"),
    };
    let labeled: Vec<(usize, usize)> = split
        .labeled
        .iter()
        .enumerate()
        .map(|(i, s)| (i, s.label.expect("labeled")))
        .collect();
    let record = estimate_round(
        features.view(),
        &labeled,
        split.num_known,
        split.num_classes,
        cfg.train.seed,
        cfg.train.kmeans,
    )?;
    let has_truth = split
        .evaluation_unlabeled_truth()
        .iter()
        .all(Option::is_some);
    let true_distribution = if has_truth {
        Some(ClassDistribution::from_counts(
            split.evaluation_true_counts(),
        )?)
    } else {
        None
    };
    let l1_error = true_distribution
        .as_ref()
        .map(|t| distribution_error(&record.pi_e.freq, &t.freq, split.num_known))
        .transpose()?;
    let file = EstimateFile {
        config: cfg.clone(),
        features: kind.to_string(),
        true_distribution,
        l1_error,
        record,
    };
    create_dir(&cfg.output.dir)?;
    write_json(&cfg.output.dir.join(ESTIMATE_JSON), &file)?;
    Ok(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum AblationAxis {
    Similarity,
    R,
    K,
    AlphaBeta,
    LossMode,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Similarity => "similarity",
            AblationAxis::R => "r",
            AblationAxis::K => "k",
            AblationAxis::AlphaBeta => "alpha_beta",
            AblationAxis::LossMode => "loss_mode",
        }
    }

    /// The grid for this axis: a row label and the config it trains.
    pub fn settings(self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let vary = |label: String, f: &dyn Fn(&mut ExperimentConfig)| {
            let mut c = base.clone();
            f(&mut c);
            (label, c)
        };
        match self {
            AblationAxis::Similarity => SimilarityMetric::ALL
                .iter()
                .map(|&m| vary(m.name().to_string(), &|c| c.train.metric = m))
                .collect(),
            AblationAxis::R => [1usize, 5, 10, 25, 50]
                .iter()
                .map(|&r| vary(r.to_string(), &|c| c.train.reestimate_interval = r))
                .collect(),
            AblationAxis::K => [0.0f64, 0.25, 0.5, 0.75, 1.0]
                .iter()
                .map(|&k| vary(k.to_string(), &|c| c.train.sampling.k = k))
                .collect(),
            AblationAxis::AlphaBeta => [(false, false), (true, false), (false, true), (true, true)]
                .iter()
                .map(|&(d, s)| {
                    let label = match (d, s) {
                        (false, false) => "baseline",
                        (true, false) => "debias",
                        (false, true) => "sampling",
                        (true, true) => "debias+sampling",
                    };
                    vary(label.to_string(), &|c| {
                        c.train.debias = d;
                        c.train.class_sampling = s;
                    })
                })
                .collect(),
            AblationAxis::LossMode => vec![
                vary("baseline".into(), &|c| c.train.weights.gamma2 = 0.0),
                vary("hard".into(), &|c| c.train.loss_mode = LossMode::Hard),
                vary("soft".into(), &|c| c.train.loss_mode = LossMode::Soft),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub setting: String,
    pub config: ExperimentConfig,
    pub per_seed: Vec<EvalSummary>,
    pub aggregate: AggregateReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationFile {
    pub axis: AblationAxis,
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

pub const ABLATION_HEADER: &str = "Setting,All,Old,New,Old_Std,New_Std";

pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut out = format!("{ABLATION_HEADER}\n");
    for r in rows {
        out.push_str(&summary_row(&r.setting, &r.aggregate.mean));
    }
    out
}

/// Trains and scores `cfg` for one seed without writing anything.
pub fn train_and_score(cfg: &ExperimentConfig) -> Result<EvalReport> {
    let split = cfg.build_split()?;
    let model_cfg = cfg.model.model_config(split.dim, split.num_classes);
    let state = train::run(&split, &model_cfg, &cfg.train)?;
    score_model(cfg, &split, &state.model)
}

/// Runs every setting of `axis` over `seeds` and writes
/// `ablate-<axis>.csv` / `.json` into `cfg.output.dir`.
pub fn cmd_ablate(
    cfg: &ExperimentConfig,
    axis: AblationAxis,
    seeds: &[u64],
) -> Result<AblationFile> {
    ensure!(!seeds.is_empty(), "ablation needs at least one seed");
    let mut rows = Vec::new();
    for (setting, row_cfg) in axis.settings(cfg) {
        row_cfg.train.validate()?;
        let mut reports = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let report = train_and_score(&with_seed(&row_cfg, seed))
                .with_context(|| format!("ablation {} = {setting}, seed {seed}", axis.name()))?;
            tracing::info!(axis = axis.name(), %setting, seed, acc_new = report.acc_new, "cell done");
            reports.push(report);
        }
        rows.push(AblationRow {
            setting,
            config: row_cfg,
            per_seed: reports.iter().map(EvalSummary::from).collect(),
            aggregate: aggregate(&reports)?,
        });
    }
    let file = AblationFile {
        axis,
        seeds: seeds.to_vec(),
        rows,
    };
    let dir = &cfg.output.dir;
    create_dir(dir)?;
    let stem = format!("ablate-{}", axis.name());
    write_string_atomic(&dir.join(format!("{stem}.csv")), &ablation_csv(&file.rows))?;
    write_json(&dir.join(format!("{stem}.json")), &file)?;
    Ok(file)
}
