//! The joint training loop: per batch, one step of the pseudo-labeling
//! branch followed by one step of the contrastive branch, with the class
//! distribution re-estimated every few epochs.

mod batches;
mod views;

pub use batches::{make_batches, Batch};
pub use views::{augment, column_std, ViewConfig};

use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::estimate::{estimate_round, ClassDistribution, EstimationRecord, KMeansSettings};
use crate::losses::{
    classification_objective, contrastive_objective, validate_temperature, ClassificationInput,
    ContrastiveObjectiveInput, LossWeights,
};
use crate::nn::{cosine_lr, Checkpoint, Model, ModelConfig, Part, Sgd, TrainSchedule};
use crate::rng::{derive_seed, rng_for, STREAM_KMEANS, STREAM_VIEWS};
use crate::transfer::{
    build_hard_matrix, build_positiveness_matrix, debias, one_hot, sample_pseudolabels,
    sampling_rates, PseudoLabelBatch, SamplingConfig, SimilarityMetric,
};
use crate::util::softmax;

/// How pairwise weights for the soft contrastive term are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossMode {
    /// Positiveness scores between rectified predictions.
    Soft,
    /// 1 when the arg-max classes agree, else 0.
    Hard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub schedule: TrainSchedule,
    pub weights: LossWeights,
    pub sampling: SamplingConfig,
    pub temperature: f64,
    /// Exponent applied to the estimated distribution before it is used as
    /// the regulariser target.
    pub smoothing: f64,
    /// Epochs between distribution re-estimates.
    pub reestimate_interval: usize,
    pub metric: SimilarityMetric,
    pub loss_mode: LossMode,
    /// Logit adjustment of pseudo-labels before they feed the soft term.
    pub debias: bool,
    /// Class-wise subsampling of pseudo-labeled samples; off keeps them all.
    pub class_sampling: bool,
    pub confidence_gate: f64,
    pub views: ViewConfig,
    pub kmeans: KMeansSettings,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            schedule: TrainSchedule::default(),
            weights: LossWeights::default(),
            sampling: SamplingConfig::default(),
            temperature: 1.0,
            smoothing: 0.5,
            reestimate_interval: 10,
            metric: SimilarityMetric::Dot,
            loss_mode: LossMode::Soft,
            debias: true,
            class_sampling: true,
            confidence_gate: 0.5,
            views: ViewConfig::default(),
            kmeans: KMeansSettings::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.weights.validate()?;
        self.sampling.validate()?;
        self.views.validate()?;
        validate_temperature(self.temperature)?;
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(Error::invalid(format!(
                "smoothing must be in [0, 1], got {}",
                self.smoothing
            )));
        }
        if self.reestimate_interval == 0 {
            return Err(Error::invalid("reestimate_interval must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.confidence_gate) {
            return Err(Error::invalid("confidence_gate must be in [0, 1]"));
        }
        if self.kmeans.max_iter == 0 || self.kmeans.n_init == 0 {
            return Err(Error::invalid(
                "kmeans.max_iter and kmeans.n_init must be >= 1",
            ));
        }
        Ok(())
    }
}

/// Per-epoch means of the logged loss components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    #[serde(rename = "L_s")]
    pub l_s: f64,
    #[serde(rename = "L_u")]
    pub l_u: f64,
    #[serde(rename = "L_reg")]
    pub l_reg: f64,
    #[serde(rename = "L_CL_u")]
    pub l_cl_u: f64,
    #[serde(rename = "L_CL_s")]
    pub l_cl_s: f64,
    #[serde(rename = "L_CL_soft")]
    pub l_cl_soft: f64,
    pub pi_e: Vec<f64>,
    #[serde(rename = "L_cls")]
    pub l_cls: f64,
    #[serde(rename = "L_con")]
    pub l_con: f64,
    pub soft_active: bool,
    pub estimated: bool,
    /// Pseudo-labeled samples that entered the soft term, summed over batches.
    pub selected_unlabeled: usize,
}

/// Everything needed to continue training from the start of `epoch`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    /// Next epoch to run.
    pub epoch: usize,
    pub model: Model,
    pub classifier_opt: Sgd,
    pub contrastive_opt: Sgd,
    pub pi_e: Option<ClassDistribution>,
    pub telemetry: Vec<EpochRecord>,
    pub estimations: Vec<(usize, EstimationRecord)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    epoch: usize,
    pi_e: Option<ClassDistribution>,
    telemetry: Vec<EpochRecord>,
}

impl TrainState {
    pub fn new(model_config: &ModelConfig, config: &TrainConfig) -> Result<Self> {
        let model = Model::new(model_config, config.seed)?;
        let momentum = config.schedule.momentum;
        Ok(TrainState {
            epoch: 0,
            classifier_opt: Sgd::new(&model, momentum),
            contrastive_opt: Sgd::new(&model, momentum),
            model,
            pi_e: None,
            telemetry: Vec::new(),
            estimations: Vec::new(),
        })
    }

    pub fn to_checkpoint(&self, config_hash: &str) -> Result<Checkpoint> {
        let mut ck = Checkpoint::new(config_hash);
        ck.push_model("model.", &self.model);
        ck.push_model("opt_cls.", &self.classifier_opt.velocity);
        ck.push_model("opt_con.", &self.contrastive_opt.velocity);
        ck.meta = serde_json::to_value(CheckpointMeta {
            epoch: self.epoch,
            pi_e: self.pi_e.clone(),
            telemetry: self.telemetry.clone(),
        })?;
        Ok(ck)
    }

    pub fn from_checkpoint(
        ck: &Checkpoint,
        model_config: &ModelConfig,
        config: &TrainConfig,
    ) -> Result<Self> {
        let mut state = TrainState::new(model_config, config)?;
        ck.load_model("model.", &mut state.model)?;
        ck.load_model("opt_cls.", &mut state.classifier_opt.velocity)?;
        ck.load_model("opt_con.", &mut state.contrastive_opt.velocity)?;
        let meta: CheckpointMeta = serde_json::from_value(ck.meta.clone())
            .map_err(|e| Error::Checkpoint(format!("bad training metadata: {e}")))?;
        if meta
            .pi_e
            .as_ref()
            .is_some_and(|p| p.len() != model_config.num_classes)
        {
            return Err(Error::Checkpoint(
                "estimated distribution has the wrong length".into(),
            ));
        }
        state.epoch = meta.epoch;
        state.pi_e = meta.pi_e;
        state.telemetry = meta.telemetry;
        Ok(state)
    }
}

/// Training data and settings prepared once per run.
pub struct Trainer<'a> {
    pub config: &'a TrainConfig,
    split: &'a DatasetSplit,
    x_labeled: Array2<f64>,
    x_unlabeled: Array2<f64>,
    labels: Vec<usize>,
    view_scale: Array1<f64>,
}

#[derive(Default)]
struct BatchLosses {
    l_s: f64,
    l_u: f64,
    l_reg: f64,
    l_cls: f64,
    l_cl_u: f64,
    l_cl_s: f64,
    l_cl_soft: f64,
    l_con: f64,
    selected: usize,
}

fn stack(samples: &[crate::data::Sample], dim: usize) -> Array2<f64> {
    Array2::from_shape_fn((samples.len(), dim), |(i, j)| samples[i].features[j])
}

fn rows(range: std::ops::Range<usize>) -> Vec<usize> {
    range.collect()
}

impl<'a> Trainer<'a> {
    pub fn new(split: &'a DatasetSplit, config: &'a TrainConfig) -> Result<Self> {
        config.validate()?;
        if split.is_empty() {
            return Err(Error::invalid("training split is empty"));
        }
        if split.labeled.is_empty() {
            return Err(Error::invalid("training split has no labeled samples"));
        }
        let x_labeled = stack(&split.labeled, split.dim);
        let x_unlabeled = stack(&split.unlabeled, split.dim);
        let labels = split
            .labeled
            .iter()
            .map(|s| s.label.expect("labeled pool carries labels"))
            .collect();
        let all = concatenate(Axis(0), &[x_labeled.view(), x_unlabeled.view()])
            .expect("pools share the feature dimension");
        Ok(Trainer {
            config,
            split,
            view_scale: column_std(all.view()),
            x_labeled,
            x_unlabeled,
            labels,
        })
    }

    /// Encoder features of every training sample, labeled pool first.
    pub fn training_features(&self, model: &Model) -> Result<Array2<f64>> {
        let all = concatenate(Axis(0), &[self.x_labeled.view(), self.x_unlabeled.view()])
            .expect("pools share the feature dimension");
        Ok(model.encode_batch(all.view())?.z)
    }

    /// Clusters training features and replaces `state.pi_e`.
    pub fn reestimate(&self, state: &mut TrainState, epoch: usize) -> Result<()> {
        let wrap = |source: Error| Error::Estimation {
            epoch,
            source: Box::new(source),
        };
        let features = self.training_features(&state.model).map_err(wrap)?;
        let labeled: Vec<(usize, usize)> = self.labels.iter().copied().enumerate().collect();
        let record = estimate_round(
            features.view(),
            &labeled,
            self.split.num_known,
            self.split.num_classes,
            derive_seed(self.config.seed, STREAM_KMEANS, epoch as u64),
            self.config.kmeans,
        )
        .map_err(wrap)?;
        tracing::debug!(epoch, pi_e = ?record.pi_e.freq, "re-estimated class distribution");
        state.pi_e = Some(record.pi_e.clone());
        state.estimations.push((epoch, record));
        Ok(())
    }

    /// Runs epoch `state.epoch` and advances the state.
    pub fn run_epoch(&self, state: &mut TrainState) -> Result<EpochRecord> {
        let cfg = self.config;
        let epoch = state.epoch;
        if epoch >= cfg.schedule.total_epochs {
            return Err(Error::invalid(format!(
                "epoch {epoch} is past the schedule ({} epochs)",
                cfg.schedule.total_epochs
            )));
        }
        let estimated = epoch.is_multiple_of(cfg.reestimate_interval) || state.pi_e.is_none();
        if estimated {
            self.reestimate(state, epoch)?;
        }
        let pi_e = state.pi_e.clone().expect("estimated above");
        let lr = cosine_lr(epoch, &cfg.schedule);
        let soft_active = epoch >= cfg.schedule.warmup();
        let batches = make_batches(self.split, cfg.schedule.batch_size, cfg.seed, epoch)?;

        let mut sum = BatchLosses::default();
        for (b, batch) in batches.iter().enumerate() {
            let abort = |e: Error| match e {
                Error::NonFinite(msg) => Error::NumericalAbort {
                    epoch,
                    batch: b,
                    message: format!("non-finite {msg}"),
                },
                other => other,
            };
            let losses = self
                .step_batch(state, epoch, b, batch, lr, soft_active, &pi_e)
                .map_err(abort)?;
            sum.l_s += losses.l_s;
            sum.l_u += losses.l_u;
            sum.l_reg += losses.l_reg;
            sum.l_cls += losses.l_cls;
            sum.l_cl_u += losses.l_cl_u;
            sum.l_cl_s += losses.l_cl_s;
            sum.l_cl_soft += losses.l_cl_soft;
            sum.l_con += losses.l_con;
            sum.selected += losses.selected;
        }
        let n = batches.len().max(1) as f64;
        let record = EpochRecord {
            epoch,
            lr,
            l_s: sum.l_s / n,
            l_u: sum.l_u / n,
            l_reg: sum.l_reg / n,
            l_cl_u: sum.l_cl_u / n,
            l_cl_s: sum.l_cl_s / n,
            l_cl_soft: sum.l_cl_soft / n,
            pi_e: pi_e.freq.clone(),
            l_cls: sum.l_cls / n,
            l_con: sum.l_con / n,
            soft_active,
            estimated,
            selected_unlabeled: sum.selected,
        };
        state.telemetry.push(record.clone());
        state.epoch += 1;
        Ok(record)
    }

    #[allow(clippy::too_many_arguments)]
    fn step_batch(
        &self,
        state: &mut TrainState,
        epoch: usize,
        b: usize,
        batch: &Batch,
        lr: f64,
        soft_active: bool,
        pi_e: &ClassDistribution,
    ) -> Result<BatchLosses> {
        let cfg = self.config;
        let (n_l, n_u) = (batch.labeled.len(), batch.unlabeled.len());
        let n = n_l + n_u;
        let xl = self.x_labeled.select(Axis(0), &batch.labeled);
        let xu = self.x_unlabeled.select(Axis(0), &batch.unlabeled);
        let labels: Vec<usize> = batch.labeled.iter().map(|&i| self.labels[i]).collect();

        let mut rng = rng_for(cfg.seed, STREAM_VIEWS, ((epoch as u64) << 32) | b as u64);
        let l1 = augment(xl.view(), &self.view_scale, &cfg.views, &mut rng);
        let l2 = augment(xl.view(), &self.view_scale, &cfg.views, &mut rng);
        let u1 = augment(xu.view(), &self.view_scale, &cfg.views, &mut rng);
        let u2 = augment(xu.view(), &self.view_scale, &cfg.views, &mut rng);
        let mut out = BatchLosses::default();

        // pseudo-labeling branch
        {
            let model = &state.model;
            let input =
                concatenate(Axis(0), &[l1.view(), u1.view(), u2.view()]).expect("same width");
            let enc = model.encode_batch(input.view())?;
            let cls = model.classify_batch(enc.z.view())?;
            let logits = &cls.logits;
            let obj = classification_objective(
                &ClassificationInput {
                    labeled_logits: logits.slice(s![..n_l, ..]),
                    labels: &labels,
                    unlabeled_view1: logits.slice(s![n_l..n, ..]),
                    unlabeled_view2: logits.slice(s![n.., ..]),
                    target: &pi_e.freq,
                    smoothing: cfg.smoothing,
                    confidence_gate: cfg.confidence_gate,
                },
                &cfg.weights,
            )?;
            if !obj.total.is_finite() {
                return Err(Error::NonFinite("classification loss".into()));
            }
            let grad_logits = concatenate(
                Axis(0),
                &[
                    obj.grad_labeled.view(),
                    obj.grad_view1.view(),
                    obj.grad_view2.view(),
                ],
            )
            .expect("same width");
            let mut grads = model.zeros_like();
            let dz = model.classifier_backward(&cls, grad_logits.view(), &mut grads);
            model.encoder_backward(&enc, dz.view(), &mut grads);
            state.classifier_opt.step(
                &mut state.model,
                &grads,
                lr,
                &[Part::Encoder, Part::Classifier],
            )?;
            out.l_s = obj.l_s;
            out.l_u = obj.l_u;
            out.l_reg = obj.l_reg;
            out.l_cls = obj.total;
        }

        // contrastive branch
        {
            let model = &state.model;
            let mut soft_rows = Vec::new();
            let mut soft_probs = Vec::new();
            if soft_active && cfg.weights.gamma2 > 0.0 {
                let selected = self.select_pseudolabels(model, batch, &xu, &labels, pi_e)?;
                out.selected = selected.len();
                soft_rows.extend(0..n_l);
                soft_rows.extend(selected.iter().map(|(j, _)| n_l + j));
                soft_rows.extend(n..n + n_l);
                soft_rows.extend(selected.iter().map(|(j, _)| n + n_l + j));
                let c = self.split.num_classes;
                for _view in 0..2 {
                    soft_probs.extend(labels.iter().map(|&y| one_hot(y, c)));
                    soft_probs.extend(selected.iter().map(|(_, p)| p.clone()));
                }
            }
            let soft_weights = match cfg.loss_mode {
                _ if soft_rows.is_empty() => None,
                LossMode::Soft => Some(build_positiveness_matrix(&soft_probs, cfg.metric)?),
                LossMode::Hard => Some(build_hard_matrix(&soft_probs)),
            };

            let input = concatenate(Axis(0), &[l1.view(), u1.view(), l2.view(), u2.view()])
                .expect("same width");
            let enc = model.encode_batch(input.view())?;
            let proj = model.project_batch(enc.z.view())?;
            let unsup_positives: Vec<Vec<usize>> =
                (0..2 * n).map(|i| vec![(i + n) % (2 * n)]).collect();
            let mut sup_rows = rows(0..n_l);
            sup_rows.extend(n..n + n_l);
            let sup_labels: Vec<usize> = labels.iter().chain(&labels).copied().collect();
            let obj = contrastive_objective(
                &ContrastiveObjectiveInput {
                    features: proj.unit.view(),
                    unsup_positives: &unsup_positives,
                    sup_rows: &sup_rows,
                    sup_labels: &sup_labels,
                    soft_rows: &soft_rows,
                    soft_weights: soft_weights.as_ref(),
                    temperature: cfg.temperature,
                    include_soft: soft_active,
                },
                &cfg.weights,
            )?;
            if !obj.total.is_finite() {
                return Err(Error::NonFinite("contrastive loss".into()));
            }
            let mut grads = model.zeros_like();
            let dz = model.projector_backward(&proj, obj.grad.view(), &mut grads);
            model.encoder_backward(&enc, dz.view(), &mut grads);
            state.contrastive_opt.step(
                &mut state.model,
                &grads,
                lr,
                &[Part::Encoder, Part::Projector],
            )?;
            out.l_cl_u = obj.l_unsup;
            out.l_cl_s = obj.l_sup;
            out.l_cl_soft = obj.l_soft;
            out.l_con = obj.total;
        }
        if !state.model.is_finite() {
            return Err(Error::NonFinite("parameters after update".into()));
        }
        Ok(out)
    }

    /// Rectified, class-rate-subsampled pseudo-labels of the batch's
    /// unlabeled samples: `(position in batch, probabilities)`.
    fn select_pseudolabels(
        &self,
        model: &Model,
        batch: &Batch,
        xu: &Array2<f64>,
        labels: &[usize],
        pi_e: &ClassDistribution,
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        if batch.unlabeled.is_empty() {
            return Ok(Vec::new());
        }
        let cfg = self.config;
        let logits = model
            .classify_batch(model.encode_batch(xu.view())?.z.view())?
            .logits;
        let mut rectified = Vec::with_capacity(logits.nrows());
        for row in logits.rows() {
            let row = row.to_vec();
            rectified.push(if cfg.debias {
                debias(&row, pi_e, cfg.sampling.k)?
            } else {
                softmax(&row)
            });
        }
        let ids = batch
            .unlabeled
            .iter()
            .map(|&i| self.split.unlabeled[i].id)
            .collect();
        let pseudo = PseudoLabelBatch::new(ids, rectified)?;
        let rates = if cfg.class_sampling {
            sampling_rates(pi_e, labels, cfg.sampling.alpha, cfg.sampling.beta)?
        } else {
            vec![1.0; pi_e.len()]
        };
        let pseudo = sample_pseudolabels(pseudo, &rates)?;
        Ok(pseudo
            .selected()
            .map(|j| (j, pseudo.rectified[j].clone()))
            .collect())
    }

    /// Runs the remaining epochs, calling `on_epoch` after each one (for
    /// telemetry and checkpoints).
    pub fn run(
        &self,
        mut state: TrainState,
        mut on_epoch: impl FnMut(&TrainState, &EpochRecord) -> Result<()>,
    ) -> Result<TrainState> {
        while state.epoch < self.config.schedule.total_epochs {
            let record = self.run_epoch(&mut state)?;
            tracing::info!(
                epoch = record.epoch,
                lr = record.lr,
                l_cls = record.l_cls,
                l_con = record.l_con,
                "epoch done"
            );
            on_epoch(&state, &record)?;
        }
        Ok(state)
    }
}

/// Trains a fresh model on `split`.
pub fn run(
    split: &DatasetSplit,
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainState> {
    let trainer = Trainer::new(split, config)?;
    let state = TrainState::new(model_config, config)?;
    trainer.run(state, |_, _| Ok(()))
}

/// Encoder features of the unlabeled pool with their hidden labels, for
/// transductive evaluation.
pub fn unlabeled_features(
    model: &Model,
    split: &DatasetSplit,
) -> Result<(Array2<f64>, Vec<usize>)> {
    let truth: Option<Vec<usize>> = split.evaluation_unlabeled_truth().iter().copied().collect();
    let truth =
        truth.ok_or_else(|| Error::invalid("unlabeled pool lacks ground truth for evaluation"))?;
    let x = stack(&split.unlabeled, split.dim);
    Ok((model.encode_batch(x.view())?.z, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, split_known_novel};

    fn tiny_split(seed: u64) -> DatasetSplit {
        let pool = gen_synthetic(4, 6, &[30, 20, 15, 10], 6.0, 1.0, seed).unwrap();
        split_known_novel(&pool, 4, 2, 0.5, seed).unwrap()
    }

    fn tiny_config(epochs: usize) -> (ModelConfig, TrainConfig) {
        let mut model = ModelConfig::new(6, 4);
        model.d_hidden = 16;
        model.d_feat = 8;
        model.d_proj_hidden = 16;
        model.d_proj = 8;
        let mut cfg = TrainConfig::default();
        cfg.schedule.total_epochs = epochs;
        cfg.schedule.batch_size = 16;
        cfg.schedule.warmup_epochs = Some(1);
        cfg.reestimate_interval = 2;
        (model, cfg)
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let split = tiny_split(1);
        let (m, cfg) = tiny_config(3);
        let a = run(&split, &m, &cfg).unwrap();
        let b = run(&split, &m, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.telemetry, b.telemetry);
        let other = TrainConfig { seed: 9, ..cfg };
        assert_ne!(run(&split, &m, &other).unwrap().model, a.model);
    }

    #[test]
    fn warmup_only_has_no_soft_loss() {
        let split = tiny_split(2);
        let (m, mut cfg) = tiny_config(3);
        cfg.schedule.warmup_epochs = Some(3);
        let state = run(&split, &m, &cfg).unwrap();
        assert!(state
            .telemetry
            .iter()
            .all(|r| r.l_cl_soft == 0.0 && !r.soft_active));
    }

    #[test]
    fn estimation_schedule() {
        let split = tiny_split(3);
        let (m, mut cfg) = tiny_config(4);
        cfg.reestimate_interval = 4;
        let state = run(&split, &m, &cfg).unwrap();
        assert_eq!(state.estimations.len(), 1);
        cfg.reestimate_interval = 1;
        assert_eq!(run(&split, &m, &cfg).unwrap().estimations.len(), 4);
        cfg.reestimate_interval = 2;
        let state = run(&split, &m, &cfg).unwrap();
        let epochs: Vec<usize> = state.estimations.iter().map(|(e, _)| *e).collect();
        assert_eq!(epochs, vec![0, 2]);
        // constant between rounds
        assert_eq!(state.telemetry[0].pi_e, state.telemetry[1].pi_e);
    }

    #[test]
    fn composites_match_logged_parts() {
        let split = tiny_split(4);
        let (m, cfg) = tiny_config(3);
        let w = cfg.weights;
        for r in run(&split, &m, &cfg).unwrap().telemetry {
            for v in [r.l_s, r.l_u, r.l_reg, r.l_cl_u, r.l_cl_s, r.l_cl_soft] {
                assert!(v.is_finite());
            }
            assert!((r.l_cls - (r.l_s + w.eta1 * r.l_u + w.eta2 * r.l_reg)).abs() < 1e-9);
            assert!(
                (r.l_con - (r.l_cl_u + w.gamma1 * r.l_cl_s + w.gamma2 * r.l_cl_soft)).abs() < 1e-9
            );
        }
    }

    #[test]
    fn resume_reproduces_next_epoch() {
        let split = tiny_split(5);
        let (m, cfg) = tiny_config(4);
        let full = run(&split, &m, &cfg).unwrap();

        let trainer = Trainer::new(&split, &cfg).unwrap();
        let mut state = TrainState::new(&m, &cfg).unwrap();
        trainer.run_epoch(&mut state).unwrap();
        trainer.run_epoch(&mut state).unwrap();
        let ck = state.to_checkpoint("h").unwrap();
        let dir = tempfile::tempdir().unwrap();
        ck.save(dir.path().join("ck.json")).unwrap();
        let loaded = Checkpoint::load(dir.path().join("ck.json")).unwrap();
        let mut resumed = TrainState::from_checkpoint(&loaded, &m, &cfg).unwrap();
        let next = trainer.run_epoch(&mut resumed).unwrap();
        assert_eq!(next, full.telemetry[2]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let split = tiny_split(6);
        for bad in [
            TrainConfig {
                reestimate_interval: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                temperature: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                smoothing: 1.5,
                ..TrainConfig::default()
            },
        ] {
            assert!(Trainer::new(&split, &bad).is_err());
        }
    }

    #[test]
    fn config_rejects_unknown_keys_and_fills_defaults() {
        let cfg: TrainConfig = serde_json::from_str(r#"{"temperature": 0.5}"#).unwrap();
        assert_eq!(cfg.temperature, 0.5);
        assert_eq!(cfg.sampling, SamplingConfig::default());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"temprature": 0.5}"#).is_err());
    }
}
