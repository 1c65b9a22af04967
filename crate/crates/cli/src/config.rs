//! Experiment configuration file.
//!
//! Every block has defaults, unknown keys are rejected, and the fully
//! materialised config is written next to every artifact.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dagcd_core::data::{
    load_embeddings, read_split_dir, split_known_novel, synthetic_split, DatasetSplit,
    ImbalanceKind, SyntheticSpec,
};
use dagcd_core::estimate::KMeansSettings;
use dagcd_core::nn::ModelConfig;
use dagcd_core::train::TrainConfig;
use dagcd_core::util::sha256_hex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelBlock,
    pub train: TrainConfig,
    pub eval: EvalBlock,
    pub output: OutputBlock,
}

/// Where training data comes from. At most one of `synthetic`,
/// `embeddings` and `split_dir` may be set; with none, the default
/// synthetic benchmark is used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub num_classes: usize,
    pub num_known: usize,
    pub labeled_ratio: f64,
    /// Seed for data generation and the known/novel split; the run seed when absent.
    pub seed: Option<u64>,
    pub synthetic: Option<SyntheticParams>,
    /// Fully labeled embedding CSV, split into known/novel by `num_known`.
    pub embeddings: Option<PathBuf>,
    /// Directory written by `gen-data`.
    pub split_dir: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            num_classes: 10,
            num_known: 6,
            labeled_ratio: 0.5,
            seed: None,
            synthetic: None,
            embeddings: None,
            split_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub dim: usize,
    pub separation: f64,
    pub noise: f64,
    pub n_max: usize,
    pub kind: ImbalanceKind,
    pub rho_labeled: f64,
    pub rho_unlabeled: f64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        SyntheticParams {
            dim: s.dim,
            separation: s.separation,
            noise: s.noise,
            n_max: s.n_max,
            kind: s.kind,
            rho_labeled: s.rho_labeled,
            rho_unlabeled: s.rho_unlabeled,
        }
    }
}

/// Network widths; the input width and class count come from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub d_hidden: usize,
    pub d_feat: usize,
    pub d_proj_hidden: usize,
    pub d_proj: usize,
    pub classifier_scale: f64,
}

impl Default for ModelBlock {
    fn default() -> Self {
        let m = ModelConfig::new(1, 1);
        ModelBlock {
            d_hidden: m.d_hidden,
            d_feat: m.d_feat,
            d_proj_hidden: m.d_proj_hidden,
            d_proj: m.d_proj,
            classifier_scale: m.classifier_scale,
        }
    }
}

impl ModelBlock {
    pub fn model_config(&self, d_in: usize, num_classes: usize) -> ModelConfig {
        ModelConfig {
            d_in,
            d_hidden: self.d_hidden,
            d_feat: self.d_feat,
            d_proj_hidden: self.d_proj_hidden,
            d_proj: self.d_proj,
            num_classes,
            classifier_scale: self.classifier_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalBlock {
    /// Seeds used by `ablate` when none are given on the command line.
    pub seeds: Vec<u64>,
    pub kmeans: KMeansSettings,
    /// Labeled embedding CSV (original class ids) scored instead of the
    /// unlabeled training pool.
    pub test_embeddings: Option<PathBuf>,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            seeds: vec![0, 1, 2],
            kmeans: KMeansSettings::default(),
            test_embeddings: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputBlock {
    pub dir: PathBuf,
    /// Also keep `checkpoint-epoch-NNNN.json` every this many epochs (0 = off).
    pub checkpoint_every: usize,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock {
            dir: PathBuf::from("runs"),
            checkpoint_every: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; a missing path gives the defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ExperimentConfig::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        // relative data paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.dataset.embeddings,
            &mut cfg.dataset.split_dir,
            &mut cfg.eval.test_embeddings,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies command-line overrides and picks the default data source.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<&Path>) -> Result<Self> {
        if let Some(seed) = seed {
            self.train.seed = seed;
        }
        if let Some(out) = out {
            self.output.dir = out.to_path_buf();
        }
        let sources = [
            self.dataset.synthetic.is_some(),
            self.dataset.embeddings.is_some(),
            self.dataset.split_dir.is_some(),
        ];
        match sources.iter().filter(|&&s| s).count() {
            0 => self.dataset.synthetic = Some(SyntheticParams::default()),
            1 => {}
            _ => bail!("dataset: set only one of `synthetic`, `embeddings`, `split_dir`"),
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        if d.num_classes < 2 {
            bail!("dataset.num_classes must be >= 2");
        }
        if d.num_known == 0 || d.num_known > d.num_classes {
            bail!("dataset.num_known must be in 1..={}", d.num_classes);
        }
        if !(d.labeled_ratio > 0.0 && d.labeled_ratio < 1.0) {
            bail!("dataset.labeled_ratio must be in (0, 1)");
        }
        self.model.model_config(1, d.num_classes).validate()?;
        self.train.validate()?;
        if self.eval.kmeans.n_init == 0 || self.eval.kmeans.max_iter == 0 {
            bail!("eval.kmeans.n_init and eval.kmeans.max_iter must be >= 1");
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.dataset.seed.unwrap_or(self.train.seed)
    }

    /// Hash of everything that determines training, so a checkpoint can only
    /// be resumed or evaluated under the config that produced it.
    pub fn training_hash(&self) -> Result<String> {
        let key = serde_json::json!({
            "dataset": self.dataset,
            "model": self.model,
            "train": self.train,
        });
        Ok(sha256_hex(serde_json::to_string(&key)?.as_bytes()))
    }

    pub fn build_split(&self) -> Result<DatasetSplit> {
        let d = &self.dataset;
        let seed = self.data_seed();
        let split = if let Some(dir) = &d.split_dir {
            let split = read_split_dir(dir)?;
            if split.num_classes != d.num_classes || split.num_known != d.num_known {
                bail!(
                    "{}: split has {} classes ({} known), config says {} ({})",
                    dir.display(),
                    split.num_classes,
                    split.num_known,
                    d.num_classes,
                    d.num_known
                );
            }
            split
        } else if let Some(path) = &d.embeddings {
            let pool = load_embeddings(path, Some(d.num_classes))?;
            if let Some(s) = pool.samples.iter().find(|s| s.label.is_none()) {
                bail!(
                    "{}: sample {} has no label; embeddings must be fully labeled",
                    path.display(),
                    s.id
                );
            }
            split_known_novel(&pool, d.num_classes, d.num_known, d.labeled_ratio, seed)?
        } else {
            let p = d.synthetic.clone().unwrap_or_default();
            synthetic_split(
                &SyntheticSpec {
                    num_classes: d.num_classes,
                    num_known: d.num_known,
                    labeled_ratio: d.labeled_ratio,
                    dim: p.dim,
                    separation: p.separation,
                    noise: p.noise,
                    n_max: p.n_max,
                    kind: p.kind,
                    rho_labeled: p.rho_labeled,
                    rho_unlabeled: p.rho_unlabeled,
                },
                seed,
            )?
        };
        Ok(split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        let cfg = cfg.resolve(Some(3), None).unwrap();
        assert_eq!(cfg.train.seed, 3);
        assert_eq!(cfg.data_seed(), 3);
        assert_eq!(cfg.dataset.synthetic, Some(SyntheticParams::default()));
        assert_eq!(cfg.train.schedule.batch_size, 256);
        assert_eq!(cfg.train.temperature, 1.0);
        assert_eq!(cfg.train.sampling.k, 0.5);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for text in [
            r#"{"bogus": 1}"#,
            r#"{"dataset": {"bogus": 1}}"#,
            r#"{"dataset": {"synthetic": {"bogus": 1}}}"#,
            r#"{"model": {"bogus": 1}}"#,
            r#"{"train": {"schedule": {"bogus": 1}}}"#,
            r#"{"eval": {"kmeans": {"bogus": 1}}}"#,
            r#"{"output": {"bogus": 1}}"#,
        ] {
            assert!(
                serde_json::from_str::<ExperimentConfig>(text).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn resolved_config_round_trips() {
        let cfg = ExperimentConfig::default()
            .resolve(Some(5), Some(Path::new("x")))
            .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.resolve(None, None).unwrap(), cfg);
    }

    #[test]
    fn two_sources_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.dataset.synthetic = Some(SyntheticParams::default());
        cfg.dataset.split_dir = Some("d".into());
        assert!(cfg.resolve(Some(0), None).is_err());
    }

    #[test]
    fn hash_ignores_output_and_eval() {
        let a = ExperimentConfig::default().resolve(Some(1), None).unwrap();
        let mut b = a.clone();
        b.output.dir = "elsewhere".into();
        b.eval.seeds = vec![9];
        assert_eq!(a.training_hash().unwrap(), b.training_hash().unwrap());
        b.train.temperature = 0.5;
        assert_ne!(a.training_hash().unwrap(), b.training_hash().unwrap());
    }
}
