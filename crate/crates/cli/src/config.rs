//! Run configuration: a TOML document plus command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use ensemble_ids::classifier::MlpConfig;
use ensemble_ids::dataset::{DatasetFlavor, MalformedPolicy, UnseenPolicy};
use ensemble_ids::ensemble::{EnsembleConfig, VoteWeights};
use ensemble_ids::feature_select::SelectionConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Select against the ground-truth label column.
    #[default]
    Calibration,
    /// Select against labels from a first ensemble pass over all features.
    PseudoLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    /// Held-out file for `eval`; the training matrix is used when absent.
    pub test: Option<PathBuf>,
    pub flavor: DatasetFlavor,
    /// Overrides the flavor's label column.
    pub label_column: Option<String>,
    pub normal_token: Option<String>,
    /// Extra non-feature columns to discard.
    pub drop_columns: Vec<String>,
    pub delimiter: char,
    pub malformed: MalformedPolicy,
    pub unseen: UnseenPolicy,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            flavor: DatasetFlavor::Generic,
            label_column: None,
            normal_token: None,
            drop_columns: Vec::new(),
            delimiter: ',',
            malformed: MalformedPolicy::default(),
            unseen: UnseenPolicy::default(),
        }
    }
}

impl DataConfig {
    pub fn label_column(&self) -> Option<String> {
        self.label_column
            .clone()
            .or_else(|| self.flavor.label_column().map(str::to_string))
    }

    pub fn normal_token(&self) -> String {
        self.normal_token
            .clone()
            .unwrap_or_else(|| self.flavor.normal_token().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SelectStage {
    pub mode: SelectionMode,
    #[serde(flatten)]
    pub params: SelectionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct LabelStage {
    /// Orient FCM by the ground-truth labels instead of distance from the mean.
    pub calibrate_polarity: bool,
    #[serde(flatten)]
    pub params: EnsembleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub select: SelectStage,
    pub label: LabelStage,
    pub mlp: MlpConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("run"),
            data: DataConfig::default(),
            select: SelectStage::default(),
            label: LabelStage::default(),
            mlp: MlpConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub weights: Option<Vec<f64>>,
    pub delta: Option<f64>,
    pub optics_subsample: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

pub fn parse_weights(s: &str) -> Result<Vec<f64>> {
    let w: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad weight {p:?}")))
        .collect::<Result<_>>()?;
    ensure!(w.len() == 3, "expected three weights, got {}", w.len());
    Ok(w)
}

impl RunConfig {
    /// Reads the TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.data.train.as_mut().map(rebase);
        cfg.data.test.as_mut().map(rebase);
        rebase(&mut cfg.output_dir);
        Ok(cfg)
    }

    /// Applies overrides, spreads the run seed over every stage and validates.
    pub fn resolve(mut self, o: &Overrides) -> Result<Self> {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(w) = &o.weights {
            self.label.params.weights = VoteWeights::new(w[0], w[1], w[2])?;
        }
        if let Some(d) = o.delta {
            self.select.params.delta = d;
        }
        if let Some(n) = o.optics_subsample {
            self.label.params.optics.subsample = Some(n);
        }
        if let Some(p) = &o.output_dir {
            self.output_dir = p.clone();
        }
        if let Some(p) = &o.train {
            self.data.train = Some(p.clone());
        }
        if let Some(p) = &o.test {
            self.data.test = Some(p.clone());
        }
        self.select.params.seed = self.seed;
        self.label.params.kmeans.seed = self.seed;
        self.label.params.fcm.seed = self.seed;
        self.label.params.optics.seed = self.seed;
        self.mlp.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.label.params.weights.validate()?;
        let d = self.select.params.delta;
        ensure!((0.0..=1.0).contains(&d), "delta must lie in [0, 1], got {d}");
        ensure!(self.data.delimiter.is_ascii(), "delimiter must be a single ASCII character");
        for p in self.data.train.iter().chain(&self.data.test) {
            if !p.is_file() {
                bail!("input file {} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn train_path(&self) -> Result<&Path> {
        self.data
            .train
            .as_deref()
            .context("no training data configured (set data.train or pass --train)")
    }
}
