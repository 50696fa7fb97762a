//! Run configuration. A TOML file supplies the base values and command-line
//! flags override them.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use naf_core::dataset::CvPlan;
use naf_core::eval_explain::{BenchSettings, GridEntry, ModelKind};
use naf_core::{Architecture, ForestConfig, ForestKind, KeyMode, NafConfig, Objective, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataSection,
    pub forest: ForestSection,
    pub naf: NafSection,
    pub train: TrainSection,
    pub bench: BenchSection,
    pub predict: PredictSection,
    pub explain: ExplainSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            data: DataSection::default(),
            forest: ForestSection::default(),
            naf: NafSection::default(),
            train: TrainSection::default(),
            bench: BenchSection::default(),
            predict: PredictSection::default(),
            explain: ExplainSection::default(),
        }
    }
}

/// Where training data comes from: a synthetic generator or a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dataset: String,
    /// Takes precedence over `dataset` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Target column name or 0-based index; the last column when unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dataset: "friedman2".into(),
            csv: None,
            target: None,
            n: 100,
            noise: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSection {
    pub kind: ForestKind,
    pub trees: usize,
    pub min_leaf: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_depth: Option<usize>,
}

impl Default for ForestSection {
    fn default() -> Self {
        Self {
            kind: ForestKind::RandomForest,
            trees: 100,
            min_leaf: 10,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NafSection {
    pub arch: Architecture,
    pub embed_width: usize,
    pub key_mode: KeyMode,
}

impl Default for NafSection {
    fn default() -> Self {
        Self {
            arch: Architecture::Naf1,
            embed_width: 16,
            key_mode: KeyMode::Embedded,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub objective: Objective,
    /// Reconstruction weight, broadcast to every feature. Ignored by `y-mse`.
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    pub leave_one_out: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            objective: t.objective,
            lambda: 1.0,
            epochs: t.epochs,
            lr: t.learning_rate,
            batch_size: t.batch_size,
            leave_one_out: t.leave_one_out,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// Synthetic dataset names; `data` is used when empty.
    pub datasets: Vec<String>,
    pub forests: Vec<ForestKind>,
    pub models: Vec<String>,
    pub repetitions: usize,
    pub folds: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            forests: vec![ForestKind::RandomForest, ForestKind::ExtraTrees],
            models: vec!["original".into(), "naf1".into(), "naf3".into()],
            repetitions: 10,
            folds: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictSection {
    /// Defaults to `<out>/model.json`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
    pub query: Vec<f64>,
    pub top_k: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        Self {
            model: None,
            query: Vec::new(),
            top_k: 10,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn forest_config(&self) -> ForestConfig {
        let mut cfg = ForestConfig::new(
            self.forest.kind,
            self.forest.trees,
            self.forest.min_leaf,
            self.seed,
        );
        cfg.max_depth = self.forest.max_depth;
        cfg
    }

    pub fn naf_config(&self) -> NafConfig {
        NafConfig {
            architecture: self.naf.arch,
            embed_width: self.naf.embed_width,
            key_mode: self.naf.key_mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            objective: self.train.objective,
            lambdas: vec![self.train.lambda],
            learning_rate: self.train.lr,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            seed: self.seed,
            leave_one_out: self.train.leave_one_out,
            gradient_check: false,
        }
    }

    pub fn cv_plan(&self) -> CvPlan {
        CvPlan {
            k: self.bench.folds,
            repetitions: self.bench.repetitions,
            seed: self.seed,
        }
    }

    pub fn bench_settings(&self) -> BenchSettings {
        BenchSettings {
            n_trees: self.forest.trees,
            min_leaf_size: self.forest.min_leaf,
            embed_width: self.naf.embed_width,
            train: self.train_config(),
        }
    }

    pub fn bench_grid(&self) -> Result<Vec<GridEntry>, CliError> {
        let models = self
            .bench
            .models
            .iter()
            .map(|m| m.parse::<ModelKind>().map_err(|e| CliError::Usage(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let grid: Vec<GridEntry> = self
            .bench
            .forests
            .iter()
            .flat_map(|&forest| models.iter().map(move |&model| GridEntry { forest, model }))
            .collect();
        if grid.is_empty() {
            return Err(CliError::Usage("benchmark grid is empty".into()));
        }
        Ok(grid)
    }

    /// Range checks that do not depend on the data.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.to_string()));
        if self.forest.trees == 0 {
            return usage("trees must be >= 1");
        }
        if self.forest.min_leaf == 0 {
            return usage("min-leaf must be >= 1");
        }
        if self.naf.embed_width == 0 {
            return usage("embed_width must be >= 1");
        }
        if self.bench.repetitions == 0 || self.bench.folds < 2 {
            return usage("bench needs repetitions >= 1 and folds >= 2");
        }
        if self.data.noise.is_some_and(|s| !(s >= 0.0 && s.is_finite())) {
            return usage("noise must be a finite non-negative number");
        }
        self.train_config()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

/// Flags shared by every command. Each one overrides the matching config
/// value when given.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// friedman1, friedman2, friedman3, two_moons, linear or sparse.
    #[arg(long, global = true, value_name = "NAME")]
    pub dataset: Option<String>,
    /// Training data from a CSV file instead of a generator.
    #[arg(long, global = true, value_name = "PATH")]
    pub csv: Option<PathBuf>,
    /// Target column of --csv (name or 0-based index).
    #[arg(long, global = true, value_name = "COLUMN")]
    pub target: Option<String>,
    /// Rows to generate.
    #[arg(long, global = true, value_name = "N")]
    pub rows: Option<usize>,
    /// Noise standard deviation of the generator.
    #[arg(long, global = true, value_name = "SD")]
    pub noise: Option<f64>,
    /// rf or ert. For bench, restricts the grid to this kind.
    #[arg(long, global = true, value_name = "KIND")]
    pub forest: Option<ForestKind>,
    /// naf1 or naf3.
    #[arg(long, global = true, value_name = "ARCH")]
    pub arch: Option<Architecture>,
    /// y-mse or q-recon.
    #[arg(long, global = true, value_name = "OBJ")]
    pub objective: Option<Objective>,
    #[arg(long, global = true, value_name = "L")]
    pub lambda: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub trees: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub min_leaf: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub epochs: Option<usize>,
    #[arg(long, global = true, value_name = "X")]
    pub lr: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true, value_name = "N")]
    pub top_k: Option<usize>,
    /// Model file; defaults to <out>/model.json.
    #[arg(long, global = true, value_name = "PATH")]
    pub model: Option<PathBuf>,
    /// Feature CSV to predict on.
    #[arg(long, global = true, value_name = "PATH")]
    pub input: Option<PathBuf>,
    /// Comma-separated query row.
    #[arg(
        long,
        global = true,
        value_name = "X1,X2,..",
        value_delimiter = ',',
        allow_hyphen_values = true
    )]
    pub query: Option<Vec<f64>>,
    /// Comma-separated benchmark datasets.
    #[arg(long, global = true, value_name = "NAMES", value_delimiter = ',')]
    pub datasets: Option<Vec<String>>,
    /// Comma-separated benchmark models (original, naf1, naf3).
    #[arg(long, global = true, value_name = "NAMES", value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    #[arg(long, global = true, value_name = "N")]
    pub repetitions: Option<usize>,
}

impl Flags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($flag:ident => $($field:tt)+) => {
                if let Some(v) = &self.$flag {
                    cfg.$($field)+ = v.clone();
                }
            };
        }
        set!(seed => seed);
        set!(out => out);
        set!(dataset => data.dataset);
        set!(rows => data.n);
        set!(trees => forest.trees);
        set!(min_leaf => forest.min_leaf);
        set!(arch => naf.arch);
        set!(objective => train.objective);
        set!(lambda => train.lambda);
        set!(epochs => train.epochs);
        set!(lr => train.lr);
        set!(top_k => explain.top_k);
        set!(query => explain.query);
        set!(datasets => bench.datasets);
        set!(models => bench.models);
        set!(repetitions => bench.repetitions);
        if self.dataset.is_some() {
            cfg.data.csv = None;
        }
        if self.csv.is_some() {
            cfg.data.csv = self.csv.clone();
        }
        if self.target.is_some() {
            cfg.data.target = self.target.clone();
        }
        if self.noise.is_some() {
            cfg.data.noise = self.noise;
        }
        if let Some(kind) = self.forest {
            cfg.forest.kind = kind;
            cfg.bench.forests = vec![kind];
        }
        if self.batch_size.is_some() {
            cfg.train.batch_size = self.batch_size;
        }
        if self.model.is_some() {
            cfg.predict.model = self.model.clone();
            cfg.explain.model = self.model.clone();
        }
        if self.input.is_some() {
            cfg.predict.input = self.input.clone();
        }
    }

    /// The config file (if any) with these flags applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}
