//! R² evaluation, the repeated hold-out benchmark harness and
//! reconstruction-based example explanation.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention_net::Architecture;
use crate::dataset::{gen_two_moons, split_cv, CvPlan, Dataset};
use crate::error::{NafError, Result};
use crate::forest::{ForestConfig, ForestKind};
use crate::naf_model::{NafConfig, NafModel};
use crate::par::map_indexed;
use crate::training::{train, Objective, TrainConfig};

/// Coefficient of determination `1 - SS_res / SS_tot`.
pub fn r_squared(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.is_empty() || y_true.len() != y_pred.len() {
        return Err(NafError::Dimension {
            expected: y_true.len(),
            actual: y_pred.len(),
            location: None,
        });
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(NafError::ConstantTarget);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Model column of the comparison grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// The forest with uniform tree weights.
    Original,
    Naf(Architecture),
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelKind::Original => f.write_str("Original"),
            ModelKind::Naf(a) => write!(f, "{a}"),
        }
    }
}

impl FromStr for ModelKind {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("original") {
            return Ok(ModelKind::Original);
        }
        s.parse::<Architecture>()
            .map(ModelKind::Naf)
            .map_err(|_| NafError::Config(format!("unknown model {s:?}; expected original, naf1 or naf3")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridEntry {
    pub forest: ForestKind,
    pub model: ModelKind,
}

impl GridEntry {
    /// `{RF, ERT} x {Original, NAF-1, NAF-3}`.
    pub fn full_grid() -> Vec<GridEntry> {
        let mut grid = Vec::new();
        for forest in [ForestKind::RandomForest, ForestKind::ExtraTrees] {
            for model in [
                ModelKind::Original,
                ModelKind::Naf(Architecture::Naf1),
                ModelKind::Naf(Architecture::Naf3),
            ] {
                grid.push(GridEntry { forest, model });
            }
        }
        grid
    }
}

/// Everything except the data and the split plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    pub embed_width: usize,
    pub train: TrainConfig,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            n_trees: 100,
            min_leaf_size: 10,
            embed_width: 16,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub dataset: String,
    pub entry: GridEntry,
    pub objective: Objective,
    /// Test R² per repetition.
    pub r2: Vec<f64>,
    pub mean_r2: f64,
    pub settings: BenchSettings,
}

/// Repeated hold-out evaluation.
///
/// Repetition `r` holds out fold 0 of repetition `r` of `plan` (so `k = 5`
/// keeps `n/5` rows for testing), fits the forest and trains the networks
/// on the remaining rows, and scores test R². Within a repetition every
/// grid entry with the same forest kind shares the same forest seed.
pub fn run_benchmark(
    dataset_name: &str,
    dataset: &Dataset,
    grid: &[GridEntry],
    settings: &BenchSettings,
    plan: &CvPlan,
) -> Result<Vec<BenchResult>> {
    let folds = split_cv(dataset.n_rows(), plan)?;
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..plan.repetitions).map(move |r| (g, r)))
        .collect();
    let scores = map_indexed(jobs.len(), |i| {
        let (g, r) = jobs[i];
        let test = &folds[r][0];
        let train_idx: Vec<usize> = folds[r][1..].concat();
        let seed = plan.seed.wrapping_add(1000 * r as u64 + 1);
        score_entry(
            &grid[g],
            &dataset.subset(&train_idx),
            &dataset.subset(test),
            settings,
            seed,
        )
    });
    let mut scores = scores.into_iter();
    grid.iter()
        .map(|entry| {
            let r2 = (0..plan.repetitions)
                .map(|_| scores.next().expect("one score per job"))
                .collect::<Result<Vec<f64>>>()?;
            let mean_r2 = r2.iter().sum::<f64>() / r2.len().max(1) as f64;
            Ok(BenchResult {
                dataset: dataset_name.to_string(),
                entry: *entry,
                objective: settings.train.objective,
                r2,
                mean_r2,
                settings: settings.clone(),
            })
        })
        .collect()
}

fn score_entry(
    entry: &GridEntry,
    train_set: &Dataset,
    test_set: &Dataset,
    settings: &BenchSettings,
    seed: u64,
) -> Result<f64> {
    let forest_cfg = ForestConfig::new(entry.forest, settings.n_trees, settings.min_leaf_size, seed);
    let arch = match entry.model {
        ModelKind::Original => Architecture::Naf1,
        ModelKind::Naf(a) => a,
    };
    let mut naf_cfg = NafConfig::new(arch);
    naf_cfg.embed_width = settings.embed_width;
    let mut model = NafModel::fit_forest(train_set, &forest_cfg, naf_cfg, seed)?;
    let preds: Vec<f64> = match entry.model {
        ModelKind::Original => test_set
            .rows()
            .map(|x| model.plain_predict(x))
            .collect::<Result<_>>()?,
        ModelKind::Naf(_) => {
            let cfg = TrainConfig {
                seed,
                ..settings.train.clone()
            };
            train(&mut model, &cfg)?;
            let rows: Vec<Vec<f64>> = test_set.rows().map(<[f64]>::to_vec).collect();
            model.predict_many(&rows)?.into_iter().map(|o| o.y_hat).collect()
        }
    };
    r_squared(test_set.targets(), &preds)
}

/// Per-repetition rows followed by one `mean` row per grid entry.
pub fn bench_csv(results: &[BenchResult]) -> String {
    let mut out = String::from("dataset,forest_kind,model,repetition,r2\n");
    for res in results {
        for (r, v) in res.r2.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{:?}",
                res.dataset, res.entry.forest, res.entry.model, r, v
            );
        }
    }
    for res in results {
        let _ = writeln!(
            out,
            "{},{},{},mean,{:?}",
            res.dataset, res.entry.forest, res.entry.model, res.mean_r2
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub weight: f64,
    /// Features in the original space.
    pub x: Vec<f64>,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub query: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub y_hat: f64,
    /// Training rows ranked by combined weight, highest first.
    pub neighbors: Vec<Neighbor>,
}

/// Rank training rows by how much they contribute to the prediction for `x`.
///
/// A row's weight is `sum_k beta_k * alpha_kj`, its coefficient in the
/// composed convex combination; rows outside tree `k`'s leaf contribute
/// nothing for that tree. Ties rank by row index.
pub fn explain(model: &NafModel, x: &[f64], top_k: usize) -> Result<Explanation> {
    let out = model.predict(x)?;
    let train = model.train_data();
    let mut weights = vec![0.0; train.n_rows()];
    for s in out.tree_summaries.iter().flatten() {
        let beta = out.tree_weights[s.tree];
        for (&j, &a) in s.members.iter().zip(&s.leaf_weights) {
            weights[j] += beta * a;
        }
    }
    let mut order: Vec<usize> = (0..train.n_rows()).collect();
    order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));
    order.truncate(top_k);
    let neighbors = order
        .into_iter()
        .map(|j| Neighbor {
            index: j,
            weight: weights[j],
            x: model.standardizer().invert_row(train.row(j)),
            y: train.targets()[j],
        })
        .collect();
    Ok(Explanation {
        query: x.to_vec(),
        x_hat: out.x_hat,
        y_hat: out.y_hat,
        neighbors,
    })
}

impl Explanation {
    /// Plot-ready rows: the query, its reconstruction, then the neighbors.
    pub fn to_csv(&self) -> String {
        let d = self.query.len();
        let mut out = String::from("kind,index,weight");
        for j in 1..=d {
            let _ = write!(out, ",x{j}");
        }
        out.push_str(",y\n");
        let mut row = |kind: &str, index: String, weight: String, x: &[f64], y: String| {
            let _ = write!(out, "{kind},{index},{weight}");
            for v in x {
                let _ = write!(out, ",{v:?}");
            }
            let _ = writeln!(out, ",{y}");
        };
        row("query", String::new(), String::new(), &self.query, String::new());
        row(
            "reconstruction",
            String::new(),
            String::new(),
            &self.x_hat,
            format!("{:?}", self.y_hat),
        );
        for n in &self.neighbors {
            row(
                "neighbor",
                n.index.to_string(),
                format!("{:?}", n.weight),
                &n.x,
                format!("{:?}", n.y),
            );
        }
        out
    }
}

/// Setup of the two-moons explanation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoonsSetup {
    pub n_train: usize,
    pub n_test: usize,
    pub noise_sd: f64,
    pub n_trees: usize,
    pub min_leaf_size: usize,
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for MoonsSetup {
    fn default() -> Self {
        Self {
            n_train: 25,
            n_test: 200,
            noise_sd: 0.1,
            n_trees: 500,
            min_leaf_size: 1,
            architecture: Architecture::Naf1,
            train: TrainConfig {
                objective: Objective::QRecon,
                lambdas: vec![1.0],
                epochs: 25,
                ..TrainConfig::default()
            },
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MoonsReport {
    pub forest_r2: f64,
    pub naf_r2: f64,
    pub random_naf_r2: f64,
    /// Median `|x_hat - x|` over test queries, trained networks.
    pub median_recon_trained: f64,
    /// Same with freshly initialized networks.
    pub median_recon_random: f64,
    pub model: NafModel,
    pub test: Dataset,
}

/// Fit an ERT on a small two-moons sample, train the networks, and compare
/// prediction quality and reconstruction distance on a held-out sample.
pub fn two_moons_experiment(setup: &MoonsSetup) -> Result<MoonsReport> {
    let train_set = gen_two_moons(setup.n_train, setup.noise_sd, setup.seed)?;
    let test = gen_two_moons(setup.n_test, setup.noise_sd, setup.seed.wrapping_add(1))?;
    let forest_cfg = ForestConfig::new(
        ForestKind::ExtraTrees,
        setup.n_trees,
        setup.min_leaf_size,
        setup.seed,
    );
    let random = NafModel::fit_forest(
        &train_set,
        &forest_cfg,
        NafConfig::new(setup.architecture),
        setup.seed,
    )?;
    let mut model = random.clone();
    train(
        &mut model,
        &TrainConfig {
            seed: setup.seed,
            ..setup.train.clone()
        },
    )?;

    let rows: Vec<Vec<f64>> = test.rows().map(<[f64]>::to_vec).collect();
    let plain: Vec<f64> = rows
        .iter()
        .map(|x| model.plain_predict(x))
        .collect::<Result<_>>()?;
    let trained = model.predict_many(&rows)?;
    let untrained = random.predict_many(&rows)?;
    let recon = |outs: &[crate::naf_model::NafOutput]| {
        median(
            outs.iter()
                .zip(&rows)
                .map(|(o, x)| {
                    o.x_hat
                        .iter()
                        .zip(x)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect(),
        )
    };
    let y_of = |outs: &[crate::naf_model::NafOutput]| outs.iter().map(|o| o.y_hat).collect::<Vec<_>>();
    Ok(MoonsReport {
        forest_r2: r_squared(test.targets(), &plain)?,
        naf_r2: r_squared(test.targets(), &y_of(&trained))?,
        random_naf_r2: r_squared(test.targets(), &y_of(&untrained))?,
        median_recon_trained: recon(&trained),
        median_recon_random: recon(&untrained),
        model,
        test,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}
