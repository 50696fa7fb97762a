//! Command bodies. Each returns the lines to print on success.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use naf_core::dataset::{load_csv, read_feature_columns, TargetColumn};
use naf_core::eval_explain::{bench_csv, explain, run_benchmark, BenchResult, BenchSettings};
use naf_core::{
    load_model, save_model, train, Dataset, NafError, NafModel, Objective, SyntheticKind, TrainingMeta,
};

use crate::config::RunConfig;
use crate::CliError;

pub const MODEL_FILE: &str = "model.json";
pub const HISTORY_FILE: &str = "loss_history.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const BENCH_FILE: &str = "bench.csv";
pub const BENCH_META_FILE: &str = "bench_meta.json";
pub const EXPLANATION_FILE: &str = "explanation.csv";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| {
        CliError::Runtime(NafError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn write_out(cfg: &RunConfig, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

fn parse_dataset(name: &str) -> Result<SyntheticKind, CliError> {
    name.parse().map_err(|e: NafError| CliError::Usage(e.to_string()))
}

/// The training data named by the config, or the synthetic set `name`.
/// Feature names default to `x1..xd` so predict inputs can be matched by
/// header.
fn load_data(cfg: &RunConfig, name: Option<&str>) -> Result<(String, Dataset), CliError> {
    let (label, ds) = match (name, &cfg.data.csv) {
        (None, Some(path)) => {
            let target = match &cfg.data.target {
                Some(t) => t.parse::<TargetColumn>().unwrap_or_else(|e| match e {}),
                None => TargetColumn::Last,
            };
            let label = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into());
            (label, load_csv(path, &target)?)
        }
        _ => {
            let name = name.unwrap_or(&cfg.data.dataset);
            let kind = parse_dataset(name)?;
            (
                kind.to_string(),
                kind.generate(cfg.data.n, cfg.data.noise, cfg.seed)?,
            )
        }
    };
    let names = ds.column_names();
    Ok((label, ds.with_feature_names(names)?))
}

fn model_path(cfg: &RunConfig, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cfg.out.join(MODEL_FILE))
}

pub fn cmd_train(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let (label, ds) = load_data(cfg, None)?;
    let mut model = NafModel::fit_forest(&ds, &cfg.forest_config(), cfg.naf_config(), cfg.seed)?;
    let train_cfg = cfg.train_config();
    let report = train(&mut model, &train_cfg)?;
    let meta = TrainingMeta {
        config: train_cfg,
        initial_loss: report.initial_loss,
        final_loss: report.final_loss(),
        dataset: Some(label.clone()),
    };
    std::fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let path = cfg.out.join(MODEL_FILE);
    save_model(&path, &model, Some(&meta))?;
    write_out(cfg, HISTORY_FILE, &report.history_csv())?;
    write_out(cfg, CONFIG_FILE, &cfg.to_toml())?;
    let trend = if meta.final_loss <= meta.initial_loss {
        "non-increasing"
    } else {
        "increasing"
    };
    Ok(vec![
        format!(
            "trained {} on {} ({} rows, {} features, {} {} trees)",
            cfg.naf.arch,
            label,
            ds.n_rows(),
            ds.n_features(),
            cfg.forest.trees,
            cfg.forest.kind
        ),
        format!(
            "loss {:.6} -> {:.6} over {} epochs ({})",
            meta.initial_loss, meta.final_loss, cfg.train.epochs, report.objective
        ),
        format!("loss trend: {trend}"),
        format!("wrote {}", path.display()),
    ])
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let input = cfg
        .predict
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("predict needs --input PATH".into()))?;
    let (model, _) = load_model(model_path(cfg, &cfg.predict.model))?;
    let file = std::fs::File::open(input).map_err(io_err(input))?;
    let d = model.n_features();
    let names = model.train_data().feature_names();
    let rows = read_feature_columns(file, d, names)?;
    let outputs = model.predict_many(&rows)?;

    let mut csv = String::from("y_hat");
    for name in model.train_data().column_names() {
        let _ = write!(csv, ",x_hat_{name}");
    }
    csv.push('\n');
    for o in &outputs {
        let _ = write!(csv, "{:?}", o.y_hat);
        for v in &o.x_hat {
            let _ = write!(csv, ",{v:?}");
        }
        csv.push('\n');
    }
    let path = write_out(cfg, PREDICTIONS_FILE, &csv)?;
    Ok(vec![format!(
        "wrote {} predictions to {}",
        outputs.len(),
        path.display()
    )])
}

#[derive(Serialize)]
struct BenchMeta<'a> {
    protocol: &'static str,
    objective: Objective,
    folds: usize,
    repetitions: usize,
    seed: u64,
    settings: &'a BenchSettings,
    datasets: Vec<DatasetMeta>,
}

#[derive(Serialize)]
struct DatasetMeta {
    name: String,
    rows: usize,
    features: usize,
}

const BENCH_PROTOCOL: &str = "repeated hold-out: each repetition reshuffles the rows into k folds, \
holds out fold 0 for testing and trains on the rest; the reported score is mean test R2 over repetitions";

pub fn cmd_bench(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let grid = cfg.bench_grid()?;
    for name in &cfg.bench.datasets {
        parse_dataset(name)?;
    }
    let names: Vec<Option<&str>> = if cfg.bench.datasets.is_empty() {
        vec![None]
    } else {
        cfg.bench.datasets.iter().map(|s| Some(s.as_str())).collect()
    };
    let settings = cfg.bench_settings();
    let plan = cfg.cv_plan();
    let mut results: Vec<BenchResult> = Vec::new();
    let mut datasets = Vec::new();
    for name in names {
        let (label, ds) = load_data(cfg, name)?;
        results.extend(run_benchmark(&label, &ds, &grid, &settings, &plan)?);
        datasets.push(DatasetMeta {
            name: label,
            rows: ds.n_rows(),
            features: ds.n_features(),
        });
    }
    let meta = BenchMeta {
        protocol: BENCH_PROTOCOL,
        objective: settings.train.objective,
        folds: plan.k,
        repetitions: plan.repetitions,
        seed: plan.seed,
        settings: &settings,
        datasets,
    };
    let path = write_out(cfg, BENCH_FILE, &bench_csv(&results))?;
    let meta_json = serde_json::to_string_pretty(&meta).expect("bench metadata serializes") + "\n";
    write_out(cfg, BENCH_META_FILE, &meta_json)?;
    let mut lines: Vec<String> = results
        .iter()
        .map(|r| {
            format!(
                "{:<10} {:<4} {:<9} mean R2 {:.4}",
                r.dataset, r.entry.forest, r.entry.model, r.mean_r2
            )
        })
        .collect();
    lines.push(format!("wrote {}", path.display()));
    Ok(lines)
}

pub fn cmd_explain(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    if cfg.explain.query.is_empty() {
        return Err(CliError::Usage("explain needs --query X1,X2,..".into()));
    }
    let (model, _) = load_model(model_path(cfg, &cfg.explain.model))?;
    let e = explain(&model, &cfg.explain.query, cfg.explain.top_k)?;
    let path = write_out(cfg, EXPLANATION_FILE, &e.to_csv())?;
    let mut lines = vec![format!("y_hat {:.6}  x_hat {:?}", e.y_hat, e.x_hat)];
    for n in &e.neighbors {
        lines.push(format!(
            "  row {:>5}  weight {:.6}  y {:.6}",
            n.index, n.weight, n.y
        ));
    }
    lines.push(format!("wrote {}", path.display()));
    Ok(lines)
}

pub fn cmd_gen_data(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let kind = parse_dataset(&cfg.data.dataset)?;
    let ds = kind.generate(cfg.data.n, cfg.data.noise, cfg.seed)?;
    let mut buf = Vec::new();
    ds.write_csv(&mut buf, "y").expect("writing to memory");
    let name = format!("{kind}.csv");
    let path = write_out(cfg, &name, &String::from_utf8(buf).expect("CSV is UTF-8"))?;
    Ok(vec![format!("wrote {} rows to {}", ds.n_rows(), path.display())])
}
