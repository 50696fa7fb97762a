//! End-to-end gradient training of the leaf and global attention networks.
//!
//! The forest is frozen; only network parameters move. Gradients are exact
//! reverse-mode derivatives of the per-word loss through both softmax
//! stages and both networks.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attention_net::{dot, softmax_in_place, Trace};
use crate::error::{NafError, Result};
use crate::naf_model::{KeyMode, NafModel};
use crate::par::map_indexed;
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    /// Squared prediction error.
    #[serde(rename = "y-mse")]
    YMse,
    /// Diagonally weighted squared error of the reconstructed word
    /// `(x_hat, y_hat)` against `(x, y)`.
    #[serde(rename = "q-recon")]
    QRecon,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::YMse => "y-mse",
            Objective::QRecon => "q-recon",
        })
    }
}

impl FromStr for Objective {
    type Err = NafError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "y-mse" | "y_mse" => Ok(Objective::YMse),
            "q-recon" | "q_recon" => Ok(Objective::QRecon),
            other => Err(NafError::Config(format!(
                "unknown objective {other:?}; expected y-mse or q-recon"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Feature weights for the reconstruction term; a single value is
    /// broadcast to every feature.
    pub lambdas: Vec<f64>,
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains full-batch up to 500 rows and in batches of 128 above.
    pub batch_size: Option<usize>,
    pub seed: u64,
    pub leave_one_out: bool,
    pub gradient_check: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::YMse,
            lambdas: vec![0.0],
            learning_rate: 1e-2,
            epochs: 100,
            batch_size: None,
            seed: 0,
            leave_one_out: true,
            gradient_check: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NafError::Config("learning_rate must be positive".into()));
        }
        if self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return Err(NafError::Config("lambdas must lie in [0, 1]".into()));
        }
        if self.batch_size == Some(0) {
            return Err(NafError::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    /// The loss specification this config trains.
    pub fn loss_spec(&self, n_features: usize) -> Result<LossSpec> {
        let lambdas = match self.objective {
            Objective::YMse => vec![0.0; n_features],
            Objective::QRecon => broadcast_lambdas(&self.lambdas, n_features)?,
        };
        Ok(LossSpec {
            lambdas,
            leave_one_out: self.leave_one_out || self.objective == Objective::QRecon,
        })
    }
}

pub fn broadcast_lambdas(lambdas: &[f64], n_features: usize) -> Result<Vec<f64>> {
    match lambdas.len() {
        1 => Ok(vec![lambdas[0]; n_features]),
        n if n == n_features => Ok(lambdas.to_vec()),
        n => Err(NafError::Dimension {
            expected: n_features,
            actual: n,
            location: None,
        }),
    }
}

/// Per-word loss `sum_i lambda_i (x_hat_i - x_i)^2 + (y_hat - y)^2`, in
/// standardized feature space, optionally leaving the word out of its leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSpec {
    pub lambdas: Vec<f64>,
    pub leave_one_out: bool,
}

impl LossSpec {
    pub fn y_mse(n_features: usize, leave_one_out: bool) -> Self {
        Self {
            lambdas: vec![0.0; n_features],
            leave_one_out,
        }
    }
}

/// A training row viewed as a word: features, target and its row index.
#[derive(Debug, Clone, Copy)]
pub struct Word<'a> {
    pub x: &'a [f64],
    pub y: f64,
    pub index: usize,
}

fn word(model: &NafModel, index: usize) -> Word<'_> {
    let train = model.train_data();
    Word {
        x: train.row(index),
        y: train.targets()[index],
        index,
    }
}

/// Sum of squared prediction errors over all training rows.
pub fn loss_y_mse(model: &NafModel, leave_one_out: bool) -> f64 {
    let spec = LossSpec::y_mse(model.n_features(), leave_one_out);
    evaluate(model, &all_rows(model), &spec, false).loss
}

/// Sum over training words of the reconstruction loss with the word left
/// out of its own leaves.
pub fn loss_q_recon(model: &NafModel, lambdas: &[f64]) -> Result<f64> {
    let spec = LossSpec {
        lambdas: broadcast_lambdas(lambdas, model.n_features())?,
        leave_one_out: true,
    };
    Ok(evaluate(model, &all_rows(model), &spec, false).loss)
}

/// Loss and gradient (leaf parameters then global parameters) summed over
/// `batch`.
pub fn gradients(model: &NafModel, batch: &[usize], spec: &LossSpec) -> (f64, Vec<f64>) {
    let eval = evaluate(model, batch, spec, true);
    (eval.loss, eval.grad)
}

fn all_rows(model: &NafModel) -> Vec<usize> {
    (0..model.train_data().n_rows()).collect()
}

struct Evaluation {
    loss: f64,
    grad: Vec<f64>,
}

/// Accumulators for one chunk of words.
struct Partial {
    loss: f64,
    grad_leaf: Vec<f64>,
    grad_global: Vec<f64>,
    /// Gradient with respect to each training row's leaf key.
    grad_keys: Vec<f64>,
}

const CHUNK: usize = 8;

fn evaluate(model: &NafModel, batch: &[usize], spec: &LossSpec, want_grad: bool) -> Evaluation {
    let n_leaf = model.leaf_net().n_params();
    let n_global = model.global_net().n_params();
    let width = model.leaf_net().output_width();
    let n_rows = model.train_data().n_rows();

    let chunks: Vec<&[usize]> = batch.chunks(CHUNK).collect();
    let partials = map_indexed(chunks.len(), |c| {
        let mut p = Partial {
            loss: 0.0,
            grad_leaf: if want_grad { vec![0.0; n_leaf] } else { Vec::new() },
            grad_global: if want_grad {
                vec![0.0; n_global]
            } else {
                Vec::new()
            },
            grad_keys: if want_grad {
                vec![0.0; n_rows * width]
            } else {
                Vec::new()
            },
        };
        for &s in chunks[c] {
            word_pass(model, word(model, s), spec, &mut p, want_grad);
        }
        p
    });

    let mut loss = 0.0;
    let mut grad = vec![0.0; if want_grad { n_leaf + n_global } else { 0 }];
    let mut grad_keys = vec![0.0; if want_grad { n_rows * width } else { 0 }];
    for p in partials {
        loss += p.loss;
        if want_grad {
            add_into(&mut grad[..n_leaf], &p.grad_leaf);
            add_into(&mut grad[n_leaf..], &p.grad_global);
            add_into(&mut grad_keys, &p.grad_keys);
        }
    }
    if want_grad && model.config().key_mode == KeyMode::Embedded {
        let net = model.leaf_net();
        let train = model.train_data();
        let (g_leaf, _) = grad.split_at_mut(n_leaf);
        for (j, gk) in grad_keys.chunks_exact(width).enumerate() {
            if gk.iter().all(|&v| v == 0.0) {
                continue;
            }
            let trace = net.forward_trace(train.row(j));
            net.backward(&trace, gk, g_leaf);
        }
    }
    Evaluation { loss, grad }
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    acc.iter_mut().zip(v).for_each(|(a, b)| *a += b);
}

struct LeafState {
    members: Vec<usize>,
    alpha: Vec<f64>,
    key: Vec<f64>,
    value: f64,
}

/// Forward (and optionally backward) pass for one word. Adds the loss and,
/// with `want_grad`, all gradient contributions except the leaf-key
/// backpropagation, which is deferred to one pass per training row.
fn word_pass(model: &NafModel, w: Word<'_>, spec: &LossSpec, p: &mut Partial, want_grad: bool) {
    let forest = model.forest();
    let train = model.train_data();
    let leaf_net = model.leaf_net();
    let global_net = model.global_net();
    let embedded = model.config().key_mode == KeyMode::Embedded;
    let d = model.n_features();

    let q_trace = leaf_net.forward_trace(w.x);
    let q = q_trace.output();
    let leaf_scale = 1.0 / (q.len() as f64).sqrt();

    let mut leaves: Vec<LeafState> = Vec::with_capacity(forest.n_trees());
    for tree in forest.trees() {
        let members: Vec<usize> = if spec.leave_one_out {
            let Some(leaf) = tree.leaf_of_row(w.index) else {
                continue;
            };
            tree.leaf_indices(leaf)
                .iter()
                .copied()
                .filter(|&j| j != w.index)
                .collect()
        } else {
            tree.leaf_indices(tree.leaf_of(w.x)).to_vec()
        };
        if members.is_empty() {
            continue;
        }
        let mut alpha: Vec<f64> = members
            .iter()
            .map(|&j| dot(q, model.leaf_key(j)) * leaf_scale)
            .collect();
        softmax_in_place(&mut alpha);
        let mut key = vec![0.0; d];
        let mut value = 0.0;
        for (&j, &a) in members.iter().zip(&alpha) {
            for (acc, x) in key.iter_mut().zip(train.row(j)) {
                *acc += a * x;
            }
            value += a * train.targets()[j];
        }
        leaves.push(LeafState {
            members,
            alpha,
            key,
            value,
        });
    }
    if leaves.is_empty() {
        return;
    }

    let u_trace = global_net.forward_trace(w.x);
    let u = u_trace.output();
    let global_scale = 1.0 / (u.len() as f64).sqrt();
    let key_traces: Vec<Trace> = leaves
        .iter()
        .map(|l| {
            if embedded {
                global_net.forward_trace(&l.key)
            } else {
                Trace {
                    values: vec![l.key.clone()],
                }
            }
        })
        .collect();
    let mut beta: Vec<f64> = key_traces
        .iter()
        .map(|t| dot(u, t.output()) * global_scale)
        .collect();
    softmax_in_place(&mut beta);

    let mut x_hat = vec![0.0; d];
    let mut y_hat = 0.0;
    for (l, &b) in leaves.iter().zip(&beta) {
        for (acc, a) in x_hat.iter_mut().zip(&l.key) {
            *acc += b * a;
        }
        y_hat += b * l.value;
    }
    let dx: Vec<f64> = x_hat.iter().zip(w.x).map(|(h, x)| h - x).collect();
    let loss = (y_hat - w.y).powi(2) + dx.iter().zip(&spec.lambdas).map(|(e, l)| l * e * e).sum::<f64>();

    p.loss += loss;
    if !want_grad {
        return;
    }

    let g_y = 2.0 * (y_hat - w.y);
    let g_x: Vec<f64> = dx.iter().zip(&spec.lambdas).map(|(e, l)| 2.0 * l * e).collect();

    // d loss / d beta_k, then through the tree softmax
    let g_beta: Vec<f64> = leaves.iter().map(|l| g_y * l.value + dot(&g_x, &l.key)).collect();
    let mean_g: f64 = beta.iter().zip(&g_beta).map(|(b, g)| b * g).sum();
    let g_t: Vec<f64> = beta.iter().zip(&g_beta).map(|(b, g)| b * (g - mean_g)).collect();

    let mut g_u = vec![0.0; u.len()];
    let mut g_q = vec![0.0; q.len()];
    for (((leaf, kt), &b), &gt) in leaves.iter().zip(&key_traces).zip(&beta).zip(&g_t) {
        let v = kt.output();
        for (acc, vk) in g_u.iter_mut().zip(v) {
            *acc += gt * vk * global_scale;
        }
        let g_v: Vec<f64> = u.iter().map(|ui| gt * ui * global_scale).collect();
        let mut g_key: Vec<f64> = if embedded {
            global_net.backward(kt, &g_v, &mut p.grad_global)
        } else {
            g_v
        };
        for (gk, gx) in g_key.iter_mut().zip(&g_x) {
            *gk += b * gx;
        }
        let g_value = b * g_y;

        // leaf softmax
        let g_alpha: Vec<f64> = leaf
            .members
            .iter()
            .map(|&j| dot(&g_key, train.row(j)) + g_value * train.targets()[j])
            .collect();
        let mean_ga: f64 = leaf.alpha.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();
        let width = q.len();
        for ((&j, &a), &ga) in leaf.members.iter().zip(&leaf.alpha).zip(&g_alpha) {
            let g_s = a * (ga - mean_ga) * leaf_scale;
            if g_s == 0.0 {
                continue;
            }
            let k = model.leaf_key(j);
            for (acc, kj) in g_q.iter_mut().zip(k) {
                *acc += g_s * kj;
            }
            if !embedded {
                continue;
            }
            for (acc, qi) in p.grad_keys[j * width..(j + 1) * width].iter_mut().zip(q) {
                *acc += g_s * qi;
            }
        }
    }
    global_net.backward(&u_trace, &g_u, &mut p.grad_global);
    leaf_net.backward(&q_trace, &g_q, &mut p.grad_leaf);
}

/// Adaptive-moment first-order optimizer.
#[derive(Debug, Clone)]
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(n_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.epsilon);
        }
    }
}

/// Analytic versus central finite-difference gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_relative_error: f64,
}

/// Components smaller than this are compared absolutely.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_CHECK_FLOOR)
}

pub fn gradient_check(model: &NafModel, batch: &[usize], spec: &LossSpec, step: f64) -> GradReport {
    let (_, analytic) = gradients(model, batch, spec);
    let base = model.params();
    let mut probe = model.clone();
    let mut numeric = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + step;
        probe.set_params(&params).expect("same parameter count");
        let plus = evaluate(&probe, batch, spec, false).loss;
        params[i] = base[i] - step;
        probe.set_params(&params).expect("same parameter count");
        let minus = evaluate(&probe, batch, spec, false).loss;
        params[i] = base[i];
        numeric.push((plus - minus) / (2.0 * step));
    }
    let max_relative_error = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, b)| relative_error(*a, *b))
        .fold(0.0, f64::max);
    GradReport {
        analytic,
        numeric,
        max_relative_error,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub objective: Objective,
    /// Mean per-word loss before the first update.
    pub initial_loss: f64,
    /// Mean per-word loss over all training rows after each epoch.
    pub history: Vec<f64>,
    pub grad_check: Option<GradReport>,
}

impl TrainReport {
    pub fn final_loss(&self) -> f64 {
        self.history.last().copied().unwrap_or(self.initial_loss)
    }

    /// Loss history as `epoch,loss` CSV; epoch 0 is the initial loss.
    pub fn history_csv(&self) -> String {
        let mut out = String::from("epoch,loss\n");
        out.push_str(&format!("0,{:e}\n", self.initial_loss));
        for (e, l) in self.history.iter().enumerate() {
            out.push_str(&format!("{},{:e}\n", e + 1, l));
        }
        out
    }
}

/// Train both networks in place.
pub fn train(model: &mut NafModel, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let spec = config.loss_spec(model.n_features())?;
    let n = model.train_data().n_rows();
    let rows: Vec<usize> = (0..n).collect();

    let grad_check = config
        .gradient_check
        .then(|| gradient_check(model, &rows[..n.min(8)], &spec, 1e-5));

    let mean_loss = |m: &NafModel| evaluate(m, &rows, &spec, false).loss / n as f64;
    let initial_loss = mean_loss(model);
    if !initial_loss.is_finite() {
        return Err(NafError::NonFiniteLoss {
            epoch: 0,
            learning_rate: config.learning_rate,
        });
    }
    let batch_size = config.batch_size.unwrap_or(if n <= 500 { n } else { 128 }).min(n);

    let mut params = model.params();
    let mut adam = Adam::new(params.len(), config.learning_rate);
    let mut history = Vec::with_capacity(config.epochs);
    let mut order = rows.clone();
    for epoch in 0..config.epochs {
        if batch_size < n {
            order.copy_from_slice(&rows);
            order.shuffle(&mut stream_rng(config.seed, epoch as u64));
        }
        for batch in order.chunks(batch_size) {
            let (loss, mut grad) = gradients(model, batch, &spec);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(NafError::NonFiniteLoss {
                    epoch: epoch + 1,
                    learning_rate: config.learning_rate,
                });
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut params, &grad);
            model.set_params(&params)?;
        }
        let loss = mean_loss(model);
        if !loss.is_finite() {
            return Err(NafError::NonFiniteLoss {
                epoch: epoch + 1,
                learning_rate: config.learning_rate,
            });
        }
        history.push(loss);
    }
    Ok(TrainReport {
        objective: config.objective,
        initial_loss,
        history,
        grad_check,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention_net::Architecture;
    use crate::dataset::{gen_friedman, Dataset, FriedmanVariant};
    use crate::forest::{ForestConfig, ForestKind};
    use crate::naf_model::NafConfig;
    use rand::Rng;

    fn small_model(
        seed: u64,
        arch: Architecture,
        kind: ForestKind,
        n: usize,
        d: usize,
        t: usize,
    ) -> NafModel {
        let mut rng = stream_rng(seed, 42);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().sum::<f64>() + rng.random::<f64>())
            .collect();
        let ds = Dataset::new(rows, y).unwrap();
        let mut cfg = NafConfig::new(arch);
        cfg.embed_width = 3;
        let mut model = NafModel::fit_forest(&ds, &ForestConfig::new(kind, t, 1, seed), cfg, seed).unwrap();
        // larger weights and non-zero biases exercise every code path
        let mut p = model.params();
        p.iter_mut()
            .for_each(|v| *v = 2.0 * *v + 0.3 * (rng.random::<f64>() - 0.5));
        model.set_params(&p).unwrap();
        model
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..6u64 {
            for arch in [Architecture::Naf1, Architecture::Naf3] {
                let kind = if seed % 2 == 0 {
                    ForestKind::RandomForest
                } else {
                    ForestKind::ExtraTrees
                };
                let model = small_model(seed, arch, kind, 6, 2, 2);
                let rows: Vec<usize> = (0..6).collect();
                for spec in [
                    LossSpec::y_mse(2, true),
                    LossSpec::y_mse(2, false),
                    LossSpec {
                        lambdas: vec![0.7, 0.2],
                        leave_one_out: true,
                    },
                ] {
                    let report = gradient_check(&model, &rows, &spec, 1e-5);
                    assert!(
                        report.max_relative_error < 1e-4,
                        "seed {seed} {arch:?} {spec:?}: {}",
                        report.max_relative_error
                    );
                }
            }
        }
    }

    #[test]
    fn raw_key_mode_gradient() {
        let mut rng = stream_rng(5, 0);
        let rows: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..3).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| r[0] - r[2]).collect();
        let ds = Dataset::new(rows, y).unwrap();
        let mut cfg = NafConfig::new(Architecture::Naf3);
        cfg.key_mode = KeyMode::Raw;
        let model =
            NafModel::fit_forest(&ds, &ForestConfig::new(ForestKind::ExtraTrees, 3, 1, 5), cfg, 5).unwrap();
        let spec = LossSpec {
            lambdas: vec![1.0; 3],
            leave_one_out: true,
        };
        let report = gradient_check(&model, &(0..7).collect::<Vec<_>>(), &spec, 1e-5);
        assert!(report.max_relative_error < 1e-4, "{}", report.max_relative_error);
    }

    #[test]
    fn zero_lambda_reconstruction_equals_loo_mse() {
        let model = small_model(3, Architecture::Naf3, ForestKind::ExtraTrees, 8, 3, 3);
        let a = loss_q_recon(&model, &[0.0]).unwrap();
        let b = loss_y_mse(&model, true);
        assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn mse_without_exclusion_matches_predict() {
        let model = small_model(8, Architecture::Naf1, ForestKind::RandomForest, 8, 2, 3);
        let train = model.train_data();
        let direct: f64 = (0..8)
            .map(|i| (model.predict_standardized(train.row(i), None).y_hat - train.targets()[i]).powi(2))
            .sum();
        let loss = loss_y_mse(&model, false);
        assert!((direct - loss).abs() <= 1e-10 * direct.max(1.0));
        assert!(loss >= 0.0);
    }

    #[test]
    fn single_point_leaves_give_zero_loss_and_gradient() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(rows, vec![0.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        let mut fc = ForestConfig::new(ForestKind::RandomForest, 1, 1, 0);
        fc.bootstrap = false;
        let model = NafModel::fit_forest(&ds, &fc, NafConfig::new(Architecture::Naf1), 0).unwrap();
        assert!(model.forest().trees()[0].leaves().all(|(_, idx)| idx.len() == 1));
        assert_eq!(loss_y_mse(&model, false), 0.0);
        let (_, g) = gradients(&model, &[0, 1, 2, 3, 4], &LossSpec::y_mse(1, false));
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-8);
    }

    #[test]
    fn duplicated_row_doubles_its_gradient() {
        let model = small_model(4, Architecture::Naf3, ForestKind::ExtraTrees, 6, 2, 2);
        let spec = LossSpec {
            lambdas: vec![0.5, 0.5],
            leave_one_out: true,
        };
        let (_, once) = gradients(&model, &[2], &spec);
        let (_, twice) = gradients(&model, &[2, 2], &spec);
        for (a, b) in once.iter().zip(&twice) {
            assert!((2.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-9));
        }
    }

    #[test]
    fn small_step_never_increases_loss() {
        for seed in 0..5u64 {
            let model = small_model(seed, Architecture::Naf3, ForestKind::ExtraTrees, 8, 3, 3);
            let rows: Vec<usize> = (0..8).collect();
            let spec = LossSpec::y_mse(3, true);
            let (loss, g) = gradients(&model, &rows, &spec);
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut stepped = model.clone();
            let p: Vec<f64> = model
                .params()
                .iter()
                .zip(&g)
                .map(|(p, g)| p - 1e-4 * g / norm.max(1.0))
                .collect();
            stepped.set_params(&p).unwrap();
            assert!(loss_y_mse(&stepped, true) <= loss + 1e-9);
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let mut model = small_model(1, Architecture::Naf1, ForestKind::ExtraTrees, 8, 2, 2);
        let before = model.clone();
        let report = train(
            &mut model,
            &TrainConfig {
                epochs: 0,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        assert!(report.history.is_empty());
        assert_eq!(model, before);
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let ds = gen_friedman(FriedmanVariant::Two, 100, 0.0, 7).unwrap();
        let fc = ForestConfig::new(ForestKind::RandomForest, 20, 10, 7);
        let base = NafModel::fit_forest(&ds, &fc, NafConfig::new(Architecture::Naf1), 7).unwrap();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: Some(32),
            seed: 3,
            ..TrainConfig::default()
        };
        let (mut a, mut b) = (base.clone(), base);
        let ra = train(&mut a, &cfg).unwrap();
        let rb = train(&mut b, &cfg).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra, rb);
        assert!(ra.final_loss() < ra.initial_loss);
    }

    #[test]
    fn exploding_learning_rate_is_reported() {
        let mut model = small_model(2, Architecture::Naf1, ForestKind::ExtraTrees, 8, 2, 2);
        let cfg = TrainConfig {
            learning_rate: f64::INFINITY,
            ..TrainConfig::default()
        };
        assert!(train(&mut model, &cfg).is_err());
    }
}
