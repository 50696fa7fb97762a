//! The two-stage attention pipeline over a fitted forest.
//!
//! Stage one attends over the training rows sharing each tree's leaf with
//! the query and yields a key `A_k` (weighted feature vector) and a value
//! `B_k` (weighted target). Stage two attends over the trees, keyed by
//! `A_k`, and yields the prediction and the reconstruction of the query.
//! All attention runs in standardized feature space.

use serde::{Deserialize, Serialize};

use crate::attention_net::{dot, softmax_in_place, Architecture, AttentionNet};
use crate::dataset::{Dataset, Standardizer};
use crate::error::{NafError, Result};
use crate::forest::{build_forest, Forest, ForestConfig};
use crate::par::map_indexed;

/// Whether attention keys pass through the embedding network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeyMode {
    /// Query and keys share the network.
    Embedded,
    /// Only the query is embedded; keys are used as-is, so the network's
    /// output width must equal the feature count.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NafConfig {
    pub architecture: Architecture,
    pub embed_width: usize,
    pub key_mode: KeyMode,
}

impl NafConfig {
    pub fn new(architecture: Architecture) -> Self {
        Self {
            architecture,
            embed_width: 16,
            key_mode: KeyMode::Embedded,
        }
    }

    fn width_for(&self, n_features: usize) -> usize {
        match self.key_mode {
            KeyMode::Embedded => self.embed_width,
            KeyMode::Raw => n_features,
        }
    }
}

/// Output of leaf attention for one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSummary {
    pub tree: usize,
    /// `A_k`, standardized space.
    pub key: Vec<f64>,
    /// `B_k`.
    pub value: f64,
    pub leaf_weights: Vec<f64>,
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NafOutput {
    pub y_hat: f64,
    /// Reconstruction in the original feature space.
    pub x_hat: Vec<f64>,
    /// Reconstruction in standardized space.
    pub x_hat_standardized: Vec<f64>,
    /// One weight per tree; skipped trees carry zero.
    pub tree_weights: Vec<f64>,
    /// `None` for trees skipped because exclusion emptied their leaf.
    pub tree_summaries: Vec<Option<TreeSummary>>,
    /// Set when every tree was skipped and the plain forest answered.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NafModel {
    forest: Forest,
    standardizer: Standardizer,
    train: Dataset,
    leaf_net: AttentionNet,
    global_net: AttentionNet,
    config: NafConfig,
    /// Leaf-network keys for every training row, row-major `n x width`.
    leaf_keys: Vec<f64>,
}

impl NafModel {
    /// Standardize `dataset`, grow the forest on it and initialize both
    /// networks from `seed`.
    pub fn fit_forest(
        dataset: &Dataset,
        forest_config: &ForestConfig,
        config: NafConfig,
        seed: u64,
    ) -> Result<Self> {
        let standardizer = Standardizer::fit(dataset)?;
        let train = standardizer.apply(dataset)?;
        let forest = build_forest(&train, forest_config)?;
        let d = dataset.n_features();
        let specs = config.architecture.layer_specs(d, config.width_for(d));
        let leaf_net = AttentionNet::init(&specs, seed.wrapping_mul(2))?;
        let global_net = AttentionNet::init(&specs, seed.wrapping_mul(2).wrapping_add(1))?;
        Self::from_parts(forest, standardizer, train, leaf_net, global_net, config)
    }

    /// `train` holds the standardized training rows the forest indexes.
    pub fn from_parts(
        forest: Forest,
        standardizer: Standardizer,
        train: Dataset,
        leaf_net: AttentionNet,
        global_net: AttentionNet,
        config: NafConfig,
    ) -> Result<Self> {
        let d = train.n_features();
        if forest.n_rows() != train.n_rows() || forest.n_features() != d {
            return Err(NafError::ModelFormat(
                "forest shape does not match the training data".into(),
            ));
        }
        if standardizer.n_features() != d {
            return Err(NafError::Dimension {
                expected: d,
                actual: standardizer.n_features(),
                location: None,
            });
        }
        for net in [&leaf_net, &global_net] {
            if net.input_width() != d {
                return Err(NafError::Dimension {
                    expected: d,
                    actual: net.input_width(),
                    location: None,
                });
            }
            if config.key_mode == KeyMode::Raw && net.output_width() != d {
                return Err(NafError::Config(
                    "raw key mode needs networks whose output width equals the feature count".into(),
                ));
            }
        }
        if leaf_net.output_width() != global_net.output_width() {
            return Err(NafError::Config(
                "leaf and global networks differ in output width".into(),
            ));
        }
        let mut model = Self {
            forest,
            standardizer,
            train,
            leaf_net,
            global_net,
            config,
            leaf_keys: Vec::new(),
        };
        model.refresh_keys();
        Ok(model)
    }

    fn refresh_keys(&mut self) {
        self.leaf_keys = match self.config.key_mode {
            KeyMode::Embedded => self.train.rows().flat_map(|r| self.leaf_net.forward(r)).collect(),
            KeyMode::Raw => self.train.features().to_vec(),
        };
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Standardized training rows and their targets.
    pub fn train_data(&self) -> &Dataset {
        &self.train
    }

    pub fn leaf_net(&self) -> &AttentionNet {
        &self.leaf_net
    }

    pub fn global_net(&self) -> &AttentionNet {
        &self.global_net
    }

    pub fn config(&self) -> &NafConfig {
        &self.config
    }

    pub fn n_features(&self) -> usize {
        self.train.n_features()
    }

    pub fn n_params(&self) -> usize {
        self.leaf_net.n_params() + self.global_net.n_params()
    }

    /// Leaf parameters followed by global parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.leaf_net.params();
        p.extend(self.global_net.params());
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let split = self.leaf_net.n_params();
        if params.len() != self.n_params() {
            return Err(NafError::Dimension {
                expected: self.n_params(),
                actual: params.len(),
                location: None,
            });
        }
        self.leaf_net.set_params(&params[..split])?;
        self.global_net.set_params(&params[split..])?;
        self.refresh_keys();
        Ok(())
    }

    /// Replace both networks with constant maps, which makes every attention
    /// weight uniform.
    pub fn make_constant(&mut self) -> Result<()> {
        self.leaf_net = AttentionNet::constant(&self.leaf_net.specs())?;
        self.global_net = AttentionNet::constant(&self.global_net.specs())?;
        self.refresh_keys();
        Ok(())
    }

    /// Re-draw both networks from `seed`, keeping the forest.
    pub fn reinitialize(&mut self, seed: u64) -> Result<()> {
        self.leaf_net = AttentionNet::init(&self.leaf_net.specs(), seed.wrapping_mul(2))?;
        self.global_net = AttentionNet::init(&self.global_net.specs(), seed.wrapping_mul(2).wrapping_add(1))?;
        self.refresh_keys();
        Ok(())
    }

    pub(crate) fn leaf_key(&self, row: usize) -> &[f64] {
        let w = self.leaf_net.output_width();
        &self.leaf_keys[row * w..(row + 1) * w]
    }

    pub(crate) fn global_key(&self, key: &[f64]) -> Vec<f64> {
        match self.config.key_mode {
            KeyMode::Embedded => self.global_net.forward(key),
            KeyMode::Raw => key.to_vec(),
        }
    }

    /// Leaf attention in tree `k` for a standardized query. With `exclude`
    /// the given training row is removed from the leaf; `None` means the
    /// leaf became empty and the tree is skipped.
    pub fn leaf_attention(&self, k: usize, z: &[f64], exclude: Option<usize>) -> Option<TreeSummary> {
        let query = self.leaf_net.forward(z);
        self.leaf_attention_with_query(k, z, &query, exclude)
    }

    fn leaf_attention_with_query(
        &self,
        k: usize,
        z: &[f64],
        query: &[f64],
        exclude: Option<usize>,
    ) -> Option<TreeSummary> {
        let members: Vec<usize> = self
            .forest
            .leaf_lookup(k, z)
            .iter()
            .copied()
            .filter(|&j| Some(j) != exclude)
            .collect();
        if members.is_empty() {
            return None;
        }
        let scale = 1.0 / (query.len() as f64).sqrt();
        let mut weights: Vec<f64> = members
            .iter()
            .map(|&j| dot(query, self.leaf_key(j)) * scale)
            .collect();
        softmax_in_place(&mut weights);
        let d = self.n_features();
        let mut key = vec![0.0; d];
        let mut value = 0.0;
        for (&j, &a) in members.iter().zip(&weights) {
            for (acc, x) in key.iter_mut().zip(self.train.row(j)) {
                *acc += a * x;
            }
            value += a * self.train.targets()[j];
        }
        Some(TreeSummary {
            tree: k,
            key,
            value,
            leaf_weights: weights,
            members,
        })
    }

    /// Global attention over the non-skipped trees for a standardized query.
    pub fn global_attention(&self, z: &[f64], summaries: Vec<Option<TreeSummary>>) -> NafOutput {
        let active: Vec<&TreeSummary> = summaries.iter().flatten().collect();
        let d = self.n_features();
        let mut tree_weights = vec![0.0; summaries.len()];
        if active.is_empty() {
            let x_hat_standardized = self.plain_reconstruction(z);
            return NafOutput {
                y_hat: self.forest.plain_predict(z),
                x_hat: self.standardizer.invert_row(&x_hat_standardized),
                x_hat_standardized,
                tree_weights,
                tree_summaries: summaries,
                fallback: true,
            };
        }
        let query = self.global_net.forward(z);
        let scale = 1.0 / (query.len() as f64).sqrt();
        let mut beta: Vec<f64> = active
            .iter()
            .map(|s| dot(&query, &self.global_key(&s.key)) * scale)
            .collect();
        softmax_in_place(&mut beta);
        let mut x_hat_standardized = vec![0.0; d];
        let mut y_hat = 0.0;
        for (s, &b) in active.iter().zip(&beta) {
            for (acc, a) in x_hat_standardized.iter_mut().zip(&s.key) {
                *acc += b * a;
            }
            y_hat += b * s.value;
            tree_weights[s.tree] = b;
        }
        NafOutput {
            y_hat,
            x_hat: self.standardizer.invert_row(&x_hat_standardized),
            x_hat_standardized,
            tree_weights,
            tree_summaries: summaries,
            fallback: false,
        }
    }

    /// Uniform average of leaf feature means, used when no tree survives.
    fn plain_reconstruction(&self, z: &[f64]) -> Vec<f64> {
        let d = self.n_features();
        let mut out = vec![0.0; d];
        let t = self.forest.n_trees() as f64;
        for k in 0..self.forest.n_trees() {
            let members = self.forest.leaf_lookup(k, z);
            for &j in members {
                for (acc, x) in out.iter_mut().zip(self.train.row(j)) {
                    *acc += x / (members.len() as f64 * t);
                }
            }
        }
        out
    }

    /// Full pipeline on a standardized query, optionally excluding one
    /// training row from every leaf.
    pub fn predict_standardized(&self, z: &[f64], exclude: Option<usize>) -> NafOutput {
        let query = self.leaf_net.forward(z);
        let summaries = (0..self.forest.n_trees())
            .map(|k| self.leaf_attention_with_query(k, z, &query, exclude))
            .collect();
        self.global_attention(z, summaries)
    }

    /// Predict for a query in the original feature space.
    pub fn predict(&self, x: &[f64]) -> Result<NafOutput> {
        self.check_width(x, None)?;
        Ok(self.predict_standardized(&self.standardizer.apply_row(x), None))
    }

    pub fn predict_many(&self, rows: &[Vec<f64>]) -> Result<Vec<NafOutput>> {
        for (i, r) in rows.iter().enumerate() {
            self.check_width(r, Some(i))?;
        }
        Ok(map_indexed(rows.len(), |i| {
            self.predict_standardized(&self.standardizer.apply_row(&rows[i]), None)
        }))
    }

    /// Uniform-weight forest prediction for a query in the original space.
    pub fn plain_predict(&self, x: &[f64]) -> Result<f64> {
        self.check_width(x, None)?;
        Ok(self.forest.plain_predict(&self.standardizer.apply_row(x)))
    }

    fn check_width(&self, x: &[f64], row: Option<usize>) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(NafError::Dimension {
                expected: self.n_features(),
                actual: x.len(),
                location: row,
            });
        }
        Ok(())
    }
}
