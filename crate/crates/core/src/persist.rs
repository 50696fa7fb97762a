//! Versioned JSON model files.
//!
//! Every real is stored as a decimal string with 17 significant digits, which
//! parses back to the identical `f64`; a loaded model predicts bit-for-bit
//! like the one that was saved.

use std::path::Path;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::attention_net::{AttentionNet, Layer, LayerSpec};
use crate::dataset::{Dataset, Standardizer};
use crate::error::{NafError, Result};
use crate::forest::{Forest, ForestConfig, Node, Tree};
use crate::naf_model::{NafConfig, NafModel};
use crate::training::TrainConfig;

pub const FORMAT_NAME: &str = "naf-model";
pub const FORMAT_VERSION: u32 = 1;

/// A real serialized as a 17-significant-digit decimal string.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:.16e}", self.0))
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse::<f64>()
            .map(Real)
            .map_err(|_| D::Error::custom(format!("invalid real {s:?}")))
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn unreal(v: Vec<Real>) -> Vec<f64> {
    v.into_iter().map(|r| r.0).collect()
}

/// Provenance recorded alongside a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub config: TrainConfig,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub dataset: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct FileRepr {
    format: String,
    version: u32,
    n_rows: usize,
    n_features: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature_names: Option<Vec<String>>,
    standardizer: StandardizerRepr,
    train_features: Vec<Real>,
    train_targets: Vec<Real>,
    forest: ForestRepr,
    naf: NafConfig,
    leaf_net: Vec<LayerRepr>,
    global_net: Vec<LayerRepr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingMeta>,
}

#[derive(Serialize, Deserialize)]
struct StandardizerRepr {
    means: Vec<Real>,
    std_devs: Vec<Real>,
    degenerate: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct ForestRepr {
    config: ForestConfig,
    trees: Vec<Vec<NodeRepr>>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum NodeRepr {
    Split {
        feature: usize,
        threshold: Real,
        left: usize,
        right: usize,
    },
    Leaf {
        indices: Vec<usize>,
        mean: Real,
    },
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    #[serde(flatten)]
    spec: LayerSpec,
    weights: Vec<Real>,
    bias: Vec<Real>,
}

fn layers_repr(net: &AttentionNet) -> Vec<LayerRepr> {
    net.layers()
        .iter()
        .map(|l| LayerRepr {
            spec: l.spec,
            weights: reals(&l.weights),
            bias: reals(&l.bias),
        })
        .collect()
}

fn net_from_repr(layers: Vec<LayerRepr>) -> Result<AttentionNet> {
    AttentionNet::from_layers(
        layers
            .into_iter()
            .map(|l| Layer {
                spec: l.spec,
                weights: unreal(l.weights),
                bias: unreal(l.bias),
            })
            .collect(),
    )
}

pub fn to_json(model: &NafModel, training: Option<&TrainingMeta>) -> String {
    let train = model.train_data();
    let s = model.standardizer();
    let repr = FileRepr {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        n_rows: train.n_rows(),
        n_features: train.n_features(),
        feature_names: train.feature_names().map(<[String]>::to_vec),
        standardizer: StandardizerRepr {
            means: reals(&s.means),
            std_devs: reals(&s.std_devs),
            degenerate: s.degenerate.clone(),
        },
        train_features: reals(train.features()),
        train_targets: reals(train.targets()),
        forest: ForestRepr {
            config: model.forest().config().clone(),
            trees: model
                .forest()
                .trees()
                .iter()
                .map(|t| {
                    t.nodes()
                        .iter()
                        .map(|n| match n {
                            Node::Split {
                                feature,
                                threshold,
                                left,
                                right,
                            } => NodeRepr::Split {
                                feature: *feature,
                                threshold: Real(*threshold),
                                left: *left,
                                right: *right,
                            },
                            Node::Leaf { indices, mean } => NodeRepr::Leaf {
                                indices: indices.clone(),
                                mean: Real(*mean),
                            },
                        })
                        .collect()
                })
                .collect(),
        },
        naf: model.config().clone(),
        leaf_net: layers_repr(model.leaf_net()),
        global_net: layers_repr(model.global_net()),
        training: training.cloned(),
    };
    serde_json::to_string_pretty(&repr).expect("model serialization cannot fail")
}

pub fn from_json(text: &str) -> Result<(NafModel, Option<TrainingMeta>)> {
    let repr: FileRepr = serde_json::from_str(text).map_err(|e| NafError::ModelFormat(e.to_string()))?;
    if repr.format != FORMAT_NAME {
        return Err(NafError::ModelFormat(format!(
            "unexpected format {:?}",
            repr.format
        )));
    }
    if repr.version != FORMAT_VERSION {
        return Err(NafError::ModelFormat(format!(
            "unsupported version {} (expected {FORMAT_VERSION})",
            repr.version
        )));
    }
    let mut train = Dataset::from_flat(
        unreal(repr.train_features),
        repr.n_rows,
        repr.n_features,
        unreal(repr.train_targets),
    )?;
    if let Some(names) = repr.feature_names {
        train = train.with_feature_names(names)?;
    }
    let standardizer = Standardizer {
        means: unreal(repr.standardizer.means),
        std_devs: unreal(repr.standardizer.std_devs),
        degenerate: repr.standardizer.degenerate,
    };
    let trees = repr
        .forest
        .trees
        .into_iter()
        .map(|nodes| {
            let nodes = nodes
                .into_iter()
                .map(|n| match n {
                    NodeRepr::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        if feature >= repr.n_features {
                            return Err(NafError::ModelFormat(format!(
                                "split on feature {feature} >= {}",
                                repr.n_features
                            )));
                        }
                        Ok(Node::Split {
                            feature,
                            threshold: threshold.0,
                            left,
                            right,
                        })
                    }
                    NodeRepr::Leaf { indices, mean } => Ok(Node::Leaf {
                        indices,
                        mean: mean.0,
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            Tree::from_nodes(nodes, repr.n_rows)
        })
        .collect::<Result<Vec<_>>>()?;
    let forest = Forest::from_parts(trees, repr.forest.config, repr.n_features, repr.n_rows)?;
    let model = NafModel::from_parts(
        forest,
        standardizer,
        train,
        net_from_repr(repr.leaf_net)?,
        net_from_repr(repr.global_net)?,
        repr.naf,
    )?;
    Ok((model, repr.training))
}

pub fn save_model(path: impl AsRef<Path>, model: &NafModel, training: Option<&TrainingMeta>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model, training)).map_err(|source| NafError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(NafModel, Option<TrainingMeta>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| NafError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    from_json(&text)
}
