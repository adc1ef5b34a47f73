//! JSON checkpoints for trained models.
//!
//! Floats are written with shortest round-trip formatting and parsed exactly,
//! so a reloaded model predicts bit-identically. Embedding rows that differ
//! from the source file (OOV draws, and rows updated in tuned mode) are
//! stored under `embedding_delta`, keyed by token.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnn::{Cnn, CnnConfig, CnnParams, FilterBank};
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::mlp::{Mlp, MlpConfig, MlpParams};
use crate::numerics::Matrix;
use crate::optim::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedInfo {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_kind", rename_all = "lowercase")]
pub enum Weights {
    Cnn {
        config: CnnConfig,
        /// `[region size][map][row][col]`
        filters: Vec<Vec<Vec<Vec<f64>>>>,
        biases: Vec<Vec<f64>>,
        #[serde(rename = "softmax_W")]
        softmax_w: Vec<Vec<f64>>,
        softmax_b: Vec<f64>,
    },
    Mlp {
        config: MlpConfig,
        #[serde(rename = "W1")]
        w1: Vec<Vec<f64>>,
        b1: Vec<f64>,
        #[serde(rename = "W2")]
        w2: Vec<Vec<f64>>,
        b2: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    #[serde(flatten)]
    pub weights: Weights,
    pub label_set: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_delta: Option<BTreeMap<String, Vec<f64>>>,
    pub seed_info: SeedInfo,
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

fn matrix(rows: &[Vec<f64>], shape: (usize, usize), what: &str) -> Result<Matrix> {
    let m = if rows.is_empty() {
        Matrix::zeros(0, shape.1)
    } else {
        Matrix::from_rows(rows)?
    };
    if m.shape() != shape {
        return Err(Error::shape(
            format!("{what} of shape {}x{}", shape.0, shape.1),
            format!("{}x{}", m.rows(), m.cols()),
        ));
    }
    Ok(m)
}

impl Checkpoint {
    /// Captures a model, its class labels and the table rows the model
    /// depends on beyond the embedding file.
    pub fn from_model(
        model: &Model,
        label_set: &[String],
        table: &EmbeddingTable,
        seed: u64,
    ) -> Self {
        let weights = match model {
            Model::Cnn(m) => Weights::Cnn {
                config: m.config.clone(),
                filters: m
                    .params
                    .banks
                    .iter()
                    .map(|b| b.weights.iter().map(rows).collect())
                    .collect(),
                biases: m.params.banks.iter().map(|b| b.biases.clone()).collect(),
                softmax_w: rows(&m.params.softmax_w),
                softmax_b: m.params.softmax_b.clone(),
            },
            Model::Mlp(m) => Weights::Mlp {
                config: m.config.clone(),
                w1: rows(&m.params.w1),
                b1: m.params.b1.clone(),
                w2: rows(&m.params.w2),
                b2: m.params.b2.clone(),
            },
        };
        let mut delta = BTreeMap::new();
        let changed = table
            .modified_rows()
            .chain((0..table.len()).filter(|&r| table.is_oov_row(r)));
        for r in changed {
            delta.insert(table.row_token(r).to_string(), table.row(r).to_vec());
        }
        Checkpoint {
            weights,
            label_set: label_set.to_vec(),
            embedding_delta: (!delta.is_empty()).then_some(delta),
            seed_info: SeedInfo { seed },
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        match &self.weights {
            Weights::Cnn {
                config,
                filters,
                biases,
                softmax_w,
                softmax_b,
            } => {
                config.validate()?;
                if filters.len() != config.region_sizes.len() || biases.len() != filters.len() {
                    return Err(Error::shape(config.region_sizes.len(), filters.len()));
                }
                let mut banks = Vec::new();
                for ((&n, fs), bs) in config.region_sizes.iter().zip(filters).zip(biases) {
                    if fs.len() != config.maps_per_size || bs.len() != config.maps_per_size {
                        return Err(Error::shape(config.maps_per_size, fs.len()));
                    }
                    banks.push(FilterBank {
                        region_size: n,
                        weights: fs
                            .iter()
                            .map(|w| matrix(w, (n, config.dim), "filter"))
                            .collect::<Result<_>>()?,
                        biases: bs.clone(),
                    });
                }
                if softmax_b.len() != config.classes {
                    return Err(Error::shape(config.classes, softmax_b.len()));
                }
                let params = CnnParams {
                    banks,
                    softmax_w: matrix(
                        softmax_w,
                        (config.classes, config.total_maps()),
                        "softmax_W",
                    )?,
                    softmax_b: softmax_b.clone(),
                };
                Ok(Model::Cnn(Cnn {
                    config: config.clone(),
                    params,
                }))
            }
            Weights::Mlp {
                config,
                w1,
                b1,
                w2,
                b2,
            } => {
                config.validate()?;
                if b1.len() != config.hidden || b2.len() != config.classes {
                    return Err(Error::shape("bias lengths matching config", "mismatch"));
                }
                let params = MlpParams {
                    w1: matrix(w1, (config.hidden, config.dim), "W1")?,
                    b1: b1.clone(),
                    w2: matrix(w2, (config.classes, config.hidden), "W2")?,
                    b2: b2.clone(),
                };
                Ok(Model::Mlp(Mlp {
                    config: config.clone(),
                    params,
                }))
            }
        }
    }

    /// Installs the stored embedding rows into `table`.
    pub fn apply_embeddings(&self, table: &mut EmbeddingTable) -> Result<()> {
        if let Some(delta) = &self.embedding_delta {
            for (token, v) in delta {
                table.set_vector(token, v)?;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_json(&s)
    }
}
