//! Versioned JSON persistence of a trained pool and its fitted weights.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Dataset};
use crate::error::{Error, Result};
use crate::evaluation::{bag_seed, weighted_predictions, ExperimentConfig};
use crate::solver::{self, SdwecParams, WeightVector};
use crate::tree::{self, ClassifierPool};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FittedWeights {
    pub name: String,
    pub params: SdwecParams,
    pub weights: WeightVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleModel {
    pub format_version: u32,
    pub dataset: String,
    pub feature_names: Vec<String>,
    /// Tokens of the +1 and -1 classes.
    pub label_tokens: (String, String),
    pub split_seed: u64,
    pub pool: ClassifierPool,
    pub members: Vec<FittedWeights>,
}

impl EnsembleModel {
    pub fn new(data: &Dataset, split_seed: u64, pool: ClassifierPool, members: Vec<FittedWeights>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            dataset: data.name.clone(),
            feature_names: data.feature_names.clone(),
            label_tokens: data.label_tokens.clone(),
            split_seed,
            pool,
            members,
        }
    }

    /// Retrains the pool of one repetition of `config` and fits every preset,
    /// reproducing that repetition of an experiment run.
    pub fn train(data: &Dataset, config: &ExperimentConfig, repetition: usize) -> Result<Self> {
        config.validate()?;
        let plan = dataset::make_run_plan(data.n_rows(), repetition + 1, config.base_seed)?;
        let split = &plan.splits[repetition];
        let train = data.subset(&split.train);
        let val = data.subset(&split.validation);
        let pool = tree::train_pool(&train, config.pool_size, &config.tree, bag_seed(split.seed))?;
        let h_val = tree::predict_matrix(&pool, &val)?;
        let members = config
            .presets
            .iter()
            .map(|p| {
                solver::fit(&h_val, &val.labels, &p.params).map(|(weights, _)| FittedWeights {
                    name: p.name.clone(),
                    params: p.params,
                    weights,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(data, split.seed, pool, members))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::report::write_atomic(path, serde_json::to_string(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let probe: serde_json::Value = serde_json::from_str(&text)?;
        let version = probe.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != FORMAT_VERSION {
            return Err(Error::ModelVersion(version));
        }
        let model: Self = serde_json::from_value(probe)?;
        for m in &model.members {
            if m.weights.len() != model.pool.len() {
                return Err(Error::DimensionMismatch {
                    expected: model.pool.len(),
                    actual: m.weights.len(),
                });
            }
        }
        Ok(model)
    }

    pub fn member(&self, name: &str) -> Option<&FittedWeights> {
        self.members.iter().find(|m| m.name == name)
    }

    /// Labels of `data` under the named member's weights.
    pub fn predict(&self, data: &Dataset, member: &str) -> Result<Vec<i8>> {
        let m = self
            .member(member)
            .ok_or_else(|| Error::InvalidParams(format!("no member named `{member}`")))?;
        let h = tree::predict_matrix(&self.pool, data)?;
        weighted_predictions(&h, &m.weights.weights)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dataset: {}", self.dataset);
        let _ = writeln!(out, "format version: {}", self.format_version);
        let _ = writeln!(out, "features: {}", self.feature_names.len());
        let _ = writeln!(out, "classes: +1 = {}, -1 = {}", self.label_tokens.0, self.label_tokens.1);
        let depths: Vec<usize> = self.pool.trees.iter().map(|t| t.depth()).collect();
        let leaves: usize = self.pool.trees.iter().map(|t| t.n_leaves()).sum();
        let _ = writeln!(
            out,
            "pool: {} trees, bag seed {}, depth {}..{}, {} leaves",
            self.pool.len(),
            self.pool.bag_seed,
            depths.iter().min().copied().unwrap_or(0),
            depths.iter().max().copied().unwrap_or(0),
            leaves
        );
        for m in &self.members {
            let p = &m.params;
            let nz = m.weights.nonzero();
            let top: Vec<String> = {
                let mut idx = nz.clone();
                idx.sort_by(|&a, &b| m.weights.weights[b].total_cmp(&m.weights.weights[a]));
                idx.iter()
                    .take(5)
                    .map(|&r| format!("#{r}={:.4}", m.weights.weights[r]))
                    .collect()
            };
            let _ = writeln!(
                out,
                "member {}: lambda={} beta={} gamma={} epsilon={}; {} of {} weights nonzero (sparsity {:.4}); largest {}",
                m.name,
                p.lambda,
                p.beta,
                p.gamma,
                p.epsilon,
                nz.len(),
                m.weights.len(),
                m.weights.sparsity(),
                if top.is_empty() { "-".to_string() } else { top.join(" ") }
            );
        }
        out
    }
}
