//! Gradient boosting on log-loss.
//!
//! `F0 = ln(p/(1-p))` for the BOT rate `p`. Each round fits a variance tree
//! to the residuals `y - σ(F)` and sets every leaf to the Newton step
//! `Σ residual / Σ σ(F)(1-σ(F))`, clipped to `[-4, 4]`. The prediction is
//! `σ(F0 + ν Σ tree(x))`.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::tree::{class_targets, grow, Criterion, FeatureSubsample, TreeConfig, TreeData, TreeNode};
use super::{check_dim, check_training_set, parse_params, sigmoid, Classifier, ModelEnvelope, ModelError, Trainer};
use crate::corpus::Label;
use crate::features::{FeatureMatrix, FeatureVector};
use crate::seed::derive_seed;

const LEAF_CLIP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            n_rounds: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_samples_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparams(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate must be in (0, 1]");
        }
        if self.n_rounds == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return bad("n_rounds, max_depth and min_samples_leaf must be >= 1");
        }
        self.feature_subsample.validate().map_err(ModelError::InvalidHyperparams)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub initial_score: f64,
    pub trees: Vec<TreeNode>,
    pub config: GbdtConfig,
    /// Mean training log-loss before round 1 and after each round.
    pub loss_history: Vec<f64>,
    dim: usize,
    feature_space_id: String,
}

impl GbdtModel {
    /// `F0 + ν Σ tree(x)`.
    pub fn raw_score(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        check_dim(self.dim, x)?;
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(self.initial_score + self.config.learning_rate * sum)
    }
}

impl Classifier for GbdtModel {
    fn family(&self) -> &'static str {
        "gbdt"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn feature_space_id(&self) -> &str {
        &self.feature_space_id
    }

    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        Ok(sigmoid(self.raw_score(x)?))
    }

    fn hyperparams(&self) -> Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn training_stats(&self) -> Value {
        json!({ "loss_history": self.loss_history })
    }

    fn payload(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("initial_score".into(), json!(self.initial_score));
        m.insert("trees".into(), Value::Array(self.trees.iter().map(TreeNode::to_value).collect()));
        m
    }
}

fn log_loss(targets: &[f64], scores: &[f64]) -> f64 {
    let total: f64 = targets
        .iter()
        .zip(scores)
        .map(|(&t, &f)| super::softplus(f) - t * f)
        .sum();
    total / targets.len() as f64
}

pub fn gbdt_fit(x: &FeatureMatrix, y: &[Label], config: &GbdtConfig) -> Result<GbdtModel, ModelError> {
    check_training_set(x, y, 2)?;
    config.validate()?;
    let targets = class_targets(y);
    let n = targets.len();
    let p = targets.iter().sum::<f64>() / n as f64;
    let f0 = (p / (1.0 - p)).ln();
    let columns = x.columns();
    let tree_config = TreeConfig {
        max_depth: Some(config.max_depth),
        min_samples_leaf: config.min_samples_leaf,
        feature_subsample: config.feature_subsample,
    };
    let mut scores = vec![f0; n];
    let mut history = vec![log_loss(&targets, &scores)];
    let mut trees = Vec::with_capacity(config.n_rounds);
    let members: Vec<(usize, f64)> = (0..n).map(|r| (r, 1.0)).collect();
    for round in 0..config.n_rounds {
        let prob: Vec<f64> = scores.iter().map(|&f| sigmoid(f)).collect();
        let residual: Vec<f64> = targets.iter().zip(&prob).map(|(t, p)| t - p).collect();
        let hessian: Vec<f64> = prob.iter().map(|p| p * (1.0 - p)).collect();
        let newton = |leaf: &[(usize, f64)]| {
            let (g, h) = leaf
                .iter()
                .fold((0.0, 0.0), |(g, h), &(r, w)| (g + w * residual[r], h + w * hessian[r]));
            if h <= 0.0 {
                0.0
            } else {
                (g / h).clamp(-LEAF_CLIP, LEAF_CLIP)
            }
        };
        let data = TreeData {
            columns: &columns,
            rows: x,
            targets: &residual,
            criterion: Criterion::Variance,
        };
        let seed = derive_seed(config.seed, &format!("round:{round}"));
        let tree = grow(&data, members.clone(), &tree_config, &newton, seed);
        for (s, row) in scores.iter_mut().zip(x.rows()) {
            *s += config.learning_rate * tree.predict(row);
        }
        history.push(log_loss(&targets, &scores));
        trees.push(tree);
    }
    Ok(GbdtModel {
        initial_score: f0,
        trees,
        config: config.clone(),
        loss_history: history,
        dim: x.dim(),
        feature_space_id: x.feature_space_id().to_string(),
    })
}

pub struct GbdtTrainer;

impl Trainer for GbdtTrainer {
    fn family(&self) -> &'static str {
        "gbdt"
    }

    fn fit(&self, x: &FeatureMatrix, y: &[Label], params: &Value, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        let mut config: GbdtConfig = parse_params(params)?;
        config.seed = seed;
        Ok(Box::new(gbdt_fit(x, y, &config)?))
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn Classifier>, ModelError> {
        let config: GbdtConfig = serde_json::from_value(env.hyperparams.clone())?;
        let initial_score: f64 = env.field("initial_score")?;
        let trees: Vec<TreeNode> = env.field("trees")?;
        if let Some(f) = trees.iter().filter_map(TreeNode::max_feature).max() {
            if f >= env.dimension {
                return Err(ModelError::Malformed(format!("split on feature {f} beyond dimension")));
            }
        }
        let loss_history = env
            .training_stats
            .get("loss_history")
            .map(|v| serde_json::from_value(v.clone()))
            .transpose()?
            .unwrap_or_default();
        Ok(Box::new(GbdtModel {
            initial_score,
            trees,
            config,
            loss_history,
            dim: env.dimension,
            feature_space_id: env.feature_space_id.clone(),
        }))
    }
}
