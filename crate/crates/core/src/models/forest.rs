//! Bagged Gini trees.
//!
//! Tree `i` draws its bootstrap sample and per-node feature subsets from
//! `derive_seed(seed, "tree:{i}")`, so trees fit concurrently and the result
//! equals a sequential fit.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::tree::{class_targets, grow, positive_fraction, Criterion, FeatureSubsample, TreeConfig, TreeData, TreeNode};
use super::{check_dim, check_training_set, parse_params, Classifier, ModelEnvelope, ModelError, Trainer};
use crate::corpus::Label;
use crate::features::{FeatureMatrix, FeatureVector};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `null` for unlimited depth.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: Some(32),
            min_samples_leaf: 1,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn tree_config(&self) -> TreeConfig {
        TreeConfig {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            feature_subsample: self.feature_subsample,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        if self.n_trees == 0 || self.min_samples_leaf == 0 {
            return Err(ModelError::InvalidHyperparams("n_trees and min_samples_leaf must be >= 1".into()));
        }
        self.feature_subsample.validate().map_err(ModelError::InvalidHyperparams)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<TreeNode>,
    pub config: ForestConfig,
    dim: usize,
    n_train: usize,
    feature_space_id: String,
}

impl ForestModel {
    /// Builds a model from already grown trees.
    pub fn from_trees(trees: Vec<TreeNode>, config: ForestConfig, dim: usize, feature_space_id: &str) -> Self {
        ForestModel {
            trees,
            config,
            dim,
            n_train: 0,
            feature_space_id: feature_space_id.to_string(),
        }
    }
}

impl Classifier for ForestModel {
    fn family(&self) -> &'static str {
        "forest"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn feature_space_id(&self) -> &str {
        &self.feature_space_id
    }

    /// Mean of the leaf values reached in each tree.
    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        check_dim(self.dim, x)?;
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        Ok(sum / self.trees.len() as f64)
    }

    fn hyperparams(&self) -> Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn training_stats(&self) -> Value {
        let depths: Vec<usize> = self.trees.iter().map(TreeNode::depth).collect();
        json!({
            "n_train": self.n_train,
            "max_tree_depth": depths.iter().max(),
            "mean_leaves": self.trees.iter().map(TreeNode::n_leaves).sum::<usize>() as f64 / self.trees.len() as f64,
        })
    }

    fn payload(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("trees".into(), Value::Array(self.trees.iter().map(TreeNode::to_value).collect()));
        m
    }
}

fn bootstrap(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, f64)> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .filter(|&(_, c)| c > 0)
        .map(|(r, c)| (r, f64::from(c)))
        .collect()
}

pub fn forest_fit(x: &FeatureMatrix, y: &[Label], config: &ForestConfig) -> Result<ForestModel, ModelError> {
    check_training_set(x, y, 2)?;
    config.validate()?;
    let targets = class_targets(y);
    let columns = x.columns();
    let data = TreeData {
        columns: &columns,
        rows: x,
        targets: &targets,
        criterion: Criterion::Gini,
    };
    let tree_config = config.tree_config();
    let leaf = positive_fraction(&targets);
    let seeds: Vec<u64> = (0..config.n_trees)
        .map(|i| derive_seed(config.seed, &format!("tree:{i}")))
        .collect();
    let n = x.n_rows();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let members = if config.bootstrap {
                bootstrap(n, &mut rng)
            } else {
                (0..n).map(|r| (r, 1.0)).collect()
            };
            grow(&data, members, &tree_config, &leaf, rng.gen())
        })
        .collect();
    Ok(ForestModel {
        trees,
        config: config.clone(),
        dim: x.dim(),
        n_train: n,
        feature_space_id: x.feature_space_id().to_string(),
    })
}

pub struct ForestTrainer;

impl Trainer for ForestTrainer {
    fn family(&self) -> &'static str {
        "forest"
    }

    fn fit(&self, x: &FeatureMatrix, y: &[Label], params: &Value, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        let mut config: ForestConfig = parse_params(params)?;
        config.seed = seed;
        Ok(Box::new(forest_fit(x, y, &config)?))
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn Classifier>, ModelError> {
        let config: ForestConfig = serde_json::from_value(env.hyperparams.clone())?;
        let trees: Vec<TreeNode> = env.field("trees")?;
        if trees.is_empty() {
            return Err(ModelError::Malformed("forest without trees".into()));
        }
        if let Some(f) = trees.iter().filter_map(TreeNode::max_feature).max() {
            if f >= env.dimension {
                return Err(ModelError::Malformed(format!("split on feature {f} beyond dimension")));
            }
        }
        let n_train = env.training_stats.get("n_train").and_then(Value::as_u64).unwrap_or(0) as usize;
        Ok(Box::new(ForestModel {
            trees,
            config,
            dim: env.dimension,
            n_train,
            feature_space_id: env.feature_space_id.clone(),
        }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (FeatureMatrix, Vec<Label>) {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![((i * 7) % 13) as f64, ((i * 5) % 11) as f64, (i % 3) as f64])
            .collect();
        let y = (0..60).map(|i| if (i * 7) % 13 > 6 { Label::Bot } else { Label::Human }).collect();
        (FeatureMatrix::from_dense(&rows, "t").unwrap(), y)
    }

    #[test]
    fn single_full_tree_memorizes() {
        let (x, y) = data();
        let cfg = ForestConfig {
            n_trees: 1,
            max_depth: None,
            feature_subsample: FeatureSubsample::All,
            bootstrap: false,
            ..Default::default()
        };
        let f = forest_fit(&x, &y, &cfg).unwrap();
        for (r, l) in x.rows().iter().zip(&y) {
            assert_eq!(f.predict(r).unwrap(), *l);
        }
    }

    #[test]
    fn probability_is_mean_of_leaves() {
        let leaf = |v| TreeNode::Leaf { value: v };
        let f = ForestModel::from_trees(vec![leaf(1.0), leaf(1.0), leaf(0.0)], ForestConfig::default(), 1, "t");
        let p = f.predict_proba(&FeatureVector::zeros(1)).unwrap();
        assert!((p - 2.0 / 3.0).abs() < 1e-15);
        let g = ForestModel::from_trees(vec![leaf(0.0), leaf(1.0), leaf(1.0)], ForestConfig::default(), 1, "t");
        assert!((g.predict_proba(&FeatureVector::zeros(1)).unwrap() - p).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_forest_and_depth_bound() {
        let (x, y) = data();
        let cfg = ForestConfig { n_trees: 12, max_depth: Some(4), ..Default::default() };
        let a = forest_fit(&x, &y, &cfg).unwrap();
        let b = forest_fit(&x, &y, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trees.len(), 12);
        assert!(a.trees.iter().all(|t| t.depth() <= 4));
        let c = forest_fit(&x, &y, &ForestConfig { seed: 9, ..cfg }).unwrap();
        assert_ne!(a.trees, c.trees);
    }

    #[test]
    fn parallel_fit_matches_single_thread() {
        let (x, y) = data();
        let cfg = ForestConfig { n_trees: 8, ..Default::default() };
        let par = forest_fit(&x, &y, &cfg).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool.install(|| forest_fit(&x, &y, &cfg).unwrap());
        assert_eq!(par, seq);
    }
}
