//! Classifier families behind one interface.
//!
//! Every family implements [`Trainer`] (fit + load) and produces a
//! [`Classifier`]. Trainers are registered by name in a [`ModelRegistry`]
//! and picked at run time from the experiment config or the command line.
//! All fitted models persist through the same versioned [`ModelEnvelope`].

mod forest;
mod gbdt;
mod linear;
mod naive_bayes;
mod tree;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::corpus::Label;
use crate::features::{FeatureMatrix, FeatureVector};

pub use forest::{forest_fit, ForestConfig, ForestModel, ForestTrainer};
pub use gbdt::{gbdt_fit, GbdtConfig, GbdtModel, GbdtTrainer};
pub use linear::{
    logreg_fit, logreg_gradient, logreg_objective, linsvm_fit, svm_objective, LinearFamily, LinearHyperparams,
    LinearModel, LinearTrainer,
};
pub use naive_bayes::{nb_fit, NaiveBayesModel, NaiveBayesParams, NaiveBayesTrainer};
pub use tree::{cart_fit, gini, FeatureSubsample, TreeConfig, TreeNode};

/// Version of the model envelope written by this build.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClassTraining,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} training rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("negative feature value {value} at column {column}; naive Bayes needs counts")]
    NegativeFeature { column: usize, value: f64 },
    #[error("training diverged: non-finite parameters after epoch {0}")]
    Diverged(usize),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparams(String),
    #[error("unknown model family `{0}`")]
    UnknownFamily(String),
    #[error("unsupported model schema_version {0}")]
    UnsupportedSchemaVersion(u32),
    #[error("malformed model file: {0}")]
    Malformed(String),
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        ModelError::Malformed(e.to_string())
    }
}

/// A fitted binary classifier. The positive class is [`Label::Bot`].
pub trait Classifier: Send + Sync + fmt::Debug {
    fn family(&self) -> &'static str;

    fn dim(&self) -> usize;

    fn feature_space_id(&self) -> &str;

    /// Probability that `x` is a bot.
    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError>;

    /// Hard decision; probability exactly 0.5 goes to [`Label::Bot`].
    fn predict(&self, x: &FeatureVector) -> Result<Label, ModelError> {
        Ok(if self.predict_proba(x)? >= 0.5 { Label::Bot } else { Label::Human })
    }

    fn hyperparams(&self) -> Value;

    fn training_stats(&self) -> Value;

    /// Family-specific fields of the persisted envelope.
    fn payload(&self) -> Map<String, Value>;

    fn to_envelope(&self) -> ModelEnvelope {
        ModelEnvelope {
            schema_version: MODEL_SCHEMA_VERSION,
            family: self.family().to_string(),
            dimension: self.dim(),
            feature_space_id: self.feature_space_id().to_string(),
            hyperparams: self.hyperparams(),
            training_stats: self.training_stats(),
            payload: self.payload(),
        }
    }
}

/// Fits and restores one classifier family.
pub trait Trainer: Send + Sync {
    fn family(&self) -> &'static str;

    /// Fits on `x`/`y`. `params` holds family hyperparameters (missing keys
    /// take defaults); `seed` drives every random choice of the fit.
    fn fit(&self, x: &FeatureMatrix, y: &[Label], params: &Value, seed: u64) -> Result<Box<dyn Classifier>, ModelError>;

    fn load(&self, envelope: &ModelEnvelope) -> Result<Box<dyn Classifier>, ModelError>;
}

/// Persisted form shared by every family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEnvelope {
    pub schema_version: u32,
    pub family: String,
    pub dimension: usize,
    pub feature_space_id: String,
    pub hyperparams: Value,
    pub training_stats: Value,
    #[serde(flatten)]
    pub payload: Map<String, Value>,
}

impl ModelEnvelope {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("envelope serializes")
    }

    pub fn from_json(json: &str) -> Result<ModelEnvelope, ModelError> {
        // Deep trees nest one JSON array per level.
        let mut de = serde_json::Deserializer::from_str(json);
        de.disable_recursion_limit();
        let raw = Value::deserialize(&mut de)?;
        de.end()?;
        let version = raw
            .get("schema_version")
            .and_then(Value::as_u64)
            .ok_or_else(|| ModelError::Malformed("missing schema_version".into()))?;
        if version != u64::from(MODEL_SCHEMA_VERSION) {
            return Err(ModelError::UnsupportedSchemaVersion(version as u32));
        }
        Ok(serde_json::from_value(raw)?)
    }

    pub(crate) fn field<T: serde::de::DeserializeOwned>(&self, key: &str) -> Result<T, ModelError> {
        let v = self
            .payload
            .get(key)
            .ok_or_else(|| ModelError::Malformed(format!("missing field `{key}`")))?;
        Ok(serde_json::from_value(v.clone())?)
    }
}

/// Name-keyed collection of trainers.
pub struct ModelRegistry {
    trainers: BTreeMap<&'static str, Box<dyn Trainer>>,
}

impl Default for ModelRegistry {
    fn default() -> Self {
        ModelRegistry::with_builtin()
    }
}

impl ModelRegistry {
    pub fn empty() -> Self {
        ModelRegistry {
            trainers: BTreeMap::new(),
        }
    }

    /// `logreg`, `linsvm`, `nb`, `forest` and `gbdt`.
    pub fn with_builtin() -> Self {
        let mut r = ModelRegistry::empty();
        r.register(Box::new(LinearTrainer(LinearFamily::LogReg)));
        r.register(Box::new(LinearTrainer(LinearFamily::LinSvm)));
        r.register(Box::new(NaiveBayesTrainer));
        r.register(Box::new(ForestTrainer));
        r.register(Box::new(GbdtTrainer));
        r
    }

    /// Adds or replaces the trainer for its family name.
    pub fn register(&mut self, trainer: Box<dyn Trainer>) {
        self.trainers.insert(trainer.family(), trainer);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.trainers.keys().copied()
    }

    pub fn get(&self, family: &str) -> Result<&dyn Trainer, ModelError> {
        self.trainers
            .get(family)
            .map(Box::as_ref)
            .ok_or_else(|| ModelError::UnknownFamily(family.to_string()))
    }

    pub fn fit(
        &self,
        family: &str,
        x: &FeatureMatrix,
        y: &[Label],
        params: &Value,
        seed: u64,
    ) -> Result<Box<dyn Classifier>, ModelError> {
        self.get(family)?.fit(x, y, params, seed)
    }

    pub fn load(&self, envelope: &ModelEnvelope) -> Result<Box<dyn Classifier>, ModelError> {
        let model = self.get(&envelope.family)?.load(envelope)?;
        if model.dim() != envelope.dimension {
            return Err(ModelError::DimensionMismatch {
                expected: envelope.dimension,
                found: model.dim(),
            });
        }
        Ok(model)
    }

    pub fn load_json(&self, json: &str) -> Result<Box<dyn Classifier>, ModelError> {
        self.load(&ModelEnvelope::from_json(json)?)
    }
}

/// Checks shared by every family's fit: aligned labels, enough rows, both classes.
pub(crate) fn check_training_set(x: &FeatureMatrix, y: &[Label], min_rows: usize) -> Result<(), ModelError> {
    if x.n_rows() != y.len() {
        return Err(ModelError::DimensionMismatch {
            expected: x.n_rows(),
            found: y.len(),
        });
    }
    if y.len() < min_rows {
        return Err(ModelError::TooFewRows {
            needed: min_rows,
            got: y.len(),
        });
    }
    let bots = y.iter().filter(|l| l.is_bot()).count();
    if bots == 0 || bots == y.len() {
        return Err(ModelError::SingleClassTraining);
    }
    Ok(())
}

pub(crate) fn check_dim(expected: usize, x: &FeatureVector) -> Result<(), ModelError> {
    if x.dim() != expected {
        return Err(ModelError::DimensionMismatch {
            expected,
            found: x.dim(),
        });
    }
    Ok(())
}

pub(crate) fn parse_params<T: serde::de::DeserializeOwned>(params: &Value) -> Result<T, ModelError> {
    let params = if params.is_null() { Value::Object(Map::new()) } else { params.clone() };
    serde_json::from_value(params).map_err(|e| ModelError::InvalidHyperparams(e.to_string()))
}

/// Logistic function, written to stay finite for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub(crate) fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_identities() {
        assert_eq!(sigmoid(0.0), 0.5);
        // 1 - 1e-20 is not representable; check the complementary tail instead.
        assert!(sigmoid(-50.0) < 1e-20);
        assert!(sigmoid(50.0) >= 1.0 - 1e-20);
        let z = 1.7;
        assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
    }

    #[test]
    fn registry_lists_builtin_families() {
        let r = ModelRegistry::with_builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), vec!["forest", "gbdt", "linsvm", "logreg", "nb"]);
        assert!(matches!(r.get("kernel_svm"), Err(ModelError::UnknownFamily(_))));
    }

    #[test]
    fn envelope_rejects_unknown_version() {
        let json = r#"{"schema_version":99,"family":"logreg","dimension":1,"feature_space_id":"x","hyperparams":{},"training_stats":{},"weights":[0.0],"bias":0.0}"#;
        assert!(matches!(ModelEnvelope::from_json(json), Err(ModelError::UnsupportedSchemaVersion(99))));
    }

    fn toy() -> (FeatureMatrix, Vec<Label>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let bot = i % 2 == 0;
            let jitter = (i as f64) * 0.01;
            rows.push(if bot { vec![1.0 + jitter, 0.0, 2.0] } else { vec![0.0, 1.0 + jitter, 2.0] });
            y.push(if bot { Label::Bot } else { Label::Human });
        }
        (FeatureMatrix::from_dense(&rows, "toy").unwrap(), y)
    }

    #[test]
    fn every_family_round_trips_through_json() {
        let (x, y) = toy();
        let r = ModelRegistry::with_builtin();
        for family in r.names().collect::<Vec<_>>() {
            let model = r.fit(family, &x, &y, &Value::Null, 11).unwrap();
            assert_eq!(model.family(), family);
            let json = model.to_envelope().to_json();
            let back = r.load_json(&json).unwrap();
            for row in x.rows() {
                assert_eq!(model.predict_proba(row).unwrap(), back.predict_proba(row).unwrap(), "{family}");
            }
            assert_eq!(back.to_envelope(), model.to_envelope());
        }
    }

    #[test]
    fn every_family_rejects_single_class_and_bad_dims() {
        let (x, y) = toy();
        let r = ModelRegistry::with_builtin();
        let all_bot = vec![Label::Bot; y.len()];
        for family in r.names().collect::<Vec<_>>() {
            assert!(matches!(r.fit(family, &x, &all_bot, &Value::Null, 0), Err(ModelError::SingleClassTraining)), "{family}");
            assert!(matches!(r.fit(family, &x, &y[..3], &Value::Null, 0), Err(ModelError::DimensionMismatch { .. })), "{family}");
            let model = r.fit(family, &x, &y, &Value::Null, 0).unwrap();
            assert!(matches!(model.predict_proba(&FeatureVector::zeros(5)), Err(ModelError::DimensionMismatch { .. })), "{family}");
            let acc = x.rows().iter().zip(&y).filter(|(row, l)| model.predict(row).unwrap() == **l).count();
            assert_eq!(acc, y.len(), "{family} should separate the toy set");
        }
    }

    #[test]
    fn unknown_hyperparameter_is_rejected() {
        let (x, y) = toy();
        let r = ModelRegistry::with_builtin();
        let bad = serde_json::json!({"no_such_knob": 1});
        assert!(matches!(r.fit("logreg", &x, &y, &bad, 0), Err(ModelError::InvalidHyperparams(_))));
    }
}
