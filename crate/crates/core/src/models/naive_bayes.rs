//! Multinomial naive Bayes with Laplace smoothing.
//!
//! Inputs are read as (possibly fractional) term counts; TF-IDF rows work as
//! well as raw counts. Equal posteriors classify as BOT.

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{check_dim, check_training_set, parse_params, sigmoid, Classifier, ModelEnvelope, ModelError, Trainer};
use crate::corpus::Label;
use crate::features::{FeatureMatrix, FeatureVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NaiveBayesParams {
    pub alpha: f64,
}

impl Default for NaiveBayesParams {
    fn default() -> Self {
        NaiveBayesParams { alpha: 1.0 }
    }
}

/// Index 0 is HUMAN, index 1 is BOT.
#[derive(Debug, Clone, PartialEq)]
pub struct NaiveBayesModel {
    pub alpha: f64,
    pub log_prior: [f64; 2],
    pub log_likelihood: [Vec<f64>; 2],
    n_train: usize,
    feature_space_id: String,
}

fn check_counts(x: &FeatureVector) -> Result<(), ModelError> {
    match x.entries().iter().find(|(_, v)| *v < 0.0) {
        Some(&(column, value)) => Err(ModelError::NegativeFeature { column, value }),
        None => Ok(()),
    }
}

impl NaiveBayesModel {
    /// `ln P(BOT|x) - ln P(HUMAN|x)`.
    pub fn log_odds(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        check_dim(self.log_likelihood[0].len(), x)?;
        check_counts(x)?;
        let mut z = self.log_prior[1] - self.log_prior[0];
        for &(j, v) in x.entries() {
            z += v * (self.log_likelihood[1][j] - self.log_likelihood[0][j]);
        }
        Ok(z)
    }
}

impl Classifier for NaiveBayesModel {
    fn family(&self) -> &'static str {
        "nb"
    }

    fn dim(&self) -> usize {
        self.log_likelihood[0].len()
    }

    fn feature_space_id(&self) -> &str {
        &self.feature_space_id
    }

    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        Ok(sigmoid(self.log_odds(x)?))
    }

    fn predict(&self, x: &FeatureVector) -> Result<Label, ModelError> {
        Ok(if self.log_odds(x)? >= 0.0 { Label::Bot } else { Label::Human })
    }

    fn hyperparams(&self) -> Value {
        json!({ "alpha": self.alpha })
    }

    fn training_stats(&self) -> Value {
        json!({ "n_train": self.n_train })
    }

    fn payload(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("log_prior".into(), json!({"HUMAN": self.log_prior[0], "BOT": self.log_prior[1]}));
        m.insert(
            "log_likelihood".into(),
            json!({"HUMAN": self.log_likelihood[0], "BOT": self.log_likelihood[1]}),
        );
        m
    }
}

pub fn nb_fit(x: &FeatureMatrix, y: &[Label], alpha: f64) -> Result<NaiveBayesModel, ModelError> {
    check_training_set(x, y, 2)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(ModelError::InvalidHyperparams("alpha must be > 0".into()));
    }
    let d = x.dim();
    let mut counts = [vec![0.0; d], vec![0.0; d]];
    let mut docs = [0usize; 2];
    for (row, l) in x.rows().iter().zip(y) {
        check_counts(row)?;
        let c = usize::from(l.is_bot());
        docs[c] += 1;
        for &(j, v) in row.entries() {
            counts[c][j] += v;
        }
    }
    let n = y.len() as f64;
    let log_prior = [(docs[0] as f64 / n).ln(), (docs[1] as f64 / n).ln()];
    let log_likelihood = counts.map(|c| {
        let total: f64 = c.iter().sum::<f64>() + alpha * d as f64;
        c.iter().map(|v| ((v + alpha) / total).ln()).collect()
    });
    Ok(NaiveBayesModel {
        alpha,
        log_prior,
        log_likelihood,
        n_train: y.len(),
        feature_space_id: x.feature_space_id().to_string(),
    })
}

pub struct NaiveBayesTrainer;

#[derive(Deserialize)]
#[allow(non_snake_case)]
struct PerClass<T> {
    HUMAN: T,
    BOT: T,
}

impl Trainer for NaiveBayesTrainer {
    fn family(&self) -> &'static str {
        "nb"
    }

    fn fit(&self, x: &FeatureMatrix, y: &[Label], params: &Value, _seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        let p: NaiveBayesParams = parse_params(params)?;
        Ok(Box::new(nb_fit(x, y, p.alpha)?))
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn Classifier>, ModelError> {
        let p: NaiveBayesParams = serde_json::from_value(env.hyperparams.clone())?;
        let prior: PerClass<f64> = env.field("log_prior")?;
        let ll: PerClass<Vec<f64>> = env.field("log_likelihood")?;
        if ll.HUMAN.len() != ll.BOT.len() {
            return Err(ModelError::Malformed("likelihood vectors differ in length".into()));
        }
        let n_train = env.training_stats.get("n_train").and_then(Value::as_u64).unwrap_or(0) as usize;
        Ok(Box::new(NaiveBayesModel {
            alpha: p.alpha,
            log_prior: [prior.HUMAN, prior.BOT],
            log_likelihood: [ll.HUMAN, ll.BOT],
            n_train,
            feature_space_id: env.feature_space_id.clone(),
        }))
    }
}
