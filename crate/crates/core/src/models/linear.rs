//! L2-regularized logistic regression and a Pegasos-style linear SVM.
//!
//! Both train from `w = 0, b = 0` on shuffled mini-batches. Weights are kept
//! as `s * v` so the per-step weight decay costs O(1) and each update touches
//! only the nonzeros of the batch.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{
    check_dim, check_training_set, parse_params, sigmoid, softplus, Classifier, ModelEnvelope, ModelError, Trainer,
};
use crate::corpus::Label;
use crate::features::{FeatureMatrix, FeatureVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinearFamily {
    LogReg,
    LinSvm,
}

impl LinearFamily {
    pub fn name(self) -> &'static str {
        match self {
            LinearFamily::LogReg => "logreg",
            LinearFamily::LinSvm => "linsvm",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearHyperparams {
    pub lambda: f64,
    pub epochs: usize,
    /// Step size for logistic regression. The SVM uses `1/(lambda t)`.
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Shuffling seed; set from the experiment seed when fitting through a [`Trainer`].
    pub seed: u64,
}

impl Default for LinearHyperparams {
    fn default() -> Self {
        LinearHyperparams {
            lambda: 1e-4,
            epochs: 30,
            learning_rate: 0.1,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl LinearHyperparams {
    fn validate(&self, family: LinearFamily) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidHyperparams(m.to_string()));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad("lambda must be finite and >= 0");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be >= 1");
        }
        match family {
            LinearFamily::LogReg => {
                if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                    return bad("learning_rate must be > 0");
                }
                if self.learning_rate * self.lambda >= 1.0 {
                    return bad("learning_rate * lambda must be < 1");
                }
            }
            LinearFamily::LinSvm => {
                if self.lambda <= 0.0 {
                    return bad("linsvm needs lambda > 0 (step size is 1/(lambda t))");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStats {
    pub n_train: usize,
    /// Full training objective at epoch 0 (all-zero model) and after each epoch.
    pub objective_history: Vec<f64>,
    /// Epoch whose parameters were kept.
    pub selected_epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub family: LinearFamily,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub hyperparams: LinearHyperparams,
    pub stats: LinearStats,
    feature_space_id: String,
}

impl LinearModel {
    /// `w·x + b`.
    pub fn margin(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        check_dim(self.weights.len(), x)?;
        Ok(x.dot(&self.weights) + self.bias)
    }
}

impl Classifier for LinearModel {
    fn family(&self) -> &'static str {
        self.family.name()
    }

    fn dim(&self) -> usize {
        self.weights.len()
    }

    fn feature_space_id(&self) -> &str {
        &self.feature_space_id
    }

    /// Logistic of the margin for both families; for the SVM this is an
    /// uncalibrated squashing with slope 1.
    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        Ok(sigmoid(self.margin(x)?))
    }

    fn hyperparams(&self) -> Value {
        serde_json::to_value(&self.hyperparams).expect("hyperparams serialize")
    }

    fn training_stats(&self) -> Value {
        serde_json::to_value(&self.stats).expect("stats serialize")
    }

    fn payload(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("weights".into(), json!(self.weights));
        m.insert("bias".into(), json!(self.bias));
        m
    }
}

fn signs(y: &[Label]) -> Vec<f64> {
    y.iter().map(|l| l.sign()).collect()
}

fn sq_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum()
}

/// `(1/n) Σ ln(1 + exp(-ỹ(w·x+b))) + (λ/2)‖w‖²`.
pub fn logreg_objective(x: &FeatureMatrix, y: &[Label], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.n_rows() as f64;
    let loss: f64 = x
        .rows()
        .iter()
        .zip(y)
        .map(|(r, l)| softplus(-l.sign() * (r.dot(w) + b)))
        .sum();
    loss / n + 0.5 * lambda * sq_norm(w)
}

/// Gradient of [`logreg_objective`] with respect to `(w, b)`.
pub fn logreg_gradient(x: &FeatureMatrix, y: &[Label], w: &[f64], b: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = x.n_rows() as f64;
    let mut gw: Vec<f64> = w.iter().map(|v| lambda * v).collect();
    let mut gb = 0.0;
    for (r, l) in x.rows().iter().zip(y) {
        let s = l.sign();
        let g = -s * sigmoid(-s * (r.dot(w) + b)) / n;
        for &(j, v) in r.entries() {
            gw[j] += g * v;
        }
        gb += g;
    }
    (gw, gb)
}

/// `(λ/2)‖w‖² + (1/n) Σ max(0, 1 - ỹ(w·x+b))`.
pub fn svm_objective(x: &FeatureMatrix, y: &[Label], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.n_rows() as f64;
    let hinge: f64 = x
        .rows()
        .iter()
        .zip(y)
        .map(|(r, l)| (1.0 - l.sign() * (r.dot(w) + b)).max(0.0))
        .sum();
    0.5 * lambda * sq_norm(w) + hinge / n
}

/// Weight vector stored as `scale * v`.
struct ScaledWeights {
    v: Vec<f64>,
    scale: f64,
}

impl ScaledWeights {
    fn zeros(d: usize) -> Self {
        ScaledWeights { v: vec![0.0; d], scale: 1.0 }
    }

    fn dot(&self, x: &FeatureVector) -> f64 {
        self.scale * x.dot(&self.v)
    }

    fn shrink(&mut self, factor: f64) {
        if factor == 0.0 {
            self.v.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
            return;
        }
        self.scale *= factor;
        if self.scale.abs() < 1e-9 {
            let s = self.scale;
            self.v.iter_mut().for_each(|v| *v *= s);
            self.scale = 1.0;
        }
    }

    fn add(&mut self, coef: f64, x: &FeatureVector) {
        let c = coef / self.scale;
        for &(j, v) in x.entries() {
            self.v[j] += c * v;
        }
    }

    fn sq_norm(&self) -> f64 {
        self.scale * self.scale * sq_norm(&self.v)
    }

    fn materialize(&self) -> Vec<f64> {
        self.v.iter().map(|v| v * self.scale).collect()
    }
}

fn finite(w: &[f64], b: f64) -> bool {
    b.is_finite() && w.iter().all(|v| v.is_finite())
}

fn model(
    family: LinearFamily,
    x: &FeatureMatrix,
    weights: Vec<f64>,
    bias: f64,
    hp: &LinearHyperparams,
    stats: LinearStats,
) -> LinearModel {
    LinearModel {
        family,
        weights,
        bias,
        hyperparams: hp.clone(),
        stats,
        feature_space_id: x.feature_space_id().to_string(),
    }
}

/// Mini-batch gradient descent with a constant step; the bias is not regularized.
pub fn logreg_fit(x: &FeatureMatrix, y: &[Label], hp: &LinearHyperparams) -> Result<LinearModel, ModelError> {
    check_training_set(x, y, 2)?;
    hp.validate(LinearFamily::LogReg)?;
    let ys = signs(y);
    let mut w = ScaledWeights::zeros(x.dim());
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut history = vec![logreg_objective(x, y, &w.v, b, hp.lambda)];
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            let m = batch.len() as f64;
            let coefs: Vec<(usize, f64)> = batch
                .iter()
                .map(|&i| {
                    let z = w.dot(x.row(i)) + b;
                    (i, -ys[i] * sigmoid(-ys[i] * z))
                })
                .collect();
            w.shrink(1.0 - hp.learning_rate * hp.lambda);
            for &(i, g) in &coefs {
                w.add(-hp.learning_rate * g / m, x.row(i));
                b -= hp.learning_rate * g / m;
            }
        }
        let wm = w.materialize();
        if !finite(&wm, b) {
            return Err(ModelError::Diverged(epoch));
        }
        history.push(logreg_objective(x, y, &wm, b, hp.lambda));
    }
    let stats = LinearStats {
        n_train: x.n_rows(),
        objective_history: history,
        selected_epoch: hp.epochs,
    };
    Ok(model(LinearFamily::LogReg, x, w.materialize(), b, hp, stats))
}

/// Pegasos: step `1/(λt)` per mini-batch, then projection of `(w, b)` onto the
/// ball of radius `1/√λ`. The bias is shrunk and projected together with `w`.
/// Returns the epoch-end iterate with the lowest objective, which may be the
/// all-zero start.
pub fn linsvm_fit(x: &FeatureMatrix, y: &[Label], hp: &LinearHyperparams) -> Result<LinearModel, ModelError> {
    check_training_set(x, y, 2)?;
    hp.validate(LinearFamily::LinSvm)?;
    let ys = signs(y);
    let lambda = hp.lambda;
    let radius_sq = 1.0 / lambda;
    let mut w = ScaledWeights::zeros(x.dim());
    let mut b = 0.0;
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let initial = svm_objective(x, y, &w.v, b, lambda);
    let mut history = vec![initial];
    let mut best = (initial, 0, vec![0.0; x.dim()], 0.0);
    let mut t = 0u64;
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hp.batch_size) {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let m = batch.len() as f64;
            let violators: Vec<usize> = batch
                .iter()
                .copied()
                .filter(|&i| ys[i] * (w.dot(x.row(i)) + b) < 1.0)
                .collect();
            let decay = 1.0 - eta * lambda;
            w.shrink(decay);
            b *= decay;
            for &i in &violators {
                w.add(eta * ys[i] / m, x.row(i));
                b += eta * ys[i] / m;
            }
            let norm_sq = w.sq_norm() + b * b;
            if norm_sq > radius_sq {
                let f = (radius_sq / norm_sq).sqrt();
                w.shrink(f);
                b *= f;
            }
        }
        let wm = w.materialize();
        if !finite(&wm, b) {
            return Err(ModelError::Diverged(epoch));
        }
        let obj = svm_objective(x, y, &wm, b, lambda);
        history.push(obj);
        if obj < best.0 {
            best = (obj, epoch, wm, b);
        }
    }
    let (_, selected_epoch, weights, bias) = best;
    let stats = LinearStats {
        n_train: x.n_rows(),
        objective_history: history,
        selected_epoch,
    };
    Ok(model(LinearFamily::LinSvm, x, weights, bias, hp, stats))
}

/// Registry adapter for one linear family.
pub struct LinearTrainer(pub LinearFamily);

impl Trainer for LinearTrainer {
    fn family(&self) -> &'static str {
        self.0.name()
    }

    fn fit(&self, x: &FeatureMatrix, y: &[Label], params: &Value, seed: u64) -> Result<Box<dyn Classifier>, ModelError> {
        let mut hp: LinearHyperparams = parse_params(params)?;
        hp.seed = seed;
        let m = match self.0 {
            LinearFamily::LogReg => logreg_fit(x, y, &hp)?,
            LinearFamily::LinSvm => linsvm_fit(x, y, &hp)?,
        };
        Ok(Box::new(m))
    }

    fn load(&self, env: &ModelEnvelope) -> Result<Box<dyn Classifier>, ModelError> {
        let weights: Vec<f64> = env.field("weights")?;
        let bias: f64 = env.field("bias")?;
        if !finite(&weights, bias) {
            return Err(ModelError::Malformed("non-finite weight".into()));
        }
        Ok(Box::new(LinearModel {
            family: self.0,
            weights,
            bias,
            hyperparams: serde_json::from_value(env.hyperparams.clone())?,
            stats: serde_json::from_value(env.training_stats.clone())?,
            feature_space_id: env.feature_space_id.clone(),
        }))
    }
}
