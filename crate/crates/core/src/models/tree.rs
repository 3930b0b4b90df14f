//! CART trees shared by the forest (Gini) and boosting (variance) families.
//!
//! Each node scans its candidate features column by column: nonzero entries
//! come from the column-major view, every other member sits in an implicit
//! zero group. Thresholds are midpoints of adjacent distinct values and
//! `x[feature] <= threshold` goes left. Cost is O(n·d·depth) on dense data.
//!
//! Equal gains (within 1e-12) go to the lower feature index, then the lower
//! threshold. An impure node still splits when the best gain is zero, so a
//! tree of unlimited depth memorizes any consistent training set and can
//! express XOR-like interactions that no single split improves.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::corpus::Label;
use crate::features::{FeatureMatrix, FeatureVector};

const GAIN_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, x: &FeatureVector) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x.get(*feature) <= *threshold { left } else { right },
            }
        }
    }

    /// Number of splits on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    /// Largest feature index used by any split.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, left, right, ..
            } => Some((*feature).max(left.max_feature().unwrap_or(0)).max(right.max_feature().unwrap_or(0))),
        }
    }

    /// `[feature, threshold, left, right]` for splits, `[value]` for leaves.
    pub fn to_value(&self) -> Value {
        match self {
            TreeNode::Leaf { value } => json!([value]),
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => Value::Array(vec![json!(feature), json!(threshold), left.to_value(), right.to_value()]),
        }
    }

    pub fn from_value(v: &Value) -> Result<TreeNode, String> {
        let arr = v.as_array().ok_or("tree node must be an array")?;
        let num = |x: &Value| x.as_f64().filter(|f| f.is_finite()).ok_or("tree node value must be a finite number");
        match arr.as_slice() {
            [value] => Ok(TreeNode::Leaf { value: num(value)? }),
            [feature, threshold, left, right] => Ok(TreeNode::Split {
                feature: feature.as_u64().ok_or("split feature must be a non-negative integer")? as usize,
                threshold: num(threshold)?,
                left: Box::new(TreeNode::from_value(left)?),
                right: Box::new(TreeNode::from_value(right)?),
            }),
            _ => Err(format!("tree node array has {} elements", arr.len())),
        }
    }
}

impl Serialize for TreeNode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for TreeNode {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        TreeNode::from_value(&Value::deserialize(d)?).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSubsample {
    All,
    Sqrt,
    Fraction(f64),
}

impl FeatureSubsample {
    /// Number of informative features to examine per node.
    pub fn count(self, dim: usize) -> usize {
        let k = match self {
            FeatureSubsample::All => dim,
            FeatureSubsample::Sqrt => (dim as f64).sqrt().round() as usize,
            FeatureSubsample::Fraction(f) => (f * dim as f64).ceil() as usize,
        };
        k.clamp(1, dim.max(1))
    }

    pub(crate) fn validate(self) -> Result<(), String> {
        match self {
            FeatureSubsample::Fraction(f) if !(f > 0.0 && f <= 1.0) => Err("feature fraction must be in (0, 1]".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub feature_subsample: FeatureSubsample,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig {
            max_depth: None,
            min_samples_leaf: 1,
            feature_subsample: FeatureSubsample::All,
        }
    }
}

/// `2p(1-p)`, the Gini impurity of a binary node with positive fraction `p`.
pub fn gini(p: f64) -> f64 {
    2.0 * p * (1.0 - p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Gini,
    Variance,
}

#[derive(Debug, Clone, Copy, Default)]
struct Stats {
    w: f64,
    s: f64,
}

impl Stats {
    fn add(&mut self, w: f64, wt: f64) {
        self.w += w;
        self.s += wt;
    }

    fn minus(self, o: Stats) -> Stats {
        Stats {
            w: self.w - o.w,
            s: self.s - o.s,
        }
    }
}

impl Criterion {
    fn gain(self, parent: Stats, left: Stats, right: Stats) -> f64 {
        match self {
            Criterion::Gini => {
                let g = |st: Stats| gini(st.s / st.w);
                g(parent) - left.w / parent.w * g(left) - right.w / parent.w * g(right)
            }
            Criterion::Variance => {
                let t = |st: Stats| st.s * st.s / st.w;
                (t(left) + t(right) - t(parent)) / parent.w
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Candidate {
    fn beats(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                if self.gain > o.gain + GAIN_TIE {
                    true
                } else if self.gain < o.gain - GAIN_TIE {
                    false
                } else {
                    (self.feature, self.threshold) < (o.feature, o.threshold)
                }
            }
        }
    }
}

/// Everything a tree fit reads; shared across the trees of an ensemble.
/// Leaf value from the `(row, weight)` members of a node.
pub(crate) type LeafFn<'f> = dyn Fn(&[(usize, f64)]) -> f64 + 'f;

pub(crate) struct TreeData<'a> {
    pub columns: &'a [Vec<(usize, f64)>],
    pub rows: &'a FeatureMatrix,
    /// Class indicator (Gini) or regression target (variance) per row.
    pub targets: &'a [f64],
    pub criterion: Criterion,
}

struct Builder<'a, 'b> {
    data: &'b TreeData<'a>,
    config: &'b TreeConfig,
    leaf: &'b LeafFn<'b>,
    rng: ChaCha8Rng,
    stamp: Vec<u32>,
    weight: Vec<f64>,
    scratch: Vec<f64>,
    next_id: u32,
    perm: Vec<usize>,
}

/// Grows one tree over `members` (row, multiplicity).
pub(crate) fn grow(
    data: &TreeData<'_>,
    members: Vec<(usize, f64)>,
    config: &TreeConfig,
    leaf: &LeafFn<'_>,
    seed: u64,
) -> TreeNode {
    let n = data.targets.len();
    let mut b = Builder {
        data,
        config,
        leaf,
        rng: ChaCha8Rng::seed_from_u64(seed),
        stamp: vec![0; n],
        weight: vec![0.0; n],
        scratch: vec![0.0; n],
        next_id: 0,
        perm: (0..data.columns.len()).collect(),
    };
    if members.is_empty() {
        return TreeNode::Leaf { value: 0.0 };
    }
    b.build(members, 0)
}

impl Builder<'_, '_> {
    fn build(&mut self, members: Vec<(usize, f64)>, depth: usize) -> TreeNode {
        let targets = self.data.targets;
        let mut parent = Stats::default();
        let mut sq = 0.0;
        for &(r, w) in &members {
            parent.add(w, w * targets[r]);
            sq += w * targets[r] * targets[r];
        }
        let pure = match self.data.criterion {
            Criterion::Gini => parent.s <= 0.0 || parent.s >= parent.w,
            Criterion::Variance => sq / parent.w - (parent.s / parent.w).powi(2) <= 1e-18,
        };
        let msl = self.config.min_samples_leaf as f64;
        let depth_ok = self.config.max_depth.is_none_or(|d| depth < d);
        if pure || !depth_ok || parent.w < 2.0 * msl {
            return TreeNode::Leaf {
                value: (self.leaf)(&members),
            };
        }
        self.next_id += 1;
        let id = self.next_id;
        for &(r, w) in &members {
            self.stamp[r] = id;
            self.weight[r] = w;
        }
        let Some(best) = self.best_split(&members, parent, id) else {
            return TreeNode::Leaf {
                value: (self.leaf)(&members),
            };
        };
        for &(r, v) in &self.data.columns[best.feature] {
            if self.stamp[r] == id {
                self.scratch[r] = v;
            }
        }
        let (left, right): (Vec<_>, Vec<_>) = members
            .iter()
            .copied()
            .partition(|&(r, _)| self.scratch[r] <= best.threshold);
        for &(r, _) in &members {
            self.scratch[r] = 0.0;
        }
        drop(members);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(self.build(left, depth + 1)),
            right: Box::new(self.build(right, depth + 1)),
        }
    }

    /// Best split over features drawn without replacement until `k`
    /// non-constant ones were examined (or all features were tried).
    fn best_split(&mut self, members: &[(usize, f64)], parent: Stats, id: u32) -> Option<Candidate> {
        let d = self.data.columns.len();
        let k = self.config.feature_subsample.count(d);
        let mut best = None;
        if k >= d {
            // Only features stored in some member row can vary inside the node.
            let mut feats: Vec<usize> = members
                .iter()
                .flat_map(|&(r, _)| self.data.rows.row(r).entries().iter().map(|&(j, _)| j))
                .collect();
            feats.sort_unstable();
            feats.dedup();
            for j in feats {
                self.scan(j, members.len(), parent, id, &mut best);
            }
            return best;
        }
        let mut informative = 0;
        for i in 0..d {
            let pick = self.rng.gen_range(i..d);
            self.perm.swap(i, pick);
            let j = self.perm[i];
            if self.scan(j, members.len(), parent, id, &mut best) {
                informative += 1;
                if informative == k {
                    break;
                }
            }
        }
        best
    }

    /// Scans feature `j`; returns whether it takes more than one value in the node.
    fn scan(&self, j: usize, n_members: usize, parent: Stats, id: u32, best: &mut Option<Candidate>) -> bool {
        let targets = self.data.targets;
        let mut nz: Vec<(f64, f64, f64)> = self.data.columns[j]
            .iter()
            .filter(|(r, _)| self.stamp[*r] == id)
            .map(|&(r, v)| (v, self.weight[r], self.weight[r] * targets[r]))
            .collect();
        let zero_present = nz.len() < n_members;
        if nz.is_empty() {
            return false;
        }
        nz.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut groups: Vec<(f64, Stats)> = Vec::new();
        let mut nz_total = Stats::default();
        for &(v, w, wt) in &nz {
            nz_total.add(w, wt);
            match groups.last_mut() {
                Some((gv, st)) if *gv == v => st.add(w, wt),
                _ => {
                    let mut st = Stats::default();
                    st.add(w, wt);
                    groups.push((v, st));
                }
            }
        }
        if zero_present {
            let zero = parent.minus(nz_total);
            let at = groups.partition_point(|(v, _)| *v < 0.0);
            groups.insert(at, (0.0, zero));
        }
        if groups.len() < 2 {
            return false;
        }
        let msl = self.config.min_samples_leaf as f64;
        let mut left = Stats::default();
        for k in 0..groups.len() - 1 {
            left.add(groups[k].1.w, groups[k].1.s);
            let right = parent.minus(left);
            if left.w < msl || right.w < msl {
                continue;
            }
            let (a, b) = (groups[k].0, groups[k + 1].0);
            let mut threshold = a + (b - a) / 2.0;
            if threshold >= b {
                threshold = a;
            }
            let cand = Candidate {
                gain: self.data.criterion.gain(parent, left, right),
                feature: j,
                threshold,
            };
            if cand.beats(best) {
                *best = Some(cand);
            }
        }
        true
    }
}

pub(crate) fn class_targets(y: &[Label]) -> Vec<f64> {
    y.iter().map(|l| if l.is_bot() { 1.0 } else { 0.0 }).collect()
}

pub(crate) fn positive_fraction(targets: &[f64]) -> impl Fn(&[(usize, f64)]) -> f64 + '_ {
    move |members| {
        let (w, s) = members
            .iter()
            .fold((0.0, 0.0), |(w, s), &(r, m)| (w + m, s + m * targets[r]));
        s / w
    }
}

/// Single Gini tree on all rows; leaves hold the BOT fraction.
/// An empty matrix yields a single leaf with value 0.
pub fn cart_fit(x: &FeatureMatrix, y: &[Label], config: &TreeConfig, seed: u64) -> TreeNode {
    let targets = class_targets(y);
    let columns = x.columns();
    let data = TreeData {
        columns: &columns,
        rows: x,
        targets: &targets,
        criterion: Criterion::Gini,
    };
    let members = (0..x.n_rows().min(y.len())).map(|r| (r, 1.0)).collect();
    let leaf = positive_fraction(&targets);
    grow(&data, members, config, &leaf, seed)
}
