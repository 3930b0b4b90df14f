//! Acceptance checks. Prints one line per criterion; exits non-zero if any fails.
//!
//! Criterion 7 needs the public TweepFake CSV and a 768-dim embedding file:
//! set `TWDETECT_TWEEPFAKE_CSV`, `TWDETECT_TWEEPFAKE_SCHEMA` (column mapping,
//! optional when the CSV is canonical) and `TWDETECT_EMBEDDINGS`.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twdetect::corpus::{stratified_split, CreatorCategory, Document, Label, Partition, SplitSpec, StratumKey};
use twdetect::eval::{grouped_accuracy, metrics, ConfusionMatrix, EvalReport};
use twdetect::experiment::{run_experiment, ExperimentConfig};
use twdetect::features::{tfidf_fit, FeatureMatrix, TfidfConfig};
use twdetect::models::{
    cart_fit, gbdt_fit, gini, logreg_gradient, logreg_objective, FeatureSubsample, GbdtConfig, ModelRegistry,
    TreeConfig, TreeNode,
};
use twdetect::synth::{synth_corpus, synth_csv};
use twdetect::textprep::tokenize;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn pass_if(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn term(i: usize) -> String {
    let a = (b'a' + (i / 26) as u8) as char;
    let b = (b'a' + (i % 26) as u8) as char;
    format!("q{a}{b}")
}

fn dense_tfidf(docs: &[Vec<String>], sublinear: bool) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut terms: Vec<String> = docs.iter().flatten().cloned().collect();
    terms.sort();
    terms.dedup();
    let n = docs.len() as f64;
    let counts: Vec<Vec<f64>> = docs
        .iter()
        .map(|d| terms.iter().map(|t| d.iter().filter(|w| *w == t).count() as f64).collect())
        .collect();
    let idf: Vec<f64> = (0..terms.len())
        .map(|j| {
            let df = counts.iter().filter(|row| row[j] > 0.0).count() as f64;
            ((1.0 + n) / (1.0 + df)).ln() + 1.0
        })
        .collect();
    let rows = counts
        .iter()
        .map(|row| {
            let w: Vec<f64> = row
                .iter()
                .zip(&idf)
                .map(|(&c, &i)| if c == 0.0 { 0.0 } else if sublinear { (1.0 + c.ln()) * i } else { c * i })
                .collect();
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            w.iter().map(|v| v / norm).collect()
        })
        .collect();
    (terms, rows)
}

fn c1_tfidf_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n_docs = rng.gen_range(1..=20);
        let n_terms = rng.gen_range(1..=50);
        let docs: Vec<Vec<String>> = (0..n_docs)
            .map(|_| (0..rng.gen_range(1..=15)).map(|_| term(rng.gen_range(0..n_terms))).collect())
            .collect();
        let sublinear = rng.gen_bool(0.5);
        let streams: Vec<_> = docs.iter().map(|d| tokenize(&d.join(" "))).collect();
        let config = TfidfConfig {
            min_df: 1,
            max_features: None,
            sublinear_tf: sublinear,
        };
        let v = tfidf_fit(&streams, &config).expect("fit");
        let sparse = v.transform_streams(&streams);
        let (terms, dense) = dense_tfidf(&docs, sublinear);
        if v.vocabulary().terms() != terms.as_slice() {
            return Outcome::Fail("vocabulary differs from oracle".into());
        }
        for (row, want) in sparse.rows().iter().zip(&dense) {
            for (a, b) in row.to_dense().iter().zip(want) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    pass_if(
        worst <= 1e-12 && elapsed < Duration::from_secs(5),
        format!("50 corpora, max abs diff {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn c2_gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(3..=10);
        let d = rng.gen_range(2..=6);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(-2.0..2.0) }).collect())
            .collect();
        let x = FeatureMatrix::from_dense(&rows, "gradcheck").expect("matrix");
        let y: Vec<Label> = (0..n).map(|_| if rng.gen_bool(0.5) { Label::Bot } else { Label::Human }).collect();
        let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let lambda = rng.gen_range(0.0..0.1);
        let (gw, gb) = logreg_gradient(&x, &y, &w, b, lambda);
        let h = 1e-6;
        let mut numeric = Vec::with_capacity(d + 1);
        for j in 0..d {
            let (mut wp, mut wm) = (w.clone(), w.clone());
            wp[j] += h;
            wm[j] -= h;
            numeric.push((logreg_objective(&x, &y, &wp, b, lambda) - logreg_objective(&x, &y, &wm, b, lambda)) / (2.0 * h));
        }
        numeric.push((logreg_objective(&x, &y, &w, b + h, lambda) - logreg_objective(&x, &y, &w, b - h, lambda)) / (2.0 * h));
        let analytic: Vec<f64> = gw.iter().copied().chain([gb]).collect();
        let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
        let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt() + numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst = worst.max(diff / scale.max(1e-12));
    }
    pass_if(worst < 1e-5, format!("20 instances, max relative error {worst:.2e}"))
}

fn random_doc(rng: &mut ChaCha8Rng, i: usize) -> Document {
    let cat = [CreatorCategory::Human, CreatorCategory::Gpt2, CreatorCategory::Rnn, CreatorCategory::Others]
        [rng.gen_range(0..4)];
    Document::new(format!("d{i}"), "text", cat.label(), cat, "acct").expect("doc")
}

fn c3_metric_fixtures() -> Outcome {
    let cm = ConfusionMatrix {
        tp: 40,
        fp: 20,
        tn: 30,
        fn_: 10,
    };
    let m = metrics(&cm).expect("metrics");
    if (m.balanced_accuracy - 0.7).abs() > 1e-6 || (m.f1 - 0.727273).abs() > 1e-6 {
        return Outcome::Fail(format!("ba {} f1 {}", m.balanced_accuracy, m.f1));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for set in 0..100 {
        let n = rng.gen_range(1..=200);
        let docs: Vec<Document> = (0..n).map(|i| random_doc(&mut rng, i)).collect();
        let refs: Vec<&Document> = docs.iter().collect();
        let preds: HashMap<String, Label> = docs
            .iter()
            .map(|d| (d.doc_id.clone(), if rng.gen_bool(0.5) { Label::Bot } else { Label::Human }))
            .collect();
        let g = grouped_accuracy(&refs, &preds, "m", "p").expect("grouped");
        let all = g.get("ALL");
        let cats = ["GPT2", "HUMAN", "OTHERS", "RNN"];
        let n_sum: usize = cats.iter().map(|c| g.get(c).n).sum();
        let correct_sum: usize = cats.iter().map(|c| g.get(c).correct).sum();
        if all.n != n_sum || all.correct != correct_sum {
            return Outcome::Fail(format!("set {set}: ALL counts differ from category sums"));
        }
        let weighted: f64 = cats
            .iter()
            .filter_map(|c| g.accuracy(c).map(|a| a * g.get(c).n as f64 / all.n as f64))
            .sum();
        worst = worst.max((weighted - g.accuracy("ALL").unwrap()).abs());
    }
    pass_if(
        worst < 1e-12,
        format!("ba 0.7, f1 {:.6}; 100 sets, ALL counts equal category sums, float gap {worst:.1e}", m.f1),
    )
}

fn c4_split_protocol() -> Outcome {
    let corpus = synth_corpus(25_572, 4).expect("synth");
    let spec = SplitSpec::new([0.8, 0.1, 0.1], 4, [StratumKey::Label, StratumKey::CreatorCategory]).expect("spec");
    let split = stratified_split(&corpus, &spec).expect("split");
    let parts = [Partition::Train, Partition::Valid, Partition::Test];
    let mut strata: BTreeMap<(Label, CreatorCategory), [usize; 4]> = BTreeMap::new();
    for d in corpus.documents() {
        let p = split.get(&d.doc_id).expect("assigned");
        let e = strata.entry((d.label, d.creator_category)).or_default();
        e[3] += 1;
        e[parts.iter().position(|&q| q == p).unwrap()] += 1;
    }
    let mut worst_dev = 0.0f64;
    for counts in strata.values() {
        for (k, ratio) in [0.8, 0.1, 0.1].iter().enumerate() {
            worst_dev = worst_dev.max((counts[k] as f64 - ratio * counts[3] as f64).abs());
        }
    }
    let mut worst_balance = 0.0f64;
    for p in parts {
        let docs: Vec<&Document> = corpus.documents().iter().filter(|d| split.get(&d.doc_id) == Some(p)).collect();
        let bots = docs.iter().filter(|d| d.label.is_bot()).count() as f64;
        worst_balance = worst_balance.max((bots / docs.len() as f64 - 0.5).abs());
    }
    pass_if(
        worst_dev <= 1.0 && worst_balance <= 0.005,
        format!(
            "{} docs, {} strata, max stratum deviation {worst_dev:.2}, max class imbalance {:.3}%",
            corpus.len(),
            strata.len(),
            worst_balance * 100.0
        ),
    )
}

fn write_config(dir: &Path, body: &str) -> ExperimentConfig {
    let p = dir.join("exp.json");
    std::fs::write(&p, body).expect("write config");
    ExperimentConfig::load(&p).expect("config")
}

fn c5_synthetic_end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().expect("tempdir");
    std::fs::write(dir.path().join("synth.csv"), synth_csv(2000, 7).expect("synth")).expect("write csv");
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "seed": 7, "dataset": {"csv": "synth.csv"},
            "features": {"kind": "union", "parts": [{"kind": "tfidf"}, {"kind": "stylo"}]},
            "model": {"family": "linsvm"}, "output_dir": "run"}"#,
    );
    let result = run_experiment(&cfg, &ModelRegistry::with_builtin());
    let elapsed = start.elapsed();
    match result {
        Ok(_) => {
            let json = std::fs::read_to_string(cfg.output_dir.join("report.json")).expect("report");
            let report = EvalReport::from_json(&json).expect("parse report");
            let ba = report.metrics.balanced_accuracy;
            pass_if(
                ba >= 0.90 && elapsed < Duration::from_secs(60),
                format!("test ba {ba:.4} on {} docs, {:.1}s", report.n_eval, elapsed.as_secs_f64()),
            )
        }
        Err(e) => Outcome::Fail(e.to_string()),
    }
}

fn random_sparse(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| if rng.gen_bool(0.5) { 0.0 } else { f64::from(rng.gen_range(-3i32..=3)) })
                .collect()
        })
        .collect()
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    (0..n).map(|i| if i % 2 == 0 || rng.gen_bool(0.3) { Label::Bot } else { Label::Human }).collect()
}

fn split_gain(rows: &[Vec<f64>], y: &[Label], feature: usize, threshold: f64) -> f64 {
    let frac = |idx: &[usize]| idx.iter().filter(|&&i| y[i].is_bot()).count() as f64 / idx.len() as f64;
    let all: Vec<usize> = (0..rows.len()).collect();
    let (left, right): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| rows[i][feature] <= threshold);
    if left.is_empty() || right.is_empty() {
        return f64::NEG_INFINITY;
    }
    let n = rows.len() as f64;
    gini(frac(&all)) - left.len() as f64 / n * gini(frac(&left)) - right.len() as f64 / n * gini(frac(&right))
}

fn c6_tree_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let full = TreeConfig {
        max_depth: None,
        min_samples_leaf: 1,
        feature_subsample: FeatureSubsample::All,
    };
    for inst in 0..20 {
        let mut rows = random_sparse(&mut rng, 40, 6);
        rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
        rows.dedup();
        let y = labels(&mut rng, rows.len());
        let x = FeatureMatrix::from_dense(&rows, "mem").expect("matrix");
        let tree = cart_fit(&x, &y, &full, inst);
        let correct = x
            .rows()
            .iter()
            .zip(&y)
            .filter(|(r, l)| (tree.predict(r) >= 0.5) == l.is_bot())
            .count();
        if correct != rows.len() {
            return Outcome::Fail(format!("memorization instance {inst}: {correct}/{}", rows.len()));
        }
    }
    let stump = TreeConfig {
        max_depth: Some(1),
        ..full
    };
    for inst in 0..20 {
        let rows = random_sparse(&mut rng, 30, 5);
        let y = labels(&mut rng, rows.len());
        let x = FeatureMatrix::from_dense(&rows, "gain").expect("matrix");
        let TreeNode::Split { feature, threshold, .. } = cart_fit(&x, &y, &stump, inst) else {
            return Outcome::Fail(format!("gain instance {inst}: no split"));
        };
        let chosen = split_gain(&rows, &y, feature, threshold);
        let mut best = f64::NEG_INFINITY;
        for f in 0..5 {
            let mut vals: Vec<f64> = rows.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                best = best.max(split_gain(&rows, &y, f, (w[0] + w[1]) / 2.0));
            }
        }
        if chosen < best - 1e-12 {
            return Outcome::Fail(format!("gain instance {inst}: chose {chosen}, best {best}"));
        }
    }
    let mut fixtures: Vec<(Vec<Vec<f64>>, Vec<Label>)> = Vec::new();
    let xor: Vec<Vec<f64>> = (0..40).map(|i| vec![f64::from(i % 2), f64::from((i / 2) % 2)]).collect();
    let xor_y = xor.iter().map(|r| if r[0] != r[1] { Label::Bot } else { Label::Human }).collect();
    fixtures.push((xor, xor_y));
    for _ in 0..9 {
        let rows = random_sparse(&mut rng, 60, 8);
        let y = labels(&mut rng, 60);
        fixtures.push((rows, y));
    }
    for (i, (rows, y)) in fixtures.iter().enumerate() {
        let x = FeatureMatrix::from_dense(rows, "gbdt").expect("matrix");
        let config = GbdtConfig {
            n_rounds: 50,
            seed: i as u64,
            ..GbdtConfig::default()
        };
        let model = gbdt_fit(&x, y, &config).expect("gbdt");
        let h = &model.loss_history;
        if h.last().unwrap() >= &h[0] {
            return Outcome::Fail(format!("gbdt fixture {i}: loss {} -> {}", h[0], h.last().unwrap()));
        }
    }
    Outcome::Pass("20 memorization, 20 brute-force gain, 10 boosting fixtures".into())
}

fn env_path(key: &str) -> Option<PathBuf> {
    std::env::var_os(key).map(PathBuf::from).filter(|p| p.is_file())
}

fn c7_tweepfake_reproduction() -> Outcome {
    let (Some(csv), Some(emb)) = (env_path("TWDETECT_TWEEPFAKE_CSV"), env_path("TWDETECT_EMBEDDINGS")) else {
        return Outcome::Skip("TweepFake CSV or embeddings not provided".into());
    };
    let schema = env_path("TWDETECT_TWEEPFAKE_SCHEMA");
    let dir = tempfile::tempdir().expect("tempdir");
    let registry = ModelRegistry::with_builtin();
    let mut results = BTreeMap::new();
    for family in ["linsvm", "logreg"] {
        let mut dataset = serde_json::json!({ "csv": csv });
        if let Some(s) = &schema {
            dataset["schema"] = serde_json::json!(s);
        }
        let body = serde_json::json!({
            "schema_version": 1,
            "seed": 0,
            "dataset": dataset,
            "features": {"kind": "embeddings", "path": emb, "dim": 768},
            "model": {"family": family},
            "output_dir": dir.path().join(family),
        });
        let cfg = write_config(dir.path(), &body.to_string());
        if let Err(e) = run_experiment(&cfg, &registry) {
            return Outcome::Fail(format!("{family}: {e}"));
        }
        let json = std::fs::read_to_string(cfg.output_dir.join("report.json")).expect("report");
        results.insert(family, EvalReport::from_json(&json).expect("parse report"));
    }
    let svm = &results["linsvm"];
    let lr = &results["logreg"];
    let acc = |c: &str| svm.grouped.accuracy(c).unwrap_or(f64::NAN);
    let ordered = acc("RNN") > acc("OTHERS") && acc("OTHERS") > acc("HUMAN") && acc("HUMAN") > acc("GPT2");
    let (svm_ba, lr_ba) = (svm.metrics.balanced_accuracy, lr.metrics.balanced_accuracy);
    pass_if(
        (svm_ba - 0.8757).abs() <= 0.03 && (lr_ba - 0.8393).abs() <= 0.03 && ordered,
        format!(
            "svm ba {svm_ba:.4}, lr ba {lr_ba:.4}, RNN {:.4} OTHERS {:.4} HUMAN {:.4} GPT2 {:.4}",
            acc("RNN"),
            acc("OTHERS"),
            acc("HUMAN"),
            acc("GPT2")
        ),
    )
}

fn main() {
    let checks: [(&str, Check); 7] = [
        ("tfidf matches dense oracle", c1_tfidf_oracle),
        ("logreg gradient matches finite differences", c2_gradient_check),
        ("metric fixtures and grouped ALL", c3_metric_fixtures),
        ("stratified 80/10/10 split", c4_split_protocol),
        ("synthetic end-to-end linsvm", c5_synthetic_end_to_end),
        ("tree suite properties", c6_tree_properties),
        ("TweepFake embeddings reproduction", c7_tweepfake_reproduction),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Outcome::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIP", d),
        };
        println!("[{tag}] {}. {name}: {detail}", i + 1);
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
