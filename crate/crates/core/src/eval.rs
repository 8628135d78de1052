//! Heldout prediction, error rate, AUC and the bag-of-words baseline.

use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::corpus::{Corpus, Document};
use crate::error::{Error, Result};
use crate::math::{dot, sigmoid};
use crate::model::{seeded_rng, ModelParams};
use crate::objective::Embedder;

/// Scores in (0, 1) paired with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl PredictionSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::invalid("empty prediction set"));
        }
        if scores.len() != labels.len() {
            return Err(Error::dim(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("prediction scores must be finite"));
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y).count()
    }
}

/// `sigmoid(eta . embed(x))`.
pub fn predict_proba(x: &Document, params: &ModelParams, embedder: &Embedder<'_>) -> Result<f64> {
    let phi = params.phi()?;
    predict_with_phi(x, params, &phi, embedder)
}

pub(crate) fn predict_with_phi(
    x: &Document,
    params: &ModelParams,
    phi: &ndarray::Array2<f64>,
    embedder: &Embedder<'_>,
) -> Result<f64> {
    let pi = embedder.embed(x, phi, params.alpha)?;
    Ok(sigmoid(dot(&params.eta, &pi)))
}

/// Predictions for every document of a labeled corpus.
pub fn predict_corpus(
    corpus: &Corpus,
    params: &ModelParams,
    embedder: &Embedder<'_>,
) -> Result<PredictionSet> {
    use rayon::prelude::*;
    let labels = corpus.labels()?;
    let phi = params.phi()?;
    let scores = corpus
        .documents()
        .par_iter()
        .map(|x| predict_with_phi(x, params, &phi, embedder))
        .collect::<Result<Vec<_>>>()?;
    PredictionSet::new(scores, labels)
}

/// Fraction of documents where `score >= threshold` disagrees with the label.
pub fn error_rate(preds: &PredictionSet, threshold: f64) -> f64 {
    let wrong = preds
        .scores
        .iter()
        .zip(&preds.labels)
        .filter(|&(&s, &y)| (s >= threshold) != y)
        .count();
    wrong as f64 / preds.len() as f64
}

/// Error rate of proportions `pis` under regression weights `eta`.
pub fn error_rate_from_pis(pis: &[Vec<f64>], labels: &[bool], eta: &[f64]) -> f64 {
    let wrong = pis
        .iter()
        .zip(labels)
        .filter(|&(pi, &y)| (sigmoid(dot(eta, pi)) >= 0.5) != y)
        .count();
    wrong as f64 / pis.len().max(1) as f64
}

/// Area under the ROC curve from mid-ranks, ties counted as half.
pub fn auc(preds: &PredictionSet) -> Result<f64> {
    let n = preds.len();
    let n_pos = preds.positives() as u64;
    let n_neg = n as u64 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("AUC needs at least one positive and one negative label"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| preds.scores[a].total_cmp(&preds.scores[b]));
    // Twice the rank sum of positives, kept integral so ties are exact.
    let mut rank_sum2: u64 = 0;
    let mut i = 0;
    while i < n {
        let mut j = i + 1;
        while j < n && preds.scores[order[j]] == preds.scores[order[i]] {
            j += 1;
        }
        let mid2 = (i + 1 + j) as u64;
        let pos_in_group = order[i..j].iter().filter(|&&d| preds.labels[d]).count() as u64;
        rank_sum2 += mid2 * pos_in_group;
        i = j;
    }
    let u2 = rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BowConfig {
    pub l2: f64,
    pub epochs: usize,
    pub learn_rate: f64,
    /// Mini-batch size; `None` is full batch.
    pub batch_size: Option<usize>,
    pub seed: u64,
    /// Use `ln(1 + count)` instead of raw counts.
    pub log1p: bool,
}

impl Default for BowConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            epochs: 500,
            learn_rate: 0.01,
            batch_size: None,
            seed: 0,
            log1p: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BowModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub log1p: bool,
}

impl BowModel {
    pub fn logit(&self, x: &Document) -> f64 {
        self.bias
            + x.entries()
                .iter()
                .map(|&(id, c)| self.weights.get(id).copied().unwrap_or(0.0) * feature(c, self.log1p))
                .sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Document) -> f64 {
        sigmoid(self.logit(x))
    }

    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<PredictionSet> {
        let labels = corpus.labels()?;
        let scores = corpus.documents().iter().map(|x| self.predict_proba(x)).collect();
        PredictionSet::new(scores, labels)
    }
}

#[inline]
fn feature(count: u32, log1p: bool) -> f64 {
    if log1p {
        f64::from(count).ln_1p()
    } else {
        f64::from(count)
    }
}

/// Mean logistic loss plus `l2 / 2 * |w|^2` (bias unpenalized).
pub fn bow_loss(corpus: &Corpus, model: &BowModel, l2: f64) -> Result<f64> {
    let labels = corpus.labels()?;
    let n = corpus.len() as f64;
    let data: f64 = corpus
        .documents()
        .iter()
        .zip(&labels)
        .map(|(x, &y)| {
            let s = model.logit(x);
            if y {
                crate::math::softplus(-s)
            } else {
                crate::math::softplus(s)
            }
        })
        .sum::<f64>()
        / n;
    Ok(data + 0.5 * l2 * model.weights.iter().map(|w| w * w).sum::<f64>())
}

/// Gradient of the mean logistic loss (without the L2 term) on a batch.
pub fn bow_data_grad(
    docs: &[&Document],
    labels: &[bool],
    model: &BowModel,
) -> (Vec<f64>, f64) {
    let mut gw = vec![0.0; model.weights.len()];
    let mut gb = 0.0;
    let n = docs.len() as f64;
    for (x, &y) in docs.iter().zip(labels) {
        let r = (sigmoid(model.logit(x)) - if y { 1.0 } else { 0.0 }) / n;
        gb += r;
        for &(id, c) in x.entries() {
            gw[id] += r * feature(c, model.log1p);
        }
    }
    (gw, gb)
}

/// L2-regularized logistic regression on word counts by proximal gradient
/// descent: the L2 shrinkage is applied in closed form after each data step,
/// which stays stable for any penalty strength.
pub fn bow_logreg_train(corpus: &Corpus, cfg: &BowConfig) -> Result<BowModel> {
    let labels = corpus.labels()?;
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    if !(cfg.l2 >= 0.0) || !(cfg.learn_rate > 0.0) {
        return Err(Error::invalid("need l2 >= 0 and a positive learning rate"));
    }
    let mut model = BowModel {
        weights: vec![0.0; corpus.vocab_size()],
        bias: 0.0,
        log1p: cfg.log1p,
    };
    let n = corpus.len();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = seeded_rng(cfg.seed);
    let shrink = 1.0 / (1.0 + cfg.learn_rate * cfg.l2);
    for _ in 0..cfg.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let docs: Vec<&Document> = chunk.iter().map(|&i| &corpus.documents()[i]).collect();
            let ys: Vec<bool> = chunk.iter().map(|&i| labels[i]).collect();
            let (gw, gb) = bow_data_grad(&docs, &ys, &model);
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w = (*w - cfg.learn_rate * g) * shrink;
            }
            model.bias -= cfg.learn_rate * gb;
        }
    }
    if model.weights.iter().any(|w| !w.is_finite()) || !model.bias.is_finite() {
        return Err(Error::numerical("baseline weights diverged; lower the learning rate"));
    }
    Ok(model)
}

/// Evaluation summary written as `key=value` lines or JSON.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub task: String,
    pub regime: String,
    pub w_x: Option<f64>,
    pub w_y: Option<f64>,
    pub k: Option<usize>,
    pub auc: Option<f64>,
    pub error_rate: f64,
    pub n_test: usize,
}

impl MetricsReport {
    pub fn to_key_value(&self) -> String {
        let mut out = String::new();
        let opt = |v: Option<String>| v.unwrap_or_else(|| "NA".into());
        let _ = writeln!(out, "task={}", self.task);
        let _ = writeln!(out, "regime={}", self.regime);
        let _ = writeln!(out, "w_x={}", opt(self.w_x.map(|v| v.to_string())));
        let _ = writeln!(out, "w_y={}", opt(self.w_y.map(|v| v.to_string())));
        let _ = writeln!(out, "K={}", opt(self.k.map(|v| v.to_string())));
        let _ = writeln!(out, "auc={}", opt(self.auc.map(|v| format!("{v:.6}"))));
        let _ = writeln!(out, "error_rate={:.6}", self.error_rate);
        let _ = writeln!(out, "n_test={}", self.n_test);
        out
    }

    pub fn to_json(&self) -> String {
        let value = serde_json::json!({
            "task": self.task,
            "regime": self.regime,
            "w_x": self.w_x,
            "w_y": self.w_y,
            "K": self.k,
            "auc": self.auc,
            "error_rate": self.error_rate,
            "n_test": self.n_test,
        });
        let mut s = serde_json::to_string_pretty(&value).expect("json value");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Vocabulary;
    use crate::embed::EmbedConfig;
    use ndarray::array;

    fn set(scores: &[f64], labels: &[bool]) -> PredictionSet {
        PredictionSet::new(scores.to_vec(), labels.to_vec()).unwrap()
    }

    #[test]
    fn error_rate_cases() {
        let p = set(&[0.9, 0.1, 0.7], &[true, false, true]);
        assert_eq!(error_rate(&p, 0.5), 0.0);
        let p = set(&[0.1, 0.9], &[true, false]);
        assert_eq!(error_rate(&p, 0.5), 1.0);
        let p = set(&[0.5, 0.5, 0.5, 0.5], &[true, false, false, true]);
        assert_eq!(error_rate(&p, 0.5), 0.5);
    }

    #[test]
    fn auc_cases() {
        let y = [false, false, true, true];
        assert_eq!(auc(&set(&[0.1, 0.2, 0.8, 0.9], &y)).unwrap(), 1.0);
        assert_eq!(auc(&set(&[0.9, 0.8, 0.2, 0.1], &y)).unwrap(), 0.0);
        assert_eq!(auc(&set(&[0.3; 4], &y)).unwrap(), 0.5);
        assert!(auc(&set(&[0.3, 0.4], &[true, true])).is_err());
    }

    #[test]
    fn empty_prediction_set_rejected() {
        assert!(PredictionSet::new(vec![], vec![]).is_err());
    }

    #[test]
    fn zero_eta_predicts_half() {
        let params = ModelParams::new(array![[0.2, 0.1], [0.0, 1.0]], vec![0.0, 0.0], 1.01, 1.0).unwrap();
        let x = Document::new(vec![(0, 3)], None).unwrap();
        let p = predict_proba(&x, &params, &Embedder::Ideal(EmbedConfig::converge())).unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn single_topic_prediction_ignores_words() {
        let params = ModelParams::new(array![[0.2, 0.1]], vec![1.3], 1.01, 1.0).unwrap();
        let e = Embedder::Ideal(EmbedConfig::converge());
        for entries in [vec![(0, 3)], vec![(1, 1), (0, 9)]] {
            let x = Document::new(entries, None).unwrap();
            assert!((predict_proba(&x, &params, &e).unwrap() - sigmoid(1.3)).abs() < 1e-15);
        }
    }

    #[test]
    fn increasing_eta_along_pi_raises_score() {
        let mut params =
            ModelParams::new(array![[1.0, -1.0, 0.0], [-0.5, 0.5, 0.2]], vec![0.3, -0.2], 1.01, 1.0)
                .unwrap();
        let e = Embedder::Ideal(EmbedConfig::converge());
        let x = Document::new(vec![(0, 2), (2, 1)], None).unwrap();
        let before = predict_proba(&x, &params, &e).unwrap();
        let pi = e.embed(&x, &params.phi().unwrap(), params.alpha).unwrap();
        for (eta, p) in params.eta.iter_mut().zip(&pi) {
            *eta += 0.7 * p;
        }
        assert!(predict_proba(&x, &params, &e).unwrap() > before);
    }

    fn labeled(docs: Vec<(Vec<(usize, u32)>, bool)>, v: usize) -> Corpus {
        Corpus::new(
            Vocabulary::synthetic(v).unwrap(),
            docs.into_iter()
                .map(|(e, y)| Document::new(e, Some(y)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn bow_separable_pair() {
        let c = labeled(vec![(vec![(0, 3)], true), (vec![(1, 2)], false)], 2);
        let cfg = BowConfig {
            l2: 0.0,
            epochs: 2000,
            learn_rate: 0.1,
            ..BowConfig::default()
        };
        let m = bow_logreg_train(&c, &cfg).unwrap();
        let preds = m.predict_corpus(&c).unwrap();
        assert_eq!(error_rate(&preds, 0.5), 0.0);
    }

    #[test]
    fn bow_heavy_penalty_shrinks_weights() {
        let c = labeled(
            vec![(vec![(0, 3)], true), (vec![(1, 2)], false), (vec![(0, 1), (1, 1)], true)],
            2,
        );
        let cfg = BowConfig {
            l2: 1e6,
            epochs: 200,
            learn_rate: 0.05,
            ..BowConfig::default()
        };
        let m = bow_logreg_train(&c, &cfg).unwrap();
        assert!(m.weights.iter().all(|w| w.abs() < 1e-3));
    }

    #[test]
    fn bow_rejects_unlabeled() {
        let c = Corpus::new(
            Vocabulary::synthetic(2).unwrap(),
            vec![Document::new(vec![(0, 1)], None).unwrap()],
        )
        .unwrap();
        assert!(bow_logreg_train(&c, &BowConfig::default()).is_err());
    }

    #[test]
    fn report_formats() {
        let r = MetricsReport {
            task: "toy".into(),
            regime: "ideal".into(),
            w_x: Some(0.01),
            w_y: Some(1.0),
            k: Some(6),
            auc: Some(0.75),
            error_rate: 0.2,
            n_test: 100,
        };
        let kv = r.to_key_value();
        assert!(kv.contains("auc=0.750000\n"));
        assert!(kv.contains("n_test=100\n"));
        let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["task", "regime", "w_x", "w_y", "K", "auc", "error_rate", "n_test"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }

    fn pair_auc(scores: &[f64], labels: &[bool]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi && !yj {
                    den += 1.0;
                    num += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
        }
        num / den
    }

    fn random_set(seed: u64) -> (Vec<f64>, Vec<bool>) {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let n = rng.random_range(2..40);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        // coarse scores so ties are common
        let scores = (0..n).map(|_| f64::from(rng.random_range(0..6u32)) / 5.0).collect();
        (scores, labels)
    }

    #[test]
    fn auc_matches_pair_count() {
        for seed in 0..200 {
            let (scores, labels) = random_set(seed);
            let got = auc(&set(&scores, &labels)).unwrap();
            assert!((got - pair_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_ignores_monotone_transforms() {
        for seed in 0..50 {
            let (scores, labels) = random_set(seed);
            let base = auc(&set(&scores, &labels)).unwrap();
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            let aff: Vec<f64> = scores.iter().map(|s| 3.0 * s - 7.0).collect();
            assert_eq!(auc(&set(&exp, &labels)).unwrap(), base);
            assert_eq!(auc(&set(&aff, &labels)).unwrap(), base);
        }
    }

    #[test]
    fn error_and_accuracy_sum_to_one() {
        for seed in 0..50 {
            let (scores, labels) = random_set(seed);
            let p = set(&scores, &labels);
            let correct = scores
                .iter()
                .zip(&labels)
                .filter(|&(&s, &y)| (s >= 0.5) == y)
                .count() as f64
                / labels.len() as f64;
            assert!((error_rate(&p, 0.5) + correct - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bow_without_signal_predicts_prevalence() {
        let docs: Vec<(Vec<(usize, u32)>, bool)> =
            (0..100).map(|i| (vec![(0, 1)], i % 10 < 3)).collect();
        let c = labeled(docs, 1);
        let cfg = BowConfig {
            l2: 1e6,
            epochs: 3000,
            learn_rate: 0.5,
            ..BowConfig::default()
        };
        let m = bow_logreg_train(&c, &cfg).unwrap();
        let p = m.predict_proba(&c.documents()[0]);
        assert!((p - 0.3).abs() < 0.02, "{p}");
    }

    #[test]
    fn bow_gradient_matches_finite_differences() {
        let c = labeled(
            vec![
                (vec![(0, 3), (2, 1)], true),
                (vec![(1, 2)], false),
                (vec![(0, 1), (1, 4)], true),
                (vec![(2, 5)], false),
            ],
            3,
        );
        for log1p in [false, true] {
            let m = BowModel { weights: vec![0.2, -0.4, 0.1], bias: 0.3, log1p };
            let docs: Vec<&Document> = c.documents().iter().collect();
            let (gw, gb) = bow_data_grad(&docs, &c.labels().unwrap(), &m);
            let h = 1e-6;
            for i in 0..3 {
                let (mut a, mut b) = (m.clone(), m.clone());
                a.weights[i] += h;
                b.weights[i] -= h;
                let fd = (bow_loss(&c, &a, 0.0).unwrap() - bow_loss(&c, &b, 0.0).unwrap()) / (2.0 * h);
                assert!((gw[i] - fd).abs() < 1e-6 * fd.abs().max(1.0));
            }
            let (mut a, mut b) = (m.clone(), m.clone());
            a.bias += h;
            b.bias -= h;
            let fd = (bow_loss(&c, &a, 0.0).unwrap() - bow_loss(&c, &b, 0.0).unwrap()) / (2.0 * h);
            assert!((gb - fd).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }
}

