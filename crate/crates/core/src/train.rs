//! Training regimes and the outer optimization loop.
//!
//! Every regime takes constant-step, full-batch gradient ascent steps on the
//! per-document mean of its objective (the summed objective divided by the
//! number of documents in the batch). Independent restarts are run and the
//! one with the lowest final training error is kept, ties going to the lower
//! restart index.
//!
//! Restart `r` draws from [`SeededRng`](crate::model::SeededRng) seeded with
//! `seed` and switched to stream `r`.

use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::corpus::Corpus;
use crate::embed::{eg_step, DocView, EmbedConfig};
use crate::error::{Error, Result};
use crate::eval::error_rate_from_pis;
use crate::math::{dot, sigmoid};
use crate::model::{init_params_with, seeded_rng, ModelParams, PenaltyWeights, DEFAULT_ALPHA, DEFAULT_BETA};
use crate::objective::{
    embedded_pass, objective_instantiated, softmax_rows_backward, Embedder, ObjectiveBreakdown,
    ObjectiveOptions,
};
use crate::recognition::{train_recognition, RecogTrainConfig, RecognitionParams, DEFAULT_HIDDEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Instantiated,
    Ideal,
    Approx,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Instantiated => "instantiated",
            Regime::Ideal => "ideal",
            Regime::Approx => "approx",
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "instantiated" => Ok(Regime::Instantiated),
            "ideal" => Ok(Regime::Ideal),
            "approx" => Ok(Regime::Approx),
            other => Err(Error::invalid(format!("unknown regime {other:?}"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub regime: Regime,
    pub num_topics: usize,
    pub weights: PenaltyWeights,
    pub sweeps: usize,
    pub learn_rate: f64,
    /// Exponentiated-gradient step for instantiated proportions.
    pub pi_step: f64,
    /// Exponentiated-gradient steps per document per sweep (instantiated).
    pub pi_steps_per_sweep: usize,
    /// Embedding differentiated during end-to-end training.
    pub embed_cfg: EmbedConfig,
    /// Embedding used for recognition targets and evaluation.
    pub eval_embed_cfg: EmbedConfig,
    pub recog_hidden: usize,
    pub recog_refresh: usize,
    pub recog_sample: usize,
    pub recog_epochs: usize,
    pub recog_step: f64,
    /// Differentiate the recognition network with respect to the topics.
    pub recog_phi_path: bool,
    /// Documents per gradient step in end-to-end training; `None` is full batch.
    pub batch_size: Option<usize>,
    pub init_scale: f64,
    pub alpha: f64,
    pub beta: f64,
    pub objective: ObjectiveOptions,
    pub seed: u64,
    pub restarts: usize,
    /// Record wall-clock seconds per sweep; zeros otherwise.
    pub record_timing: bool,
}

impl TrainConfig {
    pub fn new(regime: Regime, num_topics: usize, weights: PenaltyWeights) -> Self {
        Self {
            regime,
            num_topics,
            weights,
            sweeps: 100,
            learn_rate: 10.0,
            pi_step: 0.02,
            pi_steps_per_sweep: 10,
            embed_cfg: EmbedConfig::fixed_unroll(),
            eval_embed_cfg: EmbedConfig::converge(),
            recog_hidden: DEFAULT_HIDDEN,
            recog_refresh: 5,
            recog_sample: 500,
            recog_epochs: 20,
            recog_step: 0.01,
            recog_phi_path: true,
            batch_size: None,
            init_scale: 0.01,
            alpha: DEFAULT_ALPHA,
            beta: DEFAULT_BETA,
            objective: ObjectiveOptions::default(),
            seed: 0,
            restarts: 1,
            record_timing: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_topics == 0 {
            return Err(Error::invalid("need at least one topic"));
        }
        if self.sweeps == 0 {
            return Err(Error::invalid("need at least one sweep"));
        }
        if self.restarts == 0 {
            return Err(Error::invalid("need at least one restart"));
        }
        if !(self.learn_rate > 0.0 && self.learn_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.pi_step > 0.0 && self.pi_step.is_finite()) {
            return Err(Error::invalid("proportion step must be positive"));
        }
        PenaltyWeights::for_training(self.weights.w_x, self.weights.w_y)?;
        if self.regime == Regime::Instantiated && self.weights.w_x == 0.0 {
            return Err(Error::invalid(
                "instantiated training needs w_x > 0: without a word term the test-time proportions are unanchored",
            ));
        }
        self.embed_cfg.validate()?;
        self.eval_embed_cfg.validate()?;
        if self.regime != Regime::Instantiated && self.alpha < 1.0 {
            return Err(Error::invalid(
                "end-to-end training requires alpha >= 1 so the embedding objective stays concave",
            ));
        }
        if self.regime == Regime::Approx {
            if self.recog_hidden == 0 || self.recog_refresh == 0 || self.recog_sample == 0 {
                return Err(Error::invalid(
                    "recognition hidden size, refresh period and sample size must be positive",
                ));
            }
            if !(self.recog_step > 0.0) {
                return Err(Error::invalid("recognition step must be positive"));
            }
        }
        Ok(())
    }

    pub(crate) fn recog_train_config(&self, seed: u64) -> RecogTrainConfig {
        RecogTrainConfig {
            epochs: self.recog_epochs,
            step_size: self.recog_step,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub sweep: usize,
    pub breakdown: ObjectiveBreakdown,
    pub train_error: f64,
    pub seconds: f64,
}

/// Mean KL of the recognition network on its sample before and after a refresh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefreshRecord {
    pub sweep: usize,
    pub kl_before: f64,
    pub kl_after: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainTrace {
    /// One record per sweep, each describing the state entering that sweep.
    pub records: Vec<SweepRecord>,
    pub refreshes: Vec<RefreshRecord>,
    /// State after the last sweep.
    pub final_breakdown: ObjectiveBreakdown,
    pub final_train_error: f64,
    pub selected_restart: usize,
    /// Final training error of every restart.
    pub restart_errors: Vec<f64>,
}

impl TrainTrace {
    /// Tab-separated lines: sweep, total, label_term, word_term, train_err, seconds.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.6}\t{:.6}\n",
                r.sweep,
                r.breakdown.total,
                r.breakdown.label_term,
                r.breakdown.word_term,
                r.train_error,
                r.seconds
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub recog: Option<RecognitionParams>,
    /// Per-document proportions (instantiated regime only).
    pub pis: Option<Vec<Vec<f64>>>,
    pub trace: TrainTrace,
}

fn restart_rng(seed: u64, restart: usize) -> crate::model::SeededRng {
    let mut rng = seeded_rng(seed);
    rng.set_stream(restart as u64);
    rng
}

fn check_corpus(corpus: &Corpus, cfg: &TrainConfig) -> Result<()> {
    if corpus.is_empty() {
        return Err(Error::invalid("training corpus is empty"));
    }
    if let Some(d) = corpus.documents().iter().position(|d| d.token_total() == 0) {
        return Err(Error::invalid(format!("document {d} has no tokens")));
    }
    if cfg.weights.w_y > 0.0 && !corpus.is_fully_labeled() {
        return Err(Error::invalid(
            "label weight is positive but the corpus has unlabeled documents",
        ));
    }
    Ok(())
}

fn select_best(outcomes: Vec<TrainOutcome>) -> TrainOutcome {
    let errors: Vec<f64> = outcomes.iter().map(|o| o.trace.final_train_error).collect();
    let mut best = 0;
    for (i, &e) in errors.iter().enumerate() {
        if e < errors[best] {
            best = i;
        }
    }
    let mut chosen = outcomes.into_iter().nth(best).expect("at least one restart");
    chosen.trace.selected_restart = best;
    chosen.trace.restart_errors = errors;
    chosen
}

fn check_finite(params: &ModelParams) -> Result<()> {
    if params.is_finite() {
        Ok(())
    } else {
        Err(Error::numerical("parameters became non-finite during training"))
    }
}

fn labels_or_default(corpus: &Corpus) -> Vec<bool> {
    corpus
        .documents()
        .iter()
        .map(|d| d.label().unwrap_or(false))
        .collect()
}

fn train_error(corpus: &Corpus, pis: &[Vec<f64>], eta: &[f64]) -> f64 {
    if corpus.is_fully_labeled() {
        error_rate_from_pis(pis, &labels_or_default(corpus), eta)
    } else {
        f64::NAN
    }
}

/// Instantiated-proportion training: alternating exponentiated-gradient
/// updates of every document's proportions, one ascent step on the topic
/// logits and one on the regression weights per sweep.
pub fn train_instantiated(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_corpus(corpus, cfg)?;
    let outcomes = (0..cfg.restarts)
        .map(|r| instantiated_run(corpus, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_best(outcomes))
}

fn instantiated_run(corpus: &Corpus, cfg: &TrainConfig, restart: usize) -> Result<TrainOutcome> {
    let mut rng = restart_rng(cfg.seed, restart);
    let k = cfg.num_topics;
    let v = corpus.vocab_size();
    let mut params = init_params_with(k, v, &mut rng, cfg.init_scale, cfg.alpha, cfg.beta)?;
    let n_docs = corpus.len() as f64;
    let w = cfg.weights;
    let mut pis = vec![vec![1.0 / k as f64; k]; corpus.len()];
    let mut records = Vec::with_capacity(cfg.sweeps);

    for sweep in 0..cfg.sweeps {
        let start = Instant::now();
        let breakdown = objective_instantiated(corpus, &params, &pis, &w, &cfg.objective)?;
        let err = train_error(corpus, &pis, &params.eta);
        let phi = params.phi()?;

        // (1) proportions
        let eta = &params.eta;
        pis = corpus
            .documents()
            .par_iter()
            .zip(pis.par_iter())
            .map(|(x, pi)| -> Result<Vec<f64>> {
                let view = DocView::new(x, &phi)?;
                let mut cur = pi.clone();
                let mut next = vec![0.0; k];
                let mut grad = vec![0.0; k];
                let label = if w.w_y > 0.0 { x.label() } else { None };
                for _ in 0..cfg.pi_steps_per_sweep {
                    view.log_lik_grad(&cur, &mut grad);
                    for (g, p) in grad.iter_mut().zip(&cur) {
                        *g = w.w_x * (*g + (params.alpha - 1.0) / p);
                    }
                    if let Some(y) = label {
                        let r = w.w_y * (f64::from(u8::from(y)) - sigmoid(dot(eta, &cur)));
                        for (g, e) in grad.iter_mut().zip(eta) {
                            *g += r * e;
                        }
                    }
                    eg_step(&cur, &grad, cfg.pi_step, &mut next)?;
                    std::mem::swap(&mut cur, &mut next);
                }
                Ok(cur)
            })
            .collect::<Result<Vec<_>>>()?;

        // (2) topics at fixed proportions
        if w.w_x > 0.0 {
            let per_doc = corpus
                .documents()
                .par_iter()
                .zip(pis.par_iter())
                .map(|(x, pi)| -> Result<(Vec<usize>, Vec<f64>)> {
                    let view = DocView::new(x, &phi)?;
                    let mut mix = Vec::new();
                    view.mixture(pi, &mut mix);
                    let mut d = Vec::with_capacity(view.nnz() * k);
                    for (i, m) in mix.iter().enumerate() {
                        let r = view.counts[i] / m;
                        d.extend(pi.iter().map(|p| r * p));
                    }
                    Ok((view.ids, d))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut d_phi = Array2::<f64>::zeros((k, v));
            for (ids, d) in &per_doc {
                for (i, &id) in ids.iter().enumerate() {
                    for t in 0..k {
                        d_phi[[t, id]] += d[i * k + t];
                    }
                }
            }
            if cfg.objective.phi_prior && params.beta != 1.0 {
                let c = params.beta - 1.0;
                d_phi.zip_mut_with(&phi, |g, p| *g += c / p);
            }
            let d_logits = softmax_rows_backward(&phi, &d_phi);
            let scale = cfg.learn_rate * w.w_x / n_docs;
            params
                .topic_logits
                .zip_mut_with(&d_logits, |l, g| *l += scale * g);
        }

        // (3) regression weights at fixed proportions
        if w.w_y > 0.0 {
            let mut d_eta = vec![0.0; k];
            for (x, pi) in corpus.documents().iter().zip(&pis) {
                if let Some(y) = x.label() {
                    let r = f64::from(u8::from(y)) - sigmoid(dot(&params.eta, pi));
                    for (g, p) in d_eta.iter_mut().zip(pi) {
                        *g += r * p;
                    }
                }
            }
            let scale = cfg.learn_rate * w.w_y / n_docs;
            for (e, g) in params.eta.iter_mut().zip(&d_eta) {
                *e += scale * g;
            }
        }
        check_finite(&params)?;
        records.push(SweepRecord {
            sweep,
            breakdown,
            train_error: err,
            seconds: if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }
    let final_breakdown = objective_instantiated(corpus, &params, &pis, &w, &cfg.objective)?;
    let final_train_error = train_error(corpus, &pis, &params.eta);
    Ok(TrainOutcome {
        params,
        recog: None,
        pis: Some(pis),
        trace: TrainTrace {
            records,
            refreshes: Vec::new(),
            final_breakdown,
            final_train_error,
            selected_restart: restart,
            restart_errors: Vec::new(),
        },
    })
}

/// End-to-end training through the MAP embedding (ideal) or a recognition
/// network refreshed every `recog_refresh` sweeps (approx).
pub fn train_end_to_end(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if cfg.regime == Regime::Instantiated {
        return Err(Error::invalid("end-to-end training needs the ideal or approx regime"));
    }
    cfg.validate()?;
    check_corpus(corpus, cfg)?;
    let outcomes = (0..cfg.restarts)
        .map(|r| end_to_end_run(corpus, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(select_best(outcomes))
}

/// Dispatches on `cfg.regime`.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    match cfg.regime {
        Regime::Instantiated => train_instantiated(corpus, cfg),
        Regime::Ideal | Regime::Approx => train_end_to_end(corpus, cfg),
    }
}

fn refresh_recognition<R: Rng>(
    corpus: &Corpus,
    params: &ModelParams,
    lam: &RecognitionParams,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<crate::recognition::RecogTrainReport> {
    let m = cfg.recog_sample.min(corpus.len());
    let mut idx = sample(rng, corpus.len(), m).into_vec();
    idx.sort_unstable();
    let docs: Vec<_> = idx.iter().map(|&i| corpus.documents()[i].clone()).collect();
    let phi = params.phi()?;
    let seed = rng.next_u64();
    train_recognition(
        &docs,
        &phi,
        params.alpha,
        lam,
        &cfg.eval_embed_cfg,
        &cfg.recog_train_config(seed),
    )
}

fn end_to_end_run(corpus: &Corpus, cfg: &TrainConfig, restart: usize) -> Result<TrainOutcome> {
    let mut rng = restart_rng(cfg.seed, restart);
    let k = cfg.num_topics;
    let v = corpus.vocab_size();
    let mut params = init_params_with(k, v, &mut rng, cfg.init_scale, cfg.alpha, cfg.beta)?;
    let mut lam = match cfg.regime {
        Regime::Approx => Some(RecognitionParams::init(cfg.recog_hidden, v, k, &mut rng)?),
        _ => None,
    };
    let n = corpus.len();
    let batch = cfg.batch_size.unwrap_or(n).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut records = Vec::with_capacity(cfg.sweeps);
    let mut refreshes = Vec::new();

    for sweep in 0..cfg.sweeps {
        let start = Instant::now();
        if let Some(current) = lam.as_ref() {
            if sweep % cfg.recog_refresh == 0 {
                let report = refresh_recognition(corpus, &params, current, cfg, &mut rng)?;
                refreshes.push(RefreshRecord {
                    sweep,
                    kl_before: report.initial_kl,
                    kl_after: report.final_kl,
                });
                lam = Some(report.params);
            }
        }
        let embedder = embedder_for(cfg, lam.as_ref());
        let mut breakdown = ObjectiveBreakdown::default();
        let mut pis = vec![Vec::new(); n];
        if batch < n {
            use rand::seq::SliceRandom;
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let sub;
            let target = if chunk.len() == n {
                corpus
            } else {
                sub = corpus.subset(chunk);
                &sub
            };
            let pass = embedded_pass(target, &params, &cfg.weights, &embedder, &cfg.objective, true)?;
            accumulate(&mut breakdown, &pass.breakdown);
            for (&d, pi) in chunk.iter().zip(pass.pis) {
                pis[d] = pi;
            }
            let scale = cfg.learn_rate / chunk.len() as f64;
            let d_logits = pass.d_logits.expect("gradients requested");
            let d_eta = pass.d_eta.expect("gradients requested");
            params
                .topic_logits
                .zip_mut_with(&d_logits, |l, g| *l += scale * g);
            for (e, g) in params.eta.iter_mut().zip(&d_eta) {
                *e += scale * g;
            }
            check_finite(&params)?;
        }
        if batch < n {
            // Batches each counted the topic prior once.
            let batches = n.div_ceil(batch) as f64;
            breakdown.phi_prior_term /= batches;
            breakdown.total = cfg.weights.w_y * breakdown.label_term
                + cfg.weights.w_x * (breakdown.word_term + breakdown.phi_prior_term);
        }
        records.push(SweepRecord {
            sweep,
            breakdown,
            train_error: train_error(corpus, &pis, &params.eta),
            seconds: if cfg.record_timing {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }
    let embedder = embedder_for(cfg, lam.as_ref());
    let last = embedded_pass(corpus, &params, &cfg.weights, &embedder, &cfg.objective, false)?;
    let final_train_error = train_error(corpus, &last.pis, &params.eta);
    Ok(TrainOutcome {
        params,
        recog: lam,
        pis: None,
        trace: TrainTrace {
            records,
            refreshes,
            final_breakdown: last.breakdown,
            final_train_error,
            selected_restart: restart,
            restart_errors: Vec::new(),
        },
    })
}

fn embedder_for<'a>(cfg: &TrainConfig, lam: Option<&'a RecognitionParams>) -> Embedder<'a> {
    match lam {
        Some(params) => Embedder::Approx {
            params,
            phi_path: cfg.recog_phi_path,
        },
        None => Embedder::Ideal(cfg.embed_cfg),
    }
}

fn accumulate(into: &mut ObjectiveBreakdown, part: &ObjectiveBreakdown) {
    into.label_term += part.label_term;
    into.word_term += part.word_term;
    into.pi_prior_term += part.pi_prior_term;
    into.phi_prior_term += part.phi_prior_term;
    into.total += part.total;
}

/// Embedder used at test time for a model trained under `regime`: the
/// converged MAP embedding, or the recognition network when one is given.
pub fn test_embedder<'a>(
    eval_cfg: &EmbedConfig,
    recog: Option<&'a RecognitionParams>,
) -> Embedder<'a> {
    match recog {
        Some(params) => Embedder::Approx {
            params,
            phi_path: false,
        },
        None => Embedder::Ideal(*eval_cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Vocabulary};
    use crate::export::total_variation;
    use crate::toybars::{generate, ToyBarsConfig};

    fn toy_corpus(n: usize, seed: u64) -> Corpus {
        let cfg = ToyBarsConfig {
            grid_side: 6,
            n_docs: n,
            tokens_per_doc: 30,
            test_fraction: 0.0,
            seed,
            ..Default::default()
        };
        generate(&cfg).unwrap().train
    }

    fn small(regime: Regime, k: usize, w_x: f64, w_y: f64) -> TrainConfig {
        let mut cfg = TrainConfig::new(regime, k, PenaltyWeights::new(w_x, w_y).unwrap());
        cfg.sweeps = 20;
        cfg.embed_cfg = EmbedConfig::fixed_unroll().with_max_iters(40).with_step_size(0.02);
        cfg.record_timing = false;
        cfg
    }

    #[test]
    fn instantiated_objective_non_decreasing_at_small_steps() {
        let c = toy_corpus(40, 3);
        let mut cfg = small(Regime::Instantiated, 3, 1.0, 0.0);
        cfg.sweeps = 60;
        cfg.learn_rate = 0.05;
        cfg.pi_step = 0.005;
        cfg.init_scale = 1.0;
        let out = train(&c, &cfg).unwrap();
        let mut totals: Vec<f64> = out.trace.records.iter().map(|r| r.breakdown.total).collect();
        totals.push(out.trace.final_breakdown.total);
        for w in totals.windows(2) {
            assert!(w[1] >= w[0] - 1e-6, "{} then {}", w[0], w[1]);
        }
        assert!(totals.last().unwrap() > totals.first().unwrap());
    }

    #[test]
    fn runs_are_deterministic() {
        let c = toy_corpus(30, 5);
        for regime in [Regime::Instantiated, Regime::Ideal, Regime::Approx] {
            let mut cfg = small(regime, 3, 1.0, 1.0);
            cfg.sweeps = 4;
            cfg.recog_refresh = 2;
            cfg.recog_sample = 10;
            cfg.recog_epochs = 2;
            cfg.restarts = 2;
            let a = train(&c, &cfg).unwrap();
            let b = train(&c, &cfg).unwrap();
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.params, b.params);
            assert_eq!(a.recog, b.recog);
            assert_eq!(a.trace.records.len(), 4);
        }
    }

    #[test]
    fn restart_selection_takes_lowest_error() {
        let c = toy_corpus(40, 8);
        let mut cfg = small(Regime::Instantiated, 3, 1.0, 1.0);
        cfg.restarts = 3;
        cfg.init_scale = 2.0;
        let out = train(&c, &cfg).unwrap();
        let errs = &out.trace.restart_errors;
        assert_eq!(errs.len(), 3);
        let best = out.trace.selected_restart;
        assert_eq!(out.trace.final_train_error, errs[best]);
        for (i, &e) in errs.iter().enumerate() {
            assert!(errs[best] < e || (errs[best] == e && best <= i));
        }
    }

    #[test]
    fn restart_zero_matches_single_run() {
        let c = toy_corpus(20, 2);
        let mut cfg = small(Regime::Instantiated, 2, 1.0, 0.0);
        let one = train(&c, &cfg).unwrap();
        cfg.restarts = 3;
        let three = train(&c, &cfg).unwrap();
        // w_y = 0 keeps eta at zero, so every restart ties and the first wins.
        assert_eq!(three.trace.selected_restart, 0);
        assert_eq!(one.params, three.params);
    }

    #[test]
    fn single_topic_recovers_empirical_distribution() {
        let c = toy_corpus(50, 11);
        let v = c.vocab_size();
        let mut counts = vec![0.0; v];
        for d in c.documents() {
            for &(id, n) in d.entries() {
                counts[id] += f64::from(n);
            }
        }
        let total: f64 = counts.iter().sum();
        let empirical: Vec<f64> = counts.iter().map(|x| x / total).collect();
        let mut cfg = small(Regime::Ideal, 1, 1.0, 0.0);
        cfg.sweeps = 200;
        cfg.learn_rate = 1.0;
        let out = train(&c, &cfg).unwrap();
        let phi = out.params.phi().unwrap();
        let tv = total_variation(phi.row(0).as_slice().unwrap(), &empirical);
        assert!(tv <= 0.05, "tv {tv}");
    }

    #[test]
    fn unsupervised_ideal_has_zero_label_term() {
        let c = toy_corpus(20, 4);
        let out = train(&c, &small(Regime::Ideal, 2, 1.0, 0.0)).unwrap();
        assert!(out.trace.records.iter().all(|r| r.breakdown.label_term == 0.0));
        assert_eq!(out.params.eta, vec![0.0; 2]);
    }

    #[test]
    fn approx_refresh_never_increases_kl() {
        let c = toy_corpus(15, 6);
        let mut cfg = small(Regime::Approx, 3, 1.0, 1.0);
        cfg.sweeps = 6;
        cfg.recog_refresh = 1;
        cfg.recog_sample = 15;
        cfg.recog_epochs = 3;
        cfg.recog_hidden = 8;
        let out = train(&c, &cfg).unwrap();
        assert_eq!(out.trace.refreshes.len(), 6);
        for r in &out.trace.refreshes {
            assert!(r.kl_after <= r.kl_before, "{r:?}");
        }
        assert!(out.recog.is_some());
    }

    #[test]
    fn traces_are_finite_and_sized() {
        let c = toy_corpus(20, 9);
        for regime in [Regime::Instantiated, Regime::Ideal, Regime::Approx] {
            let mut cfg = small(regime, 2, 0.5, 1.0);
            cfg.sweeps = 5;
            cfg.recog_sample = 10;
            cfg.recog_epochs = 2;
            let out = train(&c, &cfg).unwrap();
            assert_eq!(out.trace.records.len(), 5);
            assert!(out.params.is_finite());
            for r in &out.trace.records {
                assert!(r.breakdown.total.is_finite() && r.train_error.is_finite());
                assert_eq!(r.seconds, 0.0);
            }
            assert_eq!(out.trace.to_tsv().lines().count(), 5);
        }
    }

    #[test]
    fn minibatches_cover_the_corpus() {
        let c = toy_corpus(20, 1);
        let mut cfg = small(Regime::Ideal, 2, 1.0, 1.0);
        cfg.batch_size = Some(7);
        cfg.sweeps = 3;
        let out = train(&c, &cfg).unwrap();
        assert!(out.params.is_finite());
    }

    #[test]
    fn invalid_configs_rejected() {
        let c = toy_corpus(10, 1);
        let mut cfg = small(Regime::Instantiated, 2, 0.0, 1.0);
        assert!(train(&c, &cfg).is_err());
        cfg.regime = Regime::Ideal;
        assert!(train(&c, &cfg).is_ok());
        cfg.weights = PenaltyWeights::new(0.0, 0.0).unwrap();
        assert!(train(&c, &cfg).is_err());
        let mut cfg = small(Regime::Ideal, 2, 1.0, 0.0);
        cfg.alpha = 0.5;
        assert!(train(&c, &cfg).is_err());
        cfg.regime = Regime::Instantiated;
        assert!(train(&c, &cfg).is_ok());
        cfg.sweeps = 0;
        assert!(train(&c, &cfg).is_err());
    }

    #[test]
    fn unlabeled_corpus_needs_zero_label_weight() {
        let docs = vec![Document::new(vec![(0, 2), (1, 1)], None).unwrap()];
        let c = Corpus::new(Vocabulary::synthetic(2).unwrap(), docs).unwrap();
        assert!(train(&c, &small(Regime::Ideal, 2, 1.0, 1.0)).is_err());
        let out = train(&c, &small(Regime::Ideal, 2, 1.0, 0.0)).unwrap();
        assert!(out.trace.final_train_error.is_nan());
    }

    #[test]
    fn regime_names_round_trip() {
        for r in [Regime::Instantiated, Regime::Ideal, Regime::Approx] {
            assert_eq!(r.to_string().parse::<Regime>().unwrap(), r);
        }
        assert!("exact".parse::<Regime>().is_err());
    }
}
