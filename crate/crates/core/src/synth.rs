//! Synthetic benchmark with known ground truth.
//!
//! Each question has a latent ability `p_q`. The model answers from a
//! categorical distribution putting mass `p_q` on the gold answer and the
//! rest on `D` distractors; the hidden state encodes `logit(p_q)` along a
//! fixed direction plus Gaussian noise.

use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::records::{AnnotationRecord, Extra, JudgeMeta, QuestionRecord, ResponseRecord};
use crate::seed;

pub const P_MIN: f64 = 0.01;
pub const P_MAX: f64 = 0.99;
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistractorWeights {
    #[default]
    Uniform,
    /// Distractor `j` gets weight `ratio^j` before normalization.
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_questions: usize,
    pub k: usize,
    pub d: usize,
    pub n_distractors: usize,
    pub noise_sigma: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub seed: u64,
    /// Weight of a second direction carrying `logit(p)^2`.
    pub hardness: f64,
    pub distractor_weights: DistractorWeights,
    pub dataset: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_questions: 20_000,
            k: 20,
            d: 64,
            n_distractors: 3,
            noise_sigma: 0.1,
            beta_a: 1.0,
            beta_b: 1.0,
            seed: 2024,
            hardness: 0.0,
            distractor_weights: DistractorWeights::Uniform,
            dataset: "synth".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("synth config: {msg}")));
        if self.n_questions == 0 || self.k == 0 || self.d == 0 {
            return bad("n_questions, k and d must be positive");
        }
        if self.n_distractors == 0 {
            return bad("n_distractors must be >= 1");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.beta_a > 0.0 && self.beta_b > 0.0) {
            return bad("beta_a and beta_b must be > 0");
        }
        if !self.hardness.is_finite() {
            return bad("hardness must be finite");
        }
        if let DistractorWeights::Geometric { ratio } = self.distractor_weights {
            if !(ratio > 0.0 && ratio.is_finite()) {
                return bad("geometric ratio must be > 0");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub id: String,
    pub p_q: f64,
    pub greedy_is_gold: bool,
    pub exact_greedy_match_prob: f64,
}

/// Answer masses, gold first, then the distractors.
pub fn answer_distribution(p: f64, n_distractors: usize, weights: DistractorWeights) -> Vec<f64> {
    let raw: Vec<f64> = match weights {
        DistractorWeights::Uniform => vec![1.0; n_distractors],
        DistractorWeights::Geometric { ratio } => (0..n_distractors).map(|j| ratio.powi(j as i32)).collect(),
    };
    let total: f64 = raw.iter().sum();
    let mut masses = Vec::with_capacity(n_distractors + 1);
    masses.push(p);
    masses.extend(raw.iter().map(|w| (1.0 - p) * w / total));
    masses
}

/// Index of the most likely answer; the gold answer (index 0) wins ties,
/// then the lowest distractor index.
pub fn greedy_index(masses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &m) in masses.iter().enumerate().skip(1) {
        if m > masses[best] + TIE_EPS {
            best = i;
        }
    }
    best
}

pub fn exact_self_consistency(sidecar: &SynthSidecar) -> f64 {
    sidecar.exact_greedy_match_prob
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let v: Vec<f64> = (0..d).map(|_| normal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

pub fn question_id(i: usize) -> String {
    format!("synth-{i:06}")
}

fn answer_text(i: usize, a: usize) -> String {
    if a == 0 {
        format!("gold answer {i}")
    } else {
        format!("distractor {a} for {i}")
    }
}

pub struct SynthData {
    pub records: Vec<QuestionRecord>,
    pub annotations: Vec<AnnotationRecord>,
    pub sidecars: Vec<SynthSidecar>,
}

pub fn judge_meta() -> JudgeMeta {
    JudgeMeta {
        strategy: "exact_normalized".into(),
        judge_model: "none".into(),
        prompt_version: "none".into(),
    }
}

/// Deterministic per seed; questions are generated independently from
/// per-question sub-seeds.
pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    config.validate()?;
    let mut dir_rng = seed::rng(config.seed, "direction");
    let u = unit_vector(&mut dir_rng, config.d);
    let v = unit_vector(&mut dir_rng, config.d);
    let beta = Beta::new(config.beta_a, config.beta_b).map_err(|e| Error::Config(format!("synth config: {e}")))?;
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::Config(format!("synth config: {e}")))?;

    let items: Vec<(QuestionRecord, AnnotationRecord, SynthSidecar)> = (0..config.n_questions)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::indexed_seed(config.seed, "question", i as u64));
            let p = beta.sample(&mut rng).clamp(P_MIN, P_MAX);
            let masses = answer_distribution(p, config.n_distractors, config.distractor_weights);
            let g = greedy_index(&masses);
            let sampler = WeightedIndex::new(&masses).expect("positive masses");
            let drawn: Vec<usize> = (0..config.k).map(|_| sampler.sample(&mut rng)).collect();

            let z = logit(p);
            let hidden: Vec<f64> = (0..config.d)
                .map(|j| z * u[j] + config.hardness * z * z * v[j] + noise.sample(&mut rng))
                .collect();

            let greedy_text = answer_text(i, g);
            let n_tokens = greedy_text.split_whitespace().count();
            let lp = masses[g].ln() / n_tokens as f64;
            let id = question_id(i);
            let record = QuestionRecord {
                id: id.clone(),
                dataset: config.dataset.clone(),
                model_id: "synthetic".into(),
                question: format!("Synthetic question {i}?"),
                gold_answers: vec![answer_text(i, 0)],
                greedy: ResponseRecord::new(greedy_text).with_logprobs(vec![lp; n_tokens]),
                samples: drawn.iter().map(|&a| ResponseRecord::new(answer_text(i, a))).collect(),
                hidden_state: Some(hidden),
                extra: Extra::new(),
            };
            let annotation = AnnotationRecord {
                id: id.clone(),
                consistency: drawn.iter().map(|&a| u8::from(a == g)).collect(),
                greedy_correct: Some(u8::from(g == 0)),
                sample_correct: Some(drawn.iter().map(|&a| u8::from(a == 0)).collect()),
                judge_meta: judge_meta(),
            };
            let sidecar = SynthSidecar {
                id,
                p_q: p,
                greedy_is_gold: g == 0,
                exact_greedy_match_prob: masses[g],
            };
            (record, annotation, sidecar)
        })
        .collect();

    let mut data = SynthData {
        records: Vec::with_capacity(items.len()),
        annotations: Vec::with_capacity(items.len()),
        sidecars: Vec::with_capacity(items.len()),
    };
    for (r, a, s) in items {
        data.records.push(r);
        data.annotations.push(a);
        data.sidecars.push(s);
    }
    Ok(data)
}

/// AUROC of the latent abilities against greedy correctness, by direct
/// pairwise comparison.
pub fn oracle_auroc(sidecars: &[SynthSidecar], greedy_correct: &[u8]) -> Result<f64> {
    if sidecars.len() != greedy_correct.len() {
        return Err(Error::Precondition("sidecars and labels differ in length".into()));
    }
    let pos: Vec<f64> = sidecars.iter().zip(greedy_correct).filter(|(_, &c)| c == 1).map(|(s, _)| s.p_q).collect();
    let neg: Vec<f64> = sidecars.iter().zip(greedy_correct).filter(|(_, &c)| c != 1).map(|(s, _)| s.p_q).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Precondition("AUROC undefined: labels contain a single class".into()));
    }
    let mut credit = 0.0f64;
    for &a in &pos {
        for &b in &neg {
            credit += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(credit / (pos.len() as f64 * neg.len() as f64))
}
