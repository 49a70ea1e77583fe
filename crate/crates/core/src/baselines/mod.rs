//! Training-free confidence estimators: token probability (Prob, N-Prob),
//! sample consistency (Consis-Lex, Consis-Sem) and verbalized confidence
//! (Verbal-0, Verbal-10).

pub mod rouge;

use std::sync::OnceLock;

use rand::seq::SliceRandom;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::judge::remote::ChatBackend;
use crate::records::{AnnotationRecord, ResponseRecord};
use crate::scalar::Scalar;
use crate::seed;
use crate::targets;

use rouge::rouge_l_text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Prob,
    Nprob,
    ConsisLex,
    ConsisSem,
    #[serde(rename = "verbal_0")]
    Verbal0,
    #[serde(rename = "verbal_10")]
    Verbal10,
}

impl BaselineMethod {
    pub const ALL: [BaselineMethod; 6] = [
        BaselineMethod::Prob,
        BaselineMethod::Nprob,
        BaselineMethod::ConsisLex,
        BaselineMethod::ConsisSem,
        BaselineMethod::Verbal0,
        BaselineMethod::Verbal10,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineMethod::Prob => "prob",
            BaselineMethod::Nprob => "nprob",
            BaselineMethod::ConsisLex => "consis_lex",
            BaselineMethod::ConsisSem => "consis_sem",
            BaselineMethod::Verbal0 => "verbal_0",
            BaselineMethod::Verbal10 => "verbal_10",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    pub fn is_verbal(self) -> bool {
        matches!(self, BaselineMethod::Verbal0 | BaselineMethod::Verbal10)
    }
}

pub const FLAG_VERBAL_PARSE_FAILURE: &str = "verbal_parse_failure";

/// One emitted line of the baseline score file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineScore {
    pub id: String,
    pub method: BaselineMethod,
    pub confidence: f64,
    #[serde(default)]
    pub flags: Vec<String>,
}

fn check_logprobs<T: Scalar>(logprobs: &[T]) -> Result<()> {
    if logprobs.is_empty() {
        return Err(Error::Precondition("token log-probabilities are empty".into()));
    }
    if logprobs.iter().any(|&x| x.is_nan() || x > T::zero()) {
        return Err(Error::Precondition("token log-probabilities must be <= 0".into()));
    }
    Ok(())
}

/// Product of token probabilities, accumulated in log space.
pub fn prob<T: Scalar>(logprobs: &[T]) -> Result<T> {
    check_logprobs(logprobs)?;
    Ok(logprobs.iter().copied().sum::<T>().exp())
}

/// Geometric mean of token probabilities.
pub fn nprob<T: Scalar>(logprobs: &[T]) -> Result<T> {
    check_logprobs(logprobs)?;
    let total: T = logprobs.iter().copied().sum();
    Ok((total / T::of_usize(logprobs.len())).exp())
}

/// Mean ROUGE-L F1 of each sample against the greedy response.
pub fn consis_lex<T: Scalar>(greedy: &ResponseRecord, samples: &[ResponseRecord]) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::Precondition("consis_lex needs at least one sample".into()));
    }
    let total: T = samples
        .iter()
        .map(|s| rouge_l_text::<T>(&s.text, &greedy.text).f1)
        .sum();
    Ok(total / T::of_usize(samples.len()))
}

/// Mean semantic-consistency flag; same quantity as the elicitation target.
pub fn consis_sem(annotation: &AnnotationRecord) -> Result<f64> {
    targets::self_consistency_confidence(annotation)
}

/// A worked example included in the few-shot verbal prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalShot {
    pub question: String,
    /// Confidence shown for the example, in [0, 1].
    pub confidence: f64,
}

pub const VERBAL_INSTRUCTION: &str = "\
Before answering, estimate how likely it is that you can answer the question below correctly. \
Reply only with your confidence as a percentage between 0% and 100%.";

pub fn verbal_prompt(question: &str, shots: &[VerbalShot]) -> String {
    let mut prompt = String::from(VERBAL_INSTRUCTION);
    prompt.push_str("\n\n");
    for shot in shots {
        prompt.push_str(&format!(
            "Question: {}\nConfidence: {:.0}%\n\n",
            shot.question,
            shot.confidence * 100.0
        ));
    }
    prompt.push_str(&format!("Question: {question}\nConfidence:"));
    prompt
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+(?:\.\d+)?|\.\d+").expect("valid pattern"))
}

/// First number in the reply, read as a percentage when above 1 and
/// clamped into [0, 1].
pub fn parse_verbal_confidence(reply: &str) -> Option<f64> {
    let m = number_pattern().find(reply)?;
    let mut value: f64 = m.as_str().parse().ok()?;
    if value > 1.0 {
        value /= 100.0;
    }
    Some(value.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerbalOutcome {
    pub confidence: f64,
    pub parse_failed: bool,
}

pub const VERBAL_FALLBACK: f64 = 0.5;
pub const VERBAL_RETRY_SUFFIX: &str = "Reply with a single number between 0 and 100.";

/// Asks the model under test for its confidence. Unparseable replies get
/// one retry, then fall back to 0.5 with `parse_failed` set.
pub fn verbal_confidence(question: &str, shots: &[VerbalShot], client: &dyn ChatBackend) -> Result<VerbalOutcome> {
    if !(shots.is_empty() || shots.len() == 10) {
        return Err(Error::Precondition(format!(
            "verbal baseline takes 0 or 10 shots, got {}",
            shots.len()
        )));
    }
    let prompt = verbal_prompt(question, shots);
    let transport = |e: crate::judge::remote::TransportError| Error::Unreachable {
        completed: 0,
        message: e.to_string(),
    };
    let reply = client.complete(&prompt).map_err(transport)?;
    if let Some(c) = parse_verbal_confidence(&reply) {
        return Ok(VerbalOutcome { confidence: c, parse_failed: false });
    }
    let retry = client
        .complete(&format!("{prompt}\n\n{VERBAL_RETRY_SUFFIX}"))
        .map_err(transport)?;
    Ok(match parse_verbal_confidence(&retry) {
        Some(c) => VerbalOutcome { confidence: c, parse_failed: false },
        None => VerbalOutcome {
            confidence: VERBAL_FALLBACK,
            parse_failed: true,
        },
    })
}

/// Ten exemplars drawn once per evaluation set with a fixed seed.
pub fn draw_verbal_shots(pool: &[VerbalShot], seed: u64) -> Result<Vec<VerbalShot>> {
    if pool.len() < 10 {
        return Err(Error::Precondition(format!(
            "need at least 10 exemplar candidates, have {}",
            pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| pool[a].question.cmp(&pool[b].question));
    let mut rng = seed::rng(seed, seed::streams::VERBAL_SHOTS);
    order.shuffle(&mut rng);
    Ok(order[..10].iter().map(|&i| pool[i].clone()).collect())
}
