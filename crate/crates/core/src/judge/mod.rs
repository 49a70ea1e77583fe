//! Binary consistency and correctness verdicts.
//!
//! Three strategies are available: normalized exact match, a ROUGE-L F1
//! threshold, and a remote LLM judge reached over a chat-completions
//! endpoint. Every strategy first short-circuits on normalized equality,
//! so exact agreement is always a 1 and never costs a remote call.

pub mod cache;
pub mod remote;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::rouge::rouge_l_text;
use crate::error::{Error, Result};
use crate::records::{AnnotationRecord, JudgeMeta, QuestionRecord};

use cache::{content_hash, CacheEntry, VerdictCache};
use remote::{ChatBackend, ChatEndpoint, HttpChat, TransportError};

pub const RETRY_SUFFIX: &str = "Answer Yes or No only.";

pub const DEFAULT_CONSISTENCY_PROMPT: &str = "\
You are judging whether two answers to the same question are semantically consistent, \
i.e. whether they express the same final answer.

Question: {question}
Answer A: {response}
Answer B: {reference}

Are Answer A and Answer B semantically consistent? Reply with Yes or No.";

pub const DEFAULT_CORRECTNESS_PROMPT: &str = "\
You are judging whether a generated answer to a question is correct.

Question: {question}
Ground-truth answers: {gold_answers}
Generated answer: {response}

Does the generated answer match any of the ground-truth answers? Reply with Yes or No.";

/// Lowercase, strip punctuation, drop a leading article, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    let mut tokens: Vec<&str> = lowered.split_whitespace().collect();
    if matches!(tokens.first(), Some(&("a" | "an" | "the"))) {
        tokens.remove(0);
    }
    tokens.join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JudgeStrategy {
    ExactNormalized,
    LexicalThreshold { threshold: f64 },
    RemoteLlm,
}

impl JudgeStrategy {
    pub fn name(&self) -> String {
        match self {
            JudgeStrategy::ExactNormalized => "exact_normalized".into(),
            JudgeStrategy::LexicalThreshold { threshold } => format!("lexical_threshold({threshold})"),
            JudgeStrategy::RemoteLlm => "remote_llm".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let JudgeStrategy::LexicalThreshold { threshold } = self {
            if !(0.0..=1.0).contains(threshold) {
                return Err(Error::Config(format!(
                    "lexical threshold {threshold} outside [0, 1]"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeConfig {
    #[serde(default)]
    pub endpoint_url: String,
    #[serde(default)]
    pub judge_model: String,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub cache_path: Option<PathBuf>,
    #[serde(default = "default_consistency_prompt")]
    pub consistency_prompt: String,
    #[serde(default = "default_correctness_prompt")]
    pub correctness_prompt: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_parallel() -> usize {
    4
}
fn default_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    1000
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_consistency_prompt() -> String {
    DEFAULT_CONSISTENCY_PROMPT.into()
}
fn default_correctness_prompt() -> String {
    DEFAULT_CORRECTNESS_PROMPT.into()
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint_url: String::new(),
            judge_model: String::new(),
            max_parallel: default_parallel(),
            max_retries: default_retries(),
            cache_path: None,
            consistency_prompt: default_consistency_prompt(),
            correctness_prompt: default_correctness_prompt(),
            temperature: 0.0,
            backoff_ms: default_backoff_ms(),
            timeout_secs: default_timeout_secs(),
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::Config("judge.max_parallel must be >= 1".into()));
        }
        for placeholder in ["{response}", "{reference}"] {
            if !self.consistency_prompt.contains(placeholder) {
                return Err(Error::Config(format!(
                    "consistency prompt lacks placeholder {placeholder}"
                )));
            }
        }
        for placeholder in ["{response}", "{gold_answers}"] {
            if !self.correctness_prompt.contains(placeholder) {
                return Err(Error::Config(format!(
                    "correctness prompt lacks placeholder {placeholder}"
                )));
            }
        }
        Ok(())
    }

    pub fn endpoint(&self) -> ChatEndpoint {
        ChatEndpoint {
            endpoint_url: self.endpoint_url.clone(),
            model: self.judge_model.clone(),
            temperature: self.temperature,
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            timeout_secs: self.timeout_secs,
        }
    }

    pub fn prompt_version(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.consistency_prompt.as_bytes());
        h.update([0]);
        h.update(self.correctness_prompt.as_bytes());
        hex::encode(&h.finalize()[..6])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictSource {
    Cache,
    Computed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub value: u8,
    pub source: VerdictSource,
    pub raw_reply: Option<String>,
}

impl JudgeVerdict {
    fn computed(value: bool) -> Self {
        Self {
            value: value as u8,
            source: VerdictSource::Computed,
            raw_reply: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParsedReply {
    Yes,
    No,
    Unparseable,
}

/// Reads a leading yes/no token, ignoring case and punctuation.
pub fn parse_yes_no(reply: &str) -> ParsedReply {
    let cleaned: String = reply
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    match cleaned.split_whitespace().next() {
        Some("yes") => ParsedReply::Yes,
        Some("no") => ParsedReply::No,
        _ => ParsedReply::Unparseable,
    }
}

/// Verdict for the non-remote strategies; `None` means a remote call is needed.
pub fn local_consistency(response: &str, greedy: &str, strategy: &JudgeStrategy) -> Option<u8> {
    let (a, b) = (normalize_answer(response), normalize_answer(greedy));
    if a == b {
        return Some(1);
    }
    match strategy {
        JudgeStrategy::ExactNormalized => Some(0),
        JudgeStrategy::LexicalThreshold { threshold } => {
            Some((rouge_l_text::<f64>(response, greedy).f1 >= *threshold) as u8)
        }
        JudgeStrategy::RemoteLlm => None,
    }
}

pub fn local_correctness(response: &str, gold: &[String], strategy: &JudgeStrategy) -> Option<u8> {
    let norm = normalize_answer(response);
    if gold.iter().any(|g| normalize_answer(g) == norm) {
        return Some(1);
    }
    match strategy {
        JudgeStrategy::ExactNormalized => Some(0),
        JudgeStrategy::LexicalThreshold { threshold } => Some(
            gold.iter()
                .any(|g| rouge_l_text::<f64>(response, g).f1 >= *threshold) as u8,
        ),
        JudgeStrategy::RemoteLlm => None,
    }
}

fn render(template: &str, fields: &[(&str, &str)]) -> String {
    fields
        .iter()
        .fold(template.to_string(), |acc, (key, value)| acc.replace(&format!("{{{key}}}"), value))
}

/// One remote question to the judge, identified by content hash.
#[derive(Debug, Clone)]
struct RemoteJob {
    hash: String,
    prompt: String,
    question_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotateStats {
    pub pair_verdicts: usize,
    pub short_circuits: usize,
    pub cache_hits: usize,
    pub remote_calls: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnotatePasses {
    pub consistency: bool,
    pub correctness: bool,
}

impl Default for AnnotatePasses {
    fn default() -> Self {
        Self {
            consistency: true,
            correctness: true,
        }
    }
}

pub struct Judge {
    strategy: JudgeStrategy,
    config: JudgeConfig,
    backend: Option<Box<dyn ChatBackend>>,
    cache: VerdictCache,
    remote_calls: AtomicUsize,
}

impl Judge {
    pub fn new(strategy: JudgeStrategy, config: JudgeConfig) -> Result<Self> {
        strategy.validate()?;
        config.validate()?;
        let backend: Option<Box<dyn ChatBackend>> = match strategy {
            JudgeStrategy::RemoteLlm => {
                if config.endpoint_url.is_empty() {
                    return Err(Error::Config("remote judge requires judge.endpoint_url".into()));
                }
                Some(Box::new(HttpChat::new(config.endpoint())))
            }
            _ => None,
        };
        let cache = match &config.cache_path {
            Some(p) => VerdictCache::open(p)?,
            None => VerdictCache::in_memory(),
        };
        Ok(Self {
            strategy,
            config,
            backend,
            cache,
            remote_calls: AtomicUsize::new(0),
        })
    }

    /// Remote judge over a caller-supplied backend.
    pub fn with_backend(config: JudgeConfig, backend: Box<dyn ChatBackend>) -> Result<Self> {
        let mut judge = Self::new(JudgeStrategy::ExactNormalized, config)?;
        judge.strategy = JudgeStrategy::RemoteLlm;
        judge.backend = Some(backend);
        Ok(judge)
    }

    pub fn strategy(&self) -> &JudgeStrategy {
        &self.strategy
    }

    pub fn remote_calls(&self) -> usize {
        self.remote_calls.load(Ordering::SeqCst)
    }

    pub fn meta(&self) -> JudgeMeta {
        match self.strategy {
            JudgeStrategy::RemoteLlm => JudgeMeta {
                strategy: self.strategy.name(),
                judge_model: self.config.judge_model.clone(),
                prompt_version: self.config.prompt_version(),
            },
            _ => JudgeMeta {
                strategy: self.strategy.name(),
                judge_model: "none".into(),
                prompt_version: "none".into(),
            },
        }
    }

    fn consistency_job(&self, id: &str, question: &str, response: &str, greedy: &str) -> RemoteJob {
        let template = &self.config.consistency_prompt;
        RemoteJob {
            hash: content_hash(&["consistency", &self.config.judge_model, template, question, response, greedy]),
            prompt: render(template, &[("question", question), ("response", response), ("reference", greedy)]),
            question_id: id.to_string(),
        }
    }

    fn correctness_job(&self, id: &str, question: &str, response: &str, gold: &[String]) -> RemoteJob {
        let template = &self.config.correctness_prompt;
        let gold_list = serde_json::to_string(gold).expect("strings serialize");
        RemoteJob {
            hash: content_hash(&["correctness", &self.config.judge_model, template, question, response, &gold_list]),
            prompt: render(
                template,
                &[("question", question), ("response", response), ("gold_answers", &gold.join(" | "))],
            ),
            question_id: id.to_string(),
        }
    }

    fn run_remote(&self, job: &RemoteJob) -> Result<JudgeVerdict> {
        if let Some(hit) = self.cache.get(&job.hash) {
            return Ok(JudgeVerdict {
                value: hit.verdict,
                source: VerdictSource::Cache,
                raw_reply: hit.raw_reply,
            });
        }
        let backend = self.backend.as_ref().expect("remote strategy has a backend");
        let ask = |prompt: &str| -> Result<String> {
            self.remote_calls.fetch_add(1, Ordering::SeqCst);
            backend.complete(prompt).map_err(|e| match e {
                TransportError::Exhausted { .. } => Error::Unreachable {
                    completed: 0,
                    message: e.to_string(),
                },
                TransportError::Body(_) => Error::Judge {
                    id: job.question_id.clone(),
                    message: e.to_string(),
                },
            })
        };
        let mut reply = ask(&job.prompt)?;
        let mut parsed = parse_yes_no(&reply);
        if parsed == ParsedReply::Unparseable {
            reply = ask(&format!("{}\n\n{RETRY_SUFFIX}", job.prompt))?;
            parsed = parse_yes_no(&reply);
        }
        let value = match parsed {
            ParsedReply::Yes => 1,
            ParsedReply::No => 0,
            ParsedReply::Unparseable => {
                return Err(Error::Judge {
                    id: job.question_id.clone(),
                    message: format!("unparseable judge reply {reply:?}"),
                })
            }
        };
        self.cache.insert(CacheEntry {
            hash: job.hash.clone(),
            verdict: value,
            raw_reply: Some(reply.clone()),
        })?;
        Ok(JudgeVerdict {
            value,
            source: VerdictSource::Computed,
            raw_reply: Some(reply),
        })
    }

    pub fn judge_consistency(&self, id: &str, question: &str, response: &str, greedy: &str) -> Result<JudgeVerdict> {
        match local_consistency(response, greedy, &self.strategy) {
            Some(v) => Ok(JudgeVerdict::computed(v == 1)),
            None => self.run_remote(&self.consistency_job(id, question, response, greedy)),
        }
    }

    pub fn judge_correctness(&self, id: &str, question: &str, response: &str, gold: &[String]) -> Result<JudgeVerdict> {
        if gold.is_empty() {
            return Err(Error::Precondition(format!(
                "question `{id}` has no gold answers to judge against"
            )));
        }
        match local_correctness(response, gold, &self.strategy) {
            Some(v) => Ok(JudgeVerdict::computed(v == 1)),
            None => self.run_remote(&self.correctness_job(id, question, response, gold)),
        }
    }

    /// One annotation per question, in input order.
    ///
    /// Remote pairs are deduplicated by content hash and resolved with up to
    /// `max_parallel` requests in flight; the result does not depend on the
    /// order in which they complete.
    pub fn annotate_dataset(
        &self,
        records: &[QuestionRecord],
        passes: AnnotatePasses,
    ) -> Result<(Vec<AnnotationRecord>, AnnotateStats)> {
        let mut stats = AnnotateStats::default();
        let mut pending: BTreeMap<String, RemoteJob> = BTreeMap::new();
        // Per-record slots: Ok(verdict) or Err(hash) awaiting a remote verdict.
        type Slot = std::result::Result<u8, String>;
        let mut plan: Vec<(Vec<Slot>, Option<Slot>, Option<Vec<Slot>>)> = Vec::with_capacity(records.len());

        let mut resolve = |local: Option<u8>, job: &dyn Fn() -> RemoteJob, stats: &mut AnnotateStats| -> Slot {
            stats.pair_verdicts += 1;
            match local {
                Some(v) => {
                    if v == 1 && self.strategy == JudgeStrategy::RemoteLlm {
                        stats.short_circuits += 1;
                    }
                    Ok(v)
                }
                None => {
                    let job = job();
                    let hash = job.hash.clone();
                    pending.entry(hash.clone()).or_insert(job);
                    Err(hash)
                }
            }
        };

        for rec in records {
            if rec.samples.is_empty() {
                return Err(Error::Precondition(format!("question `{}` has no samples", rec.id)));
            }
            let consistency: Vec<Slot> = if passes.consistency {
                rec.samples
                    .iter()
                    .map(|s| {
                        resolve(
                            local_consistency(&s.text, &rec.greedy.text, &self.strategy),
                            &|| self.consistency_job(&rec.id, &rec.question, &s.text, &rec.greedy.text),
                            &mut stats,
                        )
                    })
                    .collect()
            } else {
                Vec::new()
            };
            let labeled = passes.correctness && !rec.gold_answers.is_empty();
            let (greedy_correct, sample_correct) = if labeled {
                let gold = &rec.gold_answers;
                let g = resolve(
                    local_correctness(&rec.greedy.text, gold, &self.strategy),
                    &|| self.correctness_job(&rec.id, &rec.question, &rec.greedy.text, gold),
                    &mut stats,
                );
                let s: Vec<Slot> = rec
                    .samples
                    .iter()
                    .map(|s| {
                        resolve(
                            local_correctness(&s.text, gold, &self.strategy),
                            &|| self.correctness_job(&rec.id, &rec.question, &s.text, gold),
                            &mut stats,
                        )
                    })
                    .collect();
                (Some(g), Some(s))
            } else {
                (None, None)
            };
            plan.push((consistency, greedy_correct, sample_correct));
        }

        let jobs: Vec<RemoteJob> = pending.into_values().collect();
        let verdicts = self.resolve_remote(&jobs, &mut stats)?;
        let value = |slot: &Slot| -> u8 {
            match slot {
                Ok(v) => *v,
                Err(hash) => verdicts[hash],
            }
        };

        let meta = self.meta();
        let annotations = records
            .iter()
            .zip(plan)
            .map(|(rec, (cons, greedy, samples))| AnnotationRecord {
                id: rec.id.clone(),
                consistency: cons.iter().map(value).collect(),
                greedy_correct: greedy.as_ref().map(value),
                sample_correct: samples.map(|s| s.iter().map(value).collect()),
                judge_meta: meta.clone(),
            })
            .collect();
        Ok((annotations, stats))
    }

    fn resolve_remote(&self, jobs: &[RemoteJob], stats: &mut AnnotateStats) -> Result<HashMap<String, u8>> {
        let mut out = HashMap::with_capacity(jobs.len());
        let mut todo = Vec::new();
        for job in jobs {
            match self.cache.get(&job.hash) {
                Some(hit) => {
                    stats.cache_hits += 1;
                    out.insert(job.hash.clone(), hit.verdict);
                }
                None => todo.push(job),
            }
        }
        let calls_before = self.remote_calls();
        let results = bounded_map(&todo, self.config.max_parallel, |job| self.run_remote(job));
        stats.remote_calls = self.remote_calls() - calls_before;
        let completed = results.iter().filter(|r| matches!(r, Some(Ok(_)))).count();
        let mut first_err = None;
        for (job, res) in todo.iter().zip(results) {
            match res {
                Some(Ok(v)) => {
                    out.insert(job.hash.clone(), v.value);
                }
                Some(Err(e)) => {
                    first_err.get_or_insert(e);
                }
                None => {}
            }
        }
        if let Some(e) = first_err {
            return Err(match e {
                Error::Unreachable { message, .. } => Error::Unreachable { completed, message },
                other => other,
            });
        }
        Ok(out)
    }
}

/// Applies `f` to every item with at most `workers` threads. After the
/// first error no new items are started; unstarted items map to `None`.
pub fn bounded_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<Option<Result<R>>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync,
{
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers.max(1).min(items.len().max(1)) {
            scope.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                if r.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                slots.lock().unwrap()[i] = Some(r);
            });
        }
    });
    slots.into_inner().unwrap()
}
