//! Canonical data model and JSONL persistence.
//!
//! Source questions live in one line-delimited JSON file; annotations,
//! targets and baseline scores live in sidecar files keyed by `id`, so a
//! re-annotation never rewrites source data.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::seed;

pub const SCHEMA_VERSION: &str = "1";

/// Fields not modelled by the toolkit, carried through unchanged.
pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub text: String,
    /// Natural-log per-token probabilities in generation order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl ResponseRecord {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            token_logprobs: None,
            extra: Extra::new(),
        }
    }

    pub fn with_logprobs(mut self, logprobs: Vec<f64>) -> Self {
        self.token_logprobs = Some(logprobs);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub dataset: String,
    pub model_id: String,
    pub question: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    pub greedy: ResponseRecord,
    pub samples: Vec<ResponseRecord>,
    /// Final-layer state of the last question token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden_state: Option<Vec<f64>>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl QuestionRecord {
    pub fn k(&self) -> usize {
        self.samples.len()
    }

    pub fn d(&self) -> Option<usize> {
        self.hidden_state.as_ref().map(Vec::len)
    }
}

const REQUIRED_QUESTION_FIELDS: [&str; 6] =
    ["id", "dataset", "model_id", "question", "greedy", "samples"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeMeta {
    pub strategy: String,
    pub judge_model: String,
    pub prompt_version: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    /// `s(r_i, greedy)` per sample, 0 or 1.
    pub consistency: Vec<u8>,
    #[serde(default)]
    pub greedy_correct: Option<u8>,
    #[serde(default)]
    pub sample_correct: Option<Vec<u8>>,
    pub judge_meta: JudgeMeta,
}

impl AnnotationRecord {
    fn check_flags(&self, line: usize) -> Result<()> {
        let bad = |field: &str| Error::Parse {
            line,
            field: field.to_string(),
            message: "flags must be 0 or 1".into(),
        };
        if self.consistency.iter().any(|&f| f > 1) {
            return Err(bad("consistency"));
        }
        if self.greedy_correct.is_some_and(|f| f > 1) {
            return Err(bad("greedy_correct"));
        }
        if let Some(sc) = &self.sample_correct {
            if sc.iter().any(|&f| f > 1) {
                return Err(bad("sample_correct"));
            }
            if sc.len() != self.consistency.len() {
                return Err(Error::Schema {
                    line,
                    message: format!(
                        "sample_correct length {} != consistency length {}",
                        sc.len(),
                        self.consistency.len()
                    ),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub id: String,
    pub self_consistency_confidence: f64,
    #[serde(default)]
    pub accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub k: usize,
    pub d: Option<usize>,
    pub record_count: usize,
    pub schema_version: String,
}

impl DatasetManifest {
    pub fn empty(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            k: 0,
            d: None,
            record_count: 0,
            schema_version: SCHEMA_VERSION.to_string(),
        }
    }
}

fn parse_question(line: usize, text: &str) -> Result<QuestionRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        line,
        field: "<record>".into(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::Parse {
        line,
        field: "<record>".into(),
        message: "expected a JSON object".into(),
    })?;
    for field in REQUIRED_QUESTION_FIELDS {
        if !obj.contains_key(field) {
            return Err(Error::Parse {
                line,
                field: field.into(),
                message: "missing field".into(),
            });
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| Error::Parse {
        line,
        field: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// Streaming reader over a question file.
///
/// Yields records in file order; the manifest is complete once the
/// iterator is exhausted. In strict mode (the default) a record whose `k`
/// or `d` disagrees with the first record is a schema error; lenient mode
/// leaves that to [`Validator`].
pub struct DatasetReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    manifest: DatasetManifest,
    strict: bool,
}

impl DatasetReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(BufReader::new(file), name))
    }
}

impl<R: BufRead> DatasetReader<R> {
    pub fn new(reader: R, name: impl Into<String>) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            manifest: DatasetManifest::empty(name),
            strict: true,
        }
    }

    pub fn lenient(mut self) -> Self {
        self.strict = false;
        self
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn accept(&mut self, rec: &QuestionRecord) -> Result<()> {
        let line = self.line_no;
        if self.manifest.record_count == 0 {
            self.manifest.k = rec.k();
            self.manifest.d = rec.d();
        } else if self.strict {
            if rec.k() != self.manifest.k {
                return Err(Error::Schema {
                    line,
                    message: format!(
                        "record `{}` has k = {}, dataset has k = {}",
                        rec.id,
                        rec.k(),
                        self.manifest.k
                    ),
                });
            }
            if rec.d() != self.manifest.d {
                return Err(Error::Schema {
                    line,
                    message: format!(
                        "record `{}` has d = {:?}, dataset has d = {:?}",
                        rec.id,
                        rec.d(),
                        self.manifest.d
                    ),
                });
            }
        }
        self.manifest.record_count += 1;
        Ok(())
    }
}

impl<R: BufRead> Iterator for DatasetReader<R> {
    type Item = Result<QuestionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = self.lines.next()?;
            self.line_no += 1;
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    return Some(Err(Error::Parse {
                        line: self.line_no,
                        field: "<record>".into(),
                        message: e.to_string(),
                    }))
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            let rec = match parse_question(self.line_no, &line) {
                Ok(r) => r,
                Err(e) => return Some(Err(e)),
            };
            if let Err(e) = self.accept(&rec) {
                return Some(Err(e));
            }
            if self.manifest.record_count == 1 && !rec.dataset.is_empty() {
                self.manifest.name = rec.dataset.clone();
            }
            return Some(Ok(rec));
        }
    }
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<(Vec<QuestionRecord>, DatasetManifest)> {
    let mut reader = DatasetReader::open(path)?;
    let records = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((records, reader.manifest().clone()))
}

fn consistent_manifest(records: &[QuestionRecord], name: &str) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest::empty(name);
    if let Some(first) = records.first() {
        manifest.k = first.k();
        manifest.d = first.d();
        if !first.dataset.is_empty() {
            manifest.name = first.dataset.clone();
        }
    }
    for (i, rec) in records.iter().enumerate() {
        if rec.k() != manifest.k || rec.d() != manifest.d {
            return Err(Error::Schema {
                line: i + 1,
                message: format!(
                    "record `{}` has (k, d) = ({}, {:?}), expected ({}, {:?})",
                    rec.id,
                    rec.k(),
                    rec.d(),
                    manifest.k,
                    manifest.d
                ),
            });
        }
    }
    manifest.record_count = records.len();
    Ok(manifest)
}

/// Writes `records` as JSONL. Consistency of `k` and `d` is checked before
/// the file is created.
pub fn write_dataset(records: &[QuestionRecord], path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let manifest = consistent_manifest(records, &name)?;
    write_jsonl(records, path)?;
    Ok(manifest)
}

pub fn write_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads any sidecar JSONL file, reporting the line and field of the first
/// malformed record.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut de = serde_json::Deserializer::from_str(&line);
        let item = serde_path_to_error::deserialize(&mut de).map_err(|e| Error::Parse {
            line: i + 1,
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

pub fn read_annotations(path: impl AsRef<Path>) -> Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = read_jsonl(path)?;
    for (i, rec) in records.iter().enumerate() {
        rec.check_flags(i + 1)?;
    }
    Ok(records)
}

pub fn read_targets(path: impl AsRef<Path>) -> Result<Vec<TargetRecord>> {
    read_jsonl(path)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub field: String,
    pub message: String,
}

fn violation(rec: &QuestionRecord, field: &str, message: String) -> Violation {
    Violation {
        id: rec.id.clone(),
        field: field.to_string(),
        message,
    }
}

fn check_logprobs(rec: &QuestionRecord, field: &str, resp: &ResponseRecord, out: &mut Vec<Violation>) {
    if let Some(lp) = &resp.token_logprobs {
        if lp.is_empty() {
            out.push(violation(rec, field, "token_logprobs present but empty".into()));
        } else if let Some(bad) = lp.iter().find(|&&x| x.is_nan() || x > 0.0) {
            out.push(violation(rec, field, format!("log-probability {bad} is not <= 0")));
        }
    }
}

/// Lists every per-record invariant `record` violates against `manifest`.
pub fn validate_record(record: &QuestionRecord, manifest: &DatasetManifest) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.is_empty() {
        out.push(violation(record, "id", "empty id".into()));
    }
    if record.k() != manifest.k {
        out.push(violation(
            record,
            "samples",
            format!("{} samples, manifest k = {}", record.k(), manifest.k),
        ));
    }
    match (&record.hidden_state, manifest.d) {
        (Some(h), Some(d)) if h.len() != d => out.push(violation(
            record,
            "hidden_state",
            format!("length {}, manifest d = {d}", h.len()),
        )),
        (Some(_), None) => out.push(violation(
            record,
            "hidden_state",
            "present but manifest declares no d".into(),
        )),
        (None, Some(d)) => out.push(violation(
            record,
            "hidden_state",
            format!("missing, manifest d = {d}"),
        )),
        _ => {}
    }
    if let Some(h) = &record.hidden_state {
        if h.iter().any(|x| !x.is_finite()) {
            out.push(violation(record, "hidden_state", "non-finite entry".into()));
        }
    }
    check_logprobs(record, "greedy.token_logprobs", &record.greedy, &mut out);
    for (i, s) in record.samples.iter().enumerate() {
        check_logprobs(record, &format!("samples[{i}].token_logprobs"), s, &mut out);
    }
    out
}

/// Stateful validator that also catches duplicate ids.
pub struct Validator<'a> {
    manifest: &'a DatasetManifest,
    seen: HashSet<String>,
}

impl<'a> Validator<'a> {
    pub fn new(manifest: &'a DatasetManifest) -> Self {
        Self {
            manifest,
            seen: HashSet::new(),
        }
    }

    pub fn check(&mut self, record: &QuestionRecord) -> Vec<Violation> {
        let mut out = validate_record(record, self.manifest);
        if !self.seen.insert(record.id.clone()) {
            out.push(violation(record, "id", format!("duplicate id `{}`", record.id)));
        }
        out
    }
}

fn split_sizes(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    // Largest remainder first; earlier split wins ties.
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

fn shuffled_sorted_ids(ids: &[&str], seed: u64, stream: &str) -> Vec<String> {
    let mut sorted: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
    sorted.sort();
    sorted.dedup();
    let mut rng = seed::rng(seed, stream);
    sorted.shuffle(&mut rng);
    sorted
}

/// Partitions `ids` into disjoint groups with the given fractions.
///
/// Ids are sorted before a seeded Fisher-Yates shuffle, so the result
/// depends only on the id set, the fractions and the seed.
pub fn split_ids(ids: &[&str], fractions: &[f64], seed: u64) -> Result<Vec<Vec<String>>> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(Error::Precondition(
            "split fractions must be non-empty and nonnegative".into(),
        ));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Precondition(format!(
            "split fractions sum to {total}, expected 1"
        )));
    }
    let shuffled = shuffled_sorted_ids(ids, seed, "split");
    if shuffled.len() != ids.len() {
        return Err(Error::Precondition("duplicate ids in split input".into()));
    }
    let mut rest = shuffled.as_slice();
    let mut parts = Vec::with_capacity(fractions.len());
    for size in split_sizes(ids.len(), fractions) {
        let (head, tail) = rest.split_at(size);
        parts.push(head.to_vec());
        rest = tail;
    }
    Ok(parts)
}

/// Uniform subset of exactly `budget` ids.
pub fn subsample_ids(ids: &[&str], budget: usize, seed: u64) -> Result<Vec<String>> {
    if budget > ids.len() {
        return Err(Error::Budget {
            budget,
            available: ids.len(),
        });
    }
    let mut picked = shuffled_sorted_ids(ids, seed, seed::streams::SUBSAMPLE);
    picked.truncate(budget);
    Ok(picked)
}

/// Budgeted draw from one designated split.
#[derive(Debug, Clone, Copy)]
pub struct Subsample {
    pub split: usize,
    pub budget: usize,
}

#[derive(Debug, Clone)]
pub struct Splits<T> {
    pub parts: Vec<Vec<T>>,
    pub subsample: Option<Vec<T>>,
}

/// Record-level split plus an optional budgeted subset of one split.
pub fn split_and_subsample<T: Clone>(
    records: &[T],
    id_of: impl Fn(&T) -> &str,
    fractions: &[f64],
    subsample: Option<Subsample>,
    seed: u64,
) -> Result<Splits<T>> {
    let ids: Vec<&str> = records.iter().map(&id_of).collect();
    let id_parts = split_ids(&ids, fractions, seed)?;
    let by_id: std::collections::HashMap<&str, &T> =
        records.iter().map(|r| (id_of(r), r)).collect();
    let gather = |ids: &[String]| -> Vec<T> { ids.iter().map(|id| by_id[id.as_str()].clone()).collect() };
    let parts: Vec<Vec<T>> = id_parts.iter().map(|p| gather(p)).collect();
    let subsample = match subsample {
        None => None,
        Some(Subsample { split, budget }) => {
            let source = id_parts.get(split).ok_or_else(|| {
                Error::Precondition(format!("no split at index {split}"))
            })?;
            let refs: Vec<&str> = source.iter().map(String::as_str).collect();
            Some(gather(&subsample_ids(&refs, budget, seed)?))
        }
    };
    Ok(Splits { parts, subsample })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn record(id: &str, k: usize, d: Option<usize>) -> QuestionRecord {
        QuestionRecord {
            id: id.into(),
            dataset: "toy".into(),
            model_id: "m".into(),
            question: format!("question {id}"),
            gold_answers: vec!["paris".into()],
            greedy: ResponseRecord::new("Paris").with_logprobs(vec![-0.1, -0.2]),
            samples: (0..k).map(|i| ResponseRecord::new(format!("s{i}"))).collect(),
            hidden_state: d.map(|d| vec![0.5; d]),
            extra: Extra::new(),
        }
    }

    fn to_lines(records: &[QuestionRecord]) -> String {
        records
            .iter()
            .map(|r| serde_json::to_string(r).unwrap() + "\n")
            .collect()
    }

    #[test]
    fn reads_three_records() {
        let text = to_lines(&[record("a", 2, Some(3)), record("b", 2, Some(3)), record("c", 2, Some(3))]);
        let mut reader = DatasetReader::new(Cursor::new(text), "toy");
        let recs: Vec<_> = reader.by_ref().collect::<Result<_>>().unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[2].id, "c");
        assert_eq!(reader.manifest().record_count, 3);
        assert_eq!(reader.manifest().k, 2);
        assert_eq!(reader.manifest().d, Some(3));
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let mut reader = DatasetReader::new(Cursor::new(""), "empty");
        assert!(reader.next().is_none());
        assert_eq!(reader.manifest().record_count, 0);
    }

    #[test]
    fn missing_field_names_line_and_field() {
        let good = serde_json::to_string(&record("a", 1, None)).unwrap();
        let mut bad: Value = serde_json::from_str(&good).unwrap();
        bad.as_object_mut().unwrap().remove("question");
        let text = format!("{good}\n{bad}\n");
        let err = DatasetReader::new(Cursor::new(text), "t")
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        match err {
            Error::Parse { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "question");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_nested_path() {
        let good = serde_json::to_string(&record("a", 1, None)).unwrap();
        let bad = good.replace("[-0.1,-0.2]", "[\"x\"]");
        let err = DatasetReader::new(Cursor::new(bad), "t").next().unwrap().unwrap_err();
        let Error::Parse { field, .. } = err else { panic!() };
        assert!(field.starts_with("greedy.token_logprobs"), "{field}");
    }

    #[test]
    fn k_inconsistency_is_schema_error() {
        let text = to_lines(&[record("a", 20, None), record("b", 19, None)]);
        let err = DatasetReader::new(Cursor::new(text), "t")
            .collect::<Result<Vec<_>>>()
            .unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }));
    }

    #[test]
    fn write_rejects_mixed_k_before_writing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let err = write_dataset(&[record("a", 20, None), record("b", 19, None)], &path).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
        assert!(!path.exists());
    }

    #[test]
    fn write_zero_records_is_valid_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.jsonl");
        let m = write_dataset(&[], &path).unwrap();
        assert_eq!(m.record_count, 0);
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "");
        assert_eq!(read_dataset(&path).unwrap().0.len(), 0);
    }

    #[test]
    fn unknown_fields_survive_round_trip() {
        let mut r = record("a", 1, Some(2));
        r.extra.insert("source_split".into(), Value::from("dev"));
        r.greedy.extra.insert("finish_reason".into(), Value::from("stop"));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        write_dataset(std::slice::from_ref(&r), &path).unwrap();
        let (back, _) = read_dataset(&path).unwrap();
        assert_eq!(back[0], r);
    }

    #[test]
    fn validate_reports_hidden_state_length() {
        let m = DatasetManifest {
            name: "t".into(),
            k: 2,
            d: Some(128),
            record_count: 1,
            schema_version: SCHEMA_VERSION.into(),
        };
        assert!(validate_record(&record("a", 2, Some(128)), &m).is_empty());
        let v = validate_record(&record("a", 2, Some(64)), &m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "hidden_state");
    }

    #[test]
    fn validate_flags_positive_logprob_and_duplicates() {
        let m = DatasetManifest {
            name: "t".into(),
            k: 1,
            d: None,
            record_count: 2,
            schema_version: SCHEMA_VERSION.into(),
        };
        let mut r = record("a", 1, None);
        r.greedy.token_logprobs = Some(vec![0.3]);
        let mut v = Validator::new(&m);
        assert_eq!(v.check(&r).len(), 1);
        r.greedy.token_logprobs = None;
        let dup = v.check(&r);
        assert_eq!(dup.len(), 1);
        assert!(dup[0].message.contains("duplicate"));
    }

    #[test]
    fn split_sizes_and_disjointness() {
        let ids: Vec<String> = (0..1000).map(|i| format!("q{i:04}")).collect();
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let parts = split_ids(&refs, &[0.8, 0.2], 7).unwrap();
        assert_eq!(parts[0].len(), 800);
        assert_eq!(parts[1].len(), 200);
        let a: HashSet<_> = parts[0].iter().collect();
        assert!(parts[1].iter().all(|id| !a.contains(id)));
    }

    #[test]
    fn split_ignores_input_order() {
        let ids: Vec<String> = (0..50).map(|i| format!("q{i}")).collect();
        let mut refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let p1 = split_ids(&refs, &[0.5, 0.3, 0.2], 3).unwrap();
        refs.reverse();
        let p2 = split_ids(&refs, &[0.5, 0.3, 0.2], 3).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn budget_subsample_is_deterministic_and_bounded() {
        let records: Vec<QuestionRecord> = (0..1000).map(|i| record(&format!("q{i}"), 1, None)).collect();
        let run = || {
            split_and_subsample(
                &records,
                |r| r.id.as_str(),
                &[0.8, 0.2],
                Some(Subsample { split: 0, budget: 100 }),
                7,
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        let ids = |s: &Splits<QuestionRecord>| -> Vec<String> {
            s.subsample.as_ref().unwrap().iter().map(|r| r.id.clone()).collect()
        };
        assert_eq!(ids(&a).len(), 100);
        assert_eq!(ids(&a), ids(&b));
        let in_split: HashSet<&str> = a.parts[0].iter().map(|r| r.id.as_str()).collect();
        assert!(ids(&a).iter().all(|id| in_split.contains(id.as_str())));

        let err = split_and_subsample(
            &records,
            |r| r.id.as_str(),
            &[0.8, 0.2],
            Some(Subsample { split: 0, budget: 801 }),
            7,
        )
        .unwrap_err();
        assert!(err.to_string().contains("801 > 800"), "{err}");
    }

    #[test]
    fn fractions_must_sum_to_one() {
        assert!(split_ids(&["a", "b"], &[0.5, 0.4], 1).is_err());
        assert!(split_ids(&["a", "b"], &[1.0 - 1e-12, 1e-12], 1).is_ok());
    }
}
