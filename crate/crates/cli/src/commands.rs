use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use elical_core::baselines::{self, BaselineMethod, BaselineScore, VerbalShot, FLAG_VERBAL_PARSE_FAILURE};
use elical_core::judge::remote::HttpChat;
use elical_core::judge::{AnnotatePasses, Judge};
use elical_core::metrics::MetricsReport;
use elical_core::probe::{run_mode, Mode, ProbeCheckpoint, TrainingPool};
use elical_core::records::{
    self, read_annotations, read_dataset, read_jsonl, read_targets, write_dataset, write_jsonl, AnnotationRecord,
    DatasetReader, QuestionRecord, TargetRecord, Validator,
};
use elical_core::seed::{self, streams};
use elical_core::sweep::{self, EvalSet, SweepReport, SweepSpec};
use elical_core::{synth, targets, Error, ErrorClass};
use serde::Serialize;

use crate::config::RunConfig;
use crate::manifest;

/// An error with the file it concerns, when known.
#[derive(Debug)]
pub struct Failure {
    pub file: Option<PathBuf>,
    pub error: Error,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self { file: None, error }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.file, &self.error) {
            (_, Error::Io { .. }) | (None, _) => write!(f, "{}", self.error),
            (Some(p), e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self.error.class() {
            ErrorClass::Usage => 1,
            ErrorClass::Data => 2,
            ErrorClass::Judge => 3,
        }
    }
}

pub type CmdResult<T = ()> = std::result::Result<T, Failure>;

trait InFile<T> {
    fn in_file(self, path: &Path) -> CmdResult<T>;
}

impl<T> InFile<T> for elical_core::Result<T> {
    fn in_file(self, path: &Path) -> CmdResult<T> {
        self.map_err(|error| Failure {
            file: Some(path.to_path_buf()),
            error,
        })
    }
}

pub struct Ctx {
    pub config: RunConfig,
    pub command: &'static str,
}

impl Ctx {
    fn path(&self, p: &Path) -> PathBuf {
        self.config.paths.at(p)
    }

    fn manifest(&self, inputs: &[PathBuf], outputs: &[PathBuf]) -> CmdResult {
        manifest::write(self.command, &self.config.canonical_json(), self.config.seed, inputs, outputs)?;
        Ok(())
    }

    fn ensure_work_dir(&self) -> CmdResult {
        let dir = &self.config.paths.work_dir;
        std::fs::create_dir_all(dir).map_err(|e| Failure::from(Error::io(dir, e)))
    }
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> CmdResult {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e).into())
}

fn load_records(path: &Path) -> CmdResult<Vec<QuestionRecord>> {
    Ok(read_dataset(path).in_file(path)?.0)
}

fn by_id<T: Clone>(items: &[T], id: impl Fn(&T) -> &str) -> HashMap<String, T> {
    items.iter().map(|x| (id(x).to_string(), x.clone())).collect()
}

/// Record indices of the training pool and the evaluation split, each in
/// file order.
fn partition(records: &[QuestionRecord], config: &RunConfig) -> CmdResult<(Vec<usize>, Vec<usize>)> {
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let f = config.split.eval_fraction;
    let parts = records::split_ids(&ids, &[1.0 - f, f], seed::sub_seed(config.seed, streams::EVAL_SPLIT))?;
    let eval: HashSet<&str> = parts[1].iter().map(String::as_str).collect();
    let (mut train, mut held) = (Vec::new(), Vec::new());
    for (i, r) in records.iter().enumerate() {
        if eval.contains(r.id.as_str()) {
            held.push(i);
        } else {
            train.push(i);
        }
    }
    Ok((train, held))
}

fn hidden(r: &QuestionRecord) -> elical_core::Result<Vec<f64>> {
    r.hidden_state
        .clone()
        .ok_or_else(|| Error::Precondition(format!("record `{}` has no hidden_state", r.id)))
}

fn build_pool(records: &[QuestionRecord], rows: &[usize], targets: &HashMap<String, TargetRecord>) -> elical_core::Result<TrainingPool<f64>> {
    let mut pool = TrainingPool {
        ids: Vec::with_capacity(rows.len()),
        features: Vec::with_capacity(rows.len()),
        self_consistency: Vec::with_capacity(rows.len()),
        accuracy: Vec::with_capacity(rows.len()),
    };
    for &i in rows {
        let r = &records[i];
        let t = targets
            .get(&r.id)
            .ok_or_else(|| Error::Precondition(format!("no target record for `{}`", r.id)))?;
        pool.ids.push(r.id.clone());
        pool.features.push(hidden(r)?);
        pool.self_consistency.push(t.self_consistency_confidence);
        pool.accuracy.push(t.accuracy);
    }
    Ok(pool)
}

fn greedy_labels(ids: &[String], annotations: &HashMap<String, AnnotationRecord>) -> elical_core::Result<Vec<u8>> {
    ids.iter()
        .map(|id| {
            annotations
                .get(id)
                .and_then(|a| a.greedy_correct)
                .ok_or_else(|| Error::Unlabeled(id.clone()))
        })
        .collect()
}

fn build_eval(records: &[QuestionRecord], rows: &[usize], annotations: &HashMap<String, AnnotationRecord>) -> elical_core::Result<EvalSet<f64>> {
    let ids: Vec<String> = rows.iter().map(|&i| records[i].id.clone()).collect();
    let features = rows.iter().map(|&i| hidden(&records[i])).collect::<elical_core::Result<_>>()?;
    let greedy_correct = greedy_labels(&ids, annotations)?;
    let dataset = rows.first().map(|&i| records[i].dataset.clone()).unwrap_or_default();
    Ok(EvalSet {
        dataset,
        ids,
        features,
        greedy_correct,
    })
}

pub fn synth(ctx: &Ctx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let p = &ctx.config.paths;
    let data = synth::generate(&ctx.config.synth)?;
    let (records_path, ann_path, side_path) = (ctx.path(&p.records), ctx.path(&p.annotations), ctx.path(&p.sidecar));
    write_dataset(&data.records, &records_path).in_file(&records_path)?;
    write_jsonl(&data.annotations, &ann_path).in_file(&ann_path)?;
    write_jsonl(&data.sidecars, &side_path).in_file(&side_path)?;
    ctx.manifest(&[], &[records_path.clone(), ann_path, side_path])?;
    println!("wrote {} synthetic questions to {}", data.records.len(), records_path.display());
    Ok(())
}

#[derive(Serialize)]
struct ValidationReport {
    record_count: usize,
    k: usize,
    d: Option<usize>,
    violations: Vec<records::Violation>,
}

pub fn validate(ctx: &Ctx, input: Option<PathBuf>) -> CmdResult {
    let path = input.unwrap_or_else(|| ctx.path(&ctx.config.paths.records));
    let mut reader = DatasetReader::open(&path).in_file(&path)?.lenient();
    let mut all = Vec::new();
    for rec in reader.by_ref() {
        all.push(rec.in_file(&path)?);
    }
    let manifest = reader.manifest().clone();
    let mut validator = Validator::new(&manifest);
    let violations: Vec<records::Violation> = all.iter().flat_map(|r| validator.check(r)).collect();
    for v in &violations {
        println!("{}: {}: {}: {}", path.display(), v.id, v.field, v.message);
    }
    let mut out = path.as_os_str().to_owned();
    out.push(".validation.json");
    let out = PathBuf::from(out);
    let report = ValidationReport {
        record_count: manifest.record_count,
        k: manifest.k,
        d: manifest.d,
        violations,
    };
    write_json(&report, &out)?;
    ctx.manifest(std::slice::from_ref(&path), &[out])?;
    println!(
        "{}: {} records, k = {}, d = {:?}, {} violations",
        path.display(),
        report.record_count,
        report.k,
        report.d,
        report.violations.len()
    );
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure {
            file: Some(path),
            error: Error::Precondition(format!("{} schema violations", report.violations.len())),
        })
    }
}

pub fn annotate(ctx: &Ctx, input: Option<PathBuf>, passes: AnnotatePasses) -> CmdResult {
    ctx.ensure_work_dir()?;
    let input = input.unwrap_or_else(|| ctx.path(&ctx.config.paths.records));
    let records = load_records(&input)?;
    let mut judge_cfg = ctx.config.judge.clone();
    judge_cfg.cache_path = judge_cfg.cache_path.map(|p| ctx.path(&p));
    let judge = Judge::new(ctx.config.judge_strategy.clone(), judge_cfg)?;
    let (annotations, stats) = judge.annotate_dataset(&records, passes)?;
    let out = ctx.path(&ctx.config.paths.annotations);
    write_jsonl(&annotations, &out).in_file(&out)?;
    ctx.manifest(&[input], std::slice::from_ref(&out))?;
    println!(
        "annotated {} questions: {} verdicts, {} short-circuited, {} cached, {} remote calls -> {}",
        annotations.len(),
        stats.pair_verdicts,
        stats.short_circuits,
        stats.cache_hits,
        stats.remote_calls,
        out.display()
    );
    Ok(())
}

pub fn targets(ctx: &Ctx) -> CmdResult {
    let input = ctx.path(&ctx.config.paths.annotations);
    let annotations = read_annotations(&input).in_file(&input)?;
    let built = targets::build_targets(&annotations).in_file(&input)?;
    let out = ctx.path(&ctx.config.paths.targets);
    write_jsonl(&built, &out).in_file(&out)?;
    ctx.manifest(&[input], std::slice::from_ref(&out))?;
    let labeled = built.iter().filter(|t| t.accuracy.is_some()).count();
    println!("{} targets ({} with accuracy) -> {}", built.len(), labeled, out.display());
    Ok(())
}

fn baseline_path(ctx: &Ctx, method: BaselineMethod) -> PathBuf {
    ctx.path(Path::new(&format!("baseline_{}.jsonl", method.name())))
}

pub fn baseline(ctx: &Ctx, methods: Vec<BaselineMethod>) -> CmdResult {
    ctx.ensure_work_dir()?;
    let methods = if methods.is_empty() { ctx.config.baseline.methods.clone() } else { methods };
    let records_path = ctx.path(&ctx.config.paths.records);
    let records = load_records(&records_path)?;
    let mut inputs = vec![records_path.clone()];
    let mut annotations = None;
    if methods.contains(&BaselineMethod::ConsisSem) {
        let p = ctx.path(&ctx.config.paths.annotations);
        annotations = Some(by_id(&read_annotations(&p).in_file(&p)?, |a| a.id.as_str()));
        inputs.push(p);
    }
    let mut shots = Vec::new();
    if methods.contains(&BaselineMethod::Verbal10) {
        let p = ctx.path(&ctx.config.paths.targets);
        let t = by_id(&read_targets(&p).in_file(&p)?, |t| t.id.as_str());
        inputs.push(p);
        let (train, _) = partition(&records, &ctx.config)?;
        let pool: Vec<VerbalShot> = train
            .iter()
            .filter_map(|&i| {
                let r = &records[i];
                t.get(&r.id).and_then(|t| t.accuracy).map(|c| VerbalShot {
                    question: r.question.clone(),
                    confidence: c,
                })
            })
            .collect();
        shots = baselines::draw_verbal_shots(&pool, ctx.config.seed)?;
    }
    let client = if methods.iter().any(|m| m.is_verbal()) {
        let endpoint = ctx
            .config
            .baseline
            .verbal
            .clone()
            .ok_or_else(|| Error::Config("verbal baselines require baseline.verbal endpoint settings".into()))?;
        Some(HttpChat::new(endpoint))
    } else {
        None
    };

    let mut outputs = Vec::new();
    for &method in &methods {
        let mut scores = Vec::with_capacity(records.len());
        for r in &records {
            let mut flags = Vec::new();
            let confidence = match method {
                BaselineMethod::Prob | BaselineMethod::Nprob => {
                    let lp = r.greedy.token_logprobs.as_deref().ok_or_else(|| {
                        Error::Precondition(format!("record `{}` has no greedy token_logprobs", r.id))
                    })?;
                    if method == BaselineMethod::Prob {
                        baselines::prob(lp)
                    } else {
                        baselines::nprob(lp)
                    }
                    .map_err(|e| Error::Precondition(format!("record `{}`: {e}", r.id)))?
                }
                BaselineMethod::ConsisLex => baselines::consis_lex::<f64>(&r.greedy, &r.samples)
                    .map_err(|e| Error::Precondition(format!("record `{}`: {e}", r.id)))?,
                BaselineMethod::ConsisSem => {
                    let ann = annotations
                        .as_ref()
                        .and_then(|a| a.get(&r.id))
                        .ok_or_else(|| Error::Precondition(format!("no annotation for `{}`", r.id)))?;
                    baselines::consis_sem(ann)?
                }
                BaselineMethod::Verbal0 | BaselineMethod::Verbal10 => {
                    let s: &[VerbalShot] = if method == BaselineMethod::Verbal10 { &shots } else { &[] };
                    let outcome = baselines::verbal_confidence(&r.question, s, client.as_ref().expect("client built"))?;
                    if outcome.parse_failed {
                        log::warn!("{}: unparseable verbal confidence for `{}`", method.name(), r.id);
                        flags.push(FLAG_VERBAL_PARSE_FAILURE.to_string());
                    }
                    outcome.confidence
                }
            };
            scores.push(BaselineScore {
                id: r.id.clone(),
                method,
                confidence,
                flags,
            });
        }
        let out = baseline_path(ctx, method);
        write_jsonl(&scores, &out).in_file(&out)?;
        println!("{}: {} scores -> {}", method.name(), scores.len(), out.display());
        outputs.push(out);
    }
    ctx.manifest(&inputs, &outputs)
}

pub fn train(ctx: &Ctx, mode: Mode, budget: Option<usize>, output: Option<PathBuf>) -> CmdResult {
    ctx.ensure_work_dir()?;
    let p = &ctx.config.paths;
    let (records_path, targets_path) = (ctx.path(&p.records), ctx.path(&p.targets));
    let records = load_records(&records_path)?;
    let t = by_id(&read_targets(&targets_path).in_file(&targets_path)?, |t| t.id.as_str());
    let (train_rows, _) = partition(&records, &ctx.config)?;
    let pool = build_pool(&records, &train_rows, &t).in_file(&targets_path)?;
    let budget = match (mode, budget) {
        (_, Some(b)) => b,
        (Mode::EliOnly, None) => 0,
        (_, None) => pool.labeled_count(),
    };
    let probe = run_mode(mode, &pool, budget, &ctx.config.train, None)?;
    let checkpoint = ProbeCheckpoint::new(&probe, &ctx.config.train);
    let out = output.unwrap_or_else(|| ctx.path(&p.checkpoint));
    write_json(&checkpoint, &out)?;
    ctx.manifest(&[records_path, targets_path], std::slice::from_ref(&out))?;
    let last = probe.history.last().expect("history has epoch 0");
    println!(
        "trained {} probe (budget {budget}, {} epochs, final val_mse {:.6}) -> {}",
        mode.name(),
        last.epoch,
        last.val_mse,
        out.display()
    );
    Ok(())
}

pub fn eval(ctx: &Ctx, checkpoint: Option<PathBuf>, scores: Option<PathBuf>, output: Option<PathBuf>) -> CmdResult {
    ctx.ensure_work_dir()?;
    let p = &ctx.config.paths;
    let (records_path, ann_path) = (ctx.path(&p.records), ctx.path(&p.annotations));
    let records = load_records(&records_path)?;
    let annotations = by_id(&read_annotations(&ann_path).in_file(&ann_path)?, |a| a.id.as_str());
    let (_, eval_rows) = partition(&records, &ctx.config)?;
    let mut inputs = vec![records_path.clone(), ann_path.clone()];
    let report = match scores {
        Some(scores_path) => {
            let scored: Vec<BaselineScore> = read_jsonl(&scores_path).in_file(&scores_path)?;
            let method = scored
                .first()
                .map(|s| s.method.name().to_string())
                .ok_or_else(|| Error::Precondition("score file is empty".into()))
                .in_file(&scores_path)?;
            let conf_of: HashMap<&str, f64> = scored.iter().map(|s| (s.id.as_str(), s.confidence)).collect();
            let ids: Vec<String> = eval_rows.iter().map(|&i| records[i].id.clone()).collect();
            let conf: Vec<f64> = ids
                .iter()
                .map(|id| {
                    conf_of
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Precondition(format!("no score for `{id}`")))
                })
                .collect::<elical_core::Result<_>>()
                .in_file(&scores_path)?;
            let labels = greedy_labels(&ids, &annotations).in_file(&ann_path)?;
            let dataset = eval_rows.first().map(|&i| records[i].dataset.clone()).unwrap_or_default();
            inputs.push(scores_path);
            MetricsReport::compute(&method, &dataset, &conf, &labels, ctx.config.seed, ctx.config.metrics)?
        }
        None => {
            let ck_path = checkpoint.unwrap_or_else(|| ctx.path(&p.checkpoint));
            let text = std::fs::read_to_string(&ck_path).map_err(|e| Failure::from(Error::io(&ck_path, e)))?;
            let ck: ProbeCheckpoint = serde_json::from_str(&text)
                .map_err(|e| Error::Precondition(format!("malformed checkpoint: {e}")))
                .in_file(&ck_path)?;
            let params = ck.params().in_file(&ck_path)?;
            let eval = build_eval(&records, &eval_rows, &annotations).in_file(&ann_path)?;
            inputs.push(ck_path);
            sweep::evaluate_probe(ck.mode.name(), &params, &eval, ctx.config.seed, ctx.config.metrics)?
        }
    };
    let out = output.unwrap_or_else(|| ctx.path(&p.metrics));
    write_json(&report, &out)?;
    ctx.manifest(&inputs, std::slice::from_ref(&out))?;
    println!(
        "{} on {} (n = {}): auroc {:.4}, ece {:.4}, alignment {:.4} at threshold {:.4}, qa_accuracy {:.4} -> {}",
        report.method,
        report.dataset,
        report.n,
        report.auroc,
        report.ece,
        report.alignment,
        report.threshold,
        report.qa_accuracy,
        out.display()
    );
    Ok(())
}

pub fn sweep(ctx: &Ctx) -> CmdResult {
    ctx.ensure_work_dir()?;
    let p = &ctx.config.paths;
    let (records_path, targets_path, ann_path) = (ctx.path(&p.records), ctx.path(&p.targets), ctx.path(&p.annotations));
    let records = load_records(&records_path)?;
    let t = by_id(&read_targets(&targets_path).in_file(&targets_path)?, |t| t.id.as_str());
    let annotations = by_id(&read_annotations(&ann_path).in_file(&ann_path)?, |a| a.id.as_str());
    let (train_rows, eval_rows) = partition(&records, &ctx.config)?;
    let pool = build_pool(&records, &train_rows, &t).in_file(&targets_path)?;
    let eval = build_eval(&records, &eval_rows, &annotations).in_file(&ann_path)?;
    let s = &ctx.config.sweep;
    let spec = SweepSpec {
        budgets: s.budgets.clone(),
        modes: s.modes.clone(),
        seeds: s.seeds.clone(),
    };
    let report = sweep::sweep(&pool, &eval, &spec, &ctx.config.train, ctx.config.seed, ctx.config.metrics)?;
    let (csv_path, svg_path) = (ctx.path(&p.sweep_csv), ctx.path(&p.sweep_svg));
    std::fs::write(&csv_path, report.to_csv()).map_err(|e| Failure::from(Error::io(&csv_path, e)))?;
    std::fs::write(&svg_path, report.to_svg()).map_err(|e| Failure::from(Error::io(&svg_path, e)))?;
    ctx.manifest(&[records_path, targets_path, ann_path], &[csv_path.clone(), svg_path])?;
    println!("{} sweep rows -> {}", report.rows.len(), csv_path.display());
    Ok(())
}

fn read_sweep_csv(path: &Path) -> CmdResult<SweepReport> {
    let bad = |line: usize, message: String| Failure {
        file: Some(path.to_path_buf()),
        error: Error::Schema { line, message },
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(0, e.to_string()))?;
    let header: Vec<String> = reader.headers().map_err(|e| bad(1, e.to_string()))?.iter().map(String::from).collect();
    if header.join(",") != sweep::CSV_HEADER {
        return Err(bad(1, format!("unexpected header `{}`", header.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let num = |j: usize| -> CmdResult<f64> {
            rec[j].parse().map_err(|_| bad(line, format!("column {} is not a number", header[j])))
        };
        let int = |j: usize| -> CmdResult<u64> {
            rec[j].parse().map_err(|_| bad(line, format!("column {} is not an integer", header[j])))
        };
        rows.push(sweep::SweepRow {
            budget: int(0)? as usize,
            method: rec[1].to_string(),
            seed: int(2)?,
            report: MetricsReport {
                method: rec[1].to_string(),
                dataset: rec[3].to_string(),
                auroc: num(4)?,
                ece: num(5)?,
                alignment: num(6)?,
                threshold: num(7)?,
                qa_accuracy: num(8)?,
                n: int(9)? as usize,
            },
        });
    }
    Ok(SweepReport { rows })
}

pub fn report(ctx: &Ctx) -> CmdResult {
    let p = &ctx.config.paths;
    let csv_path = ctx.path(&p.sweep_csv);
    let sweep = read_sweep_csv(&csv_path)?;
    if sweep.rows.is_empty() {
        return Err(Failure {
            file: Some(csv_path),
            error: Error::Precondition("sweep file has no rows".into()),
        });
    }
    let auroc = sweep.medians(|r| r.auroc);
    let ece = sweep.medians(|r| r.ece);
    let align = sweep.medians(|r| r.alignment);
    let seeds: HashMap<(String, usize), usize> = sweep.rows.iter().fold(HashMap::new(), |mut m, r| {
        *m.entry((r.method.clone(), r.budget)).or_default() += 1;
        m
    });
    let mut text = String::from("| method | budget | seeds | AUROC | ECE | alignment |\n|---|---:|---:|---:|---:|---:|\n");
    for (key, a) in &auroc {
        text.push_str(&format!(
            "| {} | {} | {} | {:.4} | {:.4} | {:.4} |\n",
            key.0, key.1, seeds[key], a, ece[key], align[key]
        ));
    }
    let out = ctx.path(&p.report);
    std::fs::write(&out, &text).map_err(|e| Failure::from(Error::io(&out, e)))?;
    ctx.manifest(&[csv_path], &[out])?;
    print!("{text}");
    Ok(())
}
