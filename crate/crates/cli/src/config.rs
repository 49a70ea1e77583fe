//! Run configuration: one JSON file plus dotted-key overrides.

use std::path::{Path, PathBuf};

use elical_core::baselines::BaselineMethod;
use elical_core::judge::remote::ChatEndpoint;
use elical_core::judge::{JudgeConfig, JudgeStrategy};
use elical_core::metrics::MetricOptions;
use elical_core::probe::{Mode, TrainConfig};
use elical_core::synth::SynthConfig;
use elical_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub records: PathBuf,
    pub annotations: PathBuf,
    pub sidecar: PathBuf,
    pub targets: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub sweep_csv: PathBuf,
    pub sweep_svg: PathBuf,
    pub report: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            work_dir: PathBuf::from("."),
            records: "records.jsonl".into(),
            annotations: "annotations.jsonl".into(),
            sidecar: "sidecar.jsonl".into(),
            targets: "targets.jsonl".into(),
            checkpoint: "probe.json".into(),
            metrics: "metrics.json".into(),
            sweep_csv: "sweep.csv".into(),
            sweep_svg: "sweep.svg".into(),
            report: "report.md".into(),
        }
    }
}

impl Paths {
    /// Resolves a path against `work_dir` unless it is absolute.
    pub fn at(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.work_dir.join(p)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Share of records held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { eval_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub budgets: Vec<usize>,
    pub modes: Vec<Mode>,
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            budgets: vec![100, 1000],
            modes: vec![Mode::Elical, Mode::CalOnly],
            seeds: (1..=5).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub methods: Vec<BaselineMethod>,
    /// Model under test, queried by the verbal methods.
    pub verbal: Option<ChatEndpoint>,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            methods: vec![
                BaselineMethod::Prob,
                BaselineMethod::Nprob,
                BaselineMethod::ConsisLex,
                BaselineMethod::ConsisSem,
            ],
            verbal: None,
        }
    }
}

fn default_judge_config() -> JudgeConfig {
    serde_json::from_value(Value::Object(Map::new())).expect("judge config defaults")
}

fn default_strategy() -> JudgeStrategy {
    JudgeStrategy::ExactNormalized
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Sections without their own `seed` inherit it.
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub paths: Paths,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default = "default_strategy")]
    pub judge_strategy: JudgeStrategy,
    #[serde(default = "default_judge_config")]
    pub judge: JudgeConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub metrics: MetricOptions,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub baseline: BaselineSection,
}

fn default_seed() -> u64 {
    2024
}

/// Splits `--section.key value` and `--section.key=value` pairs out of
/// `argv`. The rest is returned for regular flag parsing.
pub fn extract_overrides(argv: Vec<String>) -> Result<(Vec<String>, Vec<(String, String)>)> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut overrides = Vec::new();
    let mut it = argv.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => it
                .next()
                .ok_or_else(|| Error::Config(format!("override --{key} is missing a value")))?,
        };
        overrides.push((key, value));
    }
    Ok((rest, overrides))
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(Error::Config(format!("malformed override key `{key}`")));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{}` is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Builds the run config from an optional file, overrides and an optional
/// work directory. Unknown keys are rejected by name.
pub fn load(file: Option<&Path>, overrides: &[(String, String)], work_dir: Option<&Path>) -> Result<RunConfig> {
    let mut root = match file {
        None => Value::Object(Map::new()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("config {}: {e}", path.display())))?
        }
    };
    if !root.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    for (key, raw) in overrides {
        set_path(&mut root, key, parse_value(raw))?;
    }
    if let Some(dir) = work_dir {
        set_path(&mut root, "paths.work_dir", Value::String(dir.to_string_lossy().into_owned()))?;
    }
    let has_seed = |section: &str| root.get(section).and_then(|s| s.get("seed")).is_some();
    let (train_seed, synth_seed) = (has_seed("train"), has_seed("synth"));

    let mut config: RunConfig = serde_path_to_error::deserialize(root).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            Error::Config(format!("config: {}", e.inner()))
        } else {
            Error::Config(format!("config key `{path}`: {}", e.inner()))
        }
    })?;
    if !train_seed {
        config.train.seed = config.seed;
    }
    if !synth_seed {
        config.synth.seed = config.seed;
    }
    config.train.validate()?;
    config.judge_strategy.validate()?;
    if !(config.split.eval_fraction > 0.0 && config.split.eval_fraction < 1.0) {
        return Err(Error::Config("split.eval_fraction must be in (0, 1)".into()));
    }
    Ok(config)
}

impl RunConfig {
    /// Canonical JSON of the config without the work directory, so runs in
    /// different directories hash alike.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.paths.work_dir = PathBuf::from(".");
        serde_json::to_string(&c).expect("config serializes")
    }
}
