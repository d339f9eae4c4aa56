//! End-to-end orchestration: load, classify, measure the baseline, search,
//! emit the best variant, compare outputs and write the report directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{classify_program, filter_by_trip_count, parse_trip_profile, DirectiveKind, ProbeConfig, Verdicts};
use crate::emit::{emit_variant, AnnotatedVariant};
use crate::eval::{CommandConfig, CostModel, CostModelEvaluator, Evaluator, ExternalEvaluator, MeasuredTime, PlanMode};
use crate::ga::{run_ga, GAConfig, GaError, GenerationRecord, Genome};
use crate::model::{Description, FileId, LoopId, Program};
use crate::transfer::{Planner, TransferPlan};

pub const REPORT_FILE: &str = "report.json";
pub const GENERATIONS_FILE: &str = "generations.jsonl";
pub const METADATA_FILE: &str = "metadata.json";
pub const VERDICTS_FILE: &str = "verdicts.json";
pub const BEST_DIR: &str = "best";
pub const INSERTIONS_FILE: &str = "insertions.json";

pub const DEFAULT_ATOL: f64 = 1e-6;
pub const DEFAULT_RTOL: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum PipelineError {
    /// Bad input: configuration, sources, models.
    #[error("{0}")]
    User(String),
    /// The tool chain or file system failed.
    #[error("{0}")]
    Environment(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::User(_) => 1,
            PipelineError::Environment(_) => 2,
        }
    }
}

fn user(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::User(e.to_string())
}

fn env(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Environment(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    Costmodel {
        /// Path to the cost model JSON.
        model: PathBuf,
        #[serde(default)]
        plan_mode: PlanMode,
    },
    External(CommandConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_atol")]
    pub atol: f64,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
}

fn default_atol() -> f64 {
    DEFAULT_ATOL
}

fn default_rtol() -> f64 {
    DEFAULT_RTOL
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            atol: DEFAULT_ATOL,
            rtol: DEFAULT_RTOL,
        }
    }
}

/// Contents of the `tune` configuration file. Relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolConfig {
    /// C sources, in loop-numbering order.
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Structural description used when no sources are given.
    #[serde(default)]
    pub description: Option<PathBuf>,
    #[serde(default)]
    pub probe: ProbeConfig,
    pub evaluator: EvaluatorConfig,
    #[serde(default)]
    pub ga: GAConfig,
    #[serde(default)]
    pub trip_profile: Option<PathBuf>,
    #[serde(default)]
    pub trip_threshold: u64,
    #[serde(default)]
    pub verify: VerifyConfig,
}

impl ToolConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: ToolConfig = serde_json::from_str(text).map_err(|e| user(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.inputs.is_empty() == self.description.is_none() {
            return Err(user("config needs exactly one of 'inputs' or 'description'"));
        }
        self.ga.validate().map_err(user)
    }

    /// Makes relative paths relative to `base`.
    pub fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.inputs.iter_mut().for_each(fix);
        self.description.as_mut().map(fix);
        self.trip_profile.as_mut().map(fix);
        if let EvaluatorConfig::Costmodel { model, .. } = &mut self.evaluator {
            fix(model);
        }
    }
}

/// Reads and analyzes the given sources; file ids are the paths as given.
pub fn load_sources(paths: &[PathBuf]) -> Result<Program, PipelineError> {
    let mut sources = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(p).map_err(|e| user(format!("{}: {e}", p.display())))?;
        sources.push((FileId::new(p.display().to_string()), text));
    }
    Program::from_sources(sources).map_err(|e| user(format!("parse error: {e}")))
}

/// Loads a description; when every file records a readable path the
/// sources are re-analyzed instead.
pub fn load_description(path: &Path) -> Result<Program, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let desc = Description::from_json(&text).map_err(user)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let sources: Option<Vec<(FileId, PathBuf)>> = desc
        .files
        .iter()
        .map(|f| {
            let path = base.join(f.path.as_ref()?);
            path.is_file().then(|| (f.file_id.clone(), path))
        })
        .collect();
    match sources {
        Some(sources) if !sources.is_empty() => {
            let mut texts = Vec::new();
            for (id, path) in sources {
                let text = std::fs::read_to_string(&path).map_err(|e| user(format!("{}: {e}", path.display())))?;
                texts.push((id, text));
            }
            let program = Program::from_sources(texts).map_err(|e| user(format!("parse error: {e}")))?;
            if program.describe().files.iter().map(|f| &f.loops).ne(desc.files.iter().map(|f| &f.loops)) {
                return Err(user("sources changed since the description was written"));
            }
            Ok(program)
        }
        _ => Program::from_description(&desc).map_err(user),
    }
}

/// Description of the sources with absolute `path` fields, so that later
/// stages can re-read them.
pub fn analyze(paths: &[PathBuf]) -> Result<Description, PipelineError> {
    let program = load_sources(paths)?;
    let mut desc = program.describe();
    for (f, p) in desc.files.iter_mut().zip(paths) {
        let abs = std::fs::canonicalize(p).map_err(env)?;
        f.path = Some(abs.display().to_string());
    }
    Ok(desc)
}

pub fn classify(program: &Program, probe: &ProbeConfig) -> Result<Verdicts, PipelineError> {
    classify_program(program, probe.build().as_ref()).map_err(env)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mismatch {
    pub index: usize,
    pub baseline: String,
    pub tuned: String,
    pub abs_err: Option<f64>,
    pub rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub pass: bool,
    pub atol: f64,
    pub rtol: f64,
    pub compared: usize,
    pub baseline_len: usize,
    pub tuned_len: usize,
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    pub mismatches: Vec<Mismatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("output is not readable text: {0}")]
pub struct UnparsableOutput(pub String);

/// Element-wise comparison of two whitespace-separated value streams.
/// Numbers pass when `|a-b| <= atol + rtol*|b|` (`b` is the baseline); other
/// tokens must match exactly.
pub fn verify_results(baseline: &str, tuned: &str, atol: f64, rtol: f64) -> DiffReport {
    let a: Vec<&str> = baseline.split_whitespace().collect();
    let b: Vec<&str> = tuned.split_whitespace().collect();
    let mut report = DiffReport {
        pass: true,
        atol,
        rtol,
        compared: a.len().min(b.len()),
        baseline_len: a.len(),
        tuned_len: b.len(),
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        mismatches: Vec::new(),
        diagnostic: None,
    };
    for (index, (x, y)) in a.iter().zip(&b).enumerate() {
        let ok = match (x.parse::<f64>(), y.parse::<f64>()) {
            (Ok(base), Ok(tuned)) => {
                if base.is_nan() && tuned.is_nan() {
                    true
                } else {
                    let abs = (tuned - base).abs();
                    let rel = if base != 0.0 { abs / base.abs() } else if abs == 0.0 { 0.0 } else { f64::INFINITY };
                    let abs_cmp = if abs.is_nan() { f64::INFINITY } else { abs };
                    report.max_abs_err = report.max_abs_err.max(abs_cmp);
                    report.max_rel_err = report.max_rel_err.max(if rel.is_nan() { f64::INFINITY } else { rel });
                    let pass = abs <= atol + rtol * base.abs();
                    if !pass {
                        report.mismatches.push(Mismatch {
                            index,
                            baseline: x.to_string(),
                            tuned: y.to_string(),
                            abs_err: Some(abs_cmp),
                            rel_err: Some(rel),
                        });
                    }
                    pass
                }
            }
            _ => {
                let pass = x == y;
                if !pass {
                    report.mismatches.push(Mismatch {
                        index,
                        baseline: x.to_string(),
                        tuned: y.to_string(),
                        abs_err: None,
                        rel_err: None,
                    });
                }
                pass
            }
        };
        report.pass &= ok;
    }
    if a.len() != b.len() {
        report.pass = false;
        report.diagnostic = Some(format!("baseline has {} values, tuned has {}", a.len(), b.len()));
    }
    report
}

/// Byte input variant of [`verify_results`].
pub fn verify_bytes(baseline: &[u8], tuned: &[u8], atol: f64, rtol: f64) -> Result<DiffReport, UnparsableOutput> {
    let a = std::str::from_utf8(baseline).map_err(|e| UnparsableOutput(format!("baseline: {e}")))?;
    let b = std::str::from_utf8(tuned).map_err(|e| UnparsableOutput(format!("tuned: {e}")))?;
    Ok(verify_results(a, b, atol, rtol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    /// Outputs of the baseline and best variants compared.
    Compared(DiffReport),
    /// The evaluator does not run the program.
    NotRun(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub status: String,
    pub inputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub gene_map: Vec<LoopId>,
    pub baseline_time_s: f64,
    pub best_genome: Genome,
    pub best_time_s: f64,
    pub improvement_ratio: f64,
    pub kinds: BTreeMap<LoopId, DirectiveKind>,
    pub plan: TransferPlan,
    pub generations: usize,
    pub evaluations: usize,
    pub verification: Verification,
    #[serde(skip)]
    pub records: Vec<GenerationRecord>,
    #[serde(skip)]
    pub verdicts: Option<Verdicts>,
    #[serde(skip)]
    pub best_variant: Option<AnnotatedVariant>,
}

impl TuneReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| user(format!("report: {e}")))
    }

    pub fn verification_passed(&self) -> bool {
        match &self.verification {
            Verification::Compared(d) => d.pass,
            Verification::NotRun(_) => true,
        }
    }

    /// Writes the report, the generation log, verdicts, metadata and the
    /// best variant below `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), PipelineError> {
        std::fs::create_dir_all(dir).map_err(env)?;
        let write = |name: &str, text: String| std::fs::write(dir.join(name), text).map_err(env);
        write(REPORT_FILE, self.to_json() + "\n")?;
        let mut lines = String::new();
        for r in &self.records {
            lines.push_str(&serde_json::to_string(r).expect("records serialize"));
            lines.push('\n');
        }
        write(GENERATIONS_FILE, lines)?;
        if let Some(v) = &self.verdicts {
            write(VERDICTS_FILE, v.to_json() + "\n")?;
        }
        let stamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        let meta = serde_json::json!({
            "written_unix_s": stamp,
            "tool_version": env!("CARGO_PKG_VERSION"),
        });
        write(METADATA_FILE, serde_json::to_string_pretty(&meta).unwrap() + "\n")?;
        if let Some(variant) = &self.best_variant {
            write_variant(variant, &dir.join(BEST_DIR))?;
        }
        Ok(())
    }
}

/// Writes variant sources under `dir`, keeping only file names, plus the
/// insertion log.
pub fn write_variant(variant: &AnnotatedVariant, dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dir).map_err(env)?;
    let mut out = Vec::new();
    for (file, text) in &variant.files {
        let name = Path::new(file.as_str()).file_name().unwrap_or_default();
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(env)?;
        out.push(path);
    }
    std::fs::write(dir.join(INSERTIONS_FILE), variant.insertion_log_json() + "\n").map_err(env)?;
    Ok(out)
}

fn load_program(config: &ToolConfig) -> Result<Program, PipelineError> {
    match &config.description {
        Some(path) if config.inputs.is_empty() => load_description(path),
        _ => load_sources(&config.inputs),
    }
}

fn classify_with_filter(config: &ToolConfig, program: &Program) -> Result<Verdicts, PipelineError> {
    let verdicts = classify(program, &config.probe)?;
    match &config.trip_profile {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| user(format!("{}: {e}", path.display())))?;
            let profile = parse_trip_profile(&text).map_err(user)?;
            let estimates: BTreeMap<LoopId, u64> = program
                .loops
                .iter()
                .filter_map(|l| l.trip_count_estimate.map(|c| (l.loop_id, c)))
                .collect();
            Ok(filter_by_trip_count(&verdicts, &estimates, &profile, config.trip_threshold))
        }
        None => Ok(verdicts),
    }
}

fn baseline_time(measured: MeasuredTime) -> Result<f64, PipelineError> {
    match measured {
        MeasuredTime::Seconds(t) if t > 0.0 => Ok(t),
        MeasuredTime::Seconds(t) => Err(user(format!("baseline measured non-positive time {t}"))),
        MeasuredTime::Timeout => Err(user("the unmodified program timed out")),
        MeasuredTime::Failure(d) => Err(user(format!("the unmodified program failed: {d}"))),
    }
}

pub fn run_pipeline(config: &ToolConfig) -> Result<TuneReport, PipelineError> {
    config.validate()?;
    let program = load_program(config)?;
    let verdicts = classify_with_filter(config, &program)?;
    let gene_map = verdicts.gene_map();
    let kinds = verdicts.kind_map();
    log::info!("{} loops, {} eligible", program.loops.len(), gene_map.len());
    match &config.evaluator {
        EvaluatorConfig::Costmodel { model, plan_mode } => {
            let text = std::fs::read_to_string(model).map_err(|e| user(format!("{}: {e}", model.display())))?;
            let model = CostModel::from_json(&text).map_err(user)?;
            let evaluator = CostModelEvaluator::new(&program, gene_map.clone(), model)
                .map_err(user)?
                .with_mode(*plan_mode);
            let verification = Verification::NotRun("the cost model does not execute the program".into());
            search(config, &program, verdicts, &evaluator, |_| Ok(verification.clone()))
        }
        EvaluatorConfig::External(cmd) => {
            let evaluator = ExternalEvaluator::new(&program, gene_map.clone(), kinds.clone(), cmd.clone()).map_err(env)?;
            let verify = config.verify.clone();
            search(config, &program, verdicts, &evaluator, |best| {
                let base = evaluator.run(&Genome::zeros(gene_map.len())).map_err(env)?;
                let tuned = evaluator.run(best).map_err(env)?;
                Ok(Verification::Compared(verify_results(
                    &base.stdout,
                    &tuned.stdout,
                    verify.atol,
                    verify.rtol,
                )))
            })
        }
    }
}

fn search(
    config: &ToolConfig,
    program: &Program,
    verdicts: Verdicts,
    evaluator: &dyn Evaluator,
    verify: impl FnOnce(&Genome) -> Result<Verification, PipelineError>,
) -> Result<TuneReport, PipelineError> {
    let gene_map = verdicts.gene_map();
    let kinds = verdicts.kind_map();
    let baseline = baseline_time(evaluator.measure(&Genome::zeros(gene_map.len())).map_err(env)?)?;
    log::info!("baseline {baseline:.6} s");
    let mut report = TuneReport {
        status: "ok".into(),
        inputs: config.inputs.iter().map(|p| p.display().to_string()).collect(),
        description: config.description.as_ref().map(|p| p.display().to_string()),
        gene_map: gene_map.clone(),
        baseline_time_s: baseline,
        best_genome: Genome::zeros(gene_map.len()),
        best_time_s: baseline,
        improvement_ratio: 1.0,
        kinds: BTreeMap::new(),
        plan: TransferPlan::default(),
        generations: 0,
        evaluations: 1,
        verification: Verification::NotRun("nothing was offloaded".into()),
        records: Vec::new(),
        verdicts: Some(verdicts),
        best_variant: None,
    };
    let outcome = match run_ga(&config.ga, gene_map.len(), evaluator) {
        Ok(o) => o,
        Err(GaError::ZeroGeneLength) => {
            report.status = "no offloadable loops".into();
            return Ok(report);
        }
        Err(GaError::Environment(e)) => return Err(env(e)),
        Err(e) => return Err(user(e)),
    };
    let best = outcome.best.genome.clone();
    report.best_time_s = outcome.best.measured_time_s;
    report.improvement_ratio = baseline / report.best_time_s;
    report.generations = outcome.records.len();
    report.evaluations = outcome.evaluations + 1;
    report.records = outcome.records;
    report.plan = Planner::new(program, gene_map.clone()).plan(&best).map_err(user)?;
    report.kinds = gene_map
        .iter()
        .zip(best.iter())
        .filter(|(_, b)| *b)
        .filter_map(|(id, _)| kinds.get(id).map(|k| (*id, *k)))
        .collect();
    if program.has_source() {
        report.best_variant = Some(emit_variant(program, &best, &gene_map, &kinds, &report.plan).map_err(user)?);
    }
    report.best_genome = best.clone();
    report.verification = verify(&best)?;
    Ok(report)
}

/// Re-emits the best variant recorded in a report directory.
pub fn emit_best(report_dir: &Path) -> Result<AnnotatedVariant, PipelineError> {
    let path = report_dir.join(REPORT_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| user(format!("{}: {e}", path.display())))?;
    let report = TuneReport::from_json(&text)?;
    if report.inputs.is_empty() {
        return Err(user("the report was produced from a structural description; no source to emit"));
    }
    let paths: Vec<PathBuf> = report.inputs.iter().map(PathBuf::from).collect();
    let program = load_sources(&paths)?;
    emit_variant(&program, &report.best_genome, &report.gene_map, &report.kinds, &report.plan).map_err(user)
}
