//! Performance measurement: an external compile-and-run harness, a synthetic
//! cost model and exhaustive search over the cost model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::DirectiveKind;
use crate::emit::{emit_variant, AnnotatedVariant};
use crate::ga::Genome;
use crate::model::{LoopId, Program, VarKey};
use crate::transfer::{Planner, TransferPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasuredTime {
    Seconds(f64),
    Timeout,
    Failure(String),
}

impl MeasuredTime {
    pub fn seconds(&self) -> Option<f64> {
        match self {
            MeasuredTime::Seconds(t) => Some(*t),
            _ => None,
        }
    }
}

/// The measuring environment itself is unusable; the run must stop.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("evaluation environment unavailable: {0}")]
pub struct EnvironmentError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capability {
    pub max_concurrency: usize,
    pub deterministic: bool,
}

pub trait Evaluator: Sync {
    fn capability(&self) -> Capability;

    fn measure(&self, genome: &Genome) -> Result<MeasuredTime, EnvironmentError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopCost {
    pub cpu_s: f64,
    pub gpu_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarCost {
    pub bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub overhead_s: f64,
    pub loops: BTreeMap<u32, LoopCost>,
    pub vars: BTreeMap<String, VarCost>,
    pub bandwidth_bytes_per_s: f64,
    pub latency_s: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CostError {
    #[error("cost model has no entry for loop {0}")]
    MissingLoop(u32),
    #[error("cost model has no entry for variable '{0}'")]
    MissingVar(String),
    #[error("invalid cost model: {0}")]
    Invalid(String),
    #[error("exhaustive search supports at most 20 genes, got {0}")]
    TooLarge(usize),
}

impl CostModel {
    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let model: CostModel = serde_json::from_str(text).map_err(|e| CostError::Invalid(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("cost model serializes")
    }

    pub fn validate(&self) -> Result<(), CostError> {
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        let loops_ok = self.loops.values().all(|l| ok(l.cpu_s) && ok(l.gpu_s));
        let vars_ok = self.vars.values().all(|v| ok(v.bytes));
        if !(ok(self.overhead_s) && ok(self.latency_s) && loops_ok && vars_ok) {
            return Err(CostError::Invalid("components must be finite and non-negative".into()));
        }
        if !(self.bandwidth_bytes_per_s > 0.0) {
            return Err(CostError::Invalid("bandwidth must be positive".into()));
        }
        Ok(())
    }

    /// Seconds per host-device movement of `var`.
    pub fn event_cost(&self, var: &str) -> Result<f64, CostError> {
        let v = self.vars.get(var).ok_or_else(|| CostError::MissingVar(var.to_string()))?;
        Ok(self.latency_s + v.bytes / self.bandwidth_bytes_per_s)
    }

    fn loop_cost(&self, id: LoopId) -> Result<&LoopCost, CostError> {
        self.loops.get(&id.0).ok_or(CostError::MissingLoop(id.0))
    }

    /// Checks that every gene loop and every transferable variable has an
    /// entry.
    pub fn covers(&self, gene_map: &[LoopId], vars: &[VarKey]) -> Result<(), CostError> {
        for id in gene_map {
            self.loop_cost(*id)?;
        }
        for v in vars {
            self.event_cost(v.as_str())?;
        }
        Ok(())
    }

    /// Time of the all-CPU genome.
    pub fn baseline(&self, gene_map: &[LoopId]) -> Result<f64, CostError> {
        let mut t = self.overhead_s;
        for id in gene_map {
            t += self.loop_cost(*id)?.cpu_s;
        }
        Ok(t)
    }
}

/// `overhead + Σ cpu (gene 0) + Σ gpu (gene 1) + Σ events × per-event cost`.
pub fn evaluate_costmodel(
    genome: &Genome,
    gene_map: &[LoopId],
    plan: &TransferPlan,
    model: &CostModel,
) -> Result<f64, CostError> {
    let mut t = model.overhead_s;
    for (id, bit) in gene_map.iter().zip(genome.iter()) {
        let c = model.loop_cost(*id)?;
        t += if bit { c.gpu_s } else { c.cpu_s };
    }
    for e in &plan.entries {
        t += e.direction.events() as f64 * model.event_cost(e.var.as_str())?;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    /// One region per site.
    PerSite,
    /// Hoisted and batched regions with the temporary-region pattern.
    #[default]
    Batched,
}

pub struct CostModelEvaluator<'p> {
    planner: Planner<'p>,
    model: CostModel,
    mode: PlanMode,
}

impl<'p> CostModelEvaluator<'p> {
    pub fn new(program: &'p Program, gene_map: Vec<LoopId>, model: CostModel) -> Result<Self, CostError> {
        model.validate()?;
        let planner = Planner::new(program, gene_map.clone());
        let vars: Vec<VarKey> = program
            .refs
            .iter()
            .filter(|e| e.ty.as_ref().map_or(true, |t| t.is_array()) && e.scope != crate::model::VarScope::LoopLocal)
            .filter(|e| gene_map.iter().any(|id| e.flags(&crate::model::Region::Loop(*id)).any()))
            .map(|e| e.key.clone())
            .collect();
        model.covers(&gene_map, &vars)?;
        Ok(CostModelEvaluator {
            planner,
            model,
            mode: PlanMode::Batched,
        })
    }

    pub fn with_mode(mut self, mode: PlanMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn planner(&self) -> &Planner<'p> {
        &self.planner
    }

    pub fn model(&self) -> &CostModel {
        &self.model
    }

    pub fn plan(&self, genome: &Genome) -> Result<TransferPlan, CostError> {
        let planned = match self.mode {
            PlanMode::Batched => self.planner.plan(genome),
            PlanMode::PerSite => self.planner.plan_transfers(genome),
        };
        planned.map_err(|e| CostError::Invalid(e.to_string()))
    }

    pub fn time(&self, genome: &Genome) -> Result<f64, CostError> {
        let plan = self.plan(genome)?;
        evaluate_costmodel(genome, self.planner.gene_map(), &plan, &self.model)
    }
}

impl Evaluator for CostModelEvaluator<'_> {
    fn capability(&self) -> Capability {
        Capability {
            max_concurrency: 1,
            deterministic: true,
        }
    }

    fn measure(&self, genome: &Genome) -> Result<MeasuredTime, EnvironmentError> {
        Ok(match self.time(genome) {
            Ok(t) if t > 0.0 => MeasuredTime::Seconds(t),
            Ok(t) => MeasuredTime::Failure(format!("model produced non-positive time {t}")),
            Err(e) => MeasuredTime::Failure(e.to_string()),
        })
    }
}

/// Enumerates every genome; ties go to the lowest binary value.
pub fn brute_force_optimum(evaluator: &CostModelEvaluator<'_>) -> Result<(Genome, f64), CostError> {
    let len = evaluator.planner().gene_len();
    if len > 20 {
        return Err(CostError::TooLarge(len));
    }
    let total = 1u64 << len;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()) as u64;
    let chunk = total.div_ceil(workers).max(1);
    let partial: Vec<Result<(u64, f64), CostError>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..total)
            .step_by(chunk as usize)
            .map(|start| {
                s.spawn(move || {
                    let mut best: Option<(u64, f64)> = None;
                    for v in start..(start + chunk).min(total) {
                        let t = evaluator.time(&Genome::from_index(v, len))?;
                        if best.map_or(true, |(_, b)| t < b) {
                            best = Some((v, t));
                        }
                    }
                    Ok(best.expect("chunk is non-empty"))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut best: Option<(u64, f64)> = None;
    for r in partial {
        let (v, t) = r?;
        if best.map_or(true, |(bv, bt)| t < bt || (t == bt && v < bv)) {
            best = Some((v, t));
        }
    }
    let (v, t) = best.expect("at least one genome");
    Ok((Genome::from_index(v, len), t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandConfig {
    /// Placeholders: `{src}`, `{bin}`, `{workdir}`.
    pub compile: String,
    /// Placeholders: `{bin}`, `{workdir}`.
    pub run: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

fn default_timeout() -> f64 {
    180.0
}

fn default_concurrency() -> usize {
    1
}

/// Output of one compile-and-run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub time: MeasuredTime,
    pub stdout: String,
}

/// Writes the annotated variant to a scratch directory, compiles and runs it.
pub struct ExternalEvaluator<'p> {
    program: &'p Program,
    planner: Planner<'p>,
    kinds: BTreeMap<LoopId, DirectiveKind>,
    config: CommandConfig,
    keep_dir: Option<PathBuf>,
}

impl<'p> ExternalEvaluator<'p> {
    pub fn new(
        program: &'p Program,
        gene_map: Vec<LoopId>,
        kinds: BTreeMap<LoopId, DirectiveKind>,
        config: CommandConfig,
    ) -> Result<Self, EnvironmentError> {
        if !program.has_source() {
            return Err(EnvironmentError(
                "external measurement needs source files, not a structural description".into(),
            ));
        }
        Ok(ExternalEvaluator {
            program,
            planner: Planner::new(program, gene_map),
            kinds,
            config,
            keep_dir: None,
        })
    }

    /// Keep the last variant in `dir` instead of a temporary directory.
    pub fn keep_in(mut self, dir: PathBuf) -> Self {
        self.keep_dir = Some(dir);
        self
    }

    pub fn variant(&self, genome: &Genome) -> Result<AnnotatedVariant, String> {
        let plan = self.planner.plan(genome).map_err(|e| e.to_string())?;
        emit_variant(self.program, genome, self.planner.gene_map(), &self.kinds, &plan).map_err(|e| e.to_string())
    }

    pub fn run(&self, genome: &Genome) -> Result<RunOutcome, EnvironmentError> {
        let variant = match self.variant(genome) {
            Ok(v) => v,
            Err(e) => {
                return Ok(RunOutcome {
                    time: MeasuredTime::Failure(e),
                    stdout: String::new(),
                })
            }
        };
        let temp;
        let dir: &Path = match &self.keep_dir {
            Some(d) => {
                std::fs::create_dir_all(d).map_err(|e| EnvironmentError(e.to_string()))?;
                d
            }
            None => {
                temp = tempfile::tempdir().map_err(|e| EnvironmentError(e.to_string()))?;
                temp.path()
            }
        };
        let sources = variant.write_to(dir).map_err(|e| EnvironmentError(e.to_string()))?;
        let bin = dir.join("variant.bin");
        let fill = |t: &str| {
            let src: Vec<String> = sources.iter().map(|p| p.display().to_string()).collect();
            t.replace("{src}", &src.join(" "))
                .replace("{bin}", &bin.display().to_string())
                .replace("{workdir}", &dir.display().to_string())
        };
        let compile = run_shell(&fill(&self.config.compile), dir, None)?;
        match compile {
            Shell::Exited { code: 0, .. } => {}
            Shell::Exited { code, stderr, .. } => {
                let msg = if stderr.trim().is_empty() {
                    format!("compile exited with {code}")
                } else {
                    stderr
                };
                return Ok(RunOutcome {
                    time: MeasuredTime::Failure(msg),
                    stdout: String::new(),
                });
            }
            Shell::TimedOut => unreachable!("compile has no timeout"),
        }
        let start = Instant::now();
        let run = run_shell(&fill(&self.config.run), dir, Some(Duration::from_secs_f64(self.config.timeout_s)))?;
        let elapsed = start.elapsed().as_secs_f64().max(1e-9);
        Ok(match run {
            Shell::Exited { code: 0, stdout, .. } => RunOutcome {
                time: MeasuredTime::Seconds(elapsed),
                stdout,
            },
            Shell::Exited { code, stderr, stdout } => RunOutcome {
                time: MeasuredTime::Failure(format!("run exited with {code}: {}", stderr.trim())),
                stdout,
            },
            Shell::TimedOut => RunOutcome {
                time: MeasuredTime::Timeout,
                stdout: String::new(),
            },
        })
    }
}

impl Evaluator for ExternalEvaluator<'_> {
    fn capability(&self) -> Capability {
        Capability {
            max_concurrency: if self.keep_dir.is_some() { 1 } else { self.config.max_concurrency.max(1) },
            deterministic: false,
        }
    }

    fn measure(&self, genome: &Genome) -> Result<MeasuredTime, EnvironmentError> {
        Ok(self.run(genome)?.time)
    }
}

enum Shell {
    Exited { code: i32, stdout: String, stderr: String },
    TimedOut,
}

fn run_shell(cmd: &str, dir: &Path, timeout: Option<Duration>) -> Result<Shell, EnvironmentError> {
    let out_path = dir.join(".stdout");
    let err_path = dir.join(".stderr");
    let io = |e: std::io::Error| EnvironmentError(format!("cannot run '{cmd}': {e}"));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(std::fs::File::create(&out_path).map_err(io)?)
        .stderr(std::fs::File::create(&err_path).map_err(io)?)
        .spawn()
        .map_err(io)?;
    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait().map_err(io)? {
            break status;
        }
        if timeout.is_some_and(|t| start.elapsed() > t) {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(Shell::TimedOut);
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stdout = std::fs::read_to_string(&out_path).unwrap_or_default();
    let stderr = std::fs::read_to_string(&err_path).unwrap_or_default();
    let code = status.code().unwrap_or(-1);
    if code == 127 {
        return Err(EnvironmentError(format!("command not found: {cmd}: {}", stderr.trim())));
    }
    Ok(Shell::Exited { code, stdout, stderr })
}
