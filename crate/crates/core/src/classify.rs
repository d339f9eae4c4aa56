//! Per-loop eligibility and directive kind.
//!
//! Each loop is tried with one directive at a time, in the order kernels,
//! parallel loop, parallel loop vector. A probe decides whether the variant
//! with that single directive is acceptable: either an external compiler
//! command or the built-in static checker.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ast::*;
use crate::model::refs::DEVICE_MATH_FUNCTIONS;
use crate::model::{line_col, parse_source, FileId, LoopId, LoopInfo, LoopShape, Program, SourceUnit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveKind {
    Kernels,
    ParallelLoop,
    ParallelLoopVector,
}

impl DirectiveKind {
    pub const PRIORITY: [DirectiveKind; 3] = [
        DirectiveKind::Kernels,
        DirectiveKind::ParallelLoop,
        DirectiveKind::ParallelLoopVector,
    ];

    pub fn pragma(self) -> &'static str {
        match self {
            DirectiveKind::Kernels => "#pragma acc kernels",
            DirectiveKind::ParallelLoop => "#pragma acc parallel loop",
            DirectiveKind::ParallelLoopVector => "#pragma acc parallel loop vector",
        }
    }

    /// Spelling for a loop nested inside another offloaded loop.
    pub fn nested_pragma(self) -> &'static str {
        match self {
            DirectiveKind::ParallelLoopVector => "#pragma acc loop vector",
            _ => "#pragma acc loop",
        }
    }

    pub fn from_pragma(text: &str) -> Option<DirectiveKind> {
        let words: Vec<&str> = text.split_whitespace().collect();
        match words.as_slice() {
            ["#pragma", "acc", "kernels", ..] => Some(DirectiveKind::Kernels),
            ["#pragma", "acc", "parallel", "loop", "vector", ..] => Some(DirectiveKind::ParallelLoopVector),
            ["#pragma", "acc", "parallel", "loop", ..] => Some(DirectiveKind::ParallelLoop),
            _ => None,
        }
    }

    /// Kernels is only tried on single loops and outer loops of tight nests.
    pub fn applies_to(self, shape: LoopShape) -> bool {
        match self {
            DirectiveKind::Kernels => matches!(shape, LoopShape::SingleLoop | LoopShape::TightlyNestedOuter),
            _ => true,
        }
    }
}

impl fmt::Display for DirectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DirectiveKind::Kernels => "kernels",
            DirectiveKind::ParallelLoop => "parallel loop",
            DirectiveKind::ParallelLoopVector => "parallel loop vector",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeOutcome {
    Accepted,
    Rejected(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub outcome: ProbeOutcome,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProbeError {
    #[error("compile probe unavailable: {0}")]
    Unavailable(String),
}

/// Source of one file with a single directive inserted.
#[derive(Debug, Clone)]
pub struct ProbeRequest<'a> {
    pub file_id: &'a FileId,
    pub variant_source: &'a str,
    /// 1-based line of the inserted directive.
    pub pragma_line: usize,
}

pub trait CompileProbe: Sync {
    /// How many probes may run at once.
    fn capacity(&self) -> usize;
    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeResult, ProbeError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ProbeConfig {
    Static,
    Command {
        /// Shell command with `{src}` and `{workdir}` placeholders.
        template: String,
        #[serde(default = "one")]
        capacity: usize,
    },
}

fn one() -> usize {
    1
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig::Static
    }
}

impl ProbeConfig {
    /// `static`, or anything else as a command template.
    pub fn parse(text: &str) -> ProbeConfig {
        if text == "static" {
            ProbeConfig::Static
        } else {
            ProbeConfig::Command {
                template: text.to_string(),
                capacity: 1,
            }
        }
    }

    pub fn build(&self) -> Box<dyn CompileProbe> {
        match self {
            ProbeConfig::Static => Box::new(StaticProbe),
            ProbeConfig::Command { template, capacity } => Box::new(CommandProbe {
                template: template.clone(),
                capacity: (*capacity).max(1),
            }),
        }
    }
}

/// Runs a shell command on the variant; exit status 0 accepts.
#[derive(Debug, Clone)]
pub struct CommandProbe {
    pub template: String,
    pub capacity: usize,
}

impl CompileProbe for CommandProbe {
    fn capacity(&self) -> usize {
        self.capacity
    }

    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeResult, ProbeError> {
        let started = Instant::now();
        let dir = tempfile::tempdir().map_err(|e| ProbeError::Unavailable(format!("temp dir: {e}")))?;
        let name = std::path::Path::new(request.file_id.as_str())
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "variant.c".into());
        let src = dir.path().join(name);
        std::fs::write(&src, request.variant_source).map_err(|e| ProbeError::Unavailable(format!("write variant: {e}")))?;
        let command = self
            .template
            .replace("{src}", &src.to_string_lossy())
            .replace("{workdir}", &dir.path().to_string_lossy());
        let output = Command::new("sh")
            .arg("-c")
            .arg(&command)
            .current_dir(dir.path())
            .output()
            .map_err(|e| ProbeError::Unavailable(format!("cannot run sh: {e}")))?;
        let elapsed_ms = started.elapsed().as_millis() as u64;
        match output.status.code() {
            Some(0) => Ok(ProbeResult {
                outcome: ProbeOutcome::Accepted,
                elapsed_ms,
            }),
            Some(127) => Err(ProbeError::Unavailable(format!(
                "command not found: {}",
                String::from_utf8_lossy(&output.stderr).trim()
            ))),
            code => {
                let stderr = String::from_utf8_lossy(&output.stderr).trim().to_string();
                let diag = if stderr.is_empty() {
                    format!("probe exited with {}", code.map_or("signal".into(), |c| c.to_string()))
                } else {
                    stderr
                };
                Ok(ProbeResult {
                    outcome: ProbeOutcome::Rejected(diag),
                    elapsed_ms,
                })
            }
        }
    }
}

/// Rejects loops with cross-iteration dependences on the loop index,
/// early exits, calls other than device math routines, and scalars carried
/// across iterations. Anti dependences (`a[i] = a[i+1]`) still allow the
/// vector form.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticProbe;

impl CompileProbe for StaticProbe {
    fn capacity(&self) -> usize {
        usize::MAX
    }

    fn probe(&self, request: &ProbeRequest<'_>) -> Result<ProbeResult, ProbeError> {
        let started = Instant::now();
        let outcome = match static_check(request) {
            Ok(()) => ProbeOutcome::Accepted,
            Err(diag) => ProbeOutcome::Rejected(diag),
        };
        Ok(ProbeResult {
            outcome,
            elapsed_ms: started.elapsed().as_millis() as u64,
        })
    }
}

fn static_check(request: &ProbeRequest<'_>) -> Result<(), String> {
    let unit = parse_source(request.variant_source, request.file_id.clone()).map_err(|e| e.to_string())?;
    for f in unit.functions() {
        let mut finder = Finder {
            unit: &unit,
            line: request.pragma_line,
            scopes: vec![
                unit.top_level_decls
                    .iter()
                    .map(|d| (d.name.clone(), (Origin::Outside, d.ty.is_array())))
                    .collect(),
                f.params.iter().map(|p| (p.name.clone(), (Origin::Outside, p.ty.is_array()))).collect(),
            ],
            loop_depth: 0,
            result: None,
        };
        finder.visit(&f.body);
        if let Some(r) = finder.result {
            return r;
        }
    }
    Err(format!("no directive found on line {}", request.pragma_line))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Outside,
    /// Declared in the body of a loop enclosing the probed one.
    OuterLoopLocal,
    Inside,
}

struct Finder<'u> {
    unit: &'u SourceUnit,
    line: usize,
    scopes: Vec<HashMap<String, (Origin, bool)>>,
    loop_depth: usize,
    result: Option<Result<(), String>>,
}

impl Finder<'_> {
    fn declare(&mut self, d: &VarDecl) {
        let origin = if self.loop_depth > 0 {
            Origin::OuterLoopLocal
        } else {
            Origin::Outside
        };
        self.scopes.last_mut().unwrap().insert(d.name.clone(), (origin, d.ty.is_array()));
    }

    fn visit(&mut self, stmt: &Stmt) {
        if self.result.is_some() {
            return;
        }
        match &stmt.kind {
            StmtKind::Annotated { pragmas, stmt: inner } => {
                let (line, _) = line_col(&self.unit.original_text, stmt.span.start);
                let kind = pragmas.first().and_then(|p| DirectiveKind::from_pragma(p));
                if line == self.line {
                    self.result = Some(match (kind, &inner.kind) {
                        (Some(kind), StmtKind::For { .. }) => self.check_loop(kind, inner),
                        _ => Err("directive does not precede a for loop".into()),
                    });
                    return;
                }
                self.visit(inner);
            }
            StmtKind::Decl(decls) => decls.iter().for_each(|d| self.declare(d)),
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                stmts.iter().for_each(|s| self.visit(s));
                self.scopes.pop();
            }
            StmtKind::For { init, body, .. } => {
                self.scopes.push(HashMap::new());
                if let Some(ForInit::Decl(decls)) = init {
                    decls.iter().for_each(|d| self.declare(d));
                }
                self.loop_depth += 1;
                self.visit(body);
                self.loop_depth -= 1;
                self.scopes.pop();
            }
            StmtKind::While { body, .. } => {
                self.scopes.push(HashMap::new());
                self.visit(body);
                self.scopes.pop();
            }
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                for b in std::iter::once(then_branch).chain(else_branch.iter()) {
                    self.scopes.push(HashMap::new());
                    self.visit(b);
                    self.scopes.pop();
                }
            }
            StmtKind::Labeled(_, s) => self.visit(s),
            _ => {}
        }
    }

    fn check_loop(&self, kind: DirectiveKind, stmt: &Stmt) -> Result<(), String> {
        let StmtKind::For { init, step, body, .. } = &stmt.kind else { unreachable!() };
        let mut scopes = self.scopes.clone();
        scopes.push(HashMap::new());
        let iv = match init {
            Some(ForInit::Decl(decls)) => {
                for d in decls {
                    scopes.last_mut().unwrap().insert(d.name.clone(), (Origin::Inside, d.ty.is_array()));
                }
                decls.first().map(|d| d.name.clone())
            }
            Some(ForInit::Expr(Expr {
                kind: ExprKind::Assign { target, .. },
                ..
            })) => match &target.kind {
                ExprKind::Var(n) => Some(n.clone()),
                _ => None,
            },
            _ => None,
        };
        let Some(iv) = iv else {
            return Err("no recognizable loop index".into());
        };
        let direction = match step.as_ref().map(|s| &s.kind) {
            Some(ExprKind::IncDec { increment, .. }) => {
                if *increment {
                    1
                } else {
                    -1
                }
            }
            Some(ExprKind::Assign {
                op: Some(BinaryOp::Sub), ..
            }) => -1,
            _ => 1,
        };
        let mut body_check = BodyCheck {
            scopes,
            accesses: BTreeMap::new(),
            iv: iv.clone(),
        };
        body_check.stmt(body)?;
        for (array, accesses) in &body_check.accesses {
            if !accesses.iter().any(|a| a.write) {
                continue;
            }
            let dims = accesses[0].offsets.len();
            let dim = (0..dims).find(|&d| accesses.iter().all(|a| a.offsets.len() == dims && a.offsets[d].is_some()));
            let Some(dim) = dim else {
                return Err(format!("array '{array}' is written without being indexed by '{iv}'"));
            };
            let offset = |a: &ArrayAccess| a.offsets[dim].unwrap() * direction;
            let mut writes: Vec<i64> = accesses.iter().filter(|a| a.write).map(offset).collect();
            writes.sort_unstable();
            writes.dedup();
            if writes.len() > 1 {
                return Err(format!("output dependence on '{array}'"));
            }
            let w = writes[0];
            for read in accesses.iter().filter(|a| !a.write).map(offset) {
                if read < w {
                    return Err(format!("loop-carried dependence on '{array}'"));
                }
                if read > w && kind != DirectiveKind::ParallelLoopVector {
                    return Err(format!("anti dependence on '{array}' prevents parallelization"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
struct ArrayAccess {
    write: bool,
    /// Per subscript, the constant offset from the loop index if affine.
    offsets: Vec<Option<i64>>,
}

struct BodyCheck {
    scopes: Vec<HashMap<String, (Origin, bool)>>,
    accesses: BTreeMap<String, Vec<ArrayAccess>>,
    iv: String,
}

impl BodyCheck {
    fn lookup(&self, name: &str) -> (Origin, bool) {
        self.scopes
            .iter()
            .rev()
            .find_map(|s| s.get(name).copied())
            .unwrap_or((Origin::Outside, false))
    }

    fn declare(&mut self, d: &VarDecl) -> Result<(), String> {
        if let Some(init) = &d.init {
            match init {
                Initializer::Expr(e) => self.expr(e)?,
                Initializer::List(list) => {
                    for e in list {
                        self.expr(e)?;
                    }
                }
            }
        }
        self.scopes.last_mut().unwrap().insert(d.name.clone(), (Origin::Inside, d.ty.is_array()));
        Ok(())
    }

    fn stmt(&mut self, stmt: &Stmt) -> Result<(), String> {
        match &stmt.kind {
            StmtKind::Break => Err("break statement in loop".into()),
            StmtKind::Goto(_) => Err("goto statement in loop".into()),
            StmtKind::Return(_) => Err("return statement in loop".into()),
            StmtKind::Decl(decls) => decls.iter().try_for_each(|d| self.declare(d)),
            StmtKind::Expr(e) => self.expr(e),
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                let r = stmts.iter().try_for_each(|s| self.stmt(s));
                self.scopes.pop();
                r
            }
            StmtKind::For {
                init, cond, step, body, ..
            } => {
                self.scopes.push(HashMap::new());
                let inner_iv = match init {
                    Some(ForInit::Decl(decls)) => {
                        decls.iter().try_for_each(|d| self.declare(d))?;
                        None
                    }
                    Some(ForInit::Expr(e)) => self.header_expr(e)?,
                    None => None,
                };
                if let Some(c) = cond {
                    self.expr(c)?;
                }
                if let Some(s) = step {
                    match self.header_expr(s)? {
                        Some(v) if inner_iv.as_ref().is_some_and(|iv| *iv != v) => {
                            return Err(format!("scalar '{v}' is carried across iterations"));
                        }
                        _ => {}
                    }
                }
                // The inner index is private to each iteration of the probed loop.
                if let Some(v) = &inner_iv {
                    if *v == self.iv {
                        return Err(format!("index variable '{v}' is modified in the loop body"));
                    }
                    let is_array = self.lookup(v).1;
                    self.scopes.last_mut().unwrap().insert(v.clone(), (Origin::Inside, is_array));
                }
                let r = self.stmt(body);
                self.scopes.pop();
                r
            }
            StmtKind::While { cond, body } => {
                self.expr(cond)?;
                self.scopes.push(HashMap::new());
                let r = self.stmt(body);
                self.scopes.pop();
                r
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.expr(cond)?;
                for b in std::iter::once(then_branch).chain(else_branch.iter()) {
                    self.scopes.push(HashMap::new());
                    self.stmt(b)?;
                    self.scopes.pop();
                }
                Ok(())
            }
            StmtKind::Labeled(_, s) | StmtKind::Annotated { stmt: s, .. } => self.stmt(s),
            StmtKind::Empty | StmtKind::Continue | StmtKind::Pragma(_) => Ok(()),
        }
    }

    /// A nested header init/step: a write to a plain scalar there names the
    /// nested loop's index, which is returned instead of being rejected.
    fn header_expr(&mut self, e: &Expr) -> Result<Option<String>, String> {
        let target = match &e.kind {
            ExprKind::Assign { target, value, op } => {
                self.expr(value)?;
                if op.is_some() {
                    self.expr(target)?;
                }
                target
            }
            ExprKind::IncDec { target, .. } => target,
            _ => {
                self.expr(e)?;
                return Ok(None);
            }
        };
        match &target.kind {
            ExprKind::Var(v) if !self.lookup(v).1 => Ok(Some(v.clone())),
            _ => {
                self.expr(e)?;
                Ok(None)
            }
        }
    }

    fn offset(&self, e: &Expr) -> Option<i64> {
        let is_iv = |x: &Expr| matches!(&x.kind, ExprKind::Var(v) if *v == self.iv);
        match &e.kind {
            ExprKind::Var(v) if *v == self.iv => Some(0),
            ExprKind::Binary { op, lhs, rhs } => match (op, &lhs.kind, &rhs.kind) {
                (BinaryOp::Add, _, ExprKind::Int(c)) if is_iv(lhs) => Some(*c),
                (BinaryOp::Add, ExprKind::Int(c), _) if is_iv(rhs) => Some(*c),
                (BinaryOp::Sub, _, ExprKind::Int(c)) if is_iv(lhs) => Some(-*c),
                _ => None,
            },
            _ => None,
        }
    }

    fn access(&mut self, target: &Expr, write: bool) -> Result<(), String> {
        let (name, subs) = target.lvalue_parts().expect("lvalue");
        for s in &subs {
            self.expr(s)?;
        }
        let (origin, is_array) = self.lookup(name);
        if origin == Origin::Inside {
            return Ok(());
        }
        if is_array {
            if origin == Origin::OuterLoopLocal {
                return Err(format!("array '{name}' is private to an enclosing loop"));
            }
            let offsets = subs.iter().map(|s| self.offset(s)).collect();
            self.accesses
                .entry(name.to_string())
                .or_default()
                .push(ArrayAccess { write, offsets });
        } else if write {
            if name == self.iv {
                return Err(format!("index variable '{name}' is modified in the loop body"));
            }
            return Err(format!("scalar '{name}' is carried across iterations"));
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> Result<(), String> {
        match &e.kind {
            ExprKind::Var(_) | ExprKind::Index { .. } => self.access(e, false),
            ExprKind::Assign { op, target, value } => {
                self.expr(value)?;
                if op.is_some() {
                    self.access(target, false)?;
                }
                self.access(target, true)
            }
            ExprKind::IncDec { target, .. } => {
                self.access(target, false)?;
                self.access(target, true)
            }
            ExprKind::Call { name, args } => {
                if !DEVICE_MATH_FUNCTIONS.contains(&name.as_str()) {
                    return Err(format!("call to unknown function '{name}'"));
                }
                args.iter().try_for_each(|a| self.expr(a))
            }
            ExprKind::Unary { expr, .. } | ExprKind::Cast { expr, .. } => self.expr(expr),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.expr(lhs)?;
                self.expr(rhs)
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                self.expr(cond)?;
                self.expr(then_expr)?;
                self.expr(else_expr)
            }
            ExprKind::Comma(list) => list.iter().try_for_each(|x| self.expr(x)),
            ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Str(_) => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Eligible(DirectiveKind),
    Ineligible(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogOutcome {
    Accepted,
    Rejected(String),
    /// Not attempted because the kind does not fit the loop shape.
    SkippedByShape,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeLogEntry {
    pub kind: DirectiveKind,
    pub outcome: LogOutcome,
    #[serde(default)]
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityVerdict {
    pub loop_id: LoopId,
    pub status: VerdictStatus,
    pub probe_log: Vec<ProbeLogEntry>,
}

impl EligibilityVerdict {
    pub fn kind(&self) -> Option<DirectiveKind> {
        match self.status {
            VerdictStatus::Eligible(k) => Some(k),
            VerdictStatus::Ineligible(_) => None,
        }
    }

    fn ineligible(loop_id: LoopId, reason: &str) -> Self {
        EligibilityVerdict {
            loop_id,
            status: VerdictStatus::Ineligible(reason.to_string()),
            probe_log: Vec::new(),
        }
    }
}

/// Verdicts for every loop of a project, in loop-id order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub verdicts: Vec<EligibilityVerdict>,
}

impl Verdicts {
    pub fn new(mut verdicts: Vec<EligibilityVerdict>) -> Self {
        verdicts.sort_by_key(|v| v.loop_id);
        Verdicts { verdicts }
    }

    /// Eligible loops in document order; position `i` is gene `i`.
    pub fn gene_map(&self) -> Vec<LoopId> {
        self.verdicts.iter().filter(|v| v.kind().is_some()).map(|v| v.loop_id).collect()
    }

    pub fn gene_len(&self) -> usize {
        self.verdicts.iter().filter(|v| v.kind().is_some()).count()
    }

    pub fn kind_map(&self) -> BTreeMap<LoopId, DirectiveKind> {
        self.verdicts.iter().filter_map(|v| v.kind().map(|k| (v.loop_id, k))).collect()
    }

    pub fn get(&self, id: LoopId) -> Option<&EligibilityVerdict> {
        self.verdicts.iter().find(|v| v.loop_id == id)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Out<'a> {
            verdicts: &'a [EligibilityVerdict],
            gene_map: Vec<LoopId>,
        }
        serde_json::to_string_pretty(&Out {
            verdicts: &self.verdicts,
            gene_map: self.gene_map(),
        })
        .expect("verdicts serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        #[derive(Deserialize)]
        struct In {
            verdicts: Vec<EligibilityVerdict>,
        }
        let parsed: In = serde_json::from_str(text)?;
        Ok(Verdicts::new(parsed.verdicts))
    }
}

/// Inserts `line` (indented like the target line) before the line holding
/// `offset`. Returns the new text and the 1-based line of the insertion.
pub fn insert_line_before(text: &str, offset: usize, line: &str) -> (String, usize) {
    let start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let indent: String = text[start..].chars().take_while(|c| *c == ' ' || *c == '\t').collect();
    let mut out = String::with_capacity(text.len() + line.len() + indent.len() + 1);
    out.push_str(&text[..start]);
    out.push_str(&indent);
    out.push_str(line);
    out.push('\n');
    out.push_str(&text[start..]);
    let line_no = text[..start].matches('\n').count() + 1;
    (out, line_no)
}

/// Tries each applicable kind in priority order on `info`, a loop of `unit`.
pub fn classify_loop(unit: &SourceUnit, info: &LoopInfo, probe: &dyn CompileProbe) -> Result<EligibilityVerdict, ProbeError> {
    if !unit.starts_line(info.span.start) || !unit.ends_line(info.span.end) {
        return Ok(EligibilityVerdict::ineligible(info.loop_id, "loop not line-aligned"));
    }
    let mut log = Vec::new();
    let mut last = String::from("no directive kind applies");
    for kind in DirectiveKind::PRIORITY {
        if !kind.applies_to(info.shape) {
            log.push(ProbeLogEntry {
                kind,
                outcome: LogOutcome::SkippedByShape,
                elapsed_ms: 0,
            });
            continue;
        }
        let (variant, pragma_line) = insert_line_before(&unit.original_text, info.span.start, kind.pragma());
        let result = probe.probe(&ProbeRequest {
            file_id: &unit.file_id,
            variant_source: &variant,
            pragma_line,
        })?;
        match result.outcome {
            ProbeOutcome::Accepted => {
                log.push(ProbeLogEntry {
                    kind,
                    outcome: LogOutcome::Accepted,
                    elapsed_ms: result.elapsed_ms,
                });
                return Ok(EligibilityVerdict {
                    loop_id: info.loop_id,
                    status: VerdictStatus::Eligible(kind),
                    probe_log: log,
                });
            }
            ProbeOutcome::Rejected(diag) => {
                last = diag.clone();
                log.push(ProbeLogEntry {
                    kind,
                    outcome: LogOutcome::Rejected(diag),
                    elapsed_ms: result.elapsed_ms,
                });
            }
        }
    }
    Ok(EligibilityVerdict {
        loop_id: info.loop_id,
        status: VerdictStatus::Ineligible(last),
        probe_log: log,
    })
}

/// Without source text only the shape rule is available: kernels where it
/// applies, parallel loop elsewhere.
pub fn classify_by_shape(info: &LoopInfo) -> EligibilityVerdict {
    let kind = if DirectiveKind::Kernels.applies_to(info.shape) {
        DirectiveKind::Kernels
    } else {
        DirectiveKind::ParallelLoop
    };
    EligibilityVerdict {
        loop_id: info.loop_id,
        status: VerdictStatus::Eligible(kind),
        probe_log: Vec::new(),
    }
}

/// Classifies every loop, running up to `probe.capacity()` probes at once.
pub fn classify_program(program: &Program, probe: &dyn CompileProbe) -> Result<Verdicts, ProbeError> {
    let loops: Vec<&LoopInfo> = program.loops.iter().collect();
    if !program.has_source() {
        return Ok(Verdicts::new(loops.into_iter().map(classify_by_shape).collect()));
    }
    let workers = probe
        .capacity()
        .min(std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, loops.len().max(1));
    let next = Mutex::new(0usize);
    let results: Mutex<Vec<Option<Result<EligibilityVerdict, ProbeError>>>> = Mutex::new(vec![None; loops.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    let i = *n;
                    *n += 1;
                    i
                };
                let Some(info) = loops.get(i) else { break };
                let unit = program.unit(&info.file_id).expect("loop belongs to a unit");
                let verdict = classify_loop(unit, info, probe);
                results.lock().unwrap()[i] = Some(verdict);
            });
        }
    });
    let verdicts = results
        .into_inner()
        .unwrap()
        .into_iter()
        .map(|r| r.expect("every loop classified"))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Verdicts::new(verdicts))
}

pub const BELOW_THRESHOLD: &str = "below trip-count threshold";

/// Marks eligible loops whose known trip count is below `threshold` as
/// ineligible. `profile` overrides the static estimates; a threshold of 0
/// disables the filter.
pub fn filter_by_trip_count(
    verdicts: &Verdicts,
    estimates: &BTreeMap<LoopId, u64>,
    profile: &BTreeMap<LoopId, u64>,
    threshold: u64,
) -> Verdicts {
    if threshold == 0 {
        return verdicts.clone();
    }
    let mut out = verdicts.clone();
    for v in &mut out.verdicts {
        if v.kind().is_none() {
            continue;
        }
        let count = profile.get(&v.loop_id).or_else(|| estimates.get(&v.loop_id));
        if count.is_some_and(|&c| c < threshold) {
            v.status = VerdictStatus::Ineligible(BELOW_THRESHOLD.into());
        }
    }
    out
}

/// Parses a trip-count profile file: `{"<loop_id>": <count>}`.
pub fn parse_trip_profile(text: &str) -> Result<BTreeMap<LoopId, u64>, String> {
    let raw: BTreeMap<String, u64> = serde_json::from_str(text).map_err(|e| e.to_string())?;
    raw.into_iter()
        .map(|(k, v)| {
            k.trim()
                .parse::<u32>()
                .map(|id| (LoopId(id), v))
                .map_err(|_| format!("bad loop id '{k}'"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn verdicts(src: &str) -> Verdicts {
        let p = Program::from_sources([(FileId::new("c.c"), src)]).unwrap();
        classify_program(&p, &StaticProbe).unwrap()
    }

    fn wrap(body: &str) -> String {
        format!("const int N = 16;\ndouble a[N], b[N], c[N][N];\ndouble s;\nint main() {{\n{body}  return 0;\n}}\n")
    }

    #[test]
    fn independent_loop_gets_kernels() {
        let v = verdicts(&wrap("  for (int i = 0; i < N; i++)\n    a[i] = b[i] * 2.0;\n"));
        assert_eq!(v.verdicts[0].status, VerdictStatus::Eligible(DirectiveKind::Kernels));
    }

    #[test]
    fn recurrence_is_ineligible() {
        let v = verdicts(&wrap("  for (int i = 1; i < N; i++)\n    a[i] = a[i - 1] + 1;\n"));
        assert!(matches!(v.verdicts[0].status, VerdictStatus::Ineligible(_)));
        assert_eq!(v.verdicts[0].probe_log.len(), 3);
    }

    #[test]
    fn anti_dependence_is_vector_only() {
        let v = verdicts(&wrap("  for (int i = 0; i < N - 1; i++)\n    a[i] = a[i + 1] + 1;\n"));
        assert_eq!(v.verdicts[0].status, VerdictStatus::Eligible(DirectiveKind::ParallelLoopVector));
    }

    #[test]
    fn reduction_scalar_is_ineligible() {
        let v = verdicts(&wrap("  for (int i = 0; i < N; i++)\n    s += a[i];\n"));
        assert!(matches!(&v.verdicts[0].status, VerdictStatus::Ineligible(r) if r.contains("scalar 's'")));
    }

    #[test]
    fn non_tight_nest_gets_parallel_loop() {
        let v = verdicts(&wrap(
            "  for (int i = 0; i < N; i++) {\n    a[i] = 0;\n    for (int j = 0; j < N; j++)\n      c[i][j] = b[j];\n  }\n",
        ));
        assert_eq!(v.verdicts[0].status, VerdictStatus::Eligible(DirectiveKind::ParallelLoop));
        assert_eq!(v.verdicts[0].probe_log[0].outcome, LogOutcome::SkippedByShape);
        assert_eq!(v.verdicts[1].status, VerdictStatus::Eligible(DirectiveKind::Kernels));
    }

    #[test]
    fn unknown_call_and_break_are_ineligible() {
        let v = verdicts(&wrap(
            "  for (int i = 0; i < N; i++)\n    touch(a);\n  for (int i = 0; i < N; i++) {\n    if (a[i] > 1) break;\n    b[i] = 1;\n  }\n",
        ));
        assert!(matches!(&v.verdicts[0].status, VerdictStatus::Ineligible(r) if r.contains("unknown function")));
        assert!(matches!(&v.verdicts[1].status, VerdictStatus::Ineligible(r) if r.contains("break")));
    }

    #[test]
    fn unaligned_loop_is_ineligible() {
        let v = verdicts(&wrap("  a[0] = 1; for (int i = 0; i < N; i++) b[i] = 2;\n"));
        assert_eq!(v.verdicts[0].status, VerdictStatus::Ineligible("loop not line-aligned".into()));
    }

    #[test]
    fn trip_filter() {
        let v = verdicts(&wrap("  for (int i = 0; i < 4; i++)\n    a[i] = 1;\n"));
        let est = BTreeMap::from([(LoopId(0), 4)]);
        let f = filter_by_trip_count(&v, &est, &BTreeMap::new(), 1000);
        assert_eq!(f.verdicts[0].status, VerdictStatus::Ineligible(BELOW_THRESHOLD.into()));
        assert_eq!(f.gene_len(), 0);
        let kept = filter_by_trip_count(&v, &BTreeMap::new(), &BTreeMap::new(), 1000);
        assert_eq!(kept.gene_len(), 1);
    }

    #[test]
    fn insert_line_keeps_indentation() {
        let (out, line) = insert_line_before("a\n  b\n", 4, "#x");
        assert_eq!(out, "a\n  #x\n  b\n");
        assert_eq!(line, 2);
    }
}
