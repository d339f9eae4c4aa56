//! Per-region variable reference facts.
//!
//! Regions are either a for loop (inclusive of everything nested inside it)
//! or a host region: a maximal run of loop-free statements, a loop header,
//! or the condition of an `if`/`while` that contains loops. Host regions are
//! tagged with their phase relative to the function's outermost loops.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::loops::{LoopId, LoopTable};
use super::{FileId, SourceUnit, Span};

/// Math and I/O routines whose effects are known: they only read arguments.
pub const BUILTIN_FUNCTIONS: &[&str] = &[
    "printf", "print", "puts", "putchar", "sqrt", "sqrtf", "fabs", "fabsf", "abs", "exp", "expf",
    "log", "logf", "log10", "pow", "powf", "sin", "sinf", "cos", "cosf", "tan", "atan", "atan2",
    "floor", "ceil", "fmin", "fmax", "fmod",
];

/// Builtins safe to call from device code.
pub const DEVICE_MATH_FUNCTIONS: &[&str] = &[
    "sqrt", "sqrtf", "fabs", "fabsf", "abs", "exp", "expf", "log", "logf", "log10", "pow", "powf",
    "sin", "sinf", "cos", "cosf", "tan", "atan", "atan2", "floor", "ceil", "fmin", "fmax", "fmod",
];

/// Qualified variable name: `a` for globals, `f::a` for function locals and
/// parameters, `f::a@L3` for variables declared inside loop L3.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarKey(pub String);

impl VarKey {
    pub fn global(name: &str) -> Self {
        VarKey(name.to_string())
    }

    pub fn local(function: &str, name: &str) -> Self {
        VarKey(format!("{function}::{name}"))
    }

    pub fn loop_local(function: &str, name: &str, owner: LoopId) -> Self {
        VarKey(format!("{function}::{name}@{owner}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarScope {
    Global,
    Local,
    /// Array or scalar parameter; its storage outlives the function.
    Param,
    LoopLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HostPhase {
    Pre,
    Between,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Region {
    Loop(LoopId),
    Host { file: FileId, span: Span, phase: HostPhase },
}

impl Region {
    /// `loop:3`, `pre@10-42`, `host@50-61`, `post@70-90`.
    pub fn encode(&self) -> String {
        match self {
            Region::Loop(id) => format!("loop:{}", id.0),
            Region::Host { span, phase, .. } => {
                let tag = match phase {
                    HostPhase::Pre => "pre",
                    HostPhase::Between => "host",
                    HostPhase::Post => "post",
                };
                format!("{tag}@{}-{}", span.start, span.end)
            }
        }
    }

    pub fn decode(text: &str, file: &FileId) -> Option<Region> {
        if let Some(id) = text.strip_prefix("loop:") {
            return id.parse().ok().map(|n| Region::Loop(LoopId(n)));
        }
        let (tag, range) = text.split_once('@')?;
        let phase = match tag {
            "pre" => HostPhase::Pre,
            "host" => HostPhase::Between,
            "post" => HostPhase::Post,
            _ => return None,
        };
        let (s, e) = range.split_once('-')?;
        let (start, end) = (s.parse().ok()?, e.parse().ok()?);
        (start <= end).then(|| Region::Host {
            file: file.clone(),
            span: Span::new(start, end),
            phase,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefFlags {
    pub read: bool,
    pub written: bool,
    pub defined: bool,
    /// Some unconditional write in the region assigns every element (each
    /// subscript is the index of an enclosing loop spanning that extent).
    #[serde(default)]
    pub covering_write: bool,
}

impl RefFlags {
    pub fn any(&self) -> bool {
        self.read || self.written || self.defined
    }

    fn merge(&mut self, other: RefFlags) {
        self.read |= other.read;
        self.written |= other.written;
        self.defined |= other.defined;
        self.covering_write |= other.covering_write;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarEntry {
    pub key: VarKey,
    /// Spelling in the source.
    pub name: String,
    pub scope: VarScope,
    /// Declared type; absent for imported descriptions that omit it.
    pub ty: Option<VarType>,
    pub refs: BTreeMap<Region, RefFlags>,
}

impl VarEntry {
    pub fn flags(&self, region: &Region) -> RefFlags {
        self.refs.get(region).copied().unwrap_or_default()
    }

    pub fn is_const_scalar(&self) -> bool {
        self.ty.as_ref().is_some_and(|t| t.is_const && !t.is_array())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct VarRefTable {
    entries: BTreeMap<VarKey, VarEntry>,
}

impl VarRefTable {
    pub fn from_entries(entries: impl IntoIterator<Item = VarEntry>) -> Self {
        let mut table = VarRefTable::default();
        for e in entries {
            table.insert_entry(e);
        }
        table
    }

    pub fn get(&self, key: &VarKey) -> Option<&VarEntry> {
        self.entries.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &VarEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn flags(&self, key: &VarKey, region: &Region) -> RefFlags {
        self.entries.get(key).map(|e| e.flags(region)).unwrap_or_default()
    }

    /// Every variable with an entry for `region`.
    pub fn in_region<'a>(&'a self, region: &'a Region) -> impl Iterator<Item = (&'a VarEntry, RefFlags)> + 'a {
        self.entries
            .values()
            .filter_map(move |e| e.refs.get(region).map(|f| (e, *f)))
    }

    fn insert_entry(&mut self, entry: VarEntry) {
        match self.entries.get_mut(&entry.key) {
            Some(existing) => {
                for (region, flags) in entry.refs {
                    existing.refs.entry(region).or_default().merge(flags);
                }
                if existing.ty.is_none() {
                    existing.ty = entry.ty;
                }
            }
            None => {
                self.entries.insert(entry.key.clone(), entry);
            }
        }
    }

    fn ensure(&mut self, key: &VarKey, name: &str, scope: VarScope, ty: &VarType) -> &mut VarEntry {
        self.entries.entry(key.clone()).or_insert_with(|| VarEntry {
            key: key.clone(),
            name: name.to_string(),
            scope,
            ty: Some(ty.clone()),
            refs: BTreeMap::new(),
        })
    }
}

/// Reference facts for a single translation unit. Calls into functions not
/// defined in `unit` are treated as unknown.
pub fn analyze_variable_refs(unit: &SourceUnit, loops: &LoopTable) -> VarRefTable {
    analyze_program_refs(std::slice::from_ref(unit), loops)
}

/// Reference facts for a project; calls resolve across all units.
pub fn analyze_program_refs(units: &[SourceUnit], loops: &LoopTable) -> VarRefTable {
    let summaries = summarize_functions(units);
    let mut table = VarRefTable::default();
    for unit in units {
        let globals = global_types(unit);
        for f in unit.functions() {
            let (first, last) = top_loop_bounds(loops, unit, &f.name);
            let mut walker = Walker {
                unit,
                function: &f.name,
                loops,
                globals: &globals,
                summaries: &summaries,
                scopes: vec![HashMap::new()],
                loop_stack: Vec::new(),
                host: None,
                cond_depth: 0,
                first_loop_start: first,
                last_loop_end: last,
                sink: Sink::Table(&mut table),
            };
            walker.bind_params(f);
            walker.visit_body(&f.body);
        }
    }
    table
}

fn top_loop_bounds(loops: &LoopTable, unit: &SourceUnit, function: &str) -> (usize, usize) {
    let tops: Vec<_> = loops
        .iter()
        .filter(|l| l.file_id == unit.file_id && l.depth == 0 && l.function.as_deref() == Some(function))
        .collect();
    match (tops.iter().map(|l| l.span.start).min(), tops.iter().map(|l| l.span.end).max()) {
        (Some(s), Some(e)) => (s, e),
        _ => (usize::MAX, usize::MAX),
    }
}

fn global_types(unit: &SourceUnit) -> HashMap<String, VarType> {
    unit.top_level_decls.iter().map(|d| (d.name.clone(), d.ty.clone())).collect()
}

/// What a call to a user-defined function may touch.
#[derive(Debug, Clone, Default, PartialEq)]
struct Summary {
    globals: BTreeMap<String, (bool, bool)>,
    params: Vec<(bool, bool)>,
}

fn summarize_functions(units: &[SourceUnit]) -> HashMap<String, Summary> {
    let mut summaries: HashMap<String, Summary> = HashMap::new();
    for unit in units {
        for f in unit.functions() {
            summaries.insert(
                f.name.clone(),
                Summary {
                    globals: BTreeMap::new(),
                    params: vec![(false, false); f.params.len()],
                },
            );
        }
    }
    let empty_loops = LoopTable::default();
    // Iterate to a fixpoint over the call graph.
    loop {
        let mut changed = false;
        for unit in units {
            let globals = global_types(unit);
            for f in unit.functions() {
                let mut summary = Summary {
                    globals: BTreeMap::new(),
                    params: vec![(false, false); f.params.len()],
                };
                let snapshot = summaries.clone();
                let mut walker = Walker {
                    unit,
                    function: &f.name,
                    loops: &empty_loops,
                    globals: &globals,
                    summaries: &snapshot,
                    scopes: vec![HashMap::new()],
                    loop_stack: Vec::new(),
                    host: None,
                    cond_depth: 0,
                    first_loop_start: usize::MAX,
                    last_loop_end: usize::MAX,
                    sink: Sink::Summary(&mut summary),
                };
                walker.bind_params(f);
                walker.visit_body(&f.body);
                if summaries.get(&f.name) != Some(&summary) {
                    summaries.insert(f.name.clone(), summary);
                    changed = true;
                }
            }
        }
        if !changed {
            return summaries;
        }
    }
}

#[derive(Debug, Clone)]
struct Resolved {
    key: VarKey,
    name: String,
    scope: VarScope,
    ty: VarType,
    param_index: Option<usize>,
}

enum Sink<'s> {
    Table(&'s mut VarRefTable),
    Summary(&'s mut Summary),
}

/// One enclosing for loop as seen from inside its body.
struct LoopFrame {
    id: Option<LoopId>,
    /// `(index var, bound text, bound value)` for `for (v = 0; v < B; v++)`.
    full_range: Option<(String, String, Option<i64>)>,
    cond_depth: usize,
}

struct Walker<'a, 's> {
    unit: &'a SourceUnit,
    function: &'a str,
    loops: &'a LoopTable,
    globals: &'a HashMap<String, VarType>,
    summaries: &'a HashMap<String, Summary>,
    scopes: Vec<HashMap<String, Resolved>>,
    loop_stack: Vec<LoopFrame>,
    host: Option<Region>,
    cond_depth: usize,
    first_loop_start: usize,
    last_loop_end: usize,
    sink: Sink<'s>,
}

#[derive(Clone, Copy)]
enum Access {
    Read,
    Write,
    Define,
}

impl Walker<'_, '_> {
    fn bind_params(&mut self, f: &Function) {
        for (i, p) in f.params.iter().enumerate() {
            let r = Resolved {
                key: VarKey::local(self.function, &p.name),
                name: p.name.clone(),
                scope: VarScope::Param,
                ty: p.ty.clone(),
                param_index: Some(i),
            };
            self.scopes[0].insert(p.name.clone(), r);
        }
    }

    fn resolve(&self, name: &str) -> Option<Resolved> {
        if let Some(r) = self.scopes.iter().rev().find_map(|s| s.get(name)) {
            return Some(r.clone());
        }
        self.globals.get(name).map(|ty| Resolved {
            key: VarKey::global(name),
            name: name.to_string(),
            scope: VarScope::Global,
            ty: ty.clone(),
            param_index: None,
        })
    }

    fn phase(&self, span: Span) -> HostPhase {
        if span.end <= self.first_loop_start {
            HostPhase::Pre
        } else if span.start >= self.last_loop_end {
            HostPhase::Post
        } else {
            HostPhase::Between
        }
    }

    fn host_region(&self, span: Span) -> Region {
        Region::Host {
            file: self.unit.file_id.clone(),
            span,
            phase: self.phase(span),
        }
    }

    fn record(&mut self, var: &Resolved, access: Access) {
        match &mut self.sink {
            Sink::Summary(summary) => {
                let (read, write) = match access {
                    Access::Read => (true, false),
                    Access::Write => (false, true),
                    Access::Define => return,
                };
                let slot = match (var.scope, var.param_index) {
                    (VarScope::Global, _) => summary.globals.entry(var.name.clone()).or_default(),
                    (VarScope::Param, Some(i)) if var.ty.is_array() => &mut summary.params[i],
                    _ => return,
                };
                slot.0 |= read;
                slot.1 |= write;
            }
            Sink::Table(table) => {
                let mut regions: Vec<Region> = self.loop_stack.iter().filter_map(|f| f.id.map(Region::Loop)).collect();
                if let Some(h) = &self.host {
                    regions.push(h.clone());
                }
                let entry = table.ensure(&var.key, &var.name, var.scope, &var.ty);
                for region in regions {
                    let flags = entry.refs.entry(region).or_default();
                    match access {
                        Access::Read => flags.read = true,
                        Access::Write => flags.written = true,
                        Access::Define => flags.defined = true,
                    }
                }
            }
        }
    }

    fn record_covering(&mut self, var: &Resolved, subs: &[&Expr]) {
        let Sink::Table(table) = &mut self.sink else { return };
        let mut covered_loops = Vec::new();
        for (pos, frame) in self.loop_stack.iter().enumerate() {
            let Some(id) = frame.id else { continue };
            if frame.cond_depth != self.cond_depth {
                continue;
            }
            // Frames at or inside `pos` must supply one index per dimension.
            let inner = &self.loop_stack[pos..];
            let ok = if subs.is_empty() {
                true
            } else {
                subs.len() == var.ty.extents.len()
                    && subs.iter().zip(&var.ty.extents).all(|(sub, extent)| {
                        let ExprKind::Var(v) = &sub.kind else { return false };
                        inner.iter().any(|f| match &f.full_range {
                            Some((iv, text, value)) => {
                                iv == v
                                    && (extent.text.as_deref() == Some(text.as_str())
                                        || (value.is_some() && *value == extent.value))
                            }
                            None => false,
                        })
                    })
                    && distinct_vars(subs)
            };
            if ok {
                covered_loops.push(id);
            }
        }
        let entry = table.ensure(&var.key, &var.name, var.scope, &var.ty);
        for id in covered_loops {
            entry.refs.entry(Region::Loop(id)).or_default().covering_write = true;
        }
    }

    fn declare(&mut self, decl: &VarDecl) {
        if let Some(init) = &decl.init {
            match init {
                Initializer::Expr(e) => self.read_expr(e),
                Initializer::List(list) => list.iter().for_each(|e| self.read_expr(e)),
            }
        }
        let owner = self.loop_stack.iter().rev().find_map(|f| f.id);
        let (key, scope) = match owner {
            Some(id) => (VarKey::loop_local(self.function, &decl.name, id), VarScope::LoopLocal),
            None if self.loop_stack.is_empty() => (VarKey::local(self.function, &decl.name), VarScope::Local),
            // Loop frames without ids only occur while summarizing.
            None => (VarKey::local(self.function, &decl.name), VarScope::LoopLocal),
        };
        let r = Resolved {
            key,
            name: decl.name.clone(),
            scope,
            ty: decl.ty.clone(),
            param_index: None,
        };
        self.record(&r, Access::Define);
        if decl.init.is_some() {
            self.record(&r, Access::Write);
        }
        self.scopes.last_mut().unwrap().insert(decl.name.clone(), r);
    }

    fn visit_body(&mut self, body: &Stmt) {
        match &body.kind {
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                self.visit_block(stmts);
                self.scopes.pop();
            }
            _ => self.visit_block(std::slice::from_ref(body)),
        }
    }

    fn visit_block(&mut self, stmts: &[Stmt]) {
        let mut i = 0;
        while i < stmts.len() {
            if contains_for(&stmts[i]) {
                self.visit_compound(&stmts[i]);
                i += 1;
                continue;
            }
            let start = i;
            while i < stmts.len() && !contains_for(&stmts[i]) {
                i += 1;
            }
            let span = Span::new(stmts[start].span.start, stmts[i - 1].span.end);
            let saved = self.host.replace(self.host_region(span));
            for s in &stmts[start..i] {
                self.visit_simple(s);
            }
            self.host = saved;
        }
    }

    /// A statement containing at least one for loop.
    fn visit_compound(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::For {
                header,
                init,
                cond,
                step,
                body,
            } => {
                let id = self.loops.find_by_span(&self.unit.file_id, stmt.span.start).map(|l| l.loop_id);
                self.scopes.push(HashMap::new());
                self.loop_stack.push(LoopFrame {
                    id,
                    full_range: self.full_range(init.as_ref(), cond.as_ref(), step.as_ref()),
                    cond_depth: self.cond_depth,
                });
                let saved = self.host.replace(self.host_region(*header));
                self.visit_for_header(init.as_ref(), cond.as_ref(), step.as_ref());
                self.host = saved;
                self.visit_body(body);
                self.loop_stack.pop();
                self.scopes.pop();
            }
            StmtKind::While { cond, body } => {
                let saved = self.host.replace(self.host_region(cond.span));
                self.read_expr(cond);
                self.host = saved;
                self.cond_depth += 1;
                self.visit_body(body);
                self.cond_depth -= 1;
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let saved = self.host.replace(self.host_region(cond.span));
                self.read_expr(cond);
                self.host = saved;
                self.cond_depth += 1;
                self.visit_body(then_branch);
                if let Some(e) = else_branch {
                    self.visit_body(e);
                }
                self.cond_depth -= 1;
            }
            StmtKind::Block(_) => self.visit_body(stmt),
            StmtKind::Labeled(_, s) | StmtKind::Annotated { stmt: s, .. } => self.visit_compound(s),
            _ => self.visit_simple(stmt),
        }
    }

    fn visit_for_header(&mut self, init: Option<&ForInit>, cond: Option<&Expr>, step: Option<&Expr>) {
        match init {
            Some(ForInit::Decl(decls)) => decls.iter().for_each(|d| self.declare(d)),
            Some(ForInit::Expr(e)) => self.effect_expr(e),
            None => {}
        }
        if let Some(c) = cond {
            self.read_expr(c);
        }
        if let Some(s) = step {
            self.effect_expr(s);
        }
    }

    fn full_range(&self, init: Option<&ForInit>, cond: Option<&Expr>, step: Option<&Expr>) -> Option<(String, String, Option<i64>)> {
        let (iv, start) = match init? {
            ForInit::Decl(d) if d.len() == 1 => match &d[0].init {
                Some(Initializer::Expr(e)) => (d[0].name.clone(), e),
                _ => return None,
            },
            ForInit::Expr(Expr {
                kind: ExprKind::Assign { op: None, target, value },
                ..
            }) => match &target.kind {
                ExprKind::Var(n) => (n.clone(), value.as_ref()),
                _ => return None,
            },
            _ => return None,
        };
        if !matches!(start.kind, ExprKind::Int(0)) {
            return None;
        }
        let ExprKind::Binary {
            op: BinaryOp::Lt,
            lhs,
            rhs,
        } = &cond?.kind
        else {
            return None;
        };
        if !matches!(&lhs.kind, ExprKind::Var(n) if *n == iv) {
            return None;
        }
        let unit_step = match &step?.kind {
            ExprKind::IncDec {
                increment: true, target, ..
            } => matches!(&target.kind, ExprKind::Var(n) if *n == iv),
            ExprKind::Assign {
                op: Some(BinaryOp::Add),
                target,
                value,
            } => matches!(&target.kind, ExprKind::Var(n) if *n == iv) && matches!(value.kind, ExprKind::Int(1)),
            _ => false,
        };
        if !unit_step {
            return None;
        }
        let text = rhs.span.slice(&self.unit.original_text).to_string();
        let value = match &rhs.kind {
            ExprKind::Int(v) => Some(*v),
            ExprKind::Var(n) => self.globals.get(n).and(const_value(self.unit, n)),
            _ => None,
        };
        Some((iv, text, value))
    }

    fn visit_simple(&mut self, stmt: &Stmt) {
        match &stmt.kind {
            StmtKind::Decl(decls) => decls.iter().for_each(|d| self.declare(d)),
            StmtKind::Expr(e) => self.effect_expr(e),
            StmtKind::Return(Some(e)) => self.read_expr(e),
            StmtKind::Block(stmts) => {
                self.scopes.push(HashMap::new());
                stmts.iter().for_each(|s| self.visit_simple(s));
                self.scopes.pop();
            }
            StmtKind::While { cond, body } => {
                self.read_expr(cond);
                self.cond_depth += 1;
                self.scopes.push(HashMap::new());
                self.visit_simple(body);
                self.scopes.pop();
                self.cond_depth -= 1;
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.read_expr(cond);
                self.cond_depth += 1;
                for branch in std::iter::once(then_branch).chain(else_branch.iter()) {
                    self.scopes.push(HashMap::new());
                    self.visit_simple(branch);
                    self.scopes.pop();
                }
                self.cond_depth -= 1;
            }
            StmtKind::Labeled(_, s) | StmtKind::Annotated { stmt: s, .. } => self.visit_simple(s),
            StmtKind::For { .. } => self.visit_compound(stmt),
            _ => {}
        }
    }

    /// An expression evaluated for its side effects (statement position).
    fn effect_expr(&mut self, e: &Expr) {
        self.read_expr(e);
    }

    fn read_expr(&mut self, e: &Expr) {
        match &e.kind {
            ExprKind::Var(_) | ExprKind::Index { .. } => {
                let (name, subs) = e.lvalue_parts().unwrap();
                for s in &subs {
                    self.read_expr(s);
                }
                if let Some(r) = self.resolve(name) {
                    self.record(&r, Access::Read);
                }
            }
            ExprKind::Assign { op, target, value } => {
                self.read_expr(value);
                let (name, subs) = target.lvalue_parts().unwrap();
                for s in &subs {
                    self.read_expr(s);
                }
                if let Some(r) = self.resolve(name) {
                    if op.is_some() {
                        self.record(&r, Access::Read);
                    }
                    let unconditional_plain = op.is_none();
                    self.record(&r, Access::Write);
                    if unconditional_plain {
                        self.record_covering(&r, &subs);
                    }
                }
            }
            ExprKind::IncDec { target, .. } => {
                let (name, subs) = target.lvalue_parts().unwrap();
                for s in &subs {
                    self.read_expr(s);
                }
                if let Some(r) = self.resolve(name) {
                    self.record(&r, Access::Read);
                    self.record(&r, Access::Write);
                }
            }
            ExprKind::Call { name, args } => self.call(name, args),
            ExprKind::Unary { expr, .. } | ExprKind::Cast { expr, .. } => self.read_expr(expr),
            ExprKind::Binary { lhs, rhs, .. } => {
                self.read_expr(lhs);
                self.read_expr(rhs);
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                self.read_expr(cond);
                self.cond_depth += 1;
                self.read_expr(then_expr);
                self.read_expr(else_expr);
                self.cond_depth -= 1;
            }
            ExprKind::Comma(list) => list.iter().for_each(|x| self.read_expr(x)),
            ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Str(_) => {}
        }
    }

    fn call(&mut self, name: &str, args: &[Expr]) {
        if let Some(summary) = self.summaries.get(name) {
            let summary = summary.clone();
            for (i, arg) in args.iter().enumerate() {
                let array_arg = match &arg.kind {
                    ExprKind::Var(v) => self.resolve(v).filter(|r| r.ty.is_array()),
                    _ => None,
                };
                match array_arg {
                    Some(r) => {
                        let (read, write) = summary.params.get(i).copied().unwrap_or((true, true));
                        if read {
                            self.record(&r, Access::Read);
                        }
                        if write {
                            self.record(&r, Access::Write);
                        }
                    }
                    None => self.read_expr(arg),
                }
            }
            for (global, (read, write)) in &summary.globals {
                let Some(ty) = self.globals.get(global) else { continue };
                let r = Resolved {
                    key: VarKey::global(global),
                    name: global.clone(),
                    scope: VarScope::Global,
                    ty: ty.clone(),
                    param_index: None,
                };
                // A local of the same name does not hide the callee's global.
                if *read {
                    self.record(&r, Access::Read);
                }
                if *write {
                    self.record(&r, Access::Write);
                }
            }
            return;
        }
        let known = BUILTIN_FUNCTIONS.contains(&name);
        for arg in args {
            let array_arg = match &arg.kind {
                ExprKind::Var(v) => self.resolve(v).filter(|r| r.ty.is_array()),
                _ => None,
            };
            match array_arg {
                Some(r) if !known => {
                    self.record(&r, Access::Read);
                    self.record(&r, Access::Write);
                }
                _ => self.read_expr(arg),
            }
        }
    }
}

fn const_value(unit: &SourceUnit, name: &str) -> Option<i64> {
    super::loops::const_scalars(unit).get(name).copied()
}

fn distinct_vars(subs: &[&Expr]) -> bool {
    let mut names: Vec<&str> = subs
        .iter()
        .filter_map(|s| match &s.kind {
            ExprKind::Var(v) => Some(v.as_str()),
            _ => None,
        })
        .collect();
    let n = names.len();
    names.sort_unstable();
    names.dedup();
    names.len() == n
}

pub(crate) fn contains_for(stmt: &Stmt) -> bool {
    let mut found = false;
    stmt.walk(&mut |s| found |= s.is_for());
    found
}
