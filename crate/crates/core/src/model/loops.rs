use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::{FileId, SourceUnit, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoopId(pub u32);

impl fmt::Display for LoopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "L{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LoopShape {
    SingleLoop,
    TightlyNestedOuter,
    TightlyNestedInner,
    NonTightlyNested,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub loop_id: LoopId,
    pub file_id: FileId,
    /// Enclosing function, when known.
    pub function: Option<String>,
    pub span: Span,
    /// `for (...)` up to and including the closing parenthesis.
    pub header: Span,
    /// 0 for outermost.
    pub depth: u32,
    pub parent_loop: Option<LoopId>,
    pub index_var: Option<String>,
    pub trip_count_estimate: Option<u64>,
    pub shape: LoopShape,
}

/// Every for statement of a project, in document order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LoopTable {
    loops: Vec<LoopInfo>,
}

impl LoopTable {
    pub fn new(mut loops: Vec<LoopInfo>) -> Self {
        loops.sort_by_key(|l| l.loop_id);
        LoopTable { loops }
    }

    pub fn len(&self) -> usize {
        self.loops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loops.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, LoopInfo> {
        self.loops.iter()
    }

    pub fn get(&self, id: LoopId) -> Option<&LoopInfo> {
        self.loops
            .binary_search_by_key(&id, |l| l.loop_id)
            .ok()
            .map(|i| &self.loops[i])
    }

    pub fn extend(&mut self, other: LoopTable) {
        self.loops.extend(other.loops);
        self.loops.sort_by_key(|l| l.loop_id);
    }

    pub fn children(&self, id: LoopId) -> impl Iterator<Item = &LoopInfo> {
        self.loops.iter().filter(move |l| l.parent_loop == Some(id))
    }

    /// True when `inner` is `outer` or lies inside it.
    pub fn is_within(&self, inner: LoopId, outer: LoopId) -> bool {
        let mut cur = Some(inner);
        while let Some(id) = cur {
            if id == outer {
                return true;
            }
            cur = self.get(id).and_then(|l| l.parent_loop);
        }
        false
    }

    /// Loops enclosing `id`, innermost first, excluding `id` itself.
    pub fn ancestors(&self, id: LoopId) -> Vec<LoopId> {
        let mut out = Vec::new();
        let mut cur = self.get(id).and_then(|l| l.parent_loop);
        while let Some(p) = cur {
            out.push(p);
            cur = self.get(p).and_then(|l| l.parent_loop);
        }
        out
    }

    pub fn find_by_span(&self, file: &FileId, start: usize) -> Option<&LoopInfo> {
        self.loops.iter().find(|l| &l.file_id == file && l.span.start == start)
    }
}

impl<'a> IntoIterator for &'a LoopTable {
    type Item = &'a LoopInfo;
    type IntoIter = std::slice::Iter<'a, LoopInfo>;

    fn into_iter(self) -> Self::IntoIter {
        self.loops.iter()
    }
}

/// Extracts every for statement, numbering from zero.
pub fn extract_loops(unit: &SourceUnit) -> LoopTable {
    extract_loops_from(unit, LoopId(0))
}

/// Extracts every for statement, numbering from `first` in document order.
pub fn extract_loops_from(unit: &SourceUnit, first: LoopId) -> LoopTable {
    let consts = const_scalars(unit);
    let mut ctx = Extract {
        unit,
        consts: &consts,
        next: first.0,
        out: Vec::new(),
    };
    for f in unit.functions() {
        ctx.visit(&f.body, &f.name, None, 0, false);
    }
    LoopTable::new(ctx.out)
}

pub(crate) fn const_scalars(unit: &SourceUnit) -> HashMap<String, i64> {
    unit.top_level_decls
        .iter()
        .filter(|d| d.ty.is_const && !d.ty.is_array())
        .filter_map(|d| match &d.init {
            Some(Initializer::Expr(Expr {
                kind: ExprKind::Int(v), ..
            })) => Some((d.name.clone(), *v)),
            _ => None,
        })
        .collect()
}

struct Extract<'a> {
    unit: &'a SourceUnit,
    consts: &'a HashMap<String, i64>,
    next: u32,
    out: Vec<LoopInfo>,
}

impl Extract<'_> {
    fn visit(&mut self, stmt: &Stmt, function: &str, parent: Option<(LoopId, bool)>, depth: u32, sole_body: bool) {
        match &stmt.kind {
            StmtKind::For {
                header,
                init,
                cond,
                step,
                body,
            } => {
                let id = LoopId(self.next);
                self.next += 1;
                let index_var = loop_index_var(init.as_ref(), step.as_ref());
                let trip_count_estimate = index_var
                    .as_deref()
                    .and_then(|iv| trip_count(iv, init.as_ref(), cond.as_ref(), step.as_ref(), self.consts));
                let inner = sole_statement(body);
                let tight_outer = inner.is_some_and(Stmt::is_for);
                let has_nested = contains_for(body);
                let parent_tight = matches!(parent, Some((_, true))) && sole_body;
                let shape = if tight_outer {
                    LoopShape::TightlyNestedOuter
                } else if has_nested {
                    LoopShape::NonTightlyNested
                } else if parent_tight {
                    LoopShape::TightlyNestedInner
                } else {
                    LoopShape::SingleLoop
                };
                self.out.push(LoopInfo {
                    loop_id: id,
                    file_id: self.unit.file_id.clone(),
                    function: Some(function.to_string()),
                    span: stmt.span,
                    header: *header,
                    depth,
                    parent_loop: parent.map(|p| p.0),
                    index_var,
                    trip_count_estimate,
                    shape,
                });
                self.visit_body(body, function, Some((id, tight_outer)), depth + 1, true);
            }
            StmtKind::Block(stmts) => {
                for s in stmts {
                    self.visit(s, function, parent, depth, false);
                }
            }
            StmtKind::While { body, .. } => self.visit(body, function, parent, depth, false),
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                self.visit(then_branch, function, parent, depth, false);
                if let Some(e) = else_branch {
                    self.visit(e, function, parent, depth, false);
                }
            }
            StmtKind::Labeled(_, s) | StmtKind::Annotated { stmt: s, .. } => {
                self.visit(s, function, parent, depth, sole_body)
            }
            _ => {}
        }
    }

    /// Visits a loop body; a braced body holding exactly one statement counts
    /// as that statement being the sole body.
    fn visit_body(&mut self, body: &Stmt, function: &str, parent: Option<(LoopId, bool)>, depth: u32, sole: bool) {
        match &body.kind {
            StmtKind::Block(stmts) if stmts.len() == 1 => self.visit(&stmts[0], function, parent, depth, sole),
            _ => self.visit(body, function, parent, depth, sole),
        }
    }
}

/// The only statement of a loop body, seeing through braces and annotations.
fn sole_statement(body: &Stmt) -> Option<&Stmt> {
    match &body.unwrap_annotations().kind {
        StmtKind::Block(stmts) if stmts.len() == 1 => sole_statement(&stmts[0]),
        StmtKind::Block(_) => None,
        _ => Some(body.unwrap_annotations()),
    }
}

fn contains_for(stmt: &Stmt) -> bool {
    let mut found = false;
    stmt.walk(&mut |s| found |= s.is_for());
    found
}

fn loop_index_var(init: Option<&ForInit>, step: Option<&Expr>) -> Option<String> {
    match init {
        Some(ForInit::Decl(decls)) if decls.len() == 1 => return Some(decls[0].name.clone()),
        Some(ForInit::Expr(Expr {
            kind: ExprKind::Assign { op: None, target, .. },
            ..
        })) => {
            if let ExprKind::Var(name) = &target.kind {
                return Some(name.clone());
            }
        }
        _ => {}
    }
    match &step?.kind {
        ExprKind::IncDec { target, .. } | ExprKind::Assign { target, .. } => match &target.kind {
            ExprKind::Var(name) => Some(name.clone()),
            _ => None,
        },
        _ => None,
    }
}

fn eval_const(e: &Expr, consts: &HashMap<String, i64>) -> Option<i64> {
    match &e.kind {
        ExprKind::Int(v) => Some(*v),
        ExprKind::Var(n) => consts.get(n).copied(),
        ExprKind::Unary { op: UnaryOp::Neg, expr } => eval_const(expr, consts).map(|v| -v),
        ExprKind::Binary { op, lhs, rhs } => {
            let (a, b) = (eval_const(lhs, consts)?, eval_const(rhs, consts)?);
            match op {
                BinaryOp::Add => Some(a + b),
                BinaryOp::Sub => Some(a - b),
                BinaryOp::Mul => Some(a * b),
                BinaryOp::Div if b != 0 => Some(a / b),
                _ => None,
            }
        }
        _ => None,
    }
}

fn trip_count(
    iv: &str,
    init: Option<&ForInit>,
    cond: Option<&Expr>,
    step: Option<&Expr>,
    consts: &HashMap<String, i64>,
) -> Option<u64> {
    let start = match init? {
        ForInit::Decl(decls) => match decls.first()?.init.as_ref()? {
            Initializer::Expr(e) => eval_const(e, consts)?,
            Initializer::List(_) => return None,
        },
        ForInit::Expr(Expr {
            kind: ExprKind::Assign { op: None, value, .. },
            ..
        }) => eval_const(value, consts)?,
        ForInit::Expr(_) => return None,
    };
    let is_iv = |e: &Expr| matches!(&e.kind, ExprKind::Var(n) if n == iv);
    let (bound, inclusive) = match &cond?.kind {
        ExprKind::Binary { op, lhs, rhs } if is_iv(lhs) => match op {
            BinaryOp::Lt => (eval_const(rhs, consts)?, false),
            BinaryOp::Le => (eval_const(rhs, consts)?, true),
            _ => return None,
        },
        ExprKind::Binary { op, lhs, rhs } if is_iv(rhs) => match op {
            BinaryOp::Gt => (eval_const(lhs, consts)?, false),
            BinaryOp::Ge => (eval_const(lhs, consts)?, true),
            _ => return None,
        },
        _ => return None,
    };
    let stride = match &step?.kind {
        ExprKind::IncDec {
            increment: true, target, ..
        } if is_iv(target) => 1,
        ExprKind::Assign {
            op: Some(BinaryOp::Add),
            target,
            value,
        } if is_iv(target) => eval_const(value, consts)?,
        _ => return None,
    };
    if stride <= 0 {
        return None;
    }
    let span = bound - start + i64::from(inclusive);
    Some(if span <= 0 { 0 } else { ((span + stride - 1) / stride) as u64 })
}
