//! Post-parse checks that keep the subset alias-free.

use std::collections::{HashMap, HashSet};

use super::ast::*;
use super::lexer::line_col;
use super::{ParseError, SourceUnit};

struct Checker<'u> {
    unit: &'u SourceUnit,
    globals: HashMap<&'u str, &'u VarType>,
    functions: HashMap<&'u str, &'u Function>,
    globals_used: HashMap<&'u str, HashSet<String>>,
}

struct FnScope<'u> {
    scopes: Vec<HashMap<&'u str, &'u VarType>>,
    function_level: HashSet<&'u str>,
    loop_depth: usize,
}

impl<'u> FnScope<'u> {
    fn lookup(&self, name: &str) -> Option<&'u VarType> {
        self.scopes.iter().rev().find_map(|s| s.get(name).copied())
    }
}

pub(super) fn check(unit: &SourceUnit) -> Result<(), ParseError> {
    let mut globals = HashMap::new();
    for decl in &unit.top_level_decls {
        globals.insert(decl.name.as_str(), &decl.ty);
    }
    let functions: HashMap<&str, &Function> = unit.functions().map(|f| (f.name.as_str(), f)).collect();
    let mut checker = Checker {
        unit,
        globals,
        functions,
        globals_used: HashMap::new(),
    };
    checker.compute_globals_used();
    for f in unit.functions() {
        checker.check_function(f)?;
    }
    Ok(())
}

impl<'u> Checker<'u> {
    fn err(&self, offset: usize, construct: String) -> ParseError {
        let (line, column) = line_col(&self.unit.original_text, offset);
        ParseError {
            line,
            column,
            construct,
        }
    }

    /// Globals each function touches directly or through callees.
    fn compute_globals_used(&mut self) {
        let mut direct: HashMap<&'u str, (HashSet<String>, HashSet<String>)> = HashMap::new();
        for f in self.unit.functions() {
            let mut locals: HashSet<&str> = f.params.iter().map(|p| p.name.as_str()).collect();
            let mut used = HashSet::new();
            let mut calls = HashSet::new();
            f.body.walk(&mut |s| {
                collect_stmt_names(s, &mut locals, &mut used, &mut calls);
            });
            let used = used.into_iter().filter(|n| self.globals.contains_key(n.as_str())).collect();
            direct.insert(f.name.as_str(), (used, calls));
        }
        let mut result: HashMap<&str, HashSet<String>> = direct.iter().map(|(k, v)| (*k, v.0.clone())).collect();
        loop {
            let mut changed = false;
            for (name, (_, calls)) in &direct {
                let mut add = Vec::new();
                for callee in calls {
                    if let Some(set) = result.get(callee.as_str()) {
                        add.extend(set.iter().cloned());
                    }
                }
                let entry = result.get_mut(name).unwrap();
                for g in add {
                    changed |= entry.insert(g);
                }
            }
            if !changed {
                break;
            }
        }
        self.globals_used = result;
    }

    fn check_function(&self, f: &'u Function) -> Result<(), ParseError> {
        let mut scope = FnScope {
            scopes: vec![HashMap::new()],
            function_level: HashSet::new(),
            loop_depth: 0,
        };
        for p in &f.params {
            if !scope.function_level.insert(&p.name) {
                return Err(self.err(f.span.start, format!("redeclaration of '{}'", p.name)));
            }
            scope.scopes[0].insert(&p.name, &p.ty);
        }
        self.check_stmt(&f.body, &mut scope)
    }

    fn declare(&self, decl: &'u VarDecl, scope: &mut FnScope<'u>) -> Result<(), ParseError> {
        if let Some(init) = &decl.init {
            match init {
                Initializer::Expr(e) => self.check_expr(e, scope, false)?,
                Initializer::List(list) => {
                    for e in list {
                        self.check_expr(e, scope, false)?;
                    }
                }
            }
        }
        if scope.loop_depth == 0 && !scope.function_level.insert(&decl.name) {
            return Err(self.err(decl.span.start, format!("redeclaration of '{}'", decl.name)));
        }
        scope.scopes.last_mut().unwrap().insert(&decl.name, &decl.ty);
        Ok(())
    }

    fn check_stmt(&self, stmt: &'u Stmt, scope: &mut FnScope<'u>) -> Result<(), ParseError> {
        match &stmt.kind {
            StmtKind::Decl(decls) => {
                for d in decls {
                    self.declare(d, scope)?;
                }
            }
            StmtKind::Expr(e) => self.check_expr(e, scope, false)?,
            StmtKind::Block(stmts) => {
                scope.scopes.push(HashMap::new());
                for s in stmts {
                    self.check_stmt(s, scope)?;
                }
                scope.scopes.pop();
            }
            StmtKind::For {
                init, cond, step, body, ..
            } => {
                scope.scopes.push(HashMap::new());
                scope.loop_depth += 1;
                match init {
                    Some(ForInit::Decl(decls)) => {
                        for d in decls {
                            self.declare(d, scope)?;
                        }
                    }
                    Some(ForInit::Expr(e)) => self.check_expr(e, scope, false)?,
                    None => {}
                }
                for e in cond.iter().chain(step.iter()) {
                    self.check_expr(e, scope, false)?;
                }
                self.check_stmt(body, scope)?;
                scope.loop_depth -= 1;
                scope.scopes.pop();
            }
            StmtKind::While { cond, body } => {
                self.check_expr(cond, scope, false)?;
                scope.scopes.push(HashMap::new());
                self.check_stmt(body, scope)?;
                scope.scopes.pop();
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.check_expr(cond, scope, false)?;
                for branch in std::iter::once(then_branch).chain(else_branch.iter()) {
                    scope.scopes.push(HashMap::new());
                    self.check_stmt(branch, scope)?;
                    scope.scopes.pop();
                }
            }
            StmtKind::Return(Some(e)) => self.check_expr(e, scope, false)?,
            StmtKind::Labeled(_, s) | StmtKind::Annotated { stmt: s, .. } => self.check_stmt(s, scope)?,
            _ => {}
        }
        Ok(())
    }

    fn lookup(&self, name: &str, scope: &FnScope<'u>) -> Option<&'u VarType> {
        scope.lookup(name).or_else(|| self.globals.get(name).copied())
    }

    fn is_global_ref(&self, name: &str, scope: &FnScope<'u>) -> bool {
        scope.lookup(name).is_none() && self.globals.contains_key(name)
    }

    fn check_expr(&self, expr: &'u Expr, scope: &FnScope<'u>, as_call_arg: bool) -> Result<(), ParseError> {
        match &expr.kind {
            ExprKind::Var(_) | ExprKind::Index { .. } => {
                let (name, subs) = expr.lvalue_parts().expect("var or index");
                let ty = self
                    .lookup(name, scope)
                    .ok_or_else(|| self.err(expr.span.start, format!("undeclared identifier '{name}'")))?;
                let rank = ty.extents.len();
                if subs.len() > rank {
                    return Err(self.err(expr.span.start, format!("subscript of non-array '{name}'")));
                }
                if subs.len() < rank && !(as_call_arg && subs.is_empty()) {
                    return Err(self.err(expr.span.start, format!("pointer arithmetic on array '{name}'")));
                }
                for s in subs {
                    self.check_expr(s, scope, false)?;
                }
            }
            ExprKind::Call { name, args } => {
                if let Some(callee) = self.functions.get(name.as_str()) {
                    if callee.params.len() != args.len() {
                        return Err(self.err(expr.span.start, format!("wrong argument count in call to '{name}'")));
                    }
                    let mut seen = HashSet::new();
                    for (param, arg) in callee.params.iter().zip(args) {
                        if !param.ty.is_array() {
                            continue;
                        }
                        let ExprKind::Var(arg_name) = &arg.kind else {
                            return Err(self.err(arg.span.start, format!("array argument to '{name}'")));
                        };
                        if !seen.insert(arg_name.as_str()) {
                            return Err(self.err(arg.span.start, format!("aliased array argument '{arg_name}'")));
                        }
                        if self.is_global_ref(arg_name, scope)
                            && self.globals_used.get(name.as_str()).is_some_and(|g| g.contains(arg_name))
                        {
                            return Err(self.err(arg.span.start, format!("aliased array argument '{arg_name}'")));
                        }
                    }
                }
                for a in args {
                    self.check_expr(a, scope, true)?;
                }
            }
            ExprKind::Unary { expr: e, .. } | ExprKind::Cast { expr: e, .. } => self.check_expr(e, scope, false)?,
            ExprKind::IncDec { target, .. } => self.check_expr(target, scope, false)?,
            ExprKind::Binary { lhs, rhs, .. } => {
                self.check_expr(lhs, scope, false)?;
                self.check_expr(rhs, scope, false)?;
            }
            ExprKind::Assign { target, value, .. } => {
                self.check_expr(target, scope, false)?;
                self.check_expr(value, scope, false)?;
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                self.check_expr(cond, scope, false)?;
                self.check_expr(then_expr, scope, false)?;
                self.check_expr(else_expr, scope, false)?;
            }
            ExprKind::Comma(list) => {
                for e in list {
                    self.check_expr(e, scope, false)?;
                }
            }
            ExprKind::Int(_) | ExprKind::Float(_) | ExprKind::Str(_) => {}
        }
        Ok(())
    }
}

/// Rough name collection used only for the transitive global-use summary:
/// a name counts as local once any declaration of it appears in the function.
fn collect_stmt_names<'a>(
    stmt: &'a Stmt,
    locals: &mut HashSet<&'a str>,
    used: &mut HashSet<String>,
    calls: &mut HashSet<String>,
) {
    let mut visit = |e: &Expr| visit_expr_names(e, used, calls);
    match &stmt.kind {
        StmtKind::Decl(decls) => {
            for d in decls {
                locals.insert(&d.name);
                visit_init(d, &mut visit);
            }
        }
        StmtKind::Expr(e) | StmtKind::Return(Some(e)) => visit(e),
        StmtKind::For { init, cond, step, .. } => {
            match init {
                Some(ForInit::Decl(decls)) => {
                    for d in decls {
                        locals.insert(&d.name);
                        visit_init(d, &mut visit);
                    }
                }
                Some(ForInit::Expr(e)) => visit(e),
                None => {}
            }
            cond.iter().chain(step.iter()).for_each(&mut visit);
        }
        StmtKind::While { cond, .. } | StmtKind::If { cond, .. } => visit(cond),
        _ => {}
    }
    used.retain(|n| !locals.contains(n.as_str()));
}

fn visit_init(d: &VarDecl, visit: &mut impl FnMut(&Expr)) {
    match &d.init {
        Some(Initializer::Expr(e)) => visit(e),
        Some(Initializer::List(list)) => list.iter().for_each(visit),
        None => {}
    }
}

fn visit_expr_names(e: &Expr, used: &mut HashSet<String>, calls: &mut HashSet<String>) {
    match &e.kind {
        ExprKind::Var(n) => {
            used.insert(n.clone());
        }
        ExprKind::Index { base, index } => {
            visit_expr_names(base, used, calls);
            visit_expr_names(index, used, calls);
        }
        ExprKind::Call { name, args } => {
            calls.insert(name.clone());
            args.iter().for_each(|a| visit_expr_names(a, used, calls));
        }
        ExprKind::Unary { expr, .. } | ExprKind::Cast { expr, .. } => visit_expr_names(expr, used, calls),
        ExprKind::IncDec { target, .. } => visit_expr_names(target, used, calls),
        ExprKind::Binary { lhs, rhs, .. } => {
            visit_expr_names(lhs, used, calls);
            visit_expr_names(rhs, used, calls);
        }
        ExprKind::Assign { target, value, .. } => {
            visit_expr_names(target, used, calls);
            visit_expr_names(value, used, calls);
        }
        ExprKind::Ternary {
            cond,
            then_expr,
            else_expr,
        } => {
            visit_expr_names(cond, used, calls);
            visit_expr_names(then_expr, used, calls);
            visit_expr_names(else_expr, used, calls);
        }
        ExprKind::Comma(list) => list.iter().for_each(|x| visit_expr_names(x, used, calls)),
        _ => {}
    }
}
