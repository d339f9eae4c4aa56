//! Reference interpreter for the C subset with a separate device memory.
//!
//! Host and device copies of every array are distinct. Data constructs
//! follow present-or semantics: a clause on an array that is already present
//! only bumps its reference count, and transfers happen when the count drops
//! to zero. Arrays touched by a compute construct without being present are
//! copied in and out around that construct. Device allocations that are not
//! initialized from the host start out as garbage (NaN, or `GARBAGE_INT`),
//! so a missing copy-in shows up in the results. Scalars from outside a
//! compute construct are firstprivate.

use std::collections::{BTreeMap, HashMap};

use offload_tuner::model::ast::{BaseType, BinaryOp, Expr, ExprKind, ForInit, Function, Initializer, Stmt, StmtKind, UnaryOp, VarDecl, VarType};
use offload_tuner::model::{parse_source, FileId, ItemKind, SourceUnit};

pub const GARBAGE_INT: i64 = -7_777_777_777;
const STEP_LIMIT: u64 = 200_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Int(i64),
    Float(f64),
}

impl Value {
    pub fn as_f64(self) -> f64 {
        match self {
            Value::Int(i) => i as f64,
            Value::Float(f) => f,
        }
    }

    fn as_i64(self) -> i64 {
        match self {
            Value::Int(i) => i,
            Value::Float(f) => f as i64,
        }
    }

    fn truthy(self) -> bool {
        match self {
            Value::Int(i) => i != 0,
            Value::Float(f) => f != 0.0,
        }
    }

    fn convert(self, base: BaseType) -> Value {
        match base {
            BaseType::Int | BaseType::Char => Value::Int(self.as_i64()),
            BaseType::Float => Value::Float(self.as_f64() as f32 as f64),
            BaseType::Double | BaseType::Void => Value::Float(self.as_f64()),
        }
    }

    fn garbage(base: BaseType) -> Value {
        if base.is_floating() {
            Value::Float(f64::NAN)
        } else {
            Value::Int(GARBAGE_INT)
        }
    }

    fn zero(base: BaseType) -> Value {
        Value::Int(0).convert(base)
    }
}

#[derive(Debug, Clone)]
struct Buf {
    data: Vec<Value>,
    base: BaseType,
}

#[derive(Debug, Clone)]
struct ArrRef {
    buf: usize,
    offset: usize,
    dims: Vec<usize>,
}

#[derive(Debug, Clone)]
enum Slot {
    Scalar(Value, BaseType),
    Array(ArrRef),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Clause {
    Copy,
    CopyIn,
    CopyOut,
    Create,
    Present,
}

#[derive(Debug)]
struct DevBuf {
    data: Vec<Value>,
    refs: u32,
    copy_out: bool,
}

const PERMANENT: u32 = u32::MAX;

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Option<Value>),
}

#[derive(Debug, Clone, Copy)]
enum Loc {
    Global,
    Local(usize),
}

enum Arg {
    Value(Value),
    Array(ArrRef),
}

/// Final observable state of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// Global variables, flattened.
    pub globals: BTreeMap<String, Vec<Value>>,
    /// Values passed to `print`/`printf`, in order.
    pub output: Vec<Value>,
    /// Host-device element copies performed.
    pub elements_moved: u64,
}

impl Outcome {
    /// Exact for integers, `tol` relative to max(1, |x|) for floats.
    pub fn compare(&self, other: &Outcome, tol: f64) -> Result<(), String> {
        let same = |a: &Value, b: &Value| match (a, b) {
            (Value::Int(x), Value::Int(y)) => x == y,
            _ => {
                let (x, y) = (a.as_f64(), b.as_f64());
                (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol * x.abs().max(1.0)
            }
        };
        if self.globals.keys().ne(other.globals.keys()) {
            return Err("different global sets".into());
        }
        for (name, a) in &self.globals {
            let b = &other.globals[name];
            if let Some(i) = (0..a.len()).find(|&i| !same(&a[i], &b[i])) {
                return Err(format!("{name}[{i}]: {:?} vs {:?}", a[i], b[i]));
            }
        }
        if self.output.len() != other.output.len() {
            return Err(format!("output length {} vs {}", self.output.len(), other.output.len()));
        }
        if let Some(i) = (0..self.output.len()).find(|&i| !same(&self.output[i], &other.output[i])) {
            return Err(format!("output[{i}]: {:?} vs {:?}", self.output[i], other.output[i]));
        }
        Ok(())
    }
}

/// Parses and runs `main` of the given translation units.
pub fn run_sources(sources: &[(&str, &str)]) -> Result<Outcome, String> {
    let units: Vec<SourceUnit> = sources
        .iter()
        .map(|(id, text)| parse_source(text, FileId::new(*id)).map_err(|e| format!("{id}: {e}")))
        .collect::<Result<_, _>>()?;
    let mut m = Machine::new(&units);
    m.init()?;
    let main = *m.functions.get("main").ok_or("no main")?;
    m.call(main, Vec::new())?;
    let mut globals = BTreeMap::new();
    for (name, slot) in &m.globals {
        let values = match slot {
            Slot::Scalar(v, _) => vec![*v],
            Slot::Array(r) => m.host[r.buf].data.clone(),
        };
        globals.insert(name.clone(), values);
    }
    Ok(Outcome {
        globals,
        output: m.output,
        elements_moved: m.moved,
    })
}

struct Machine<'u> {
    units: &'u [SourceUnit],
    functions: HashMap<String, &'u Function>,
    host: Vec<Buf>,
    globals: HashMap<String, Slot>,
    /// Per call, a stack of block scopes.
    frames: Vec<Vec<HashMap<String, Slot>>>,
    device: HashMap<usize, DevBuf>,
    /// Set inside a compute construct: frame and scope depth below which
    /// scalars are firstprivate.
    device_floor: Option<(usize, usize)>,
    shadow: HashMap<String, Value>,
    implicit: Vec<usize>,
    output: Vec<Value>,
    moved: u64,
    steps: u64,
}

impl<'u> Machine<'u> {
    fn new(units: &'u [SourceUnit]) -> Self {
        let functions = units.iter().flat_map(|u| u.functions()).map(|f| (f.name.clone(), f)).collect();
        Machine {
            units,
            functions,
            host: Vec::new(),
            globals: HashMap::new(),
            frames: Vec::new(),
            device: HashMap::new(),
            device_floor: None,
            shadow: HashMap::new(),
            implicit: Vec::new(),
            output: Vec::new(),
            moved: 0,
            steps: 0,
        }
    }

    fn init(&mut self) -> Result<(), String> {
        for unit in self.units {
            for item in &unit.items {
                match &item.kind {
                    ItemKind::Decl(decls) => {
                        for d in decls {
                            let slot = self.declare(d)?;
                            self.globals.insert(d.name.clone(), slot);
                        }
                    }
                    ItemKind::Pragma(text) => self.top_pragma(text)?,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn top_pragma(&mut self, text: &str) -> Result<(), String> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.get(1) != Some(&"acc") {
            return Ok(());
        }
        if words.get(2) != Some(&"declare") {
            return Err(format!("unsupported top-level directive: {text}"));
        }
        for (clause, names) in clauses(text) {
            if clause != "create" {
                return Err(format!("unsupported declare clause {clause}"));
            }
            for n in names {
                let r = self.array(&n)?;
                let base = self.host[r.buf].base;
                let len = self.host[r.buf].data.len();
                self.device.insert(
                    r.buf,
                    DevBuf {
                        data: vec![Value::garbage(base); len],
                        refs: PERMANENT,
                        copy_out: false,
                    },
                );
            }
        }
        Ok(())
    }

    fn extent(&mut self, ty: &VarType) -> Result<Vec<usize>, String> {
        ty.extents
            .iter()
            .map(|e| match (e.value, &e.text) {
                (Some(v), _) => Ok(v as usize),
                (None, Some(t)) => Ok(self.read_var(t)?.as_i64() as usize),
                (None, None) => Err("array without extent".to_string()),
            })
            .collect()
    }

    fn declare(&mut self, d: &VarDecl) -> Result<Slot, String> {
        let base = d.ty.base;
        if d.ty.is_array() {
            let dims = self.extent(&d.ty)?;
            let len = dims.iter().product();
            let mut data = vec![Value::zero(base); len];
            if let Some(Initializer::List(items)) = &d.init {
                for (i, e) in items.iter().enumerate().take(len) {
                    data[i] = self.eval(e)?.convert(base);
                }
            }
            self.host.push(Buf { data, base });
            Ok(Slot::Array(ArrRef {
                buf: self.host.len() - 1,
                offset: 0,
                dims,
            }))
        } else {
            let v = match &d.init {
                Some(Initializer::Expr(e)) => self.eval(e)?.convert(base),
                Some(Initializer::List(_)) => return Err("list initializer on scalar".into()),
                None => Value::zero(base),
            };
            Ok(Slot::Scalar(v, base))
        }
    }

    fn scopes(&mut self) -> &mut Vec<HashMap<String, Slot>> {
        self.frames.last_mut().expect("inside a call")
    }

    fn lookup(&self, name: &str) -> Option<(Loc, &Slot)> {
        if let Some(scopes) = self.frames.last() {
            for (i, s) in scopes.iter().enumerate().rev() {
                if let Some(slot) = s.get(name) {
                    return Some((Loc::Local(i), slot));
                }
            }
        }
        self.globals.get(name).map(|s| (Loc::Global, s))
    }

    /// True when a scalar at `loc` lives outside the running compute construct.
    fn is_firstprivate(&self, loc: Loc) -> bool {
        match (self.device_floor, loc) {
            (None, _) => false,
            (Some(_), Loc::Global) => true,
            (Some((frame, depth)), Loc::Local(i)) => self.frames.len() - 1 == frame && i < depth,
        }
    }

    fn read_var(&self, name: &str) -> Result<Value, String> {
        match self.lookup(name) {
            Some((loc, Slot::Scalar(v, _))) => {
                if self.is_firstprivate(loc) {
                    if let Some(s) = self.shadow.get(name) {
                        return Ok(*s);
                    }
                }
                Ok(*v)
            }
            Some((_, Slot::Array(_))) => Err(format!("array '{name}' used as a value")),
            None => Err(format!("unknown variable '{name}'")),
        }
    }

    fn write_var(&mut self, name: &str, v: Value) -> Result<Value, String> {
        let (loc, base) = match self.lookup(name) {
            Some((loc, Slot::Scalar(_, base))) => (loc, *base),
            Some(_) => return Err(format!("cannot assign to array '{name}'")),
            None => return Err(format!("unknown variable '{name}'")),
        };
        let v = v.convert(base);
        if self.is_firstprivate(loc) {
            self.shadow.insert(name.to_string(), v);
            return Ok(v);
        }
        let slot = match loc {
            Loc::Global => self.globals.get_mut(name),
            Loc::Local(i) => self.scopes()[i].get_mut(name),
        };
        *slot.unwrap() = Slot::Scalar(v, base);
        Ok(v)
    }

    fn array(&self, name: &str) -> Result<ArrRef, String> {
        match self.lookup(name) {
            Some((_, Slot::Array(r))) => Ok(r.clone()),
            Some(_) => Err(format!("'{name}' is not an array")),
            None => Err(format!("unknown array '{name}'")),
        }
    }

    fn eval_array(&mut self, e: &Expr) -> Result<ArrRef, String> {
        match &e.kind {
            ExprKind::Var(name) => self.array(name),
            ExprKind::Index { base, index } => {
                let mut r = self.eval_array(base)?;
                let i = self.eval(index)?.as_i64();
                let Some((&dim, rest)) = r.dims.split_first() else {
                    return Err("too many subscripts".into());
                };
                if i < 0 || i as usize >= dim {
                    return Err(format!("index {i} out of bounds 0..{dim}"));
                }
                let stride: usize = rest.iter().product();
                r.offset += i as usize * stride;
                r.dims = rest.to_vec();
                Ok(r)
            }
            _ => Err("not an array expression".into()),
        }
    }

    fn element(&mut self, e: &Expr) -> Result<(usize, usize), String> {
        let r = self.eval_array(e)?;
        if !r.dims.is_empty() {
            return Err("array used as a value".into());
        }
        Ok((r.buf, r.offset))
    }

    fn device_buf(&mut self, buf: usize) -> &mut DevBuf {
        if !self.device.contains_key(&buf) {
            let data = self.host[buf].data.clone();
            self.moved += data.len() as u64;
            self.device.insert(
                buf,
                DevBuf {
                    data,
                    refs: 1,
                    copy_out: true,
                },
            );
            self.implicit.push(buf);
        }
        self.device.get_mut(&buf).unwrap()
    }

    fn load(&mut self, buf: usize, i: usize) -> Value {
        if self.device_floor.is_some() {
            self.device_buf(buf).data[i]
        } else {
            self.host[buf].data[i]
        }
    }

    fn store(&mut self, buf: usize, i: usize, v: Value) -> Value {
        let v = v.convert(self.host[buf].base);
        if self.device_floor.is_some() {
            self.device_buf(buf).data[i] = v;
        } else {
            self.host[buf].data[i] = v;
        }
        v
    }

    fn read_place(&mut self, e: &Expr) -> Result<Value, String> {
        match &e.kind {
            ExprKind::Var(n) => self.read_var(n),
            ExprKind::Index { .. } => {
                let (b, i) = self.element(e)?;
                Ok(self.load(b, i))
            }
            _ => Err("not an lvalue".into()),
        }
    }

    fn write_place(&mut self, e: &Expr, v: Value) -> Result<Value, String> {
        match &e.kind {
            ExprKind::Var(n) => self.write_var(n, v),
            ExprKind::Index { .. } => {
                let (b, i) = self.element(e)?;
                Ok(self.store(b, i, v))
            }
            _ => Err("not an lvalue".into()),
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, String> {
        self.steps += 1;
        if self.steps > STEP_LIMIT {
            return Err("step limit exceeded".into());
        }
        Ok(match &e.kind {
            ExprKind::Int(i) => Value::Int(*i),
            ExprKind::Float(f) => Value::Float(*f),
            ExprKind::Str(_) => Value::Int(0),
            ExprKind::Var(_) | ExprKind::Index { .. } => self.read_place(e)?,
            ExprKind::Call { name, args } => self.call_named(name, args)?.unwrap_or(Value::Int(0)),
            ExprKind::Unary { op, expr } => {
                let v = self.eval(expr)?;
                match (op, v) {
                    (UnaryOp::Neg, Value::Int(i)) => Value::Int(i.wrapping_neg()),
                    (UnaryOp::Neg, Value::Float(f)) => Value::Float(-f),
                    (UnaryOp::Plus, v) => v,
                    (UnaryOp::Not, v) => Value::Int(!v.truthy() as i64),
                    (UnaryOp::BitNot, v) => Value::Int(!v.as_i64()),
                }
            }
            ExprKind::IncDec {
                prefix,
                increment,
                target,
            } => {
                let old = self.read_place(target)?;
                let one = Value::Int(1);
                let new = arith(if *increment { BinaryOp::Add } else { BinaryOp::Sub }, old, one)?;
                let stored = self.write_place(target, new)?;
                if *prefix {
                    stored
                } else {
                    old
                }
            }
            ExprKind::Binary { op, lhs, rhs } => match op {
                BinaryOp::And => Value::Int((self.eval(lhs)?.truthy() && self.eval(rhs)?.truthy()) as i64),
                BinaryOp::Or => Value::Int((self.eval(lhs)?.truthy() || self.eval(rhs)?.truthy()) as i64),
                _ => {
                    let a = self.eval(lhs)?;
                    let b = self.eval(rhs)?;
                    arith(*op, a, b)?
                }
            },
            ExprKind::Assign { op, target, value } => {
                let v = self.eval(value)?;
                let v = match op {
                    Some(op) => arith(*op, self.read_place(target)?, v)?,
                    None => v,
                };
                self.write_place(target, v)?
            }
            ExprKind::Ternary {
                cond,
                then_expr,
                else_expr,
            } => {
                if self.eval(cond)?.truthy() {
                    self.eval(then_expr)?
                } else {
                    self.eval(else_expr)?
                }
            }
            ExprKind::Cast { ty, expr } => self.eval(expr)?.convert(*ty),
            ExprKind::Comma(list) => {
                let mut last = Value::Int(0);
                for x in list {
                    last = self.eval(x)?;
                }
                last
            }
        })
    }

    fn call_named(&mut self, name: &str, args: &[Expr]) -> Result<Option<Value>, String> {
        if let Some(v) = self.builtin(name, args)? {
            return Ok(v);
        }
        let f = *self.functions.get(name).ok_or_else(|| format!("unknown function '{name}'"))?;
        if self.device_floor.is_some() {
            return Err(format!("call to '{name}' in device code"));
        }
        let mut values = Vec::new();
        for (a, p) in args.iter().zip(&f.params) {
            values.push(if p.ty.is_array() {
                Arg::Array(self.eval_array(a)?)
            } else {
                Arg::Value(self.eval(a)?)
            });
        }
        self.call(f, values)
    }

    fn builtin(&mut self, name: &str, args: &[Expr]) -> Result<Option<Option<Value>>, String> {
        let math1: Option<fn(f64) -> f64> = match name {
            "sqrt" | "sqrtf" => Some(f64::sqrt),
            "fabs" | "fabsf" => Some(f64::abs),
            "exp" | "expf" => Some(f64::exp),
            "log" | "logf" => Some(f64::ln),
            "log10" => Some(f64::log10),
            "sin" | "sinf" => Some(f64::sin),
            "cos" | "cosf" => Some(f64::cos),
            "tan" => Some(f64::tan),
            "atan" => Some(f64::atan),
            "floor" => Some(f64::floor),
            "ceil" => Some(f64::ceil),
            _ => None,
        };
        if let Some(f) = math1 {
            let x = self.eval(&args[0])?.as_f64();
            return Ok(Some(Some(Value::Float(f(x)))));
        }
        let math2: Option<fn(f64, f64) -> f64> = match name {
            "pow" | "powf" => Some(f64::powf),
            "atan2" => Some(f64::atan2),
            "fmin" => Some(f64::min),
            "fmax" => Some(f64::max),
            "fmod" => Some(|a, b| a % b),
            _ => None,
        };
        if let Some(f) = math2 {
            let x = self.eval(&args[0])?.as_f64();
            let y = self.eval(&args[1])?.as_f64();
            return Ok(Some(Some(Value::Float(f(x, y)))));
        }
        match name {
            "abs" => Ok(Some(Some(Value::Int(self.eval(&args[0])?.as_i64().abs())))),
            "print" | "printf" | "puts" | "putchar" => {
                if self.device_floor.is_some() {
                    return Err(format!("'{name}' in device code"));
                }
                for a in args {
                    if !matches!(a.kind, ExprKind::Str(_)) {
                        let v = self.eval(a)?;
                        self.output.push(v);
                    }
                }
                Ok(Some(None))
            }
            _ => Ok(None),
        }
    }

    fn call(&mut self, f: &'u Function, args: Vec<Arg>) -> Result<Option<Value>, String> {
        let mut scope = HashMap::new();
        for (p, a) in f.params.iter().zip(args) {
            let slot = match a {
                Arg::Value(v) => Slot::Scalar(v.convert(p.ty.base), p.ty.base),
                Arg::Array(r) => Slot::Array(r),
            };
            scope.insert(p.name.clone(), slot);
        }
        if self.frames.len() > 200 {
            return Err("call depth exceeded".into());
        }
        self.frames.push(vec![scope]);
        let flow = self.exec(&f.body);
        self.frames.pop();
        match flow? {
            Flow::Return(v) => Ok(v.map(|v| v.convert(f.ret))),
            _ => Ok(None),
        }
    }

    fn exec(&mut self, s: &Stmt) -> Result<Flow, String> {
        match &s.kind {
            StmtKind::Empty => Ok(Flow::Normal),
            StmtKind::Decl(decls) => {
                for d in decls {
                    let slot = self.declare(d)?;
                    self.scopes().last_mut().unwrap().insert(d.name.clone(), slot);
                }
                Ok(Flow::Normal)
            }
            StmtKind::Expr(e) => {
                self.eval(e)?;
                Ok(Flow::Normal)
            }
            StmtKind::Block(stmts) => {
                self.scopes().push(HashMap::new());
                let mut flow = Ok(Flow::Normal);
                for st in stmts {
                    flow = self.exec(st);
                    if !matches!(flow, Ok(Flow::Normal)) {
                        break;
                    }
                }
                self.scopes().pop();
                flow
            }
            StmtKind::For {
                init, cond, step, body, ..
            } => {
                self.scopes().push(HashMap::new());
                let r = self.exec_for(init.as_ref(), cond.as_ref(), step.as_ref(), body);
                self.scopes().pop();
                r
            }
            StmtKind::While { cond, body } => {
                while self.eval(cond)?.truthy() {
                    match self.exec(body)? {
                        Flow::Break => break,
                        Flow::Return(v) => return Ok(Flow::Return(v)),
                        _ => {}
                    }
                }
                Ok(Flow::Normal)
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                if self.eval(cond)?.truthy() {
                    self.exec(then_branch)
                } else if let Some(e) = else_branch {
                    self.exec(e)
                } else {
                    Ok(Flow::Normal)
                }
            }
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => Some(self.eval(e)?),
                    None => None,
                };
                Ok(Flow::Return(v))
            }
            StmtKind::Break => Ok(Flow::Break),
            StmtKind::Continue => Ok(Flow::Continue),
            StmtKind::Goto(_) => Err("goto is not supported".into()),
            StmtKind::Labeled(_, st) => self.exec(st),
            StmtKind::Pragma(text) => {
                self.standalone(text)?;
                Ok(Flow::Normal)
            }
            StmtKind::Annotated { pragmas, stmt } => self.exec_annotated(pragmas, stmt),
        }
    }

    fn exec_for(
        &mut self,
        init: Option<&ForInit>,
        cond: Option<&Expr>,
        step: Option<&Expr>,
        body: &Stmt,
    ) -> Result<Flow, String> {
        match init {
            Some(ForInit::Decl(decls)) => {
                for d in decls {
                    let slot = self.declare(d)?;
                    self.scopes().last_mut().unwrap().insert(d.name.clone(), slot);
                }
            }
            Some(ForInit::Expr(e)) => {
                self.eval(e)?;
            }
            None => {}
        }
        loop {
            if let Some(c) = cond {
                if !self.eval(c)?.truthy() {
                    break;
                }
            }
            match self.exec(body)? {
                Flow::Break => break,
                Flow::Return(v) => return Ok(Flow::Return(v)),
                _ => {}
            }
            if let Some(s) = step {
                self.eval(s)?;
            }
        }
        Ok(Flow::Normal)
    }

    fn exec_annotated(&mut self, pragmas: &[String], stmt: &Stmt) -> Result<Flow, String> {
        let Some((first, rest)) = pragmas.split_first() else {
            return self.exec(stmt);
        };
        let words: Vec<&str> = first.split_whitespace().map(|w| w.split('(').next().unwrap()).collect();
        if words.get(1) != Some(&"acc") {
            return self.exec_annotated(rest, stmt);
        }
        match words.get(2).copied() {
            Some("data") => {
                let entered = self.enter_data(first)?;
                let flow = self.exec_annotated(rest, stmt);
                self.exit_data(entered);
                flow
            }
            Some("kernels") | Some("parallel") => {
                if self.device_floor.is_some() {
                    return Err("nested compute construct".into());
                }
                let depth = self.frames.last().unwrap().len();
                self.device_floor = Some((self.frames.len() - 1, depth));
                self.shadow.clear();
                let flow = self.exec_annotated(rest, stmt);
                self.device_floor = None;
                self.shadow.clear();
                for buf in std::mem::take(&mut self.implicit) {
                    let d = self.device.remove(&buf).unwrap();
                    self.moved += d.data.len() as u64;
                    self.host[buf].data = d.data;
                }
                flow
            }
            Some("loop") => {
                if self.device_floor.is_none() {
                    return Err("orphaned loop directive".into());
                }
                self.exec_annotated(rest, stmt)
            }
            _ => Err(format!("unsupported directive: {first}")),
        }
    }

    fn enter_data(&mut self, text: &str) -> Result<Vec<usize>, String> {
        let mut entered = Vec::new();
        for (clause, names) in clauses(text) {
            let clause = match clause.as_str() {
                "copy" => Clause::Copy,
                "copyin" => Clause::CopyIn,
                "copyout" => Clause::CopyOut,
                "create" => Clause::Create,
                "present" => Clause::Present,
                other => return Err(format!("unsupported data clause {other}")),
            };
            for n in names {
                let buf = self.array(&n)?.buf;
                if let Some(d) = self.device.get_mut(&buf) {
                    if d.refs != PERMANENT {
                        d.refs += 1;
                    }
                } else if clause == Clause::Present {
                    return Err(format!("'{n}' is not present on the device"));
                } else {
                    let copy_in = matches!(clause, Clause::Copy | Clause::CopyIn);
                    let data = if copy_in {
                        self.moved += self.host[buf].data.len() as u64;
                        self.host[buf].data.clone()
                    } else {
                        vec![Value::garbage(self.host[buf].base); self.host[buf].data.len()]
                    };
                    self.device.insert(
                        buf,
                        DevBuf {
                            data,
                            refs: 1,
                            copy_out: matches!(clause, Clause::Copy | Clause::CopyOut),
                        },
                    );
                }
                entered.push(buf);
            }
        }
        Ok(entered)
    }

    fn exit_data(&mut self, entered: Vec<usize>) {
        for buf in entered.into_iter().rev() {
            let d = self.device.get_mut(&buf).expect("entered buffers stay present");
            if d.refs == PERMANENT {
                continue;
            }
            d.refs -= 1;
            if d.refs == 0 {
                let d = self.device.remove(&buf).unwrap();
                if d.copy_out {
                    self.moved += d.data.len() as u64;
                    self.host[buf].data = d.data;
                }
            }
        }
    }

    fn standalone(&mut self, text: &str) -> Result<(), String> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.get(1) != Some(&"acc") {
            return Ok(());
        }
        if words.get(2) != Some(&"update") {
            return Err(format!("unsupported directive: {text}"));
        }
        for (clause, names) in clauses(text) {
            for n in names {
                let buf = self.array(&n)?.buf;
                let host = &mut self.host[buf].data;
                let dev = self
                    .device
                    .get_mut(&buf)
                    .ok_or_else(|| format!("update of '{n}' which is not present"))?;
                match clause.as_str() {
                    "device" => dev.data.clone_from(host),
                    "self" | "host" => host.clone_from(&dev.data),
                    other => return Err(format!("unsupported update clause {other}")),
                }
                self.moved += host.len() as u64;
            }
        }
        Ok(())
    }
}

fn arith(op: BinaryOp, a: Value, b: Value) -> Result<Value, String> {
    use BinaryOp::*;
    let cmp = |r: bool| Value::Int(r as i64);
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        return Ok(match op {
            Mul => Value::Int(x.wrapping_mul(y)),
            Div if y == 0 => return Err("integer division by zero".into()),
            Div => Value::Int(x.wrapping_div(y)),
            Rem if y == 0 => return Err("integer division by zero".into()),
            Rem => Value::Int(x.wrapping_rem(y)),
            Add => Value::Int(x.wrapping_add(y)),
            Sub => Value::Int(x.wrapping_sub(y)),
            Shl => Value::Int(x.wrapping_shl(y as u32)),
            Shr => Value::Int(x.wrapping_shr(y as u32)),
            Lt => cmp(x < y),
            Gt => cmp(x > y),
            Le => cmp(x <= y),
            Ge => cmp(x >= y),
            Eq => cmp(x == y),
            Ne => cmp(x != y),
            BitAnd => Value::Int(x & y),
            BitXor => Value::Int(x ^ y),
            BitOr => Value::Int(x | y),
            And => cmp(x != 0 && y != 0),
            Or => cmp(x != 0 || y != 0),
        });
    }
    let (x, y) = (a.as_f64(), b.as_f64());
    Ok(match op {
        Mul => Value::Float(x * y),
        Div => Value::Float(x / y),
        Add => Value::Float(x + y),
        Sub => Value::Float(x - y),
        Lt => cmp(x < y),
        Gt => cmp(x > y),
        Le => cmp(x <= y),
        Ge => cmp(x >= y),
        Eq => cmp(x == y),
        Ne => cmp(x != y),
        And => cmp(x != 0.0 && y != 0.0),
        Or => cmp(x != 0.0 || y != 0.0),
        _ => return Err(format!("{op:?} on floating operands")),
    })
}

/// `(clause, variable names)` pairs of a directive, e.g.
/// `copyin(a[0:N], b[0:N])` gives `("copyin", ["a", "b"])`.
fn clauses(text: &str) -> Vec<(String, Vec<String>)> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while let Some(open) = text[i..].find('(').map(|p| p + i) {
        let word_start = text[..open].rfind(|c: char| c.is_whitespace()).map_or(0, |p| p + 1);
        let name = text[word_start..open].to_string();
        let mut depth = 0;
        let mut close = open;
        for (j, &b) in bytes.iter().enumerate().skip(open) {
            match b {
                b'(' | b'[' => depth += 1,
                b')' | b']' => {
                    depth -= 1;
                    if depth == 0 {
                        close = j;
                        break;
                    }
                }
                _ => {}
            }
        }
        let mut names = Vec::new();
        let mut depth = 0;
        let mut item = String::new();
        for c in text[open + 1..close].chars() {
            match c {
                '[' => depth += 1,
                ']' => depth -= 1,
                ',' if depth == 0 => {
                    names.push(std::mem::take(&mut item));
                    continue;
                }
                _ => {}
            }
            if depth == 0 && c != ']' {
                item.push(c);
            }
        }
        names.push(item);
        out.push((name, names.into_iter().map(|n| n.trim().to_string()).filter(|n| !n.is_empty()).collect()));
        i = close + 1;
    }
    out
}
