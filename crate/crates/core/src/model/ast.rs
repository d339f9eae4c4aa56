use serde::{Deserialize, Serialize};

use super::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseType {
    Void,
    Char,
    Int,
    Float,
    Double,
}

impl BaseType {
    pub fn is_floating(self) -> bool {
        matches!(self, BaseType::Float | BaseType::Double)
    }
}

/// One array dimension as written in the declaration.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Extent {
    /// Source spelling, e.g. `N` or `64`. `None` for `a[]` parameters.
    pub text: Option<String>,
    /// Value when the spelling is a literal or a `const` global.
    pub value: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarType {
    pub base: BaseType,
    pub is_const: bool,
    pub extents: Vec<Extent>,
}

impl VarType {
    pub fn scalar(base: BaseType) -> Self {
        VarType {
            base,
            is_const: false,
            extents: Vec::new(),
        }
    }

    pub fn is_array(&self) -> bool {
        !self.extents.is_empty()
    }

    /// `name[0:N][0:M]` for arrays, `name` for scalars. `None` when some
    /// extent is not spelled out.
    pub fn clause_item(&self, name: &str) -> Option<String> {
        let mut out = name.to_string();
        for extent in &self.extents {
            out.push_str(&format!("[0:{}]", extent.text.as_ref()?));
        }
        Some(out)
    }

    pub fn element_count(&self) -> Option<i64> {
        self.extents.iter().try_fold(1i64, |acc, e| e.value.map(|v| acc * v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDecl {
    pub name: String,
    pub ty: VarType,
    pub init: Option<Initializer>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initializer {
    Expr(Expr),
    List(Vec<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub ty: VarType,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Function {
    pub name: String,
    pub ret: BaseType,
    pub params: Vec<Param>,
    pub body: Stmt,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ItemKind {
    /// Whitespace and comments between items.
    Trivia,
    Pragma(String),
    Decl(Vec<VarDecl>),
    /// A declaration without a body.
    Prototype(String),
    Function(Function),
}

/// A top-level segment. Item spans tile the whole source text.
#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub span: Span,
    pub kind: ItemKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForInit {
    Decl(Vec<VarDecl>),
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Empty,
    Decl(Vec<VarDecl>),
    Expr(Expr),
    Block(Vec<Stmt>),
    For {
        /// `for (...)` including the parentheses.
        header: Span,
        init: Option<ForInit>,
        cond: Option<Expr>,
        step: Option<Expr>,
        body: Box<Stmt>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
    },
    Return(Option<Expr>),
    Break,
    Continue,
    Goto(String),
    Labeled(String, Box<Stmt>),
    /// A standalone directive such as `#pragma acc update self(a)`.
    Pragma(String),
    /// Construct directives followed by the statement they apply to.
    Annotated {
        pragmas: Vec<String>,
        stmt: Box<Stmt>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Plus,
    Not,
    BitNot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Mul,
    Div,
    Rem,
    Add,
    Sub,
    Shl,
    Shr,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Ne,
    BitAnd,
    BitXor,
    BitOr,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub span: Span,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    Int(i64),
    Float(f64),
    Str(String),
    Var(String),
    Index {
        base: Box<Expr>,
        index: Box<Expr>,
    },
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Unary {
        op: UnaryOp,
        expr: Box<Expr>,
    },
    IncDec {
        prefix: bool,
        increment: bool,
        target: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// `op` is `None` for plain `=`.
    Assign {
        op: Option<BinaryOp>,
        target: Box<Expr>,
        value: Box<Expr>,
    },
    Ternary {
        cond: Box<Expr>,
        then_expr: Box<Expr>,
        else_expr: Box<Expr>,
    },
    Cast {
        ty: BaseType,
        expr: Box<Expr>,
    },
    Comma(Vec<Expr>),
}

impl Expr {
    /// For `a[i][j]` returns `("a", [i, j])`; for `x` returns `("x", [])`.
    pub fn lvalue_parts(&self) -> Option<(&str, Vec<&Expr>)> {
        match &self.kind {
            ExprKind::Var(name) => Some((name, Vec::new())),
            ExprKind::Index { base, index } => {
                let (name, mut subs) = base.lvalue_parts()?;
                subs.push(index);
                Some((name, subs))
            }
            _ => None,
        }
    }
}

impl Stmt {
    /// Pre-order walk over this statement and all nested statements.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Stmt)) {
        f(self);
        match &self.kind {
            StmtKind::Block(stmts) => stmts.iter().for_each(|s| s.walk(f)),
            StmtKind::For { body, .. } | StmtKind::While { body, .. } => body.walk(f),
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                then_branch.walk(f);
                if let Some(e) = else_branch {
                    e.walk(f);
                }
            }
            StmtKind::Labeled(_, s) => s.walk(f),
            StmtKind::Annotated { stmt, .. } => stmt.walk(f),
            _ => {}
        }
    }

    /// Strips annotation and label wrappers.
    pub fn unwrap_annotations(&self) -> &Stmt {
        match &self.kind {
            StmtKind::Annotated { stmt, .. } | StmtKind::Labeled(_, stmt) => stmt.unwrap_annotations(),
            _ => self,
        }
    }

    pub fn is_for(&self) -> bool {
        matches!(self.kind, StmtKind::For { .. })
    }
}
