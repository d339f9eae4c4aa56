//! Recursive-descent parser for the supported C subset.

use std::collections::HashMap;

use super::ast::*;
use super::lexer::{line_col, tokenize, Token, TokenKind};
use super::{ParseError, Span};

const TYPE_WORDS: &[&str] = &[
    "const", "static", "extern", "register", "unsigned", "signed", "short", "long", "int", "char",
    "float", "double", "void", "inline",
];

const UNSUPPORTED_TYPE_WORDS: &[(&str, &str)] = &[
    ("struct", "struct type"),
    ("union", "union type"),
    ("enum", "enum type"),
    ("typedef", "typedef"),
];

pub struct Parser<'a> {
    text: &'a str,
    tokens: Vec<Token>,
    pos: usize,
    consts: HashMap<String, i64>,
}

/// Leading type words of a declaration.
struct TypeSpec {
    base: BaseType,
    is_const: bool,
}

impl<'a> Parser<'a> {
    pub fn new(text: &'a str) -> Result<Self, ParseError> {
        Ok(Parser {
            text,
            tokens: tokenize(text)?,
            pos: 0,
            consts: HashMap::new(),
        })
    }

    pub fn parse_items(mut self) -> Result<Vec<Item>, ParseError> {
        let mut items = Vec::new();
        while self.pos < self.tokens.len() {
            items.push(self.parse_item()?);
        }
        // Fill gaps with trivia so that item spans tile the text.
        let mut tiled = Vec::with_capacity(items.len() * 2 + 1);
        let mut cursor = 0;
        for item in items {
            if item.span.start > cursor {
                tiled.push(Item {
                    span: Span::new(cursor, item.span.start),
                    kind: ItemKind::Trivia,
                });
            }
            cursor = item.span.end;
            tiled.push(item);
        }
        if cursor < self.text.len() {
            tiled.push(Item {
                span: Span::new(cursor, self.text.len()),
                kind: ItemKind::Trivia,
            });
        }
        Ok(tiled)
    }

    // ---- token helpers ----

    fn peek(&self) -> Option<&TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek_at(&self, ahead: usize) -> Option<&TokenKind> {
        self.tokens.get(self.pos + ahead).map(|t| &t.kind)
    }

    fn here(&self) -> usize {
        self.tokens
            .get(self.pos)
            .map(|t| t.span.start)
            .unwrap_or(self.text.len())
    }

    fn prev_end(&self) -> usize {
        self.tokens[self.pos - 1].span.end
    }

    fn error_at(&self, offset: usize, construct: impl Into<String>) -> ParseError {
        let (line, column) = line_col(self.text, offset);
        ParseError {
            line,
            column,
            construct: construct.into(),
        }
    }

    fn error(&self, construct: impl Into<String>) -> ParseError {
        self.error_at(self.here(), construct)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Punct(q)) if *q == p)
    }

    fn is_word(&self, w: &str) -> bool {
        matches!(self.peek(), Some(TokenKind::Ident(s)) if s == w)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            let found = self.describe_current();
            Err(self.error(format!("expected '{p}' but found {found}")))
        }
    }

    fn describe_current(&self) -> String {
        match self.peek() {
            None => "end of input".to_string(),
            Some(TokenKind::Ident(s)) => format!("'{s}'"),
            Some(TokenKind::Punct(p)) => format!("'{p}'"),
            Some(TokenKind::Int(v)) => format!("'{v}'"),
            Some(TokenKind::Float(v)) => format!("'{v}'"),
            Some(TokenKind::Str(_)) => "string literal".to_string(),
            Some(TokenKind::Pragma(_)) => "pragma".to_string(),
        }
    }

    fn expect_ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(TokenKind::Ident(s)) if !is_keyword(s) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => {
                let found = self.describe_current();
                Err(self.error(format!("expected identifier but found {found}")))
            }
        }
    }

    fn at_type_start(&self) -> bool {
        match self.peek() {
            Some(TokenKind::Ident(s)) => {
                TYPE_WORDS.contains(&s.as_str()) || UNSUPPORTED_TYPE_WORDS.iter().any(|(w, _)| w == s)
            }
            _ => false,
        }
    }

    // ---- items ----

    fn parse_item(&mut self) -> Result<Item, ParseError> {
        let start = self.here();
        if let Some(TokenKind::Pragma(text)) = self.peek() {
            let text = text.clone();
            let span = self.tokens[self.pos].span;
            self.pos += 1;
            return Ok(Item {
                span,
                kind: ItemKind::Pragma(text),
            });
        }
        if !self.at_type_start() {
            let found = self.describe_current();
            return Err(self.error(format!("top-level construct starting with {found}")));
        }
        let spec = self.parse_type_spec()?;
        // Function definition or prototype: `type name (`.
        if matches!(self.peek(), Some(TokenKind::Ident(_))) && matches!(self.peek_at(1), Some(TokenKind::Punct("("))) {
            let name = self.expect_ident()?;
            self.expect_punct("(")?;
            let params = self.parse_params()?;
            if self.eat_punct(";") {
                return Ok(Item {
                    span: Span::new(start, self.prev_end()),
                    kind: ItemKind::Prototype(name),
                });
            }
            if !self.is_punct("{") {
                return Err(self.error("expected function body"));
            }
            let body = self.parse_block()?;
            let span = Span::new(start, body.span.end);
            return Ok(Item {
                span,
                kind: ItemKind::Function(Function {
                    name,
                    ret: spec.base,
                    params,
                    body,
                    span,
                }),
            });
        }
        let decls = self.parse_declarators(&spec, start, true)?;
        Ok(Item {
            span: Span::new(start, self.prev_end()),
            kind: ItemKind::Decl(decls),
        })
    }

    fn parse_type_spec(&mut self) -> Result<TypeSpec, ParseError> {
        let mut base = None;
        let mut is_const = false;
        let mut seen_long = false;
        let start = self.here();
        while let Some(TokenKind::Ident(word)) = self.peek() {
            if let Some((_, construct)) = UNSUPPORTED_TYPE_WORDS.iter().find(|(w, _)| w == word) {
                return Err(self.error(*construct));
            }
            if !TYPE_WORDS.contains(&word.as_str()) {
                break;
            }
            match word.as_str() {
                "const" => is_const = true,
                "float" => base = Some(BaseType::Float),
                "double" => base = Some(BaseType::Double),
                "char" => base = Some(BaseType::Char),
                "void" => base = Some(BaseType::Void),
                "int" | "short" | "unsigned" | "signed" => {
                    if base.is_none() {
                        base = Some(BaseType::Int)
                    }
                }
                "long" => seen_long = true,
                _ => {}
            }
            self.pos += 1;
        }
        let base = match base {
            Some(b) => b,
            None if seen_long || is_const => BaseType::Int,
            None => return Err(self.error_at(start, "type specifier")),
        };
        if self.is_punct("*") {
            return Err(self.error("pointer declaration"));
        }
        Ok(TypeSpec { base, is_const })
    }

    fn parse_params(&mut self) -> Result<Vec<Param>, ParseError> {
        let mut params = Vec::new();
        if self.eat_punct(")") {
            return Ok(params);
        }
        if self.is_word("void") && matches!(self.peek_at(1), Some(TokenKind::Punct(")"))) {
            self.pos += 2;
            return Ok(params);
        }
        loop {
            if !self.at_type_start() {
                return Err(self.error("parameter type"));
            }
            let spec = self.parse_type_spec()?;
            let name = self.expect_ident()?;
            let extents = self.parse_extents(true)?;
            params.push(Param {
                name,
                ty: VarType {
                    base: spec.base,
                    is_const: spec.is_const,
                    extents,
                },
            });
            if self.eat_punct(")") {
                break;
            }
            self.expect_punct(",")?;
        }
        Ok(params)
    }

    fn parse_extents(&mut self, allow_empty_first: bool) -> Result<Vec<Extent>, ParseError> {
        let mut extents = Vec::new();
        while self.is_punct("[") {
            self.pos += 1;
            if self.is_punct("]") {
                if !(allow_empty_first && extents.is_empty()) {
                    return Err(self.error("array without extent"));
                }
                self.pos += 1;
                extents.push(Extent {
                    text: None,
                    value: None,
                });
                continue;
            }
            let expr = self.parse_ternary()?;
            let text = self.text[expr.span.start..expr.span.end].to_string();
            let value = self.const_eval(&expr);
            self.expect_punct("]")?;
            extents.push(Extent {
                text: Some(text),
                value,
            });
        }
        Ok(extents)
    }

    fn const_eval(&self, expr: &Expr) -> Option<i64> {
        match &expr.kind {
            ExprKind::Int(v) => Some(*v),
            ExprKind::Var(name) => self.consts.get(name).copied(),
            ExprKind::Unary { op: UnaryOp::Neg, expr } => self.const_eval(expr).map(|v| -v),
            ExprKind::Binary { op, lhs, rhs } => {
                let (a, b) = (self.const_eval(lhs)?, self.const_eval(rhs)?);
                match op {
                    BinaryOp::Add => a.checked_add(b),
                    BinaryOp::Sub => a.checked_sub(b),
                    BinaryOp::Mul => a.checked_mul(b),
                    BinaryOp::Div if b != 0 => Some(a / b),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    fn parse_declarators(&mut self, spec: &TypeSpec, start: usize, global: bool) -> Result<Vec<VarDecl>, ParseError> {
        let mut decls = Vec::new();
        let mut decl_start = start;
        loop {
            if self.is_punct("*") {
                return Err(self.error("pointer declaration"));
            }
            let name = self.expect_ident()?;
            let extents = self.parse_extents(false)?;
            let ty = VarType {
                base: spec.base,
                is_const: spec.is_const,
                extents,
            };
            let init = if self.eat_punct("=") {
                if self.eat_punct("{") {
                    let mut list = Vec::new();
                    while !self.eat_punct("}") {
                        list.push(self.parse_assignment()?);
                        if !self.is_punct("}") {
                            self.expect_punct(",")?;
                        }
                    }
                    Some(Initializer::List(list))
                } else {
                    Some(Initializer::Expr(self.parse_assignment()?))
                }
            } else {
                None
            };
            if global && ty.is_const && !ty.is_array() {
                if let Some(Initializer::Expr(e)) = &init {
                    if let Some(v) = self.const_eval(e) {
                        self.consts.insert(name.clone(), v);
                    }
                }
            }
            decls.push(VarDecl {
                name,
                ty,
                init,
                span: Span::new(decl_start, self.prev_end()),
            });
            if self.eat_punct(";") {
                break;
            }
            self.expect_punct(",")?;
            decl_start = self.here();
        }
        Ok(decls)
    }

    // ---- statements ----

    fn parse_block(&mut self) -> Result<Stmt, ParseError> {
        let start = self.here();
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.peek().is_none() {
                return Err(self.error("unterminated block"));
            }
            stmts.push(self.parse_stmt()?);
        }
        self.pos += 1;
        Ok(Stmt {
            span: Span::new(start, self.prev_end()),
            kind: StmtKind::Block(stmts),
        })
    }

    fn parse_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.here();
        let simple = |kind, p: &Parser| Stmt {
            span: Span::new(start, p.prev_end()),
            kind,
        };
        match self.peek().cloned() {
            None => Err(self.error("expected statement but found end of input")),
            Some(TokenKind::Pragma(text)) => {
                self.pos += 1;
                if is_construct_pragma(&text) {
                    let mut pragmas = vec![text];
                    while let Some(TokenKind::Pragma(next)) = self.peek() {
                        if !is_construct_pragma(next) {
                            break;
                        }
                        pragmas.push(next.clone());
                        self.pos += 1;
                    }
                    let stmt = self.parse_stmt()?;
                    Ok(Stmt {
                        span: Span::new(start, stmt.span.end),
                        kind: StmtKind::Annotated {
                            pragmas,
                            stmt: Box::new(stmt),
                        },
                    })
                } else {
                    Ok(simple(StmtKind::Pragma(text), self))
                }
            }
            Some(TokenKind::Punct("{")) => self.parse_block(),
            Some(TokenKind::Punct(";")) => {
                self.pos += 1;
                Ok(simple(StmtKind::Empty, self))
            }
            Some(TokenKind::Ident(word)) => match word.as_str() {
                "for" => self.parse_for(),
                "while" => {
                    self.pos += 1;
                    self.expect_punct("(")?;
                    let cond = self.parse_expr()?;
                    self.expect_punct(")")?;
                    let body = self.parse_stmt()?;
                    Ok(Stmt {
                        span: Span::new(start, body.span.end),
                        kind: StmtKind::While {
                            cond,
                            body: Box::new(body),
                        },
                    })
                }
                "if" => {
                    self.pos += 1;
                    self.expect_punct("(")?;
                    let cond = self.parse_expr()?;
                    self.expect_punct(")")?;
                    let then_branch = Box::new(self.parse_stmt()?);
                    let else_branch = if self.is_word("else") {
                        self.pos += 1;
                        Some(Box::new(self.parse_stmt()?))
                    } else {
                        None
                    };
                    let end = else_branch.as_ref().map_or(then_branch.span.end, |e| e.span.end);
                    Ok(Stmt {
                        span: Span::new(start, end),
                        kind: StmtKind::If {
                            cond,
                            then_branch,
                            else_branch,
                        },
                    })
                }
                "return" => {
                    self.pos += 1;
                    let value = if self.is_punct(";") { None } else { Some(self.parse_expr()?) };
                    self.expect_punct(";")?;
                    Ok(simple(StmtKind::Return(value), self))
                }
                "break" => {
                    self.pos += 1;
                    self.expect_punct(";")?;
                    Ok(simple(StmtKind::Break, self))
                }
                "continue" => {
                    self.pos += 1;
                    self.expect_punct(";")?;
                    Ok(simple(StmtKind::Continue, self))
                }
                "goto" => {
                    self.pos += 1;
                    let label = self.expect_ident()?;
                    self.expect_punct(";")?;
                    Ok(simple(StmtKind::Goto(label), self))
                }
                "do" => Err(self.error("do-while loop")),
                "switch" => Err(self.error("switch statement")),
                "else" => Err(self.error("'else' without 'if'")),
                "sizeof" => Err(self.error("sizeof operator")),
                _ if self.at_type_start() => {
                    let spec = self.parse_type_spec()?;
                    let decls = self.parse_declarators(&spec, start, false)?;
                    Ok(simple(StmtKind::Decl(decls), self))
                }
                _ if matches!(self.peek_at(1), Some(TokenKind::Punct(":"))) => {
                    let label = self.expect_ident()?;
                    self.pos += 1;
                    let stmt = self.parse_stmt()?;
                    Ok(Stmt {
                        span: Span::new(start, stmt.span.end),
                        kind: StmtKind::Labeled(label, Box::new(stmt)),
                    })
                }
                _ => self.parse_expr_stmt(),
            },
            Some(_) => self.parse_expr_stmt(),
        }
    }

    fn parse_expr_stmt(&mut self) -> Result<Stmt, ParseError> {
        let start = self.here();
        let expr = self.parse_expr()?;
        self.expect_punct(";")?;
        Ok(Stmt {
            span: Span::new(start, self.prev_end()),
            kind: StmtKind::Expr(expr),
        })
    }

    fn parse_for(&mut self) -> Result<Stmt, ParseError> {
        let start = self.here();
        self.pos += 1;
        self.expect_punct("(")?;
        let init = if self.eat_punct(";") {
            None
        } else if self.at_type_start() {
            let decl_start = self.here();
            let spec = self.parse_type_spec()?;
            Some(ForInit::Decl(self.parse_declarators(&spec, decl_start, false)?))
        } else {
            let e = self.parse_expr()?;
            self.expect_punct(";")?;
            Some(ForInit::Expr(e))
        };
        let cond = if self.is_punct(";") { None } else { Some(self.parse_expr()?) };
        self.expect_punct(";")?;
        let step = if self.is_punct(")") { None } else { Some(self.parse_expr()?) };
        self.expect_punct(")")?;
        let header = Span::new(start, self.prev_end());
        let body = self.parse_stmt()?;
        Ok(Stmt {
            span: Span::new(start, body.span.end),
            kind: StmtKind::For {
                header,
                init,
                cond,
                step,
                body: Box::new(body),
            },
        })
    }

    // ---- expressions ----

    pub(crate) fn parse_expr(&mut self) -> Result<Expr, ParseError> {
        let first = self.parse_assignment()?;
        if !self.is_punct(",") {
            return Ok(first);
        }
        let start = first.span.start;
        let mut list = vec![first];
        while self.eat_punct(",") {
            list.push(self.parse_assignment()?);
        }
        Ok(Expr {
            span: Span::new(start, self.prev_end()),
            kind: ExprKind::Comma(list),
        })
    }

    fn parse_assignment(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.parse_ternary()?;
        let op = match self.peek() {
            Some(TokenKind::Punct(p)) => match *p {
                "=" => Some(None),
                "+=" => Some(Some(BinaryOp::Add)),
                "-=" => Some(Some(BinaryOp::Sub)),
                "*=" => Some(Some(BinaryOp::Mul)),
                "/=" => Some(Some(BinaryOp::Div)),
                "%=" => Some(Some(BinaryOp::Rem)),
                "&=" => Some(Some(BinaryOp::BitAnd)),
                "|=" => Some(Some(BinaryOp::BitOr)),
                "^=" => Some(Some(BinaryOp::BitXor)),
                "<<=" => Some(Some(BinaryOp::Shl)),
                ">>=" => Some(Some(BinaryOp::Shr)),
                _ => None,
            },
            _ => None,
        };
        let Some(op) = op else { return Ok(lhs) };
        if lhs.lvalue_parts().is_none() {
            return Err(self.error_at(lhs.span.start, "assignment to non-lvalue"));
        }
        self.pos += 1;
        let value = self.parse_assignment()?;
        Ok(Expr {
            span: Span::new(lhs.span.start, value.span.end),
            kind: ExprKind::Assign {
                op,
                target: Box::new(lhs),
                value: Box::new(value),
            },
        })
    }

    fn parse_ternary(&mut self) -> Result<Expr, ParseError> {
        let cond = self.parse_binary(0)?;
        if !self.eat_punct("?") {
            return Ok(cond);
        }
        let then_expr = self.parse_expr()?;
        self.expect_punct(":")?;
        let else_expr = self.parse_ternary()?;
        Ok(Expr {
            span: Span::new(cond.span.start, else_expr.span.end),
            kind: ExprKind::Ternary {
                cond: Box::new(cond),
                then_expr: Box::new(then_expr),
                else_expr: Box::new(else_expr),
            },
        })
    }

    fn parse_binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_unary()?;
        loop {
            let Some((op, prec)) = self.peek_binary_op() else { break };
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let rhs = self.parse_binary(prec + 1)?;
            lhs = Expr {
                span: Span::new(lhs.span.start, rhs.span.end),
                kind: ExprKind::Binary {
                    op,
                    lhs: Box::new(lhs),
                    rhs: Box::new(rhs),
                },
            };
        }
        Ok(lhs)
    }

    fn peek_binary_op(&self) -> Option<(BinaryOp, u8)> {
        let Some(TokenKind::Punct(p)) = self.peek() else { return None };
        Some(match *p {
            "||" => (BinaryOp::Or, 0),
            "&&" => (BinaryOp::And, 1),
            "|" => (BinaryOp::BitOr, 2),
            "^" => (BinaryOp::BitXor, 3),
            "&" => (BinaryOp::BitAnd, 4),
            "==" => (BinaryOp::Eq, 5),
            "!=" => (BinaryOp::Ne, 5),
            "<" => (BinaryOp::Lt, 6),
            ">" => (BinaryOp::Gt, 6),
            "<=" => (BinaryOp::Le, 6),
            ">=" => (BinaryOp::Ge, 6),
            "<<" => (BinaryOp::Shl, 7),
            ">>" => (BinaryOp::Shr, 7),
            "+" => (BinaryOp::Add, 8),
            "-" => (BinaryOp::Sub, 8),
            "*" => (BinaryOp::Mul, 9),
            "/" => (BinaryOp::Div, 9),
            "%" => (BinaryOp::Rem, 9),
            _ => return None,
        })
    }

    fn parse_unary(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        let op = match self.peek() {
            Some(TokenKind::Punct(p)) => Some(*p),
            Some(TokenKind::Ident(w)) if w == "sizeof" => return Err(self.error("sizeof operator")),
            _ => None,
        };
        let wrap = |kind, end| Expr {
            span: Span::new(start, end),
            kind,
        };
        match op {
            Some("*") => Err(self.error("pointer dereference")),
            Some("&") => Err(self.error("address-of operator")),
            Some(p @ ("++" | "--")) => {
                self.pos += 1;
                let target = self.parse_unary()?;
                if target.lvalue_parts().is_none() {
                    return Err(self.error_at(target.span.start, "increment of non-lvalue"));
                }
                let end = target.span.end;
                Ok(wrap(
                    ExprKind::IncDec {
                        prefix: true,
                        increment: p == "++",
                        target: Box::new(target),
                    },
                    end,
                ))
            }
            Some(p @ ("-" | "+" | "!" | "~")) => {
                self.pos += 1;
                let expr = self.parse_unary()?;
                let op = match p {
                    "-" => UnaryOp::Neg,
                    "+" => UnaryOp::Plus,
                    "!" => UnaryOp::Not,
                    _ => UnaryOp::BitNot,
                };
                let end = expr.span.end;
                Ok(wrap(
                    ExprKind::Unary {
                        op,
                        expr: Box::new(expr),
                    },
                    end,
                ))
            }
            Some("(") if matches!(self.peek_at(1), Some(TokenKind::Ident(w)) if TYPE_WORDS.contains(&w.as_str())) => {
                self.pos += 1;
                let spec = self.parse_type_spec()?;
                self.expect_punct(")")?;
                let expr = self.parse_unary()?;
                let end = expr.span.end;
                Ok(wrap(
                    ExprKind::Cast {
                        ty: spec.base,
                        expr: Box::new(expr),
                    },
                    end,
                ))
            }
            _ => self.parse_postfix(),
        }
    }

    fn parse_postfix(&mut self) -> Result<Expr, ParseError> {
        let mut expr = self.parse_primary()?;
        loop {
            if self.eat_punct("[") {
                if expr.lvalue_parts().is_none() {
                    return Err(self.error_at(expr.span.start, "subscript of non-array expression"));
                }
                let index = self.parse_expr()?;
                self.expect_punct("]")?;
                expr = Expr {
                    span: Span::new(expr.span.start, self.prev_end()),
                    kind: ExprKind::Index {
                        base: Box::new(expr),
                        index: Box::new(index),
                    },
                };
            } else if self.is_punct("(") {
                let ExprKind::Var(name) = &expr.kind else {
                    return Err(self.error("call through non-identifier"));
                };
                let name = name.clone();
                self.pos += 1;
                let mut args = Vec::new();
                if !self.eat_punct(")") {
                    loop {
                        args.push(self.parse_assignment()?);
                        if self.eat_punct(")") {
                            break;
                        }
                        self.expect_punct(",")?;
                    }
                }
                expr = Expr {
                    span: Span::new(expr.span.start, self.prev_end()),
                    kind: ExprKind::Call { name, args },
                };
            } else if self.is_punct("++") || self.is_punct("--") {
                if expr.lvalue_parts().is_none() {
                    return Err(self.error("increment of non-lvalue"));
                }
                let increment = self.is_punct("++");
                self.pos += 1;
                expr = Expr {
                    span: Span::new(expr.span.start, self.prev_end()),
                    kind: ExprKind::IncDec {
                        prefix: false,
                        increment,
                        target: Box::new(expr),
                    },
                };
            } else if self.is_punct(".") || self.is_punct("->") {
                return Err(self.error("struct member access"));
            } else {
                return Ok(expr);
            }
        }
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.here();
        let Some(kind) = self.peek().cloned() else {
            return Err(self.error("expected expression but found end of input"));
        };
        let kind = match kind {
            TokenKind::Int(v) => ExprKind::Int(v),
            TokenKind::Float(v) => ExprKind::Float(v),
            TokenKind::Str(s) => {
                // Adjacent literals concatenate.
                let mut s = s;
                self.pos += 1;
                while let Some(TokenKind::Str(next)) = self.peek() {
                    s.push_str(next);
                    self.pos += 1;
                }
                return Ok(Expr {
                    span: Span::new(start, self.prev_end()),
                    kind: ExprKind::Str(s),
                });
            }
            TokenKind::Ident(name) if !is_keyword(&name) => ExprKind::Var(name),
            TokenKind::Punct("(") => {
                self.pos += 1;
                let inner = self.parse_expr()?;
                self.expect_punct(")")?;
                return Ok(Expr {
                    span: Span::new(start, self.prev_end()),
                    kind: inner.kind,
                });
            }
            TokenKind::Pragma(_) => return Err(self.error("pragma inside expression")),
            _ => {
                let found = self.describe_current();
                return Err(self.error(format!("expected expression but found {found}")));
            }
        };
        self.pos += 1;
        Ok(Expr {
            span: Span::new(start, self.prev_end()),
            kind,
        })
    }
}

fn is_keyword(word: &str) -> bool {
    TYPE_WORDS.contains(&word)
        || matches!(
            word,
            "for" | "while" | "do" | "if" | "else" | "return" | "break" | "continue" | "goto" | "switch"
                | "case" | "default" | "sizeof" | "struct" | "union" | "enum" | "typedef"
        )
}

/// Directives that apply to the statement that follows them.
pub fn is_construct_pragma(text: &str) -> bool {
    let mut words = text.trim_start_matches('#').split_whitespace();
    if words.next() != Some("pragma") {
        return false;
    }
    match words.next() {
        Some("acc") => matches!(
            words.next().map(|w| w.split('(').next().unwrap_or(w)),
            Some("data" | "kernels" | "parallel" | "serial" | "loop" | "host_data")
        ),
        Some("omp") => true,
        _ => false,
    }
}
