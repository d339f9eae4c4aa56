//! Per-function control tree over loops and host regions.

use std::collections::BTreeSet;

use super::ast::*;
use super::loops::{LoopId, LoopTable};
use super::refs::{contains_for, HostPhase, Region, VarRefTable};
use super::{FileId, SourceUnit, Span};

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub span: Span,
    /// Only blanks precede the node on its first line.
    pub starts_line: bool,
    /// Only blanks or a line comment follow the node on its last line.
    pub ends_line: bool,
    pub kind: NodeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    /// Loop-free statements; `declares` when one of them is a declaration.
    Host { region: Region, declares: bool },
    Loop { id: LoopId, header: Region, body: Box<Node> },
    /// A `while` whose body contains loops.
    Repeat { cond: Region, body: Box<Node> },
    /// An `if` with loops in some branch.
    Branch { cond: Region, branches: Vec<Node> },
    /// Statement list; `braced` is false for a lone unbraced body statement.
    Block { braced: bool, children: Vec<Node> },
}

impl Node {
    pub fn aligned(&self) -> bool {
        self.starts_line && self.ends_line
    }

    /// Pre-order visit.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Node)) {
        f(self);
        match &self.kind {
            NodeKind::Host { .. } => {}
            NodeKind::Loop { body, .. } | NodeKind::Repeat { body, .. } => body.walk(f),
            NodeKind::Branch { branches, .. } => branches.iter().for_each(|b| b.walk(f)),
            NodeKind::Block { children, .. } => children.iter().for_each(|c| c.walk(f)),
        }
    }

    /// Regions owned directly by this node, excluding nested nodes.
    pub fn own_regions(&self) -> Vec<&Region> {
        match &self.kind {
            NodeKind::Host { region, .. } => vec![region],
            NodeKind::Loop { header, .. } => vec![header],
            NodeKind::Repeat { cond, .. } | NodeKind::Branch { cond, .. } => vec![cond],
            NodeKind::Block { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionTree {
    pub file: FileId,
    pub function: String,
    pub root: Node,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ControlForest {
    pub trees: Vec<FunctionTree>,
}

impl ControlForest {
    pub fn from_units(units: &[SourceUnit], loops: &LoopTable) -> Self {
        let mut trees = Vec::new();
        for unit in units {
            for f in unit.functions() {
                let builder = Builder {
                    unit,
                    loops,
                    bounds: top_bounds(loops, unit, &f.name),
                };
                trees.push(FunctionTree {
                    file: unit.file_id.clone(),
                    function: f.name.clone(),
                    root: builder.body(&f.body),
                });
            }
        }
        ControlForest { trees }
    }

    /// Flat reconstruction from tables alone: one tree per file, nodes
    /// nested by span containment, every node assumed line-aligned.
    pub fn from_tables(loops: &LoopTable, refs: &VarRefTable) -> Self {
        let mut files: Vec<FileId> = loops.iter().map(|l| l.file_id.clone()).collect();
        let mut hosts: BTreeSet<(FileId, Span, HostPhase)> = BTreeSet::new();
        for entry in refs.iter() {
            for region in entry.refs.keys() {
                if let Region::Host { file, span, phase } = region {
                    hosts.insert((file.clone(), *span, *phase));
                    files.push(file.clone());
                }
            }
        }
        files.sort();
        files.dedup();
        let mut trees = Vec::new();
        for file in files {
            let file_loops: Vec<_> = loops.iter().filter(|l| l.file_id == file).collect();
            let file_hosts: Vec<_> = hosts.iter().filter(|h| h.0 == file).collect();
            let host_node = |span: Span, phase: HostPhase| Node {
                span,
                starts_line: true,
                ends_line: true,
                kind: NodeKind::Host {
                    region: Region::Host {
                        file: file.clone(),
                        span,
                        phase,
                    },
                    declares: false,
                },
            };
            // Innermost enclosing loop of a span.
            let owner = |span: Span| -> Option<LoopId> {
                file_loops
                    .iter()
                    .filter(|l| l.span.contains(&span) && l.span != span)
                    .max_by_key(|l| l.depth)
                    .map(|l| l.loop_id)
            };
            fn build(
                parent: Option<LoopId>,
                file_loops: &[&super::loops::LoopInfo],
                file_hosts: &[&(FileId, Span, HostPhase)],
                owner: &dyn Fn(Span) -> Option<LoopId>,
                host_node: &dyn Fn(Span, HostPhase) -> Node,
            ) -> Vec<Node> {
                let mut children: Vec<Node> = Vec::new();
                for l in file_loops.iter().filter(|l| l.parent_loop == parent) {
                    let header = file_hosts
                        .iter()
                        .find(|h| owner(h.1) == Some(l.loop_id) && h.1.start == l.span.start)
                        .map(|h| host_node(h.1, h.2))
                        .unwrap_or_else(|| host_node(Span::new(l.span.start, l.span.start), HostPhase::Between));
                    let NodeKind::Host { region: header_region, .. } = header.kind else { unreachable!() };
                    let inner = build(Some(l.loop_id), file_loops, file_hosts, owner, host_node)
                        .into_iter()
                        .filter(|n| n.own_regions().first().map_or(true, |r| *r != &header_region))
                        .collect();
                    children.push(Node {
                        span: l.span,
                        starts_line: true,
                        ends_line: true,
                        kind: NodeKind::Loop {
                            id: l.loop_id,
                            header: header_region,
                            body: Box::new(Node {
                                span: l.span,
                                starts_line: true,
                                ends_line: true,
                                kind: NodeKind::Block {
                                    braced: true,
                                    children: inner,
                                },
                            }),
                        },
                    });
                }
                for h in file_hosts.iter().filter(|h| owner(h.1) == parent) {
                    children.push(host_node(h.1, h.2));
                }
                children.sort_by_key(|n| (n.span.start, n.span.end));
                children
            }
            let children = build(None, &file_loops, &file_hosts, &owner, &host_node);
            let span = Span::new(
                children.iter().map(|c| c.span.start).min().unwrap_or(0),
                children.iter().map(|c| c.span.end).max().unwrap_or(0),
            );
            trees.push(FunctionTree {
                file: file.clone(),
                function: file.0.clone(),
                root: Node {
                    span,
                    starts_line: true,
                    ends_line: true,
                    kind: NodeKind::Block { braced: true, children },
                },
            });
        }
        ControlForest { trees }
    }

    /// The node for loop `id` together with the tree holding it.
    pub fn find_loop(&self, id: LoopId) -> Option<(&FunctionTree, &Node)> {
        for tree in &self.trees {
            let mut found = None;
            tree.root.walk(&mut |n| {
                if matches!(n.kind, NodeKind::Loop { id: x, .. } if x == id) {
                    found = Some(n);
                }
            });
            if let Some(n) = found {
                return Some((tree, n));
            }
        }
        None
    }
}

fn top_bounds(loops: &LoopTable, unit: &SourceUnit, function: &str) -> (usize, usize) {
    let tops: Vec<_> = loops
        .iter()
        .filter(|l| l.file_id == unit.file_id && l.depth == 0 && l.function.as_deref() == Some(function))
        .collect();
    match (tops.iter().map(|l| l.span.start).min(), tops.iter().map(|l| l.span.end).max()) {
        (Some(s), Some(e)) => (s, e),
        _ => (usize::MAX, usize::MAX),
    }
}

struct Builder<'a> {
    unit: &'a SourceUnit,
    loops: &'a LoopTable,
    bounds: (usize, usize),
}

impl Builder<'_> {
    fn region(&self, span: Span) -> Region {
        let phase = if span.end <= self.bounds.0 {
            HostPhase::Pre
        } else if span.start >= self.bounds.1 {
            HostPhase::Post
        } else {
            HostPhase::Between
        };
        Region::Host {
            file: self.unit.file_id.clone(),
            span,
            phase,
        }
    }

    fn node(&self, span: Span, kind: NodeKind) -> Node {
        Node {
            span,
            starts_line: self.unit.starts_line(span.start),
            ends_line: self.unit.ends_line(span.end),
            kind,
        }
    }

    fn body(&self, stmt: &Stmt) -> Node {
        match &stmt.kind {
            StmtKind::Block(stmts) => {
                let children = self.block(stmts);
                self.node(stmt.span, NodeKind::Block { braced: true, children })
            }
            _ => {
                let children = self.block(std::slice::from_ref(stmt));
                self.node(stmt.span, NodeKind::Block { braced: false, children })
            }
        }
    }

    fn block(&self, stmts: &[Stmt]) -> Vec<Node> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < stmts.len() {
            if contains_for(&stmts[i]) {
                out.push(self.compound(&stmts[i]));
                i += 1;
                continue;
            }
            let start = i;
            while i < stmts.len() && !contains_for(&stmts[i]) {
                i += 1;
            }
            let span = Span::new(stmts[start].span.start, stmts[i - 1].span.end);
            let declares = stmts[start..i].iter().any(|s| matches!(s.unwrap_annotations().kind, StmtKind::Decl(_)));
            out.push(self.node(
                span,
                NodeKind::Host {
                    region: self.region(span),
                    declares,
                },
            ));
        }
        out
    }

    fn compound(&self, stmt: &Stmt) -> Node {
        match &stmt.kind {
            StmtKind::For { header, body, .. } => {
                let id = self
                    .loops
                    .find_by_span(&self.unit.file_id, stmt.span.start)
                    .map(|l| l.loop_id)
                    .expect("loop table covers every for statement");
                self.node(
                    stmt.span,
                    NodeKind::Loop {
                        id,
                        header: self.region(*header),
                        body: Box::new(self.body(body)),
                    },
                )
            }
            StmtKind::While { cond, body } => self.node(
                stmt.span,
                NodeKind::Repeat {
                    cond: self.region(cond.span),
                    body: Box::new(self.body(body)),
                },
            ),
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                let mut branches = vec![self.body(then_branch)];
                if let Some(e) = else_branch {
                    branches.push(self.body(e));
                }
                self.node(
                    stmt.span,
                    NodeKind::Branch {
                        cond: self.region(cond.span),
                        branches,
                    },
                )
            }
            StmtKind::Block(_) => self.body(stmt),
            // Labels and pre-existing annotations are transparent; the node
            // keeps the outer span so insertions land before them.
            StmtKind::Labeled(_, s) | StmtKind::Annotated { stmt: s, .. } => {
                let mut inner = self.compound(s);
                inner.span = stmt.span;
                inner.starts_line = self.unit.starts_line(stmt.span.start);
                inner
            }
            _ => unreachable!("compound statements contain a for loop"),
        }
    }
}
