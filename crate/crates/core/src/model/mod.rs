//! Structural model of C-subset sources: statements with byte spans, the
//! loop table, per-region variable reference facts and the control tree the
//! transfer planner walks.

pub mod ast;
pub mod describe;
mod lexer;
pub mod loops;
mod parser;
pub mod refs;
mod semantic;
pub mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ast::{BaseType, Extent, Function, Item, ItemKind, Stmt, StmtKind, VarDecl, VarType};
pub use describe::{Description, DescribeError};
pub use lexer::line_col;
pub use loops::{extract_loops, extract_loops_from, LoopId, LoopInfo, LoopShape, LoopTable};
pub use parser::is_construct_pragma;
pub use refs::{analyze_program_refs, analyze_variable_refs, HostPhase, RefFlags, Region, VarEntry, VarKey, VarRefTable, VarScope};
pub use tree::{ControlForest, FunctionTree, Node, NodeKind};

/// Half-open byte range `[start, end)` into a source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn slice<'t>(&self, text: &'t str) -> &'t str {
        &text[self.start..self.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FileId(pub String);

impl FileId {
    pub fn new(id: impl Into<String>) -> Self {
        FileId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A construct outside the supported subset, located by 1-based line/column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: unsupported or malformed construct: {construct}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub construct: String,
}

/// One parsed translation unit.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceUnit {
    pub file_id: FileId,
    pub original_text: String,
    /// Top-level segments tiling `original_text`.
    pub items: Vec<Item>,
    pub top_level_decls: Vec<VarDecl>,
}

impl SourceUnit {
    pub fn functions(&self) -> impl Iterator<Item = &Function> {
        self.items.iter().filter_map(|item| match &item.kind {
            ItemKind::Function(f) => Some(f),
            _ => None,
        })
    }

    pub fn function(&self, name: &str) -> Option<&Function> {
        self.functions().find(|f| f.name == name)
    }

    /// Concatenates the text of every top-level segment.
    pub fn reassemble(&self) -> String {
        self.items.iter().map(|item| item.span.slice(&self.original_text)).collect()
    }

    /// True when only blanks precede `offset` on its line.
    pub fn starts_line(&self, offset: usize) -> bool {
        starts_line(&self.original_text, offset)
    }

    /// True when only blanks or a line comment follow `offset` on its line.
    pub fn ends_line(&self, offset: usize) -> bool {
        ends_line(&self.original_text, offset)
    }
}

pub(crate) fn starts_line(text: &str, offset: usize) -> bool {
    text[..offset]
        .bytes()
        .rev()
        .take_while(|&b| b != b'\n')
        .all(|b| b == b' ' || b == b'\t')
}

pub(crate) fn ends_line(text: &str, offset: usize) -> bool {
    let rest = &text[offset..];
    let line = rest.split('\n').next().unwrap_or("");
    let trimmed = line.trim_start_matches([' ', '\t', '\r']);
    trimmed.is_empty() || trimmed.starts_with("//")
}

/// Parses one translation unit of the supported subset.
///
/// Besides syntax, this rejects pointer-like uses of arrays, undeclared
/// identifiers, duplicate function-level declarations and aliased array
/// arguments, since any of those would make the variable reference facts
/// unreliable.
pub fn parse_source(source_text: &str, file_id: FileId) -> Result<SourceUnit, ParseError> {
    let items = parser::Parser::new(source_text)?.parse_items()?;
    let top_level_decls = items
        .iter()
        .filter_map(|item| match &item.kind {
            ItemKind::Decl(decls) => Some(decls.clone()),
            _ => None,
        })
        .flatten()
        .collect();
    let unit = SourceUnit {
        file_id,
        original_text: source_text.to_string(),
        items,
        top_level_decls,
    };
    semantic::check(&unit)?;
    Ok(unit)
}

/// Parsed sources together with every derived table.
#[derive(Debug, Clone)]
pub struct Program {
    pub units: Vec<SourceUnit>,
    pub loops: LoopTable,
    pub refs: VarRefTable,
    pub forest: ControlForest,
}

impl Program {
    /// Parses and analyzes a project; loop ids continue across files in the
    /// given order.
    pub fn from_sources<I, S>(sources: I) -> Result<Program, ParseError>
    where
        I: IntoIterator<Item = (FileId, S)>,
        S: AsRef<str>,
    {
        let units = sources
            .into_iter()
            .map(|(id, text)| parse_source(text.as_ref(), id))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Program::from_units(units))
    }

    pub fn from_units(units: Vec<SourceUnit>) -> Program {
        let mut loops = LoopTable::default();
        for unit in &units {
            let next = loops.len() as u32;
            loops.extend(extract_loops_from(unit, LoopId(next)));
        }
        let refs = analyze_program_refs(&units, &loops);
        let forest = ControlForest::from_units(&units, &loops);
        Program {
            units,
            loops,
            refs,
            forest,
        }
    }

    /// A program known only through a structural description: planning and
    /// cost-model evaluation work, source emission does not.
    pub fn from_description(desc: &Description) -> Result<Program, DescribeError> {
        let (loops, refs) = desc.to_tables()?;
        let forest = ControlForest::from_tables(&loops, &refs);
        Ok(Program {
            units: Vec::new(),
            loops,
            refs,
            forest,
        })
    }

    pub fn unit(&self, file: &FileId) -> Option<&SourceUnit> {
        self.units.iter().find(|u| &u.file_id == file)
    }

    pub fn has_source(&self) -> bool {
        !self.units.is_empty()
    }

    pub fn describe(&self) -> Description {
        Description::from_tables(&self.loops, &self.refs, &self.file_ids())
    }

    pub fn file_ids(&self) -> Vec<FileId> {
        if self.units.is_empty() {
            let mut ids: Vec<FileId> = self.loops.iter().map(|l| l.file_id.clone()).collect();
            ids.dedup();
            ids
        } else {
            self.units.iter().map(|u| u.file_id.clone()).collect()
        }
    }
}
