//! Source emission: turns a genome and its transfer plan into annotated
//! source text. Every addition is a whole line, so deleting the logged lines
//! restores the input exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::DirectiveKind;
use crate::ga::Genome;
use crate::model::{FileId, ItemKind, LoopId, Node, NodeKind, Program, SourceUnit, Span, VarKey};
use crate::transfer::{PlanEntry, TransferDirection, TransferPlan};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EmitError {
    #[error("genome has {got} genes, expected {expected}")]
    GenomeLength { expected: usize, got: usize },
    #[error("plan inconsistent with genome: {0}")]
    PlanInconsistent(String),
    #[error("variable '{0}' has no declared extent")]
    UnknownExtent(String),
    #[error("no directive kind for offloaded loop {0}")]
    MissingKind(u32),
    #[error("source text for {0} is unavailable")]
    NoSource(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub file: FileId,
    /// 1-based line number in the emitted text.
    pub line: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedVariant {
    pub files: BTreeMap<FileId, String>,
    pub genome: Genome,
    pub kinds: BTreeMap<LoopId, DirectiveKind>,
    pub plan: TransferPlan,
    pub insertions: Vec<Insertion>,
}

impl AnnotatedVariant {
    pub fn text(&self, file: &FileId) -> Option<&str> {
        self.files.get(file).map(String::as_str)
    }

    pub fn insertion_log_json(&self) -> String {
        serde_json::to_string_pretty(&self.insertions).expect("log serializes")
    }

    /// Writes every file below `dir` under its file id and returns the paths.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for (file, text) in &self.files {
            let path = dir.join(file.as_str());
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }

    /// The emitted text of `file` with every logged line removed.
    pub fn stripped(&self, file: &FileId) -> Option<String> {
        let lines: Vec<usize> = self.insertions.iter().filter(|i| &i.file == file).map(|i| i.line).collect();
        self.text(file).map(|t| strip_lines(t, &lines))
    }

    /// Number of compute-construct pragmas in all files.
    pub fn gpu_pragma_count(&self) -> usize {
        self.insertions.iter().filter(|i| is_compute_pragma(&i.text)).count()
    }
}

/// True for the loop-level pragmas (`kernels`, `parallel loop`, `loop`).
pub fn is_compute_pragma(line: &str) -> bool {
    let t = line.trim();
    t == "#pragma acc kernels" || t.starts_with("#pragma acc parallel loop") || t.starts_with("#pragma acc loop")
}

/// Removes the given 1-based lines.
pub fn strip_lines(text: &str, lines: &[usize]) -> String {
    let drop: BTreeSet<usize> = lines.iter().copied().collect();
    text.split_inclusive('\n')
        .enumerate()
        .filter(|(i, _)| !drop.contains(&(i + 1)))
        .map(|(_, l)| l)
        .collect()
}

/// Where a line goes relative to the others at the same offset.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    /// Closing lines; inner regions first.
    Close { size_rank: usize, seq: usize },
    /// Opening lines; outer regions first.
    Open { size_rank: std::cmp::Reverse<usize>, seq: usize },
    /// Present assertions and the compute pragma of a loop.
    Loop { seq: usize },
}

struct Pending {
    offset: usize,
    slot: Slot,
    text: String,
}

struct Anchor<'a> {
    block_braced: bool,
    children: &'a [Node],
    first: usize,
    last: usize,
}

pub fn emit_variant(
    program: &Program,
    genome: &Genome,
    gene_map: &[LoopId],
    kinds: &BTreeMap<LoopId, DirectiveKind>,
    plan: &TransferPlan,
) -> Result<AnnotatedVariant, EmitError> {
    if genome.len() != gene_map.len() {
        return Err(EmitError::GenomeLength {
            expected: gene_map.len(),
            got: genome.len(),
        });
    }
    let on: BTreeSet<LoopId> = gene_map
        .iter()
        .zip(genome.iter())
        .filter_map(|(id, b)| b.then_some(*id))
        .collect();
    let loops = &program.loops;
    let is_site = |id: &LoopId| on.contains(id) && !loops.ancestors(*id).iter().any(|a| on.contains(a));
    for e in &plan.entries {
        for s in &e.sites {
            if !is_site(s) {
                return Err(EmitError::PlanInconsistent(format!(
                    "{} names loop {} which is not offloaded at top level",
                    e.var, s.0
                )));
            }
            let inside = loops.get(*s).is_some_and(|l| l.file_id == e.file && e.span().contains(&l.span));
            if !inside {
                return Err(EmitError::PlanInconsistent(format!(
                    "loop {} lies outside the {} region",
                    s.0, e.var
                )));
            }
        }
        if let Some(p) = e.present.iter().find(|p| !e.sites.contains(p)) {
            return Err(EmitError::PlanInconsistent(format!(
                "present site {} outside the {} region",
                p.0, e.var
            )));
        }
    }

    let mut pending: BTreeMap<FileId, Vec<Pending>> = BTreeMap::new();
    let mut seq = 0usize;
    let mut next = || {
        seq += 1;
        seq
    };

    // Compute pragmas and present assertions.
    let mut present: BTreeMap<LoopId, BTreeSet<String>> = BTreeMap::new();
    for e in &plan.entries {
        for p in &e.present {
            present.entry(*p).or_default().insert(clause_item(program, &e.var)?);
        }
    }
    for id in &on {
        let info = loops.get(*id).ok_or_else(|| EmitError::PlanInconsistent(format!("unknown loop {}", id.0)))?;
        let unit = unit(program, &info.file_id)?;
        let kind = kinds.get(id).ok_or(EmitError::MissingKind(id.0))?;
        let pragma = if is_site(id) { kind.pragma() } else { kind.nested_pragma() };
        let offset = line_start(&unit.original_text, info.span.start);
        let indent = indent_at(&unit.original_text, info.span.start);
        let list = pending.entry(info.file_id.clone()).or_default();
        if let Some(items) = present.get(id) {
            list.push(Pending {
                offset,
                slot: Slot::Loop { seq: next() },
                text: format!("{indent}#pragma acc data present({})", join(items)),
            });
        }
        list.push(Pending {
            offset,
            slot: Slot::Loop { seq: next() },
            text: format!("{indent}{pragma}"),
        });
    }

    // Data regions, grouped by anchor.
    let mut by_anchor: BTreeMap<(FileId, [usize; 2]), Vec<&PlanEntry>> = BTreeMap::new();
    for e in &plan.entries {
        by_anchor.entry((e.file.clone(), e.region_span)).or_default().push(e);
    }
    for ((file, [s, e]), entries) in &by_anchor {
        let unit = unit(program, file)?;
        let text = &unit.original_text;
        let anchor = find_anchor(program, file, Span::new(*s, *e)).ok_or_else(|| {
            EmitError::PlanInconsistent(format!("region {s}-{e} in {file} does not match whole statements"))
        })?;
        let mut clauses: BTreeMap<TransferDirection, BTreeSet<String>> = BTreeMap::new();
        let mut to_device = BTreeSet::new();
        let mut to_host = BTreeSet::new();
        for entry in entries {
            let item = clause_item(program, &entry.var)?;
            if entry.temp_region {
                if entry.direction.copies_in() {
                    to_device.insert(item.clone());
                }
                if entry.direction.copies_out() {
                    to_host.insert(item);
                }
            } else {
                clauses.entry(entry.direction).or_default().insert(item);
            }
        }
        let has_data = !clauses.is_empty();
        let multi = anchor.first != anchor.last;
        let unbraced_body = !anchor.block_braced;
        let open_brace = (has_data && multi) || unbraced_body;
        let outer_brace = unbraced_body;
        let start = anchor.children[anchor.first].span.start;
        let end = anchor.children[anchor.last].span.end;
        let indent = indent_at(text, start);
        let before = line_start(text, start);
        let after = after_line(text, end);
        let rank = e - s;
        let list = pending.entry(file.clone()).or_default();
        let mut open = |line: String, list: &mut Vec<Pending>| {
            list.push(Pending {
                offset: before,
                slot: Slot::Open {
                    size_rank: std::cmp::Reverse(rank),
                    seq: next(),
                },
                text: line,
            })
        };
        let mut opening = Vec::new();
        if outer_brace {
            opening.push(format!("{indent}{{"));
        }
        if !to_device.is_empty() {
            opening.push(format!("{indent}#pragma acc update device({})", join(&to_device)));
        }
        if has_data {
            let parts: Vec<String> = clauses
                .iter()
                .map(|(d, items)| format!("{}({})", d.clause().expect("planned entries move data"), join(items)))
                .collect();
            opening.push(format!("{indent}#pragma acc data {}", parts.join(" ")));
            if open_brace && !outer_brace {
                opening.push(format!("{indent}{{"));
            }
        }
        for line in opening {
            open(line, list);
        }
        let mut closing = Vec::new();
        if has_data && open_brace && !outer_brace {
            closing.push(format!("{indent}}}"));
        }
        if !to_host.is_empty() {
            closing.push(format!("{indent}#pragma acc update self({})", join(&to_host)));
        }
        if outer_brace {
            closing.push(format!("{indent}}}"));
        }
        for line in closing {
            list.push(Pending {
                offset: after,
                slot: Slot::Close {
                    size_rank: rank,
                    seq: next(),
                },
                text: line,
            });
        }
    }

    // Device mirrors for temporary-region globals.
    let temp: BTreeSet<&VarKey> = plan.entries.iter().filter(|e| e.temp_region).map(|e| &e.var).collect();
    for unit in &program.units {
        for item in &unit.items {
            let ItemKind::Decl(decls) = &item.kind else { continue };
            let mut names = BTreeSet::new();
            for d in decls {
                if temp.contains(&VarKey::global(&d.name)) {
                    names.insert(
                        d.ty.clause_item(&d.name)
                            .ok_or_else(|| EmitError::UnknownExtent(d.name.clone()))?,
                    );
                }
            }
            if names.is_empty() {
                continue;
            }
            let end = decls.last().map_or(item.span.end, |d| d.span.end.max(item.span.start));
            let offset = after_line(&unit.original_text, end.max(decls_end(&unit.original_text, item.span)));
            pending.entry(unit.file_id.clone()).or_default().push(Pending {
                offset,
                slot: Slot::Close {
                    size_rank: usize::MAX,
                    seq: next(),
                },
                text: format!("#pragma acc declare create({})", join(&names)),
            });
        }
    }

    let mut files = BTreeMap::new();
    let mut insertions = Vec::new();
    for unit in &program.units {
        let mut list = pending.remove(&unit.file_id).unwrap_or_default();
        list.sort_by(|a, b| (a.offset, &a.slot).cmp(&(b.offset, &b.slot)));
        let text = &unit.original_text;
        let mut out = String::with_capacity(text.len() + list.len() * 40);
        let mut cursor = 0;
        for p in list {
            out.push_str(&text[cursor..p.offset]);
            cursor = p.offset;
            if !out.is_empty() && !out.ends_with('\n') {
                out.push('\n');
            }
            let line = out.matches('\n').count() + 1;
            out.push_str(&p.text);
            out.push('\n');
            insertions.push(Insertion {
                file: unit.file_id.clone(),
                line,
                text: p.text,
            });
        }
        out.push_str(&text[cursor..]);
        files.insert(unit.file_id.clone(), out);
    }
    Ok(AnnotatedVariant {
        files,
        genome: genome.clone(),
        kinds: on.iter().filter_map(|id| kinds.get(id).map(|k| (*id, *k))).collect(),
        plan: plan.clone(),
        insertions,
    })
}

fn unit<'p>(program: &'p Program, file: &FileId) -> Result<&'p SourceUnit, EmitError> {
    program.unit(file).ok_or_else(|| EmitError::NoSource(file.to_string()))
}

fn clause_item(program: &Program, var: &VarKey) -> Result<String, EmitError> {
    let entry = program.refs.get(var).ok_or_else(|| EmitError::UnknownExtent(var.to_string()))?;
    entry
        .ty
        .as_ref()
        .and_then(|t| t.clause_item(&entry.name))
        .ok_or_else(|| EmitError::UnknownExtent(var.to_string()))
}

fn join(items: &BTreeSet<String>) -> String {
    items.iter().cloned().collect::<Vec<_>>().join(", ")
}

fn line_start(text: &str, offset: usize) -> usize {
    text[..offset].rfind('\n').map_or(0, |i| i + 1)
}

fn indent_at(text: &str, offset: usize) -> &str {
    &text[line_start(text, offset)..offset]
}

/// Offset just past the newline ending the line that holds `offset - 1`.
fn after_line(text: &str, offset: usize) -> usize {
    text[offset..].find('\n').map_or(text.len(), |i| offset + i + 1)
}

/// End of the last non-blank byte of a top-level item.
fn decls_end(text: &str, span: Span) -> usize {
    span.start + span.slice(text).trim_end().len()
}

/// Locates the sibling range whose first child starts at `span.start` and
/// whose last child ends at `span.end`.
fn find_anchor<'p>(program: &'p Program, file: &FileId, span: Span) -> Option<Anchor<'p>> {
    let mut found = None;
    for tree in program.forest.trees.iter().filter(|t| &t.file == file) {
        if !tree.root.span.contains(&span) {
            continue;
        }
        tree.root.walk(&mut |n| {
            if found.is_some() {
                return;
            }
            if let NodeKind::Block { braced, children } = &n.kind {
                let first = children.iter().position(|c| c.span.start == span.start);
                let last = children.iter().rposition(|c| c.span.end == span.end);
                if let (Some(first), Some(last)) = (first, last) {
                    if first <= last {
                        found = Some(Anchor {
                            block_braced: *braced,
                            children,
                            first,
                            last,
                        });
                    }
                }
            }
        });
    }
    found
}
