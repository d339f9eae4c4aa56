//! JSON structural description of a project: loops and variable reference
//! facts per file. Written by `analyze`, accepted in place of sources so that
//! code analyzed elsewhere can be planned and costed.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ast::VarType;
use super::loops::{LoopId, LoopInfo, LoopShape, LoopTable};
use super::refs::{RefFlags, Region, VarEntry, VarKey, VarRefTable, VarScope};
use super::{FileId, Span};

#[derive(Debug, Error)]
pub enum DescribeError {
    #[error("malformed description: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid description: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub files: Vec<FileDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDescription {
    pub file_id: FileId,
    /// Where the source can be re-read, when it is available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    pub loops: Vec<LoopDescription>,
    pub vars: Vec<VarDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopDescription {
    pub loop_id: LoopId,
    pub span: [usize; 2],
    pub parent: Option<LoopId>,
    pub shape: LoopShape,
    pub index_var: Option<String>,
    pub trip_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub function: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub header: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarDescription {
    /// Qualified name (`a`, `f::a`, `f::a@L3`).
    pub name: String,
    pub scope: VarScope,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "type")]
    pub ty: Option<VarType>,
    pub refs: Vec<RefDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefDescription {
    pub region: String,
    pub read: bool,
    pub written: bool,
    pub defined: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub covering_write: bool,
}

impl Description {
    pub fn from_json(text: &str) -> Result<Self, DescribeError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("description serializes")
    }

    pub fn from_tables(loops: &LoopTable, refs: &VarRefTable, files: &[FileId]) -> Self {
        let mut out: Vec<FileDescription> = files
            .iter()
            .map(|f| FileDescription {
                file_id: f.clone(),
                path: None,
                loops: Vec::new(),
                vars: Vec::new(),
            })
            .collect();
        let index = |file: &FileId, out: &mut Vec<FileDescription>| -> usize {
            match out.iter().position(|d| &d.file_id == file) {
                Some(i) => i,
                None => {
                    out.push(FileDescription {
                        file_id: file.clone(),
                        path: None,
                        loops: Vec::new(),
                        vars: Vec::new(),
                    });
                    out.len() - 1
                }
            }
        };
        for l in loops {
            let i = index(&l.file_id, &mut out);
            out[i].loops.push(LoopDescription {
                loop_id: l.loop_id,
                span: [l.span.start, l.span.end],
                parent: l.parent_loop,
                shape: l.shape,
                index_var: l.index_var.clone(),
                trip_count: l.trip_count_estimate,
                function: l.function.clone(),
                header: Some([l.header.start, l.header.end]),
            });
        }
        for entry in refs.iter() {
            let mut per_file: BTreeMap<FileId, Vec<RefDescription>> = BTreeMap::new();
            for (region, flags) in &entry.refs {
                let file = match region {
                    Region::Loop(id) => match loops.get(*id) {
                        Some(l) => l.file_id.clone(),
                        None => continue,
                    },
                    Region::Host { file, .. } => file.clone(),
                };
                per_file.entry(file).or_default().push(RefDescription {
                    region: region.encode(),
                    read: flags.read,
                    written: flags.written,
                    defined: flags.defined,
                    covering_write: flags.covering_write,
                });
            }
            for (file, refs) in per_file {
                let i = index(&file, &mut out);
                out[i].vars.push(VarDescription {
                    name: entry.key.0.clone(),
                    scope: entry.scope,
                    ty: entry.ty.clone(),
                    refs,
                });
            }
        }
        Description { files: out }
    }

    pub fn to_tables(&self) -> Result<(LoopTable, VarRefTable), DescribeError> {
        let invalid = |m: String| DescribeError::Invalid(m);
        let mut infos: Vec<LoopInfo> = Vec::new();
        let mut seen = HashSet::new();
        for f in &self.files {
            for l in &f.loops {
                if !seen.insert(l.loop_id) {
                    return Err(invalid(format!("duplicate loop id {}", l.loop_id.0)));
                }
                if l.span[0] > l.span[1] {
                    return Err(invalid(format!("loop {} has a reversed span", l.loop_id.0)));
                }
                let span = Span::new(l.span[0], l.span[1]);
                let header = match l.header {
                    Some([s, e]) if s <= e && span.contains(&Span::new(s, e)) => Span::new(s, e),
                    Some(_) => return Err(invalid(format!("loop {} header outside its span", l.loop_id.0))),
                    None => Span::new(span.start, span.start),
                };
                infos.push(LoopInfo {
                    loop_id: l.loop_id,
                    file_id: f.file_id.clone(),
                    function: l.function.clone(),
                    span,
                    header,
                    depth: 0,
                    parent_loop: l.parent,
                    index_var: l.index_var.clone(),
                    trip_count_estimate: l.trip_count,
                    shape: l.shape,
                });
            }
        }
        let by_id: BTreeMap<LoopId, (FileId, Span, Option<LoopId>)> = infos
            .iter()
            .map(|l| (l.loop_id, (l.file_id.clone(), l.span, l.parent_loop)))
            .collect();
        for info in &mut infos {
            let mut depth = 0;
            let mut cur = info.parent_loop;
            while let Some(p) = cur {
                let Some((file, span, next)) = by_id.get(&p) else {
                    return Err(invalid(format!("loop {} names unknown parent {}", info.loop_id.0, p.0)));
                };
                if depth == 0 && (file != &info.file_id || !span.contains(&info.span) || *span == info.span) {
                    return Err(invalid(format!("loop {} is not inside its parent {}", info.loop_id.0, p.0)));
                }
                depth += 1;
                if depth > by_id.len() {
                    return Err(invalid("cyclic loop parents".into()));
                }
                cur = *next;
            }
            info.depth = depth as u32;
        }
        let loops = LoopTable::new(infos);

        let mut entries: Vec<VarEntry> = Vec::new();
        for f in &self.files {
            for v in &f.vars {
                let mut refs = BTreeMap::new();
                for r in &v.refs {
                    let region = Region::decode(&r.region, &f.file_id)
                        .ok_or_else(|| invalid(format!("variable {}: bad region '{}'", v.name, r.region)))?;
                    if let Region::Loop(id) = region {
                        if loops.get(id).is_none() {
                            return Err(invalid(format!("variable {}: unknown loop {}", v.name, id.0)));
                        }
                    }
                    refs.insert(
                        region,
                        RefFlags {
                            read: r.read,
                            written: r.written,
                            defined: r.defined,
                            covering_write: r.covering_write,
                        },
                    );
                }
                let name = v.name.split("::").last().unwrap_or(&v.name);
                let name = name.split('@').next().unwrap_or(name).to_string();
                entries.push(VarEntry {
                    key: VarKey(v.name.clone()),
                    name,
                    scope: v.scope,
                    ty: v.ty.clone(),
                    refs,
                });
            }
        }
        Ok((loops, VarRefTable::from_entries(entries)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Program;

    const SRC: &str = "const int N = 8;\ndouble a[N], b[N];\nint main() {\n  for (int i = 0; i < N; i++) b[i] = i;\n  for (int i = 0; i < N; i++)\n    for (int j = 0; j < N; j++)\n      a[i] += b[j];\n  print(a[1]);\n  return 0;\n}\n";

    #[test]
    fn round_trip_through_json() {
        let p = Program::from_sources([(FileId::new("m.c"), SRC)]).unwrap();
        let desc = p.describe();
        let back = Description::from_json(&desc.to_json()).unwrap();
        assert_eq!(back, desc);
        let (loops, refs) = back.to_tables().unwrap();
        assert_eq!(loops, p.loops);
        assert_eq!(refs, p.refs);
    }

    #[test]
    fn minimal_import_without_optional_fields() {
        let json = r#"{"files":[{"file_id":"x.c","loops":[
            {"loop_id":0,"span":[0,50],"parent":null,"shape":"TightlyNestedOuter","index_var":"i","trip_count":10},
            {"loop_id":1,"span":[20,50],"parent":0,"shape":"TightlyNestedInner","index_var":"j","trip_count":null}],
            "vars":[{"name":"a","scope":"global","refs":[{"region":"loop:0","read":true,"written":false,"defined":false},
                                                        {"region":"pre@0-0","read":false,"written":true,"defined":true}]}]}]}"#;
        let (loops, refs) = Description::from_json(json).unwrap().to_tables().unwrap();
        assert_eq!(loops.get(LoopId(1)).unwrap().depth, 1);
        assert!(refs.flags(&VarKey::global("a"), &Region::Loop(LoopId(0))).read);
    }

    #[test]
    fn rejects_parent_that_does_not_contain_child() {
        let json = r#"{"files":[{"file_id":"x.c","loops":[
            {"loop_id":0,"span":[0,10],"parent":null,"shape":"SingleLoop","index_var":"i","trip_count":null},
            {"loop_id":1,"span":[20,30],"parent":0,"shape":"SingleLoop","index_var":"j","trip_count":null}],"vars":[]}]}"#;
        assert!(matches!(
            Description::from_json(json).unwrap().to_tables(),
            Err(DescribeError::Invalid(_))
        ));
    }
}
