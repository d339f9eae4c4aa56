//! Data-movement planning for a genome.
//!
//! A GPU site is a gene=1 loop not nested in another gene=1 loop. For every
//! array touched by a site the planner decides what must move between host
//! and device and where the data region sits:
//!
//! * [`Planner::plan_transfers`] gives every (variable, site) pair its own
//!   region around the site.
//! * [`Planner::hoist_and_batch`] merges sibling sites not separated by a
//!   host access, and lifts regions out of host loops and branches whose
//!   bodies only touch the variable on the device.
//! * [`Planner::suppress_auto_transfers`] switches globals to the
//!   `declare create` + `update` pattern.
//!
//! Scalars are not planned: compute constructs receive them by value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ga::Genome;
use crate::model::ast::ExprKind;
use crate::model::{
    FileId, LoopId, Node, NodeKind, Program, RefFlags, Region, Span, StmtKind, VarEntry, VarKey, VarScope,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferDirection {
    CopyIn,
    CopyOut,
    Copy,
    None,
}

impl TransferDirection {
    pub fn from_flags(copy_in: bool, copy_out: bool) -> Self {
        match (copy_in, copy_out) {
            (true, true) => TransferDirection::Copy,
            (true, false) => TransferDirection::CopyIn,
            (false, true) => TransferDirection::CopyOut,
            (false, false) => TransferDirection::None,
        }
    }

    pub fn copies_in(self) -> bool {
        matches!(self, TransferDirection::CopyIn | TransferDirection::Copy)
    }

    pub fn copies_out(self) -> bool {
        matches!(self, TransferDirection::CopyOut | TransferDirection::Copy)
    }

    /// Host-to-device plus device-to-host movements.
    pub fn events(self) -> u32 {
        self.copies_in() as u32 + self.copies_out() as u32
    }

    pub fn clause(self) -> Option<&'static str> {
        match self {
            TransferDirection::CopyIn => Some("copyin"),
            TransferDirection::CopyOut => Some("copyout"),
            TransferDirection::Copy => Some("copy"),
            TransferDirection::None => None,
        }
    }
}

impl fmt::Display for TransferDirection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.clause().unwrap_or("none"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub var: VarKey,
    pub direction: TransferDirection,
    pub file: FileId,
    /// Statements the data region opens before and closes after.
    pub region_span: [usize; 2],
    /// GPU sites covered by the region.
    pub sites: Vec<LoopId>,
    /// Sites that assert the variable is already on the device.
    pub present: Vec<LoopId>,
    pub temp_region: bool,
}

impl PlanEntry {
    pub fn span(&self) -> Span {
        Span::new(self.region_span[0], self.region_span[1])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferPlan {
    pub entries: Vec<PlanEntry>,
}

impl TransferPlan {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn events(&self) -> u32 {
        self.entries.iter().map(|e| e.direction.events()).sum()
    }

    pub fn events_for(&self, var: &VarKey) -> u32 {
        self.entries.iter().filter(|e| &e.var == var).map(|e| e.direction.events()).sum()
    }

    pub fn copy_in_events(&self) -> u32 {
        self.entries.iter().filter(|e| e.direction.copies_in()).count() as u32
    }

    pub fn vars(&self) -> BTreeSet<&VarKey> {
        self.entries.iter().map(|e| &e.var).collect()
    }

    fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| (&a.file, a.region_span[0], &a.var).cmp(&(&b.file, b.region_span[0], &b.var)));
    }
}

/// Genome-induced split of loops into device and host execution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GpuRegionMap {
    /// Outermost gene=1 loops.
    pub sites: Vec<LoopId>,
    /// Every loop running on the device (sites and everything inside).
    pub device_loops: BTreeSet<LoopId>,
}

impl GpuRegionMap {
    pub fn is_site(&self, id: LoopId) -> bool {
        self.sites.binary_search(&id).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PlanError {
    #[error("genome has {got} genes, expected {expected}")]
    GenomeLengthMismatch { expected: usize, got: usize },
}

/// Position of a node: tree index, child-index path to its parent block and
/// its index inside that block.
#[derive(Debug, Clone, PartialEq, Eq)]
struct NodePos {
    tree: usize,
    block_path: Vec<usize>,
    index: usize,
}

/// A candidate data region for one variable.
#[derive(Debug, Clone)]
struct Group {
    var: usize,
    tree: usize,
    block_path: Vec<usize>,
    /// `(child index, sites inside that child)` for children holding sites.
    site_children: Vec<(usize, Vec<LoopId>)>,
    /// Spans of enclosing host loops and while statements, innermost first.
    enclosing: Vec<Span>,
    /// Set when the region is exactly one site (no present clause needed).
    exact_site: bool,
    /// Child range the region may grow into without meeting any access.
    reach: (usize, usize),
    /// Child range actually covered, when wider than the sites.
    bounds: Option<(usize, usize)>,
}

impl Group {
    fn first(&self) -> usize {
        self.bounds.map_or(self.site_children.first().unwrap().0, |b| b.0)
    }

    fn last(&self) -> usize {
        self.bounds.map_or(self.site_children.last().unwrap().0, |b| b.1)
    }

    fn sites(&self) -> Vec<LoopId> {
        self.site_children.iter().flat_map(|(_, s)| s.iter().copied()).collect()
    }
}

/// Planned variable with its host-side reference regions.
#[derive(Debug)]
struct PlanVar<'p> {
    entry: &'p VarEntry,
    hosts: Vec<(FileId, Span, RefFlags)>,
    escapes: bool,
    passed_as_argument: bool,
}

/// Precomputed planning context for one program and gene assignment.
pub struct Planner<'p> {
    program: &'p Program,
    gene_map: Vec<LoopId>,
    vars: Vec<PlanVar<'p>>,
    positions: HashMap<LoopId, NodePos>,
    loop_spans: HashMap<LoopId, (FileId, Span)>,
}

enum Status {
    Nothing,
    /// Host access that forbids a device-resident copy across it.
    Closed,
    /// Groups were placed inside; the node itself cannot be wrapped.
    Sealed,
    /// A declaration: wrapping it would change its scope.
    Barrier,
    /// Only device accesses; `fallback` are the groups to place if an
    /// enclosing node refuses to cover it.
    Clean { sites: Vec<LoopId>, fallback: Vec<Group> },
}

impl<'p> Planner<'p> {
    /// `gene_map[i]` is the loop driven by gene `i`.
    pub fn new(program: &'p Program, gene_map: Vec<LoopId>) -> Self {
        let passed = arguments_to_user_functions(program);
        let vars = program
            .refs
            .iter()
            .filter(|e| transferable(e))
            .map(|entry| {
                let hosts = entry
                    .refs
                    .iter()
                    .filter_map(|(r, f)| match r {
                        Region::Host { file, span, .. } if f.any() => Some((file.clone(), *span, *f)),
                        _ => None,
                    })
                    .collect();
                PlanVar {
                    entry,
                    hosts,
                    escapes: matches!(entry.scope, VarScope::Global | VarScope::Param),
                    passed_as_argument: passed.contains(&entry.key),
                }
            })
            .collect();
        let mut positions = HashMap::new();
        for (t, tree) in program.forest.trees.iter().enumerate() {
            index_positions(&tree.root, t, &mut Vec::new(), &mut positions);
        }
        let loop_spans = program.loops.iter().map(|l| (l.loop_id, (l.file_id.clone(), l.span))).collect();
        Planner {
            program,
            gene_map,
            vars,
            positions,
            loop_spans,
        }
    }

    pub fn gene_len(&self) -> usize {
        self.gene_map.len()
    }

    pub fn gene_map(&self) -> &[LoopId] {
        &self.gene_map
    }

    pub fn regions(&self, genome: &Genome) -> Result<GpuRegionMap, PlanError> {
        if genome.len() != self.gene_map.len() {
            return Err(PlanError::GenomeLengthMismatch {
                expected: self.gene_map.len(),
                got: genome.len(),
            });
        }
        let on: BTreeSet<LoopId> = self
            .gene_map
            .iter()
            .zip(genome.iter())
            .filter_map(|(id, bit)| bit.then_some(*id))
            .collect();
        let loops = &self.program.loops;
        let sites: Vec<LoopId> = on
            .iter()
            .copied()
            .filter(|id| !loops.ancestors(*id).iter().any(|a| on.contains(a)))
            .collect();
        let device_loops = loops
            .iter()
            .filter(|l| sites.iter().any(|s| loops.is_within(l.loop_id, *s)))
            .map(|l| l.loop_id)
            .collect();
        Ok(GpuRegionMap { sites, device_loops })
    }

    /// Full plan for a genome: per-site directions, hoisting and batching,
    /// then the temporary-region pattern for globals.
    pub fn plan(&self, genome: &Genome) -> Result<TransferPlan, PlanError> {
        let regions = self.regions(genome)?;
        let plan = self.plan_for_sites(&regions);
        Ok(self.suppress_auto_transfers(&self.hoist_and_batch(&plan, &regions)))
    }

    /// One region per (variable, site), anchored at the site.
    pub fn plan_transfers(&self, genome: &Genome) -> Result<TransferPlan, PlanError> {
        let regions = self.regions(genome)?;
        Ok(self.plan_for_sites(&regions))
    }

    fn plan_for_sites(&self, regions: &GpuRegionMap) -> TransferPlan {
        let mut groups = Vec::new();
        for (v, var) in self.vars.iter().enumerate() {
            for &site in &regions.sites {
                if !var.entry.flags(&Region::Loop(site)).any() {
                    continue;
                }
                let Some(pos) = self.positions.get(&site) else { continue };
                groups.push(Group {
                    var: v,
                    tree: pos.tree,
                    block_path: pos.block_path.clone(),
                    site_children: vec![(pos.index, vec![site])],
                    enclosing: self.enclosing(pos),
                    exact_site: true,
                    reach: (pos.index, pos.index),
                    bounds: None,
                });
            }
        }
        self.materialize(groups, regions)
    }

    /// Widens regions as far as no host access intervenes. Only the
    /// variables already in `plan` are considered.
    pub fn hoist_and_batch(&self, plan: &TransferPlan, regions: &GpuRegionMap) -> TransferPlan {
        let planned: BTreeSet<&VarKey> = plan.vars();
        let mut groups = Vec::new();
        for (v, var) in self.vars.iter().enumerate() {
            if !planned.contains(&var.entry.key) {
                continue;
            }
            let gpu_writes = regions
                .sites
                .iter()
                .any(|s| var.entry.flags(&Region::Loop(*s)).written);
            for (t, tree) in self.program.forest.trees.iter().enumerate() {
                let mut walk = Walk {
                    planner: self,
                    regions,
                    var: v,
                    gpu_writes,
                    tree: t,
                    groups: &mut groups,
                };
                let mut path = Vec::new();
                let status = walk.block(&tree.root, &mut path, &[]);
                if let Status::Clean { fallback, .. } = status {
                    groups.extend(fallback);
                }
            }
        }
        let groups = self.laminarize(groups);
        self.materialize(groups, regions)
    }

    /// Marks planned globals for `declare create` + `update`. Globals also
    /// passed as array arguments keep plain data clauses: a device-resident
    /// mirror would make the callee's clauses skip their transfers.
    pub fn suppress_auto_transfers(&self, plan: &TransferPlan) -> TransferPlan {
        let mut out = plan.clone();
        for e in &mut out.entries {
            let var = self.vars.iter().find(|v| v.entry.key == e.var);
            e.temp_region = var.is_some_and(|v| v.entry.scope == VarScope::Global && !v.passed_as_argument);
        }
        out
    }

    fn enclosing(&self, pos: &NodePos) -> Vec<Span> {
        let tree = &self.program.forest.trees[pos.tree];
        let mut out = Vec::new();
        let mut node = &tree.root;
        for &i in &pos.block_path {
            node = match &node.kind {
                NodeKind::Block { children, .. } => &children[i],
                NodeKind::Loop { body, .. } | NodeKind::Repeat { body, .. } => {
                    let _ = i;
                    body
                }
                NodeKind::Branch { branches, .. } => &branches[i],
                NodeKind::Host { .. } => unreachable!(),
            };
            if matches!(node.kind, NodeKind::Loop { .. } | NodeKind::Repeat { .. }) {
                out.push(node.span);
            }
        }
        out.reverse();
        out
    }

    fn block_children(&self, tree: usize, path: &[usize]) -> &[Node] {
        let mut node = &self.program.forest.trees[tree].root;
        for &i in path {
            node = match &node.kind {
                NodeKind::Block { children, .. } => &children[i],
                NodeKind::Loop { body, .. } | NodeKind::Repeat { body, .. } => body,
                NodeKind::Branch { branches, .. } => &branches[i],
                NodeKind::Host { .. } => unreachable!(),
            };
        }
        match &node.kind {
            NodeKind::Block { children, .. } => children,
            _ => unreachable!("paths end at blocks"),
        }
    }

    fn group_span(&self, g: &Group) -> Span {
        let children = self.block_children(g.tree, &g.block_path);
        Span::new(children[g.first()].span.start, children[g.last()].span.end)
    }

    /// Device accesses (sites) and host accesses outside any site, for `var`
    /// inside `tree`.
    fn atoms(&self, var: &PlanVar<'_>, tree: usize, regions: &GpuRegionMap) -> Vec<(Span, RefFlags)> {
        let t = &self.program.forest.trees[tree];
        let site_spans: Vec<Span> = regions
            .sites
            .iter()
            .filter_map(|s| self.loop_spans.get(s))
            .filter(|(f, _)| *f == t.file)
            .map(|(_, s)| *s)
            .collect();
        let mut atoms: Vec<(Span, RefFlags)> = var
            .hosts
            .iter()
            .filter(|(f, span, _)| *f == t.file && t.root.span.contains(span))
            .filter(|(_, span, _)| !site_spans.iter().any(|s| s.contains(span)))
            .map(|(_, span, flags)| (*span, *flags))
            .collect();
        for s in &regions.sites {
            let flags = var.entry.flags(&Region::Loop(*s));
            let (file, span) = &self.loop_spans[s];
            if flags.any() && *file == t.file && t.root.span.contains(span) {
                atoms.push((*span, flags));
            }
        }
        atoms
    }

    /// Copy-in and copy-out needs of a region spanning `span`.
    fn needs(
        &self,
        var: &PlanVar<'_>,
        tree: usize,
        span: Span,
        enclosing: &[Span],
        runs: &[(bool, Vec<LoopId>)],
        regions: &GpuRegionMap,
    ) -> (bool, bool) {
        let flags = |s: &LoopId| var.entry.flags(&Region::Loop(*s));
        // Reads not preceded by a full overwrite. Only a site that is itself
        // a statement of the region is known to run before the rest.
        let mut reads = false;
        for (direct, sites) in runs {
            if *direct {
                let f = flags(&sites[0]);
                if f.covering_write && !f.read {
                    break;
                }
            }
            if sites.iter().map(flags).any(|f| f.read || (f.written && !f.covering_write)) {
                reads = true;
                break;
            }
        }
        let writes = runs.iter().flat_map(|(_, s)| s).any(|s| flags(s).written);
        if var.escapes || var.entry.ty.is_none() {
            return (reads, writes);
        }
        let atoms = self.atoms(var, tree, regions);
        let outside: Vec<&(Span, RefFlags)> = atoms.iter().filter(|(s, _)| !span.contains(s)).collect();
        let defines = |f: &RefFlags| f.written || f.defined;
        let defined_before = outside.iter().any(|(s, f)| s.start < span.start && defines(f))
            || enclosing
                .iter()
                .any(|w| outside.iter().any(|(s, f)| w.contains(s) && defines(f)));
        let used_after = outside.iter().any(|(s, _)| s.start >= span.end)
            || enclosing.iter().any(|w| outside.iter().any(|(s, _)| w.contains(s)));
        (reads && defined_before, writes && used_after)
    }

    /// Splits groups of different variables whose sibling ranges cross, so
    /// that emitted regions nest.
    fn laminarize(&self, mut groups: Vec<Group>) -> Vec<Group> {
        loop {
            let mut split = None;
            'search: for (i, a) in groups.iter().enumerate() {
                for (j, b) in groups.iter().enumerate() {
                    if i == j || a.tree != b.tree || a.block_path != b.block_path {
                        continue;
                    }
                    if a.first() < b.first() && b.first() <= a.last() && a.last() < b.last() {
                        split = Some((i, j));
                        break 'search;
                    }
                }
            }
            let Some((i, j)) = split else { return groups };
            let (a_first, a_last) = (groups[i].first(), groups[i].last());
            let b_last = groups[j].last();
            if groups[i].reach.1 >= b_last {
                groups[i].bounds = Some((a_first, b_last));
                continue;
            }
            if groups[j].reach.0 <= a_first {
                groups[j].bounds = Some((a_first, b_last));
                continue;
            }
            let g = groups.remove(j);
            let (left, right): (Vec<_>, Vec<_>) = g.site_children.iter().cloned().partition(|(idx, _)| *idx <= a_last);
            for (part, reach) in [(left, (g.reach.0, a_last)), (right, (a_last + 1, g.reach.1))] {
                if part.is_empty() {
                    continue;
                }
                groups.push(Group {
                    site_children: part,
                    exact_site: false,
                    reach,
                    bounds: None,
                    ..g.clone()
                });
            }
        }
    }

    fn materialize(&self, groups: Vec<Group>, regions: &GpuRegionMap) -> TransferPlan {
        let mut plan = TransferPlan::default();
        for g in groups {
            let var = &self.vars[g.var];
            let span = self.group_span(&g);
            let sites = g.sites();
            let children = self.block_children(g.tree, &g.block_path);
            let runs: Vec<(bool, Vec<LoopId>)> = g
                .site_children
                .iter()
                .map(|(i, s)| {
                    let direct = matches!(children[*i].kind, NodeKind::Loop { id, .. } if s == &[id]);
                    (direct, s.clone())
                })
                .collect();
            let (copy_in, copy_out) = self.needs(var, g.tree, span, &g.enclosing, &runs, regions);
            let direction = TransferDirection::from_flags(copy_in, copy_out);
            if direction == TransferDirection::None {
                continue;
            }
            let exact = g.exact_site
                || (sites.len() == 1
                    && self.loop_spans.get(&sites[0]).is_some_and(|(_, s)| *s == span));
            plan.entries.push(PlanEntry {
                var: var.entry.key.clone(),
                direction,
                file: self.program.forest.trees[g.tree].file.clone(),
                region_span: [span.start, span.end],
                present: if exact { Vec::new() } else { sites.clone() },
                sites,
                temp_region: false,
            });
        }
        plan.sort();
        plan
    }
}

struct Walk<'a, 'p> {
    planner: &'a Planner<'p>,
    regions: &'a GpuRegionMap,
    var: usize,
    gpu_writes: bool,
    tree: usize,
    groups: &'a mut Vec<Group>,
}

impl Walk<'_, '_> {
    fn flags(&self, region: &Region) -> RefFlags {
        self.planner.vars[self.var].entry.flags(region)
    }

    /// A host region blocks device residency when it writes the variable,
    /// or reads it while some device loop writes it.
    fn blocking(&self, region: &Region) -> bool {
        let f = self.flags(region);
        f.written || f.defined || (f.read && self.gpu_writes)
    }

    fn node(&mut self, node: &Node, path: &mut Vec<usize>, enclosing: &[Span]) -> Status {
        match &node.kind {
            NodeKind::Host { region, declares } => {
                if self.blocking(region) {
                    Status::Closed
                } else if *declares {
                    Status::Barrier
                } else {
                    Status::Nothing
                }
            }
            NodeKind::Loop { id, header, body } => {
                if self.regions.is_site(*id) {
                    return if self.flags(&Region::Loop(*id)).any() {
                        Status::Clean {
                            sites: vec![*id],
                            fallback: Vec::new(),
                        }
                    } else {
                        Status::Nothing
                    };
                }
                if !self.flags(&Region::Loop(*id)).any() {
                    return Status::Nothing;
                }
                let own_blocking = self.blocking(header);
                let mut inner_enclosing = vec![node.span];
                inner_enclosing.extend_from_slice(enclosing);
                path.push(0);
                let status = self.block(body, path, &inner_enclosing);
                path.pop();
                self.compound(node, own_blocking, vec![status], enclosing)
            }
            NodeKind::Repeat { cond, body } => {
                let own_blocking = self.blocking(cond);
                let mut inner_enclosing = vec![node.span];
                inner_enclosing.extend_from_slice(enclosing);
                path.push(0);
                let status = self.block(body, path, &inner_enclosing);
                path.pop();
                self.compound(node, own_blocking, vec![status], enclosing)
            }
            NodeKind::Branch { cond, branches } => {
                let own_blocking = self.blocking(cond);
                let mut statuses = Vec::new();
                for (i, b) in branches.iter().enumerate() {
                    path.push(i);
                    statuses.push(self.block(b, path, enclosing));
                    path.pop();
                }
                self.compound(node, own_blocking, statuses, enclosing)
            }
            NodeKind::Block { .. } => {
                // A nested brace block is its own parent block.
                let status = self.block(node, path, enclosing);
                self.compound(node, false, vec![status], enclosing)
            }
        }
    }

    /// Decides whether a loop, while, branch or brace block whose parts have
    /// `statuses` may be covered as a whole.
    fn compound(&mut self, node: &Node, own_blocking: bool, statuses: Vec<Status>, enclosing: &[Span]) -> Status {
        let mut sites = Vec::new();
        let mut fallback = Vec::new();
        let mut closed = own_blocking;
        let mut sealed = false;
        for s in statuses {
            match s {
                Status::Closed => closed = true,
                Status::Sealed => sealed = true,
                Status::Barrier | Status::Nothing => {}
                Status::Clean { sites: s, fallback: f } => {
                    sites.extend(s);
                    fallback.extend(f);
                }
            }
        }
        if sites.is_empty() {
            return if closed {
                Status::Closed
            } else if sealed {
                Status::Sealed
            } else {
                Status::Nothing
            };
        }
        let accept = !closed && !sealed && node.aligned() && {
            let var = &self.planner.vars[self.var];
            let (copy_in, copy_out) = self
                .planner
                .needs(var, self.tree, node.span, enclosing, &[(false, sites.clone())], self.regions);
            // A conditionally executed region must not copy out data it
            // never copied in.
            copy_in || !copy_out
        };
        if accept {
            Status::Clean {
                sites,
                fallback: Vec::new(),
            }
            .with_fallback(fallback)
        } else {
            self.groups.extend(fallback);
            if closed {
                Status::Closed
            } else {
                Status::Sealed
            }
        }
    }

    /// Groups the children of `block` into runs between host accesses.
    fn block(&mut self, block: &Node, path: &mut Vec<usize>, enclosing: &[Span]) -> Status {
        let NodeKind::Block { children, .. } = &block.kind else {
            // Unreachable for well-formed trees: bodies are blocks.
            return Status::Nothing;
        };
        let mut statuses = Vec::with_capacity(children.len());
        for (i, c) in children.iter().enumerate() {
            path.push(i);
            statuses.push(self.node(c, path, enclosing));
            path.pop();
        }
        let any_closed = statuses.iter().any(|s| matches!(s, Status::Closed));
        let any_sealed = statuses.iter().any(|s| matches!(s, Status::Sealed));
        let any_clean = statuses.iter().any(|s| matches!(s, Status::Clean { .. }));
        let idle: Vec<bool> = statuses.iter().map(|s| matches!(s, Status::Nothing)).collect();
        let reach = |lo: usize, hi: usize| {
            let lo = (0..lo).rev().take_while(|&k| idle[k]).last().unwrap_or(lo);
            let hi = (hi + 1..idle.len()).take_while(|&k| idle[k]).last().unwrap_or(hi);
            (lo, hi)
        };
        let mut runs: Vec<Group> = Vec::new();
        let mut current: Vec<(usize, Vec<LoopId>)> = Vec::new();
        let mut all_sites = Vec::new();
        let flush = |current: &mut Vec<(usize, Vec<LoopId>)>, runs: &mut Vec<Group>| {
            if !current.is_empty() {
                runs.push(Group {
                    var: self.var,
                    tree: self.tree,
                    block_path: path.clone(),
                    reach: reach(current[0].0, current[current.len() - 1].0),
                    site_children: std::mem::take(current),
                    enclosing: enclosing.to_vec(),
                    exact_site: false,
                    bounds: None,
                });
            }
        };
        for (i, s) in statuses.into_iter().enumerate() {
            match s {
                Status::Clean { sites, .. } => {
                    all_sites.extend(sites.iter().copied());
                    current.push((i, sites));
                }
                Status::Nothing => {}
                Status::Closed | Status::Sealed | Status::Barrier => flush(&mut current, &mut runs),
            }
        }
        flush(&mut current, &mut runs);
        if any_closed {
            self.groups.extend(runs);
            Status::Closed
        } else if any_clean && !any_sealed {
            Status::Clean {
                sites: all_sites,
                fallback: runs,
            }
        } else if any_sealed || !runs.is_empty() {
            self.groups.extend(runs);
            Status::Sealed
        } else {
            Status::Nothing
        }
    }
}

impl Status {
    fn with_fallback(self, fallback: Vec<Group>) -> Status {
        match self {
            Status::Clean { sites, .. } => Status::Clean { sites, fallback },
            other => other,
        }
    }
}

fn transferable(e: &VarEntry) -> bool {
    e.scope != VarScope::LoopLocal && e.ty.as_ref().map_or(true, |t| t.is_array())
}

fn index_positions(node: &Node, tree: usize, path: &mut Vec<usize>, out: &mut HashMap<LoopId, NodePos>) {
    match &node.kind {
        NodeKind::Block { children, .. } => {
            for (i, c) in children.iter().enumerate() {
                if let NodeKind::Loop { id, .. } = c.kind {
                    out.insert(
                        id,
                        NodePos {
                            tree,
                            block_path: path.clone(),
                            index: i,
                        },
                    );
                }
                path.push(i);
                index_positions(c, tree, path, out);
                path.pop();
            }
        }
        NodeKind::Loop { body, .. } | NodeKind::Repeat { body, .. } => {
            path.push(0);
            index_positions(body, tree, path, out);
            path.pop();
        }
        NodeKind::Branch { branches, .. } => {
            for (i, b) in branches.iter().enumerate() {
                path.push(i);
                index_positions(b, tree, path, out);
                path.pop();
            }
        }
        NodeKind::Host { .. } => {}
    }
}

/// Globals passed by name to a function defined in the program.
fn arguments_to_user_functions(program: &Program) -> BTreeSet<VarKey> {
    let defined: BTreeSet<&str> = program
        .units
        .iter()
        .flat_map(|u| u.functions().map(|f| f.name.as_str()))
        .collect();
    let mut out = BTreeSet::new();
    for unit in &program.units {
        for f in unit.functions() {
            f.body.walk(&mut |s| {
                let mut visit = |e: &crate::model::ast::Expr| collect_args(e, &defined, &f.name, program, &mut out);
                match &s.kind {
                    StmtKind::Expr(e) | StmtKind::Return(Some(e)) => visit(e),
                    StmtKind::Decl(decls) => {
                        for d in decls {
                            if let Some(crate::model::ast::Initializer::Expr(e)) = &d.init {
                                visit(e);
                            }
                        }
                    }
                    StmtKind::If { cond, .. } | StmtKind::While { cond, .. } => visit(cond),
                    _ => {}
                }
            });
        }
    }
    out
}

fn collect_args(
    e: &crate::model::ast::Expr,
    defined: &BTreeSet<&str>,
    function: &str,
    program: &Program,
    out: &mut BTreeSet<VarKey>,
) {
    if let ExprKind::Call { name, args } = &e.kind {
        if defined.contains(name.as_str()) {
            for a in args {
                if let ExprKind::Var(v) = &a.kind {
                    let shadowed = program.refs.get(&VarKey::local(function, v)).is_some();
                    if !shadowed {
                        out.insert(VarKey::global(v));
                    }
                }
            }
        }
    }
    let mut rec = |x: &crate::model::ast::Expr| collect_args(x, defined, function, program, out);
    match &e.kind {
        ExprKind::Call { args, .. } => args.iter().for_each(&mut rec),
        ExprKind::Index { base, index } => {
            rec(base);
            rec(index);
        }
        ExprKind::Unary { expr, .. } | ExprKind::Cast { expr, .. } => rec(expr),
        ExprKind::IncDec { target, .. } => rec(target),
        ExprKind::Binary { lhs, rhs, .. } => {
            rec(lhs);
            rec(rhs);
        }
        ExprKind::Assign { target, value, .. } => {
            rec(target);
            rec(value);
        }
        ExprKind::Ternary {
            cond,
            then_expr,
            else_expr,
        } => {
            rec(cond);
            rec(then_expr);
            rec(else_expr);
        }
        ExprKind::Comma(list) => list.iter().for_each(rec),
        _ => {}
    }
}

/// Transfer events per variable, summed over entries.
pub fn events_by_var(plan: &TransferPlan) -> BTreeMap<VarKey, u32> {
    let mut out = BTreeMap::new();
    for e in &plan.entries {
        *out.entry(e.var.clone()).or_insert(0) += e.direction.events();
    }
    out
}
