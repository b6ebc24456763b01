//! Partitioned semi-naive evaluation. Each stratum runs with `n` worker
//! threads and a coordinator; phases are separated by a barrier. Worker `w`
//! drives partition `w` of every entry relation and writes wherever the head
//! tuple hashes, taking one lock per write.

use std::cell::Cell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, AtomicU8, AtomicUsize, Ordering};
use std::sync::Barrier;
use std::time::Instant;

use parking_lot::{Mutex, RwLock};
use serde::Serialize;

use super::builtins::coerce;
use super::ir::{lower_rule, RuleIr};
use super::naive::{base_db, lower_all, Db};
use super::raw::{compare, head_row, lower_raw, run_from, store, HeadMode, RScan, RStep, RawRule, RelRef, RelShape, Relations, Rv, Sink};
use super::EvalError;
use crate::compiler::split::{DeltaRule, Version};
use crate::compiler::{split_exit_recursive, Compiled, PredKind};
use crate::frontend::{ExtremaKind, Literal, Query, Term};
use crate::planner::{LockType, PlanAssignment};
use crate::storage::{
    decode, encode, AggKind, AggLayout, AggPart, DiscriminatingSet, HashScheme, KeySpec, Table, Ty, Value,
};

/// Rows copied out of a locked partition at a time.
const COPY_ROWS: usize = 4096;

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub workers: usize,
    /// Partitions per relation; defaults to the worker count. Worker `w`
    /// owns the partitions congruent to `w`.
    pub partitions: Option<usize>,
    pub max_iterations: usize,
    pub memory_cap_bytes: Option<usize>,
    pub hash: HashScheme,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            workers: 1,
            partitions: None,
            max_iterations: super::DEFAULT_MAX_ITERATIONS,
            memory_cap_bytes: None,
            hash: HashScheme::MIXER,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct PhaseTimes {
    pub setup: f64,
    pub exit: f64,
    pub recursive: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct Stats {
    pub iterations: u64,
    pub facts_generated: u64,
    pub result_size: u64,
    pub repartitions: u64,
    pub lock_acquisitions: u64,
    pub wall_time_ms: PhaseTimes,
}

impl Stats {
    fn add(&mut self, o: &Stats) {
        self.iterations += o.iterations;
        self.facts_generated += o.facts_generated;
        self.repartitions += o.repartitions;
        self.lock_acquisitions += o.lock_acquisitions;
        self.wall_time_ms.exit += o.wall_time_ms.exit;
        self.wall_time_ms.recursive += o.wall_time_ms.recursive;
        self.wall_time_ms.setup += o.wall_time_ms.setup;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("stats serialize")
    }
}

/// A relation that no longer changes: loaded facts or a completed stratum.
pub struct FixedRel {
    pub pred: String,
    pub types: Vec<Ty>,
    pub disc: DiscriminatingSet,
    pub parts: Vec<Table>,
    pub value_col: Option<usize>,
    /// Stored totals read back as 1..=n.
    pub expand: Option<usize>,
    /// Copies partitioned for entry scans.
    layouts: Vec<(DiscriminatingSet, Vec<Table>)>,
}

/// Layout number of a relation's own partitions.
const OWN_LAYOUT: usize = usize::MAX;

impl FixedRel {
    fn empty(pred: &str, types: Vec<Ty>) -> FixedRel {
        let arity = types.len();
        FixedRel {
            pred: pred.to_string(),
            types,
            disc: DiscriminatingSet::default(),
            parts: vec![Table::set(arity)],
            value_col: None,
            expand: None,
            layouts: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.parts.iter().flat_map(|p| p.rows())
    }

    pub fn decode_row(&self, r: &[u64]) -> Vec<Value> {
        r.iter().zip(&self.types).map(|(&x, &t)| decode(x, t)).collect()
    }

    pub fn to_values(&self) -> BTreeSet<Vec<Value>> {
        self.rows().map(|r| self.decode_row(r)).collect()
    }

    pub fn heap_bytes(&self) -> usize {
        let own: usize = self.parts.iter().map(|p| p.heap_bytes()).sum();
        let copies: usize = self.layouts.iter().flat_map(|(_, ps)| ps.iter()).map(|p| p.heap_bytes()).sum();
        own + copies
    }

    /// Layout for entry scans partitioned on `disc` into `n` parts; builds
    /// one when missing and reports whether it did.
    fn entry_layout(&mut self, disc: &DiscriminatingSet, n: usize, scheme: HashScheme) -> (usize, bool) {
        if n == 1 || disc.is_empty() && self.parts.len() == 1 || (self.disc == *disc && self.parts.len() == n) {
            return (OWN_LAYOUT, false);
        }
        if let Some(i) = self.layouts.iter().position(|(d, _)| d == disc) {
            return (i, false);
        }
        let arity = self.types.len();
        let mut parts: Vec<Table> = (0..n).map(|_| Table::new(arity, KeySpec::None)).collect();
        for p in &self.parts {
            for r in p.rows() {
                parts[scheme.partition(r, disc.cols(), n)].insert_distinct(r);
            }
        }
        self.layouts.push((disc.clone(), parts));
        (self.layouts.len() - 1, true)
    }

    fn layout(&self, i: usize) -> &[Table] {
        if i == OWN_LAYOUT {
            &self.parts
        } else {
            &self.layouts[i].1
        }
    }
}

struct AggLive {
    agg: AggPart,
    changed: Vec<u32>,
    flagged: hashbrown::HashSet<u32>,
    /// Contributions held back until the end of the iteration in strict
    /// rounds: (row, witness, plain tag).
    pending: Vec<(Vec<u64>, Vec<u64>, Option<u64>)>,
}

impl AggLive {
    fn apply(&mut self, row: &[u64], wit: &[u64], tag: Option<u64>) -> Result<(), EvalError> {
        let changed = match tag {
            Some(tag) => self.agg.update_plain(row, tag)?,
            None => self.agg.update(row, wit)?,
        };
        if changed.is_some() {
            let id = self.agg.table().find(row).expect("updated group exists");
            if self.flagged.insert(id) {
                self.changed.push(id);
            }
        }
        Ok(())
    }
}

enum LivePart {
    Set(Table),
    Agg(AggLive),
}

impl LivePart {
    fn table(&self) -> &Table {
        match self {
            LivePart::Set(t) => t,
            LivePart::Agg(a) => a.agg.table(),
        }
    }

    fn table_mut(&mut self) -> &mut Table {
        match self {
            LivePart::Set(t) => t,
            LivePart::Agg(a) => a.agg.table_mut(),
        }
    }
}

/// A relation of the running stratum.
struct LiveRel {
    types: Vec<Ty>,
    disc: DiscriminatingSet,
    lock: LockType,
    nonlocal_writes: bool,
    value_col: Option<usize>,
    expand: Option<usize>,
    wit_tys: Vec<Ty>,
    parts: Vec<RwLock<LivePart>>,
    /// New facts of the last iteration, for lookups and aggregate scans.
    delta: Vec<RwLock<Table>>,
    /// Set relations: the last iteration's facts are rows `lo..hi`.
    lo: Vec<AtomicUsize>,
    hi: Vec<AtomicUsize>,
    delta_table: bool,
    delta_indexes: Vec<Vec<usize>>,
    delta_len: AtomicUsize,
    emitted: AtomicU64,
}

impl LiveRel {
    fn is_agg(&self) -> bool {
        self.value_col.is_some()
    }

    fn heap_bytes(&self) -> usize {
        let a: usize = self.parts.iter().map(|p| p.read().table().heap_bytes()).sum();
        let d: usize = self.delta.iter().map(|t| t.read().heap_bytes()).sum();
        a + d
    }

    fn into_fixed(self, pred: &str) -> FixedRel {
        let parts = self
            .parts
            .into_iter()
            .map(|p| match p.into_inner() {
                LivePart::Set(t) => t,
                LivePart::Agg(mut a) => std::mem::replace(a.agg.table_mut(), Table::set(0)),
            })
            .collect();
        FixedRel {
            pred: pred.to_string(),
            types: self.types,
            disc: self.disc,
            parts,
            value_col: self.value_col,
            expand: self.expand,
            layouts: Vec::new(),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    Exit = 0,
    Recurse = 1,
    Seal = 2,
    Stop = 3,
}

struct StratumRun<'a> {
    fixed: &'a [FixedRel],
    live: &'a [LiveRel],
    n: usize,
    scheme: HashScheme,
    exit: Vec<RawRule>,
    recursive: Vec<(RawRule, usize)>,
    /// Aggregate updates become visible only when the iteration is sealed.
    strict: bool,
    facts: AtomicU64,
    locks: AtomicU64,
    error: Mutex<Option<EvalError>>,
}

impl StratumRun<'_> {
    fn fail(&self, e: EvalError) {
        let mut g = self.error.lock();
        if g.is_none() {
            *g = Some(e);
        }
    }

    fn failed(&self) -> bool {
        self.error.lock().is_some()
    }
}

fn parts_for(disc: &DiscriminatingSet, nparts: usize, cols: &[usize], vals: &[u64], scheme: HashScheme) -> std::ops::Range<usize> {
    if nparts == 1 {
        return 0..1;
    }
    if disc.is_empty() {
        return 0..1;
    }
    if !disc.is_subset_of(cols) {
        return 0..nparts;
    }
    let mut s = 0u64;
    for &d in disc.cols() {
        let at = cols.iter().position(|&c| c == d).unwrap();
        s = s.wrapping_add(scheme.g(vals[at]));
    }
    let p = (s % nparts as u64) as usize;
    p..p + 1
}

struct WorkerView<'a> {
    run: &'a StratumRun<'a>,
    owned: Vec<usize>,
    locks: Cell<u64>,
}

/// Copies rows `from..to` of a locked partition in bounded chunks and feeds
/// them to `f` with the lock released.
fn copy_rows(
    part: &RwLock<LivePart>,
    arity: usize,
    from: usize,
    to: usize,
    f: &mut dyn FnMut(&[u64]) -> Result<bool, EvalError>,
) -> Result<bool, EvalError> {
    let mut buf: Vec<u64> = Vec::new();
    let mut start = from;
    while start < to {
        let end = (start + COPY_ROWS).min(to);
        buf.clear();
        {
            let g = part.read();
            for r in g.table().rows_range(start, end) {
                buf.extend_from_slice(r);
            }
        }
        for i in 0..end - start {
            if !f(&buf[i * arity..(i + 1) * arity])? {
                return Ok(false);
            }
        }
        start = end;
    }
    Ok(true)
}

impl Relations for WorkerView<'_> {
    fn each(
        &self,
        rel: RelRef,
        cols: &[usize],
        vals: &[u64],
        f: &mut dyn FnMut(&[u64]) -> Result<bool, EvalError>,
    ) -> Result<(), EvalError> {
        let run = self.run;
        match rel {
            RelRef::Fixed(i) => {
                let r = &run.fixed[i];
                for p in parts_for(&r.disc, r.parts.len(), cols, vals, run.scheme) {
                    let t = &r.parts[p];
                    for id in t.lookup(cols, vals)? {
                        if !f(t.row(id))? {
                            return Ok(());
                        }
                    }
                }
            }
            RelRef::Delta(i) => {
                let l = &run.live[i];
                for p in parts_for(&l.disc, l.parts.len(), cols, vals, run.scheme) {
                    let t = l.delta[p].read();
                    for id in t.lookup(cols, vals)? {
                        if !f(t.row(id))? {
                            return Ok(());
                        }
                    }
                }
            }
            RelRef::All(i) => {
                let l = &run.live[i];
                let arity = l.types.len();
                let mut buf: Vec<u64> = Vec::new();
                for p in parts_for(&l.disc, l.parts.len(), cols, vals, run.scheme) {
                    buf.clear();
                    let mut count = 0usize;
                    {
                        if l.lock == LockType::RwLock {
                            self.locks.set(self.locks.get() + 1);
                        }
                        let g = l.parts[p].read();
                        let t = g.table();
                        for id in t.lookup(cols, vals)? {
                            buf.extend_from_slice(t.row(id));
                            count += 1;
                        }
                    }
                    for k in 0..count {
                        if !f(&buf[k * arity..(k + 1) * arity])? {
                            return Ok(());
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn each_owned(&self, scan: &RScan, f: &mut dyn FnMut(&[u64]) -> Result<bool, EvalError>) -> Result<(), EvalError> {
        let run = self.run;
        match scan.rel {
            RelRef::Fixed(i) => {
                let parts = run.fixed[i].layout(scan.layout);
                for &p in &self.owned {
                    if let Some(t) = parts.get(p) {
                        for r in t.rows() {
                            if !f(r)? {
                                return Ok(());
                            }
                        }
                    }
                }
            }
            RelRef::Delta(i) => {
                let l = &run.live[i];
                for &p in &self.owned {
                    if l.is_agg() {
                        let t = l.delta[p].read();
                        for r in t.rows() {
                            if !f(r)? {
                                return Ok(());
                            }
                        }
                    } else {
                        let lo = l.lo[p].load(Ordering::Acquire);
                        let hi = l.hi[p].load(Ordering::Acquire);
                        if !copy_rows(&l.parts[p], l.types.len(), lo, hi, f)? {
                            return Ok(());
                        }
                    }
                }
            }
            RelRef::All(i) => {
                let l = &run.live[i];
                for &p in &self.owned {
                    let hi = l.hi[p].load(Ordering::Acquire);
                    if !copy_rows(&l.parts[p], l.types.len(), 0, hi, f)? {
                        return Ok(());
                    }
                }
            }
        }
        Ok(())
    }
}

struct WorkerSink<'a> {
    run: &'a StratumRun<'a>,
    row: Vec<u64>,
    wit: Vec<u64>,
    facts: u64,
    locks: u64,
    emitted: Vec<u64>,
}

impl<'a> WorkerSink<'a> {
    fn new(run: &'a StratumRun<'a>) -> Self {
        WorkerSink {
            run,
            row: Vec::new(),
            wit: Vec::new(),
            facts: 0,
            locks: 0,
            emitted: vec![0; run.live.len()],
        }
    }

    fn finish(self) {
        self.run.facts.fetch_add(self.facts, Ordering::Relaxed);
        self.run.locks.fetch_add(self.locks, Ordering::Relaxed);
        for (l, &e) in self.run.live.iter().zip(&self.emitted) {
            l.emitted.fetch_add(e, Ordering::Relaxed);
        }
    }
}

impl Sink for WorkerSink<'_> {
    fn emit(&mut self, rule: &RawRule, slots: &[u64]) -> Result<(), EvalError> {
        head_row(rule, slots, &mut self.row)?;
        self.facts += 1;
        self.emitted[rule.target] += 1;
        let l = &self.run.live[rule.target];
        if l.lock != LockType::None {
            self.locks += 1;
        }
        let p = self.run.scheme.partition(&self.row, l.disc.cols(), self.run.n);
        if let HeadMode::Agg { witness } = &rule.mode {
            self.wit.clear();
            for (&s, &t) in witness.iter().zip(&l.wit_tys) {
                let st = rule.slot_tys[s];
                self.wit.push(if st == t { slots[s] } else { store(Rv::of(slots[s], st), t)? });
            }
        }
        let mut g = l.parts[p].write();
        match (&mut *g, &rule.mode) {
            (LivePart::Set(t), _) => {
                t.insert_distinct(&self.row);
            }
            (LivePart::Agg(a), mode) => {
                let tag = match mode {
                    HeadMode::Plain { tag } => Some(*tag),
                    _ => None,
                };
                if self.run.strict {
                    a.pending.push((self.row.clone(), self.wit.clone(), tag));
                } else {
                    a.apply(&self.row, &self.wit, tag)?;
                }
            }
        }
        Ok(())
    }
}

/// Collects complete bindings.
struct Collect(Vec<Vec<u64>>);

impl Sink for Collect {
    fn emit(&mut self, _: &RawRule, slots: &[u64]) -> Result<(), EvalError> {
        self.0.push(slots.to_vec());
        Ok(())
    }
}

fn seal_part(l: &LiveRel, p: usize) -> Result<usize, EvalError> {
    let mut g = l.parts[p].write();
    let arity = l.types.len();
    match &mut *g {
        LivePart::Set(t) => {
            let lo = l.hi[p].load(Ordering::Acquire);
            let hi = t.len();
            l.lo[p].store(lo, Ordering::Release);
            l.hi[p].store(hi, Ordering::Release);
            if l.delta_table {
                let mut d = Table::new(arity, KeySpec::None);
                for r in t.rows_range(lo, hi) {
                    d.insert_distinct(r);
                }
                for ix in &l.delta_indexes {
                    d.ensure_index(ix);
                }
                *l.delta[p].write() = d;
            }
            Ok(hi - lo)
        }
        LivePart::Agg(a) => {
            for (row, wit, tag) in std::mem::take(&mut a.pending) {
                a.apply(&row, &wit, tag)?;
            }
            let mut d = Table::new(arity, KeySpec::None);
            for &id in &a.changed {
                d.insert_distinct(a.agg.table().row(id));
            }
            for ix in &l.delta_indexes {
                d.ensure_index(ix);
            }
            let n = a.changed.len();
            a.changed.clear();
            a.flagged.clear();
            l.hi[p].store(a.agg.len(), Ordering::Release);
            *l.delta[p].write() = d;
            Ok(n)
        }
    }
}

fn work(run: &StratumRun, phase: Phase, owned: Vec<usize>) -> Result<(), EvalError> {
    if phase == Phase::Seal {
        for l in run.live {
            let mut total = 0;
            for &p in &owned {
                total += seal_part(l, p)?;
            }
            l.delta_len.fetch_add(total, Ordering::AcqRel);
        }
        return Ok(());
    }
    let first = owned.contains(&0);
    let view = WorkerView {
        run,
        owned,
        locks: Cell::new(0),
    };
    let mut sink = WorkerSink::new(run);
    let mut result = Ok(());
    if phase == Phase::Exit {
        for r in &run.exit {
            if r.entry.is_none() && !first {
                continue;
            }
            let mut slots = vec![0u64; r.slot_tys.len()];
            if let Err(e) = run_from(r, 0, &mut slots, &view, &mut sink) {
                result = Err(e);
                break;
            }
        }
    } else {
        for (r, d) in &run.recursive {
            if run.live[*d].delta_len.load(Ordering::Acquire) == 0 {
                continue;
            }
            let mut slots = vec![0u64; r.slot_tys.len()];
            if let Err(e) = run_from(r, 0, &mut slots, &view, &mut sink) {
                result = Err(e);
                break;
            }
        }
    }
    sink.locks += view.locks.get();
    sink.finish();
    result
}

/// Runs phases on `n` long-lived workers, or inline when `n` is 1.
struct Crew<'a> {
    run: &'a StratumRun<'a>,
    barrier: Option<&'a Barrier>,
    cmd: &'a AtomicU8,
}

impl Crew<'_> {
    fn phase(&self, phase: Phase) -> Result<(), EvalError> {
        match self.barrier {
            None => {
                if let Err(e) = work(self.run, phase, (0..self.run.n).collect()) {
                    self.run.fail(e);
                }
            }
            Some(b) => {
                self.cmd.store(phase as u8, Ordering::Release);
                b.wait();
                b.wait();
            }
        }
        match self.run.error.lock().take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

fn worker_loop(run: &StratumRun, w: usize, threads: usize, barrier: &Barrier, cmd: &AtomicU8) {
    loop {
        barrier.wait();
        let phase = match cmd.load(Ordering::Acquire) {
            0 => Phase::Exit,
            1 => Phase::Recurse,
            2 => Phase::Seal,
            _ => return,
        };
        if !run.failed() {
            if let Err(e) = work(run, phase, (w..run.n).step_by(threads).collect()) {
                run.fail(e);
            }
        }
        barrier.wait();
    }
}

fn agg_kind(k: PredKind) -> Option<AggKind> {
    match k {
        PredKind::Extremum { kind: ExtremaKind::Min, .. } => Some(AggKind::Min),
        PredKind::Extremum { kind: ExtremaKind::Max, .. } => Some(AggKind::Max),
        PredKind::Accum { func, .. } if func.is_count() => Some(AggKind::Count),
        PredKind::Accum { .. } => Some(AggKind::Sum),
        _ => None,
    }
}

fn pred_types(c: &Compiled, pred: &str, arity: usize) -> Vec<Ty> {
    c.types_of(pred).map(|t| t.to_vec()).unwrap_or_else(|| vec![Ty::Int; arity])
}

fn expand_col(k: PredKind) -> Option<usize> {
    match k {
        PredKind::Accum { func, col, .. } if func.is_monotonic_expansion() => Some(col),
        _ => None,
    }
}

/// Result of a run: every relation, loaded or derived, and counters.
pub struct Evaluation {
    pub rels: BTreeMap<String, FixedRel>,
    pub stats: Stats,
    pub strata: Vec<Stats>,
}

impl Evaluation {
    pub fn len(&self, pred: &str) -> usize {
        self.rels.get(pred).map_or(0, |r| r.len())
    }

    pub fn values(&self, pred: &str) -> BTreeSet<Vec<Value>> {
        self.rels.get(pred).map(|r| r.to_values()).unwrap_or_default()
    }

    /// Decoded relations of the given predicates.
    pub fn db(&self, preds: impl IntoIterator<Item = String>) -> Db {
        preds.into_iter().map(|p| (p.clone(), self.values(&p))).collect()
    }

    /// Rows of the query predicate matching its constants, decoding only
    /// those.
    pub fn answer(&self, q: &Query) -> BTreeSet<Vec<Value>> {
        let Some(r) = self.rels.get(&q.goal.pred) else {
            return BTreeSet::new();
        };
        // None: free; Some(None): a constant no row can hold.
        let want: Vec<Option<Option<u64>>> = q
            .goal
            .args
            .iter()
            .zip(&r.types)
            .map(|(t, &ty)| {
                t.is_ground().then(|| {
                    super::builtins::eval_expr(&super::ground_expr(t), &[])
                        .ok()
                        .and_then(|v| super::raw::probe(Rv::from_value(&v), ty))
                })
            })
            .collect();
        let narrowed: BTreeSet<Vec<Value>> = r
            .rows()
            .filter(|row| want.iter().zip(row.iter()).all(|(w, &x)| w.is_none_or(|w| w == Some(x))))
            .map(|row| r.decode_row(row))
            .collect();
        super::answer(&narrowed, q)
    }
}

/// Lowers a delta rule with its delta atom scanned first, so each
/// iteration starts from the new facts. Returns the original body position
/// of every literal of the reordered rule.
fn delta_first(c: &Compiled, dr: &DeltaRule, ir: &RuleIr) -> Result<(RuleIr, Vec<usize>), EvalError> {
    let body = &dr.rule.body;
    let d = dr.delta_lit;
    let plain = body[d]
        .positive_atom()
        .is_some_and(|a| a.args.iter().all(|t| matches!(t, Term::Var(_) | Term::Anon | Term::Const(_))));
    let identity: Vec<usize> = (0..body.len()).collect();
    if !plain || d == 0 {
        return Ok((ir.clone(), identity));
    }
    let mut order = vec![d];
    order.extend((0..body.len()).filter(|&i| i != d));
    let mut rule = dr.rule.clone();
    rule.body = order.iter().map(|&i| body[i].clone()).collect();
    let ri = dr.source_rule;
    let reordered = lower_rule(ri, &rule, &c.types.rule_vars[ri], &ir.head_tys)?;
    Ok((reordered, order))
}

/// Maps scan positions of a reordered rule back to the original body.
fn relabel(steps: &mut [RStep], order: &[usize]) {
    for s in steps {
        match s {
            RStep::Scan(sc) | RStep::Absent(sc) => sc.lit = order[sc.lit],
            RStep::Branch { then, otherwise, .. } => {
                relabel(std::slice::from_mut(then), order);
                relabel(std::slice::from_mut(otherwise), order);
            }
            _ => {}
        }
    }
}

/// Builds the relation store for the loaded facts.
fn load_fixed(c: &Compiled, edb: &Db) -> Result<(Vec<FixedRel>, HashMap<String, usize>), EvalError> {
    let base = base_db(c, edb)?;
    let mut fixed = Vec::new();
    let mut index = HashMap::new();
    for (p, rows) in base {
        let arity = rows.iter().next().map_or(0, |r| r.len());
        let types = c
            .types_of(&p)
            .map(|t| t.to_vec())
            .unwrap_or_else(|| rows.iter().next().map(|r| r.iter().map(|v| v.ty()).collect()).unwrap_or(vec![Ty::Int; arity]));
        let mut rel = FixedRel::empty(&p, types.clone());
        let mut buf = Vec::with_capacity(arity);
        for r in &rows {
            buf.clear();
            for (v, &t) in r.iter().zip(&types) {
                buf.push(encode(&coerce(v.clone(), t)?, t).map_err(|e| EvalError::Type(e.to_string()))?);
            }
            rel.parts[0].insert_distinct(&buf);
        }
        index.insert(p, fixed.len());
        fixed.push(rel);
    }
    Ok((fixed, index))
}

fn fixed_index(c: &Compiled, fixed: &mut Vec<FixedRel>, index: &mut HashMap<String, usize>, pred: &str, arity: usize) -> usize {
    if let Some(&i) = index.get(pred) {
        return i;
    }
    fixed.push(FixedRel::empty(pred, pred_types(c, pred, arity)));
    index.insert(pred.to_string(), fixed.len() - 1);
    fixed.len() - 1
}

fn shape_of_fixed(r: &FixedRel, i: usize) -> RelShape {
    RelShape {
        rel: RelRef::Fixed(i),
        types: r.types.clone(),
        value_col: r.value_col,
        expand: r.expand,
    }
}

/// Evaluates every stratum with partitioned semi-naive iteration.
pub fn psn_eval(c: &Compiled, edb: &Db, plan: &PlanAssignment, cfg: &EngineConfig) -> Result<Evaluation, EvalError> {
    psn_eval_gated(c, edb, plan, cfg, &mut |_, _| Ok(Admission::Verified))
}

/// How a stratum with aggregates inside its recursion may run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    /// Its aggregates may be applied eagerly.
    Verified,
    /// Run in strict rounds: aggregate updates stay hidden until the
    /// iteration ends, so each group is read at its value from the last one.
    Unverified,
}

/// Like [`psn_eval`], calling `gate` before each stratum whose aggregates
/// sit inside its recursion, with the relations that stratum reads.
pub fn psn_eval_gated(
    c: &Compiled,
    edb: &Db,
    plan: &PlanAssignment,
    cfg: &EngineConfig,
    gate: &mut dyn FnMut(usize, &Db) -> Result<Admission, EvalError>,
) -> Result<Evaluation, EvalError> {
    let t0 = Instant::now();
    let n = cfg.partitions.unwrap_or(cfg.workers).max(1);
    let irs = lower_all(c)?;
    let (mut fixed, mut index) = load_fixed(c, edb)?;
    let setup = t0.elapsed().as_secs_f64() * 1e3;
    let mut strata = Vec::new();
    let mut total = Stats::default();
    for si in 0..c.strata.len() {
        let admission = if c.strata[si].needs_prem {
            let reads: Db = c.strata[si]
                .rules
                .iter()
                .flat_map(|&ri| c.program.rules[ri].body_atoms())
                .filter(|(a, _)| !c.strata[si].contains(&a.pred))
                .filter_map(|(a, _)| index.get(&a.pred).map(|&i| (a.pred.clone(), fixed[i].to_values())))
                .collect();
            gate(si, &reads)?
        } else {
            Admission::Verified
        };
        let strict = admission == Admission::Unverified;
        let st = run_stratum(c, si, &irs, &mut fixed, &mut index, plan, cfg, n, strict)?;
        total.add(&st);
        strata.push(st);
    }
    total.wall_time_ms.setup += setup;
    total.wall_time_ms.total = t0.elapsed().as_secs_f64() * 1e3;
    let rels: BTreeMap<String, FixedRel> = fixed.into_iter().map(|r| (r.pred.clone(), r)).collect();
    total.result_size = c
        .strata
        .iter()
        .flat_map(|s| s.preds.iter())
        .map(|p| rels.get(p).map_or(0, |r| r.len() as u64))
        .sum();
    Ok(Evaluation {
        rels,
        stats: total,
        strata,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_stratum(
    c: &Compiled,
    si: usize,
    irs: &[RuleIr],
    fixed: &mut Vec<FixedRel>,
    index: &mut HashMap<String, usize>,
    plan: &PlanAssignment,
    cfg: &EngineConfig,
    n: usize,
    strict: bool,
) -> Result<Stats, EvalError> {
    let t0 = Instant::now();
    let s = &c.strata[si];
    let sp = plan.strata.get(si);
    let split = split_exit_recursive(s, &c.program, None);
    let mut stats = Stats::default();

    // Relations of this stratum.
    let live_index: HashMap<&str, usize> = s.preds.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();
    let mut live: Vec<LiveRel> = Vec::new();
    for p in &s.preds {
        let arity = c.program.rules.iter().find(|r| &r.head.pred == p).map_or(0, |r| r.head.arity());
        let types = pred_types(c, p, arity);
        let kind = c.kind(p);
        let disc = sp
            .and_then(|a| a.derived.get(p))
            .cloned()
            .unwrap_or_else(|| crate::planner::candidate_discs(c, p, arity).remove(0));
        let value_col = kind.value_col();
        let wit_tys: Vec<Ty> = s
            .rules
            .iter()
            .filter(|&&ri| irs[ri].head_pred == *p)
            .find_map(|&ri| irs[ri].agg.as_ref().map(|a| a.witness.iter().map(|&w| irs[ri].slot_tys[w]).collect()))
            .unwrap_or_default();
        let parts = (0..n)
            .map(|_| {
                Ok(RwLock::new(match agg_kind(kind) {
                    None => LivePart::Set(Table::set(arity)),
                    Some(k) => {
                        if let PredKind::Accum { func, col, .. } = kind {
                            if func == crate::frontend::AggFunc::MSum && types[col] == Ty::Float {
                                return Err(EvalError::Unsupported("msum over Float values".into()));
                            }
                        }
                        LivePart::Agg(AggLive {
                            agg: AggPart::new(AggLayout {
                                kind: k,
                                types: types.clone(),
                                value_col: value_col.unwrap(),
                                witness_types: wit_tys.clone(),
                            }),
                            changed: Vec::new(),
                            flagged: hashbrown::HashSet::new(),
                            pending: Vec::new(),
                        })
                    }
                }))
            })
            .collect::<Result<Vec<_>, _>>()?;
        live.push(LiveRel {
            disc,
            lock: sp.map_or(LockType::None, |a| a.lock(p)),
            nonlocal_writes: sp.is_some_and(|a| a.nonlocal_writes.contains(p)),
            value_col,
            expand: expand_col(kind),
            wit_tys,
            parts,
            delta: (0..n).map(|_| RwLock::new(Table::new(arity, KeySpec::None))).collect(),
            lo: (0..n).map(|_| AtomicUsize::new(0)).collect(),
            hi: (0..n).map(|_| AtomicUsize::new(0)).collect(),
            delta_table: false,
            delta_indexes: Vec::new(),
            delta_len: AtomicUsize::new(0),
            emitted: AtomicU64::new(0),
            types,
        });
    }

    // Relations read from earlier strata or loaded facts.
    for &ri in &s.rules {
        for l in &c.program.rules[ri].body {
            if let Literal::Atom { atom, .. } = l {
                if !live_index.contains_key(atom.pred.as_str()) && atom.pred != crate::frontend::POSINT {
                    fixed_index(c, fixed, index, &atom.pred, atom.args.len());
                }
            }
        }
    }

    let live_shape = |i: usize, rel: RelRef| RelShape {
        rel,
        types: live[i].types.clone(),
        value_col: live[i].value_col,
        expand: live[i].expand,
    };
    let mode_of = |ri: usize| {
        let agg = match c.kind(&irs[ri].head_pred) {
            PredKind::Accum { func, .. } => Some(func),
            PredKind::Extremum { kind: ExtremaKind::Min, .. } => Some(crate::frontend::AggFunc::Min),
            PredKind::Extremum { kind: ExtremaKind::Max, .. } => Some(crate::frontend::AggFunc::Max),
            _ => None,
        };
        super::raw::head_mode(&irs[ri], agg)
    };

    let mut exit = Vec::new();
    let mut filtered = Vec::new();
    for &ri in &split.exit_rules {
        let fx: &Vec<FixedRel> = fixed;
        let mut r = lower_raw(&irs[ri], mode_of(ri), &|_, pred| {
            let i = index[pred];
            Ok(shape_of_fixed(&fx[i], i))
        })?;
        r.target = live_index[r.head_pred.as_str()];
        if c.filters_per_rule(ri) {
            filtered.push(r);
        } else {
            exit.push(r);
        }
    }
    let mut recursive = Vec::new();
    for dr in &split.recursive_rules {
        let ri = dr.source_rule;
        if c.filters_per_rule(ri) {
            return Err(EvalError::Unsupported(format!(
                "rule {} filters its own extrema inside a recursion",
                ri + 1
            )));
        }
        let fx: &Vec<FixedRel> = fixed;
        let (ir, order) = delta_first(c, dr, &irs[ri])?;
        let mut r = lower_raw(&ir, mode_of(ri), &|lit, pred| match live_index.get(pred) {
            Some(&i) => Ok(live_shape(
                i,
                match dr.version(order[lit]) {
                    Some(Version::Delta) => RelRef::Delta(i),
                    _ => RelRef::All(i),
                },
            )),
            None => {
                let i = index[pred];
                Ok(shape_of_fixed(&fx[i], i))
            }
        })?;
        relabel(&mut r.steps, &order);
        r.target = live_index[r.head_pred.as_str()];
        let d = live_index[dr.rule.body[dr.delta_lit].positive_atom().unwrap().pred.as_str()];
        recursive.push((r, d));
    }

    // Indexes for lookups and layouts for entry scans.
    let mut all_rules: Vec<&mut RawRule> = exit.iter_mut().chain(filtered.iter_mut()).collect();
    all_rules.extend(recursive.iter_mut().map(|(r, _)| r));
    for r in all_rules {
        let entry = r.entry;
        let index_ri = r.index;
        for (k, step) in r.steps.iter_mut().enumerate() {
            let (scan, is_entry) = match step {
                RStep::Scan(sc) => (sc, entry == Some(k)),
                RStep::Absent(sc) => (sc, false),
                _ => continue,
            };
            match scan.rel {
                RelRef::Fixed(i) if is_entry => {
                    let arity = fixed[i].types.len();
                    let disc = sp
                        .and_then(|a| a.base.get(&(index_ri, scan.lit)))
                        .cloned()
                        .unwrap_or_else(|| crate::planner::occurrence_disc(&BTreeSet::new(), arity));
                    let disc = if fixed[i].value_col.is_some_and(|v| disc.cols().contains(&v)) {
                        DiscriminatingSet::default()
                    } else {
                        disc
                    };
                    let (layout, built) = fixed[i].entry_layout(&disc, n, cfg.hash);
                    scan.layout = layout;
                    if built {
                        stats.repartitions += 1;
                    }
                }
                RelRef::Fixed(i) => {
                    for p in &mut fixed[i].parts {
                        p.ensure_index(&scan.key_cols);
                    }
                }
                RelRef::Delta(i) if !is_entry => {
                    live[i].delta_table = true;
                    if !live[i].delta_indexes.contains(&scan.key_cols) {
                        live[i].delta_indexes.push(scan.key_cols.clone());
                    }
                }
                RelRef::All(i) if !is_entry => {
                    for p in &live[i].parts {
                        p.write().table_mut().ensure_index(&scan.key_cols);
                    }
                }
                _ => {}
            }
        }
    }
    for l in &mut live {
        if l.is_agg() {
            l.delta_indexes.retain(|c| !c.is_empty());
        }
        l.delta_indexes.retain(|c| !c.is_empty());
    }

    let fixed_bytes: usize = fixed.iter().map(|r| r.heap_bytes()).sum();
    let run = StratumRun {
        fixed,
        live: &live,
        n,
        scheme: cfg.hash,
        exit,
        recursive,
        strict,
        facts: AtomicU64::new(0),
        locks: AtomicU64::new(0),
        error: Mutex::new(None),
    };
    stats.wall_time_ms.setup = t0.elapsed().as_secs_f64() * 1e3;

    let threads = cfg.workers.clamp(1, n);
    let barrier = Barrier::new(threads + 1);
    let cmd = AtomicU8::new(Phase::Stop as u8);
    let outcome = std::thread::scope(|scope| {
        if threads > 1 {
            for w in 0..threads {
                let (run, barrier, cmd) = (&run, &barrier, &cmd);
                scope.spawn(move || worker_loop(run, w, threads, barrier, cmd));
            }
        }
        let crew = Crew {
            run: &run,
            barrier: (threads > 1).then_some(&barrier),
            cmd: &cmd,
        };
        let r = drive(&crew, &run, &filtered, s.class.is_recursive(), cfg, fixed_bytes, &mut stats);
        if threads > 1 {
            cmd.store(Phase::Stop as u8, Ordering::Release);
            barrier.wait();
        }
        r
    });
    outcome?;
    stats.facts_generated = run.facts.load(Ordering::Relaxed);
    stats.lock_acquisitions = run.locks.load(Ordering::Relaxed);
    drop(run);
    for (p, l) in s.preds.iter().zip(live) {
        stats.result_size += l.parts.iter().map(|x| x.read().table().len() as u64).sum::<u64>();
        let i = fixed_index(c, fixed, index, p, 0);
        fixed[i] = l.into_fixed(p);
    }
    stats.wall_time_ms.total = t0.elapsed().as_secs_f64() * 1e3;
    Ok(stats)
}

/// Coordinator side of one stratum.
fn drive(
    crew: &Crew,
    run: &StratumRun,
    filtered: &[RawRule],
    recursive: bool,
    cfg: &EngineConfig,
    fixed_bytes: usize,
    stats: &mut Stats,
) -> Result<(), EvalError> {
    let count_shuffles = |stats: &mut Stats| {
        for l in run.live {
            if l.emitted.swap(0, Ordering::Relaxed) > 0 && l.nonlocal_writes {
                stats.repartitions += 1;
            }
        }
    };
    let t = Instant::now();
    crew.phase(Phase::Exit)?;
    run_filtered(run, filtered)?;
    count_shuffles(stats);
    seal(crew, run)?;
    stats.wall_time_ms.exit = t.elapsed().as_secs_f64() * 1e3;
    if !recursive {
        return Ok(());
    }
    let t = Instant::now();
    loop {
        let pending: usize = run.live.iter().map(|l| l.delta_len.load(Ordering::Acquire)).sum();
        if pending == 0 {
            break;
        }
        if stats.iterations as usize >= cfg.max_iterations {
            return Err(EvalError::NonTermination {
                preds: Vec::new(),
                iterations: stats.iterations as usize,
            });
        }
        stats.iterations += 1;
        crew.phase(Phase::Recurse)?;
        count_shuffles(stats);
        seal(crew, run)?;
        if let Some(cap) = cfg.memory_cap_bytes {
            let used = fixed_bytes + run.live.iter().map(|l| l.heap_bytes()).sum::<usize>();
            if used > cap {
                return Err(EvalError::MemoryCap {
                    cap_bytes: cap,
                    used_bytes: used,
                });
            }
        }
    }
    stats.wall_time_ms.recursive = t.elapsed().as_secs_f64() * 1e3;
    Ok(())
}

fn seal(crew: &Crew, run: &StratumRun) -> Result<(), EvalError> {
    for l in run.live {
        l.delta_len.store(0, Ordering::Release);
    }
    crew.phase(Phase::Seal)
}

/// Rules that keep only their own least or greatest bindings per group run
/// on the coordinator over every partition.
fn run_filtered(run: &StratumRun, rules: &[RawRule]) -> Result<(), EvalError> {
    if rules.is_empty() {
        return Ok(());
    }
    let view = WorkerView {
        run,
        owned: (0..run.n).collect(),
        locks: Cell::new(0),
    };
    let mut sink = WorkerSink::new(run);
    for r in rules {
        let mut bs = Collect(Vec::new());
        let mut slots = vec![0u64; r.slot_tys.len()];
        run_from(r, 0, &mut slots, &view, &mut bs)?;
        let (kind, group, cost) = r.extrema.clone().expect("filtered rule has an extrema goal");
        let cty = r.slot_tys[cost];
        let mut best: HashMap<Vec<u64>, Rv> = HashMap::new();
        for b in &bs.0 {
            let g: Vec<u64> = group.iter().map(|&s| b[s]).collect();
            let v = Rv::of(b[cost], cty);
            let e = best.entry(g).or_insert(v);
            let o = compare(v, *e).unwrap_or(std::cmp::Ordering::Equal);
            if (kind == ExtremaKind::Min && o.is_lt()) || (kind == ExtremaKind::Max && o.is_gt()) {
                *e = v;
            }
        }
        for b in &bs.0 {
            let g: Vec<u64> = group.iter().map(|&s| b[s]).collect();
            if compare(Rv::of(b[cost], cty), best[&g]) == Some(std::cmp::Ordering::Equal) {
                sink.emit(r, b)?;
            }
        }
    }
    sink.locks += view.locks.get();
    sink.finish();
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::evaluator::naive_eval;
    use crate::frontend::{parse_program, parse_query};
    use crate::planner::select_plan;
    use proptest::prelude::*;

    fn ints(rows: &[&[i64]]) -> BTreeSet<Vec<Value>> {
        rows.iter().map(|r| r.iter().map(|&x| Value::Int(x)).collect()).collect()
    }

    fn setup(src: &str, edb: &[(&str, BTreeSet<Vec<Value>>)]) -> (Compiled, Db) {
        let p = parse_program(src).unwrap();
        let db: Db = edb.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        let tys = db
            .iter()
            .filter_map(|(k, v)| v.iter().next().map(|r| (k.clone(), r.iter().map(|x| x.ty()).collect())))
            .collect();
        (compile(&p, &tys).unwrap(), db)
    }

    fn psn(c: &Compiled, db: &Db, n: usize) -> Evaluation {
        let cfg = EngineConfig {
            workers: n,
            ..EngineConfig::default()
        };
        psn_eval(c, db, &select_plan(c, n), &cfg).unwrap()
    }

    /// Every derived relation agrees with the naive evaluator at each worker
    /// count.
    fn agrees(src: &str, edb: &[(&str, BTreeSet<Vec<Value>>)]) {
        let (c, db) = setup(src, edb);
        let want = naive_eval(&c, &db, 10_000).unwrap().db;
        for n in [1, 2, 3, 4, 8] {
            let got = psn(&c, &db, n);
            for p in c.program.derived_preds() {
                assert_eq!(got.values(&p), want.get(&p).cloned().unwrap_or_default(), "{p} with {n} workers\n{src}");
            }
        }
        let cfg = EngineConfig {
            workers: 2,
            partitions: Some(5),
            ..EngineConfig::default()
        };
        let got = psn_eval(&c, &db, &select_plan(&c, 5), &cfg).unwrap();
        for p in c.program.derived_preds() {
            assert_eq!(got.values(&p), want.get(&p).cloned().unwrap_or_default(), "{p} on 5 partitions\n{src}");
        }
    }

    const TC: &str = "tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).";

    fn chain(k: i64) -> BTreeSet<Vec<Value>> {
        (1..k).map(|i| vec![Value::Int(i), Value::Int(i + 1)]).collect()
    }

    #[test]
    fn chain_closure_size_and_rounds() {
        let (c, db) = setup(TC, &[("arc", chain(10))]);
        for n in [1, 4] {
            let e = psn(&c, &db, n);
            assert_eq!(e.len("tc"), 45);
            assert_eq!(e.stats.iterations, 9);
            assert_eq!(e.stats.result_size, 45);
        }
    }

    #[test]
    fn decomposable_closure_needs_no_locks() {
        let (c, db) = setup(TC, &[("arc", chain(30))]);
        let e = psn(&c, &db, 4);
        assert_eq!(e.stats.lock_acquisitions, 0);
        assert_eq!(e.stats.repartitions, 1);
    }

    #[test]
    fn second_column_partitioning_locks_writes() {
        let (c, db) = setup(TC, &[("arc", chain(10))]);
        let forced = BTreeMap::from([("tc".to_string(), DiscriminatingSet::from_positions(&[2]))]);
        let plan = crate::planner::plan_with(&c, 4, &forced);
        let cfg = EngineConfig {
            workers: 4,
            ..EngineConfig::default()
        };
        let e = psn_eval(&c, &db, &plan, &cfg).unwrap();
        assert_eq!(e.len("tc"), 45);
        assert!(e.stats.lock_acquisitions >= e.stats.facts_generated);
        assert!(e.stats.repartitions > 1);
    }

    #[test]
    fn query_answer_filters_constants() {
        let (c, db) = setup(TC, &[("arc", chain(5))]);
        let e = psn(&c, &db, 2);
        assert_eq!(e.answer(&parse_query("tc(1, Y).").unwrap()).len(), 4);
        assert_eq!(e.answer(&parse_query("tc(1.0, Y).").unwrap()).len(), 4);
        assert_eq!(e.answer(&parse_query("tc(X, X).").unwrap()).len(), 0);
    }

    #[test]
    fn empty_input() {
        agrees(TC, &[("arc", BTreeSet::new())]);
    }

    #[test]
    fn diamond_counts() {
        let arc = ints(&[&[1, 2], &[1, 3], &[2, 4], &[3, 4]]);
        let (c, db) = setup("cpath(X,Z,count<Y>) <- arc(X,Y), arc(Y,Z).", &[("arc", arc.clone())]);
        assert_eq!(psn(&c, &db, 2).values("cpath"), ints(&[&[1, 4, 2]]));
        agrees(
            "cpath(X,Z,count<Y>) <- arc(X,Y), arc(Y,Z).\n\
             npaths(X,Y,1) <- arc(X,Y).\n\
             npaths(X,Z,sum<C,Y>) <- npaths(X,Y,C), arc(Y,Z).",
            &[("arc", arc)],
        );
    }

    #[test]
    fn shortest_paths() {
        let s = |a: &str, b: &str, d: i64| vec![Value::str(a), Value::str(b), Value::Int(d)];
        let darc: BTreeSet<_> = [s("a", "b", 1), s("b", "c", 2), s("a", "c", 5), s("c", "a", 1), s("c", "d", 1)]
            .into_iter()
            .collect();
        agrees(
            "dpath(X,Z,min<D>) <- darc(X,Z,D).\n\
             dpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.",
            &[("darc", darc.clone())],
        );
        agrees(
            "dpath(X,Z,max<D>) <- darc(X,Z,D), X != Z.\n\
             lp(X,Z,D) <- dpath(X,Z,D), D < 100.\n\
             longest(X,max<D>) <- lp(X,_,D).",
            &[("darc", darc)],
        );
    }

    #[test]
    fn party_attendance() {
        agrees(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).",
            &[
                ("organizer", ints(&[&[1], &[2], &[3]])),
                ("friend", ints(&[&[9, 1], &[9, 2], &[9, 3], &[8, 9], &[8, 1], &[8, 2], &[7, 8], &[7, 1]])),
            ],
        );
    }

    #[test]
    fn same_generation_and_nonlinear() {
        let tree = ints(&[&[1, 2], &[1, 3], &[2, 4], &[2, 5], &[3, 6], &[3, 7], &[6, 8]]);
        agrees(
            "sg(X,Y) <- arc(P,X), arc(P,Y), X != Y.\n\
             sg(X,Y) <- arc(A,X), sg(A,B), arc(B,Y).",
            &[("arc", tree.clone())],
        );
        agrees("p(X,Y) <- arc(X,Y). p(X,Z) <- p(X,Y), p(Y,Z).", &[("arc", tree)]);
    }

    #[test]
    fn negation_posint_and_per_rule_extrema() {
        agrees(
            "p(X) <- q(X), ~r(X).\n\
             best(min<V>) <- q(V).\n\
             lo(V) <- q(V), is_min((), (V)).\n\
             n(K) <- q(X), posint(X, K).\n\
             s(Y) <- q(X), Y = X * 2.5.",
            &[("q", ints(&[&[3], &[1], &[2]])), ("r", ints(&[&[1]]))],
        );
    }

    #[test]
    fn mutual_recursion() {
        agrees(
            "even(0).\n\
             even(Y) <- odd(X), Y = X + 1, Y < 20.\n\
             odd(Y) <- even(X), Y = X + 1, Y < 20.",
            &[],
        );
    }

    #[test]
    fn divergence_is_reported() {
        let (c, db) = setup("n(0). n(Y) <- n(X), Y = X + 1.", &[]);
        let cfg = EngineConfig {
            workers: 2,
            max_iterations: 40,
            ..EngineConfig::default()
        };
        let r = psn_eval(&c, &db, &select_plan(&c, 2), &cfg);
        assert!(matches!(r, Err(EvalError::NonTermination { iterations: 40, .. })));
    }

    #[test]
    fn memory_cap_is_enforced() {
        let (c, db) = setup(TC, &[("arc", chain(200))]);
        let cfg = EngineConfig {
            workers: 2,
            memory_cap_bytes: Some(64 * 1024),
            ..EngineConfig::default()
        };
        let r = psn_eval(&c, &db, &select_plan(&c, 2), &cfg);
        assert!(matches!(r, Err(EvalError::MemoryCap { .. })));
    }

    #[test]
    fn stats_serialize() {
        let (c, db) = setup(TC, &[("arc", chain(4))]);
        let j: serde_json::Value = serde_json::from_str(&psn(&c, &db, 1).stats.to_json()).unwrap();
        assert_eq!(j["result_size"], 6);
        assert!(j["wall_time_ms"]["total"].is_number());
    }

    fn graph() -> impl Strategy<Value = BTreeSet<Vec<Value>>> {
        proptest::collection::btree_set((0i64..12, 0i64..12), 0..30)
            .prop_map(|s| s.into_iter().map(|(a, b)| vec![Value::Int(a), Value::Int(b)]).collect())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matches_naive_on_random_graphs(arc in graph()) {
            agrees(TC, &[("arc", arc.clone())]);
            agrees("sg(X,Y) <- arc(P,X), arc(P,Y), X != Y.\nsg(X,Y) <- arc(A,X), sg(A,B), arc(B,Y).", &[("arc", arc.clone())]);
            agrees("p(X,Y) <- arc(X,Y). p(X,Z) <- p(X,Y), p(Y,Z).\nunreach(X,Y) <- arc(X,_), arc(_,Y), ~p(X,Y).", &[("arc", arc.clone())]);
        }

        #[test]
        fn weighted_paths_match_naive(edges in proptest::collection::btree_set((0i64..8, 0i64..8, 1i64..6), 0..20)) {
            let darc: BTreeSet<Vec<Value>> = edges.into_iter().map(|(a, b, w)| vec![Value::Int(a), Value::Int(b), Value::Int(w)]).collect();
            agrees(
                "dpath(X,Z,min<D>) <- darc(X,Z,D).\ndpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.",
                &[("darc", darc.clone())],
            );
            let arc: BTreeSet<Vec<Value>> = darc.iter().map(|r| r[..2].to_vec()).collect();
            agrees("cpath(X,Z,count<Y>) <- arc(X,Y), arc(Y,Z).", &[("arc", arc)]);
        }
    }
}
