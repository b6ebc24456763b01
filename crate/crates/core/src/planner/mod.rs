//! Discriminating sets, read/write analysis over AND/OR trees, locks and
//! per-node access costs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use crate::compiler::{rule_tree, AndOrTree, Compiled, NodeKind, PredKind, Stratum};
use crate::frontend::{Literal, Term};
use crate::storage::DiscriminatingSet;

/// Candidate assignments above this count fall back to first-column
/// partitioning.
pub const MAX_CANDIDATES: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Locality {
    LocalOnly,
    SinglePartition,
    AllPartitions,
}

impl fmt::Display for Locality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Locality::LocalOnly => "local-partition-only",
            Locality::SinglePartition => "single-partition-by-bound-key",
            Locality::AllPartitions => "all-partitions",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeLock {
    None,
    Read,
    Write,
}

impl fmt::Display for NodeLock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeLock::None => "none",
            NodeLock::Read => "r-lock",
            NodeLock::Write => "w-lock",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AccessMode {
    pub locality: Locality,
    pub lock: NodeLock,
}

impl AccessMode {
    pub const LOCAL: AccessMode = AccessMode {
        locality: Locality::LocalOnly,
        lock: NodeLock::None,
    };
}

impl fmt::Display for AccessMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.locality, self.lock)
    }
}

/// Lock discipline of a derived relation during its stratum.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum LockType {
    None,
    XLock,
    RwLock,
}

impl fmt::Display for LockType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LockType::None => "none",
            LockType::XLock => "x-lock",
            LockType::RwLock => "rw-lock",
        })
    }
}

pub fn node_cost(mode: AccessMode) -> u32 {
    match (mode.lock, mode.locality) {
        (NodeLock::Read, Locality::AllPartitions) => 3,
        (NodeLock::Write, _) => 1,
        _ => 0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Entry,
    /// Non-entry read of a relation written in the same stratum.
    StratumRead,
    /// Read of a relation that does not change during the stratum.
    FixedRead,
    Write,
    Other,
}

/// What the analysis found for one tree before locks are known.
#[derive(Clone, Debug, Default)]
pub struct TreeFacts {
    roles: BTreeMap<usize, (Role, Locality)>,
    pub nonlocal_writes: BTreeSet<String>,
    pub nonlocal_reads: BTreeSet<String>,
    pub stratum_reads: BTreeSet<String>,
    /// The tree reads a stratum relation somewhere below the root.
    pub recursive: bool,
}

/// Arguments at the discriminating columns, sorted for multiset comparison.
/// Anonymous arguments never compare equal.
fn key_args(args: &[Term], disc: &DiscriminatingSet, node: usize) -> Vec<String> {
    let mut out: Vec<String> = disc
        .cols()
        .iter()
        .map(|&c| match args.get(c) {
            Some(t) if !t.has_anon() => t.to_string(),
            _ => format!("_#{node}.{c}"),
        })
        .collect();
    out.sort();
    out
}

/// Discriminating set used for an occurrence of a relation that is fixed
/// during the stratum: its bound columns, else the first column.
pub fn occurrence_disc(bound: &BTreeSet<usize>, arity: usize) -> DiscriminatingSet {
    if !bound.is_empty() {
        DiscriminatingSet::from_cols(&bound.iter().copied().collect::<Vec<_>>())
    } else if arity > 0 {
        DiscriminatingSet::from_cols(&[0])
    } else {
        DiscriminatingSet::default()
    }
}

fn node_disc(tree: &AndOrTree, id: usize, stratum: &Stratum, derived: &BTreeMap<String, DiscriminatingSet>) -> DiscriminatingSet {
    let n = tree.node(id);
    let atom = n.atom().unwrap();
    match derived.get(&atom.pred) {
        Some(d) if stratum.contains(&atom.pred) => d.clone(),
        _ => occurrence_disc(&n.bound_positions(), atom.args.len()),
    }
}

/// The entry node that drives evaluation of `id`'s rule: the first entry
/// among the children of the nearest AND ancestor that has one.
fn governing_entry(tree: &AndOrTree, id: usize) -> Option<usize> {
    let mut cur = tree.node(id).parent;
    while let Some(p) = cur {
        if tree.node(p).kind == NodeKind::And {
            if let Some(e) = tree.node(p).children.iter().copied().find(|&c| tree.node(c).entry) {
                return Some(e);
            }
        }
        cur = tree.node(p).parent;
    }
    None
}

/// Read/write analysis of one tree under the given derived discriminating
/// sets.
pub fn analyze(tree: &AndOrTree, stratum: &Stratum, derived: &BTreeMap<String, DiscriminatingSet>) -> TreeFacts {
    let mut f = TreeFacts::default();
    let key = |id: usize| {
        let d = node_disc(tree, id, stratum, derived);
        key_args(&tree.node(id).atom().unwrap().args, &d, id)
    };
    for n in &tree.nodes {
        if n.kind != NodeKind::Or {
            continue;
        }
        let in_stratum = n.pred().is_some_and(|p| stratum.contains(p));
        if n.id != 1 && in_stratum && n.r_node {
            f.recursive = true;
        }
        let role = if n.entry {
            // Entry writes: compare against every stratum W ancestor.
            let ke = key(n.id);
            for a in tree.or_ancestors(n.id) {
                let an = tree.node(a);
                let p = an.pred().unwrap();
                if an.w_node && stratum.contains(p) && key(a) != ke {
                    f.nonlocal_writes.insert(p.to_string());
                }
            }
            (Role::Entry, Locality::LocalOnly)
        } else if n.r_node {
            let d = node_disc(tree, n.id, stratum, derived);
            let covered = d.is_subset_of(&n.bound_positions().into_iter().collect::<Vec<_>>());
            let lookup = if covered {
                Locality::SinglePartition
            } else {
                Locality::AllPartitions
            };
            if in_stratum {
                let p = n.pred().unwrap().to_string();
                let local = covered && governing_entry(tree, n.id).is_some_and(|e| key(e) == key(n.id));
                f.stratum_reads.insert(p.clone());
                if local {
                    (Role::StratumRead, Locality::LocalOnly)
                } else {
                    f.nonlocal_reads.insert(p);
                    (Role::StratumRead, lookup)
                }
            } else {
                (Role::FixedRead, lookup)
            }
        } else if n.w_node {
            (Role::Write, Locality::LocalOnly)
        } else {
            (Role::Other, Locality::LocalOnly)
        };
        f.roles.insert(n.id, role);
    }
    f
}

/// Lock type of each stratum relation given the facts of all its trees.
pub fn lock_types<'a>(stratum: &Stratum, facts: impl IntoIterator<Item = &'a TreeFacts> + Clone) -> BTreeMap<String, LockType> {
    let mut out = BTreeMap::new();
    for p in &stratum.preds {
        let writes = facts.clone().into_iter().any(|f| f.nonlocal_writes.contains(p));
        let nonlocal_reads = facts.clone().into_iter().any(|f| f.nonlocal_reads.contains(p));
        let reads = facts.clone().into_iter().any(|f| f.stratum_reads.contains(p));
        let lock = if !writes && !nonlocal_reads {
            LockType::None
        } else if writes && !reads {
            LockType::XLock
        } else {
            LockType::RwLock
        };
        out.insert(p.clone(), lock);
    }
    out
}

/// Access mode of every OR node once locks are fixed.
pub fn access_modes(
    tree: &AndOrTree,
    facts: &TreeFacts,
    locks: &BTreeMap<String, LockType>,
    nonlocal_writes: &BTreeSet<String>,
) -> BTreeMap<usize, AccessMode> {
    let lock_of = |id: usize| {
        tree.node(id)
            .pred()
            .and_then(|p| locks.get(p))
            .copied()
            .unwrap_or(LockType::None)
    };
    facts
        .roles
        .iter()
        .map(|(&id, &(role, locality))| {
            let mode = match role {
                Role::Entry | Role::Other | Role::FixedRead => AccessMode { locality, lock: NodeLock::None },
                Role::StratumRead => AccessMode {
                    locality,
                    lock: if lock_of(id) == LockType::RwLock {
                        NodeLock::Read
                    } else {
                        NodeLock::None
                    },
                },
                Role::Write => {
                    let p = tree.node(id).pred().unwrap_or_default();
                    AccessMode {
                        locality: if nonlocal_writes.contains(p) {
                            Locality::SinglePartition
                        } else {
                            Locality::LocalOnly
                        },
                        lock: if lock_of(id) == LockType::None {
                            NodeLock::None
                        } else {
                            NodeLock::Write
                        },
                    }
                }
            };
            (id, mode)
        })
        .collect()
}

/// Analysis of a single tree on its own: access mode per OR node.
pub fn rwa(tree: &AndOrTree, stratum: &Stratum, derived: &BTreeMap<String, DiscriminatingSet>) -> BTreeMap<usize, AccessMode> {
    let f = analyze(tree, stratum, derived);
    let locks = lock_types(stratum, [&f]);
    access_modes(tree, &f, &locks, &f.nonlocal_writes)
}

pub fn tree_cost(modes: &BTreeMap<usize, AccessMode>) -> u32 {
    modes.values().map(|&m| node_cost(m)).sum()
}

/// One rule of a stratum with its tree and access modes.
#[derive(Clone, Debug)]
pub struct RulePlan {
    pub rule: usize,
    pub tree: AndOrTree,
    pub modes: BTreeMap<usize, AccessMode>,
}

#[derive(Clone, Debug)]
pub struct StratumAssignment {
    pub stratum: usize,
    pub recursive: bool,
    pub derived: BTreeMap<String, DiscriminatingSet>,
    /// Fixed relations read in the stratum, per (rule, body index).
    pub base: BTreeMap<(usize, usize), DiscriminatingSet>,
    pub locks: BTreeMap<String, LockType>,
    pub nonlocal_writes: BTreeSet<String>,
    pub rules: Vec<RulePlan>,
    pub cost: u32,
    pub decomposable: bool,
    pub candidates: usize,
    /// Enumeration was skipped for first-column partitioning.
    pub fallback: bool,
}

impl StratumAssignment {
    pub fn lock(&self, pred: &str) -> LockType {
        self.locks.get(pred).copied().unwrap_or(LockType::None)
    }
}

#[derive(Clone, Debug)]
pub struct PlanAssignment {
    pub n: usize,
    pub strata: Vec<StratumAssignment>,
}

impl PlanAssignment {
    pub fn stratum_of(&self, pred: &str) -> Option<&StratumAssignment> {
        self.strata.iter().find(|s| s.derived.contains_key(pred))
    }

    pub fn derived_disc(&self, pred: &str) -> Option<&DiscriminatingSet> {
        self.stratum_of(pred).and_then(|s| s.derived.get(pred))
    }

    pub fn base_disc(&self, rule: usize, lit: usize) -> Option<&DiscriminatingSet> {
        self.strata.iter().find_map(|s| s.base.get(&(rule, lit)))
    }

    pub fn lock(&self, pred: &str) -> LockType {
        self.stratum_of(pred).map(|s| s.lock(pred)).unwrap_or(LockType::None)
    }

    pub fn cost(&self) -> u32 {
        self.strata.iter().map(|s| s.cost).sum()
    }

    /// Text for `--explain`.
    pub fn explain(&self, c: &Compiled) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "workers: {}", self.n);
        for s in &self.strata {
            let st = &c.strata[s.stratum];
            let _ = writeln!(out, "stratum {} {{{}}} {}", s.stratum + 1, st.preds.join(", "), st.class);
            for (p, d) in &s.derived {
                let _ = writeln!(out, "  D({p}) = {d}  lock {}", s.lock(p));
            }
            if s.fallback {
                let _ = writeln!(out, "  {} candidates; first-column fallback", s.candidates);
            }
            for rp in &s.rules {
                let _ = writeln!(out, "  rule {}: {}", rp.rule + 1, c.program.rules[rp.rule]);
                for n in &rp.tree.nodes {
                    let Some(m) = rp.modes.get(&n.id) else { continue };
                    let mut line = format!("    OR{} {} [{}]", n.id, n.literal.as_ref().unwrap(), n.adornment);
                    if let Some(d) = n.parent.and_then(|_| n.body_index).and_then(|bi| s.base.get(&(rp.rule, bi))) {
                        let _ = write!(line, " D={d}");
                    }
                    let _ = writeln!(out, "{line}  {m}  c={}", node_cost(*m));
                }
            }
            let _ = write!(out, "  cost {}", s.cost);
            if s.recursive {
                let _ = write!(out, ", decomposable {}", if s.decomposable { "yes" } else { "no" });
            }
            out.push('\n');
        }
        let _ = writeln!(out, "total cost {}", self.cost());
        out
    }
}

/// Candidate discriminating sets for a derived predicate, smallest first.
pub fn candidate_discs(c: &Compiled, pred: &str, arity: usize) -> Vec<DiscriminatingSet> {
    let cols: Vec<usize> = match c.kind(pred).value_col() {
        Some(v) => (0..arity).filter(|&i| i != v).collect(),
        None => (0..arity).collect(),
    };
    if cols.is_empty() {
        return vec![DiscriminatingSet::default()];
    }
    let mut out: Vec<Vec<usize>> = (1u64..(1 << cols.len()))
        .map(|m| cols.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, &c)| c).collect())
        .collect();
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out.iter().map(|v| DiscriminatingSet::from_cols(v)).collect()
}

fn first_column(c: &Compiled, pred: &str, arity: usize) -> DiscriminatingSet {
    candidate_discs(c, pred, arity).into_iter().next().unwrap()
}

fn pred_arity(c: &Compiled, pred: &str) -> usize {
    c.types_of(pred)
        .map(|t| t.len())
        .or_else(|| c.program.rules.iter().find(|r| r.head.pred == pred).map(|r| r.head.arity()))
        .unwrap_or(0)
}

struct StratumTrees {
    rules: Vec<(usize, AndOrTree)>,
    base: BTreeMap<(usize, usize), DiscriminatingSet>,
}

fn stratum_trees(c: &Compiled, s: &Stratum) -> StratumTrees {
    let mut rules = Vec::new();
    let mut base = BTreeMap::new();
    for &ri in &s.rules {
        let t = rule_tree(&c.program, s, ri, None);
        for n in &t.nodes {
            if let (Some(bi), Some(Literal::Atom { atom, negated: false })) = (n.body_index, &n.literal) {
                if n.r_node && !s.contains(&atom.pred) {
                    base.insert((ri, bi), occurrence_disc(&n.bound_positions(), atom.args.len()));
                }
            }
        }
        rules.push((ri, t));
    }
    StratumTrees { rules, base }
}

fn evaluate(
    s: &Stratum,
    index: usize,
    trees: &StratumTrees,
    derived: BTreeMap<String, DiscriminatingSet>,
) -> StratumAssignment {
    let facts: Vec<TreeFacts> = trees.rules.iter().map(|(_, t)| analyze(t, s, &derived)).collect();
    let locks = lock_types(s, facts.iter());
    let nonlocal_writes: BTreeSet<String> = facts.iter().flat_map(|f| f.nonlocal_writes.iter().cloned()).collect();
    let rules: Vec<RulePlan> = trees
        .rules
        .iter()
        .zip(&facts)
        .map(|((ri, t), f)| RulePlan {
            rule: *ri,
            tree: t.clone(),
            modes: access_modes(t, f, &locks, &nonlocal_writes),
        })
        .collect();
    // Rule trees each carry the head as a root W node; the relation's
    // write cost is counted once.
    let body_cost: u32 = rules
        .iter()
        .map(|r| r.modes.iter().filter(|(&id, _)| id != 1).map(|(_, &m)| node_cost(m)).sum::<u32>())
        .sum();
    let written: BTreeSet<&str> = rules.iter().filter_map(|r| r.tree.root().pred()).collect();
    let head_cost: u32 = written
        .iter()
        .map(|p| u32::from(locks.get(*p).copied().unwrap_or(LockType::None) != LockType::None))
        .sum();
    let recursive = s.class.is_recursive();
    let decomposable = recursive
        && facts
            .iter()
            .filter(|f| f.recursive)
            .all(|f| f.nonlocal_writes.is_empty() && f.nonlocal_reads.is_empty());
    StratumAssignment {
        stratum: index,
        recursive,
        derived,
        base: trees.base.clone(),
        locks,
        nonlocal_writes,
        rules,
        cost: body_cost + head_cost,
        decomposable,
        candidates: 1,
        fallback: false,
    }
}

/// Whether every recursive rule writes only into the producing worker's
/// partitions and reads the stratum's relations without crossing partitions.
pub fn detect_decomposable(c: &Compiled, stratum: usize, derived: &BTreeMap<String, DiscriminatingSet>) -> bool {
    let s = &c.strata[stratum];
    evaluate(s, stratum, &stratum_trees(c, s), derived.clone()).decomposable
}

/// Plans one stratum. Predicates present in `forced` keep the given set;
/// the rest are searched.
pub fn plan_stratum(c: &Compiled, stratum: usize, forced: &BTreeMap<String, DiscriminatingSet>) -> StratumAssignment {
    let s = &c.strata[stratum];
    let trees = stratum_trees(c, s);
    let preds: Vec<(String, Vec<DiscriminatingSet>)> = s
        .preds
        .iter()
        .map(|p| {
            let cands = match forced.get(p) {
                Some(d) => vec![d.clone()],
                None => candidate_discs(c, p, pred_arity(c, p)),
            };
            (p.clone(), cands)
        })
        .collect();
    let total = preds
        .iter()
        .try_fold(1usize, |acc, (_, v)| acc.checked_mul(v.len()))
        .unwrap_or(usize::MAX);
    if total > MAX_CANDIDATES {
        let derived = preds
            .iter()
            .map(|(p, v)| match forced.get(p) {
                Some(_) => (p.clone(), v[0].clone()),
                None => (p.clone(), first_column(c, p, pred_arity(c, p))),
            })
            .collect();
        let mut a = evaluate(s, stratum, &trees, derived);
        a.candidates = total;
        a.fallback = true;
        return a;
    }
    let mut best: Option<((u32, usize, Vec<Vec<usize>>), StratumAssignment)> = None;
    let mut digits = vec![0usize; preds.len()];
    loop {
        let derived: BTreeMap<String, DiscriminatingSet> =
            preds.iter().zip(&digits).map(|((p, v), &i)| (p.clone(), v[i].clone())).collect();
        let key_sets: Vec<Vec<usize>> = preds.iter().map(|(p, _)| derived[p].positions()).collect();
        let size: usize = key_sets.iter().map(|k| k.len()).sum();
        let a = evaluate(s, stratum, &trees, derived);
        let key = (a.cost, size, key_sets);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, a));
        }
        let mut i = 0;
        while i < digits.len() {
            digits[i] += 1;
            if digits[i] < preds[i].1.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == digits.len() {
            break;
        }
    }
    let mut a = best.unwrap().1;
    a.candidates = total;
    a
}

/// Minimum-cost plan for every stratum.
pub fn select_plan(c: &Compiled, n: usize) -> PlanAssignment {
    plan_with(c, n, &BTreeMap::new())
}

/// Like `select_plan` with some derived discriminating sets fixed.
pub fn plan_with(c: &Compiled, n: usize, forced: &BTreeMap<String, DiscriminatingSet>) -> PlanAssignment {
    PlanAssignment {
        n: n.max(1),
        strata: (0..c.strata.len()).map(|i| plan_stratum(c, i, forced)).collect(),
    }
}

/// Plan partitioning every derived relation on its first usable column.
pub fn first_column_plan(c: &Compiled, n: usize) -> PlanAssignment {
    let forced = c
        .strata
        .iter()
        .flat_map(|s| s.preds.iter())
        .map(|p| (p.clone(), first_column(c, p, pred_arity(c, p))))
        .collect();
    plan_with(c, n, &forced)
}

pub fn is_aggregate(c: &Compiled, pred: &str) -> bool {
    !matches!(c.kind(pred), PredKind::Set | PredKind::Base)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{build_and_or_tree, compile};
    use crate::frontend::parse_program;

    const TC: &str = "tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).";
    const SG: &str = "sg(X,Y) <- arc(P,X), arc(P,Y), X != Y.\n\
                      sg(X,Y) <- arc(A,X), sg(A,B), arc(B,Y).";

    fn compiled(src: &str) -> Compiled {
        compile(&parse_program(src).unwrap(), &BTreeMap::new()).unwrap()
    }

    fn d(pred: &str, pos: &[usize]) -> BTreeMap<String, DiscriminatingSet> {
        BTreeMap::from([(pred.to_string(), DiscriminatingSet::from_positions(pos))])
    }

    fn recursive_stratum(c: &Compiled, pred: &str) -> usize {
        c.stratum_of(pred).unwrap()
    }

    #[test]
    fn costs_per_mode() {
        assert_eq!(node_cost(AccessMode::LOCAL), 0);
        let w = AccessMode {
            locality: Locality::SinglePartition,
            lock: NodeLock::Write,
        };
        assert_eq!(node_cost(w), 1);
        let r = AccessMode {
            locality: Locality::AllPartitions,
            lock: NodeLock::Read,
        };
        assert_eq!(node_cost(r), 3);
        let unlocked_scan = AccessMode {
            locality: Locality::AllPartitions,
            lock: NodeLock::None,
        };
        assert_eq!(node_cost(unlocked_scan), 0);
    }

    #[test]
    fn transitive_closure_on_first_column() {
        let c = compiled(TC);
        let s = recursive_stratum(&c, "tc");
        let a = plan_stratum(&c, s, &d("tc", &[1]));
        assert_eq!(a.cost, 0);
        assert_eq!(a.lock("tc"), LockType::None);
        assert!(a.nonlocal_writes.is_empty());
        assert!(a.decomposable);
        // Both arc occurrences partition on their first column.
        let rec = c.program.rules.iter().position(|r| r.body.len() == 2).unwrap();
        assert_eq!(a.base[&(rec, 1)], DiscriminatingSet::from_positions(&[1]));
        let exit = 1 - rec;
        assert_eq!(a.base[&(exit, 0)], DiscriminatingSet::from_positions(&[1]));
    }

    #[test]
    fn transitive_closure_on_second_column_locks_writes() {
        let c = compiled(TC);
        let s = recursive_stratum(&c, "tc");
        let a = plan_stratum(&c, s, &d("tc", &[2]));
        assert_eq!(a.lock("tc"), LockType::XLock);
        assert_eq!(a.cost, 1);
        assert!(!a.decomposable);
        let best = select_plan(&c, 4);
        assert_eq!(best.derived_disc("tc"), Some(&DiscriminatingSet::from_positions(&[1])));
        assert_eq!(best.cost(), 0);
    }

    #[test]
    fn same_generation_costs() {
        let c = compiled(SG);
        let s = recursive_stratum(&c, "sg");
        let one = plan_stratum(&c, s, &d("sg", &[1]));
        assert_eq!(one.cost, 1);
        assert!(!one.decomposable);
        assert_eq!(plan_stratum(&c, s, &d("sg", &[2])).cost, 4);
        assert_eq!(plan_stratum(&c, s, &d("sg", &[1, 2])).cost, 4);
        let best = plan_stratum(&c, s, &BTreeMap::new());
        assert!(best.cost > 0);
        assert_eq!(best.derived["sg"], DiscriminatingSet::from_positions(&[1]));
        assert_eq!(best.candidates, 3);
    }

    #[test]
    fn same_generation_tree_modes() {
        let c = compiled(SG);
        let si = recursive_stratum(&c, "sg");
        let t = build_and_or_tree(&c.program, &c.strata[si], "sg", None);
        let modes = rwa(&t, &c.strata[si], &d("sg", &[1]));
        let loc = |id: usize| modes[&id].locality;
        assert_eq!(modes[&4], AccessMode::LOCAL);
        assert_eq!(modes[&7], AccessMode::LOCAL);
        assert_eq!(loc(5), Locality::SinglePartition);
        assert_eq!(loc(9), Locality::SinglePartition);
        // arc(A,X) partitions on A and sg(A,B) is looked up by A.
        assert_eq!(loc(8), Locality::LocalOnly);
        assert_eq!(modes[&8].lock, NodeLock::Read);
        assert_eq!(modes[&1].lock, NodeLock::Write);
        assert_eq!(tree_cost(&modes), 1);
        let modes2 = rwa(&t, &c.strata[si], &d("sg", &[2]));
        assert_eq!(modes2[&8].locality, Locality::AllPartitions);
        assert_eq!(node_cost(modes2[&8]), 3);
        assert_eq!(tree_cost(&modes2), 4);
    }

    #[test]
    fn repeated_variables_compare_as_multisets() {
        let writes = |src: &str, pos: &[usize]| {
            let c = compiled(src);
            let s = &c.strata[recursive_stratum(&c, "p")];
            let t = rule_tree(&c.program, s, 1, None);
            !analyze(&t, s, &d("p", pos)).nonlocal_writes.is_empty()
        };
        // p(Y,X) at {1,2} holds the same arguments as the head.
        assert!(!writes("p(X,Y) <- e(X,Y). p(X,Y) <- p(Y,X), e(X,Y).", &[1, 2]));
        assert!(writes("p(X,Y) <- e(X,Y). p(X,Y) <- p(Y,X), e(X,Y).", &[1]));
        assert!(writes("p(X,Y) <- e(X,Y). p(X,Y) <- p(X,X), e(X,Y).", &[1, 2]));
    }

    #[test]
    fn shortest_paths_decomposable() {
        let c = compiled(
            "dpath(X,Z,min<D>) <- darc(X,Z,D).\n\
             dpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.",
        );
        let s = recursive_stratum(&c, "dpath");
        assert!(detect_decomposable(&c, s, &d("dpath", &[1])));
        assert!(!detect_decomposable(&c, s, &d("dpath", &[2])));
        // The cost column is never partitioned on.
        assert_eq!(candidate_discs(&c, "dpath", 3).len(), 3);
    }

    #[test]
    fn mutual_recursion_plans_both() {
        let c = compiled(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).",
        );
        let s = recursive_stratum(&c, "attend");
        let best = plan_stratum(&c, s, &BTreeMap::new());
        assert!(best.derived.contains_key("attend") && best.derived.contains_key("cntfriends"));
        let default = first_column_plan(&c, 2);
        assert!(best.cost <= default.strata[s].cost);
        // Every forced assignment costs at least the optimum.
        for a in candidate_discs(&c, "attend", 1) {
            for b in candidate_discs(&c, "cntfriends", 2) {
                let mut f = d("attend", &a.positions());
                f.insert("cntfriends".into(), b);
                assert!(plan_stratum(&c, s, &f).cost >= best.cost);
            }
        }
    }

    #[test]
    fn nonlinear_closure_reads_delta_broadcast() {
        let c = compiled("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), tc(Z,Y).");
        let s = recursive_stratum(&c, "tc");
        let a = plan_stratum(&c, s, &d("tc", &[1]));
        // Writes stay local but tc(Z,Y) reads another worker's partition.
        assert!(a.nonlocal_writes.is_empty());
        assert_eq!(a.lock("tc"), LockType::RwLock);
        assert_eq!(a.cost, 1);
        assert!(!a.decomposable);
        let b = plan_stratum(&c, s, &d("tc", &[2]));
        assert_eq!(b.lock("tc"), LockType::RwLock);
        assert_eq!(b.cost, 4);
    }

    #[test]
    fn explain_mentions_sets_and_cost() {
        let c = compiled(TC);
        let text = select_plan(&c, 2).explain(&c);
        assert!(text.contains("D(tc) = {1}  lock none"), "{text}");
        assert!(text.contains("decomposable yes"));
        assert!(text.contains("total cost 0"));
    }
}
