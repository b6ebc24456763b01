//! Premappability: whether a min/max (or bound) constraint can be pushed
//! into a recursive fixpoint without changing its result.

pub mod sampler;
pub mod syntactic;
pub mod transfer;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::compiler::{Compiled, PredKind, Stratum};
use crate::evaluator::builtins::{compare, holds, values_equal};
use crate::evaluator::{Db, EvalError};
use crate::frontend::{AggFunc, CmpOp, ExtremaKind, Literal, Rule};
use crate::storage::Value;

pub use sampler::{semantic_prem_test, SamplerOptions};
pub use syntactic::{check_rule, is_deflation_preserving, is_inflation_preserving, Direction};
pub use transfer::{count_sum_reference_rules, transfer_constraint, validate_count_sum_in_recursion};

#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintKind {
    IsMin,
    IsMax,
    /// Keep rows whose cost is above `value` (or equal, unless strict).
    LowerBound { value: Value, strict: bool },
    /// Keep rows whose cost is below `value` (or equal, unless strict).
    UpperBound { value: Value, strict: bool },
    NoFilter,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub kind: ConstraintKind,
    /// Grouping columns for min/max.
    pub group: Vec<usize>,
    pub cost: Option<usize>,
}

impl Constraint {
    pub fn nofilter() -> Constraint {
        Constraint {
            kind: ConstraintKind::NoFilter,
            group: Vec::new(),
            cost: None,
        }
    }

    pub fn extremum(kind: ExtremaKind, group: Vec<usize>, cost: usize) -> Constraint {
        Constraint {
            kind: match kind {
                ExtremaKind::Min => ConstraintKind::IsMin,
                ExtremaKind::Max => ConstraintKind::IsMax,
            },
            group,
            cost: Some(cost),
        }
    }

    /// Min/max over `cost`, grouped by every other column of an `arity`-ary
    /// relation.
    pub fn per_group(kind: ExtremaKind, arity: usize, cost: usize) -> Constraint {
        Constraint::extremum(kind, (0..arity).filter(|&i| i != cost).collect(), cost)
    }

    fn filter(&self, rows: &BTreeSet<Vec<Value>>) -> BTreeSet<Vec<Value>> {
        let Some(c) = self.cost else { return rows.clone() };
        let bound = |op: CmpOp, v: &Value| rows.iter().filter(|r| holds(op, &r[c], v)).cloned().collect();
        match &self.kind {
            ConstraintKind::NoFilter => rows.clone(),
            ConstraintKind::LowerBound { value, strict } => bound(if *strict { CmpOp::Gt } else { CmpOp::Ge }, value),
            ConstraintKind::UpperBound { value, strict } => bound(if *strict { CmpOp::Lt } else { CmpOp::Le }, value),
            ConstraintKind::IsMin | ConstraintKind::IsMax => {
                let min = self.kind == ConstraintKind::IsMin;
                let key = |r: &Vec<Value>| -> Vec<Value> { self.group.iter().map(|&g| r[g].clone()).collect() };
                let mut best: BTreeMap<Vec<Value>, &Value> = BTreeMap::new();
                for r in rows {
                    let e = best.entry(key(r)).or_insert(&r[c]);
                    let o = compare(&r[c], e).unwrap_or(std::cmp::Ordering::Equal);
                    if (min && o.is_lt()) || (!min && o.is_gt()) {
                        *e = &r[c];
                    }
                }
                rows.iter().filter(|r| values_equal(&r[c], best[&key(r)])).cloned().collect()
            }
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cost = self.cost.map(|c| c.to_string()).unwrap_or_default();
        match &self.kind {
            ConstraintKind::IsMin | ConstraintKind::IsMax => {
                let g: Vec<String> = self.group.iter().map(|g| g.to_string()).collect();
                let name = if self.kind == ConstraintKind::IsMin { "is_min" } else { "is_max" };
                write!(f, "{name}(({}), ({cost}))", g.join(", "))
            }
            ConstraintKind::LowerBound { value, strict } => write!(f, "#{cost} {} {value}", if *strict { ">" } else { ">=" }),
            ConstraintKind::UpperBound { value, strict } => write!(f, "#{cost} {} {value}", if *strict { "<" } else { "<=" }),
            ConstraintKind::NoFilter => write!(f, "nofilter"),
        }
    }
}

/// One constraint per predicate; predicates not listed are unfiltered.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintVector {
    pub constraints: BTreeMap<String, Constraint>,
}

impl ConstraintVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, pred: &str, c: Constraint) -> Self {
        self.constraints.insert(pred.to_string(), c);
        self
    }

    pub fn get(&self, pred: &str) -> Option<&Constraint> {
        self.constraints.get(pred).filter(|c| c.kind != ConstraintKind::NoFilter)
    }

    pub fn is_trivial(&self) -> bool {
        self.constraints.values().all(|c| c.kind == ConstraintKind::NoFilter)
    }

    /// Applies every constraint to its relation.
    pub fn apply(&self, db: &Db) -> Db {
        db.iter()
            .map(|(p, rows)| {
                let rows = match self.get(p) {
                    Some(c) => c.filter(rows),
                    None => rows.clone(),
                };
                (p.clone(), rows)
            })
            .collect()
    }

    /// The shared min/max direction and cost columns, when every non-trivial
    /// constraint is a min (or every one a max).
    pub fn extremum_costs(&self) -> Option<(Direction, BTreeMap<String, usize>)> {
        let mut dir = None;
        let mut costs = BTreeMap::new();
        for (p, c) in &self.constraints {
            let d = match c.kind {
                ConstraintKind::NoFilter => continue,
                ConstraintKind::IsMin => Direction::Min,
                ConstraintKind::IsMax => Direction::Max,
                _ => return None,
            };
            if dir.is_some_and(|x| x != d) {
                return None;
            }
            dir = Some(d);
            costs.insert(p.clone(), c.cost?);
        }
        Some((dir.unwrap_or(Direction::Min), costs))
    }
}

impl fmt::Display for ConstraintVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.constraints.iter().map(|(p, c)| format!("{p}: {c}")).collect();
        write!(f, "{{{}}}", parts.join("; "))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PremVerdict {
    /// Every rule passed the syntactic test.
    Proven { reason: String },
    /// No counterexample among the interpretations tried.
    PassedSampling { trials: usize, exhaustive: bool, seed: u64 },
    /// `interpretation` gives different results with and without the
    /// constraint applied first.
    Refuted {
        interpretation: Db,
        direct: Db,
        through_constraint: Db,
    },
    /// A count or sum whose values are not known to be positive.
    PreconditionFailed { reason: String },
}

impl PremVerdict {
    pub fn is_proven(&self) -> bool {
        matches!(self, PremVerdict::Proven { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PremVerdict::Proven { .. } => "Proven",
            PremVerdict::PassedSampling { .. } => "PassedSampling",
            PremVerdict::Refuted { .. } => "Refuted",
            PremVerdict::PreconditionFailed { .. } => "PreconditionFailed",
        }
    }
}

fn show_db(db: &Db) -> String {
    let mut out = Vec::new();
    for (p, rows) in db {
        for r in rows {
            let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            out.push(format!("{p}({})", vals.join(", ")));
        }
    }
    out.join(" ")
}

impl fmt::Display for PremVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PremVerdict::Proven { reason } => write!(f, "Proven: {reason}"),
            PremVerdict::PassedSampling { trials, exhaustive, seed } => {
                if *exhaustive {
                    write!(f, "PassedSampling: all {trials} interpretations agree")
                } else {
                    write!(f, "PassedSampling: {trials} random interpretations agree (seed {seed})")
                }
            }
            PremVerdict::Refuted {
                interpretation,
                direct,
                through_constraint,
            } => write!(
                f,
                "Refuted: I = {{{}}} gives {{{}}} but {{{}}} after constraining I first",
                show_db(interpretation),
                show_db(direct),
                show_db(through_constraint)
            ),
            PremVerdict::PreconditionFailed { reason } => write!(f, "PreconditionFailed: {reason}"),
        }
    }
}

pub(crate) fn strip_extrema(rule: &Rule) -> Rule {
    Rule {
        head: rule.head.clone(),
        body: rule.body.iter().filter(|l| !matches!(l, Literal::Extrema { .. })).cloned().collect(),
    }
}

/// Syntactic test first, falling back to the sampler.
pub fn check_prem(
    rules: &[Rule],
    vector: &ConstraintVector,
    edb: &BTreeMap<String, Vec<crate::storage::Ty>>,
    opts: &SamplerOptions,
) -> Result<PremVerdict, EvalError> {
    let rules: Vec<Rule> = rules.iter().map(strip_extrema).collect();
    if vector.is_trivial() {
        return Ok(PremVerdict::Proven {
            reason: "no predicate is constrained".into(),
        });
    }
    if let Some((dir, costs)) = vector.extremum_costs() {
        if rules.iter().all(|r| check_rule(r, &costs, dir).is_ok()) {
            let what = match dir {
                Direction::Min => "deflation",
                Direction::Max => "inflation",
            };
            return Ok(PremVerdict::Proven {
                reason: format!("every rule is {what} preserving"),
            });
        }
    }
    semantic_prem_test(&rules, vector, edb, opts)
}

#[derive(Debug, thiserror::Error)]
pub enum TransferError {
    #[error("constraint is not premappable: {0}")]
    Refuted(PremVerdict),
    #[error("constraint passed sampling only; rerun allowing unverified transfers ({0})")]
    Unverified(PremVerdict),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Checks `vector` against the rules defining the constrained predicates
/// and transfers it when allowed. A sampled pass is accepted only with
/// `allow_unverified`, and comes back with a warning.
pub fn checked_transfer(
    prog: &crate::frontend::Program,
    vector: &ConstraintVector,
    edb: &BTreeMap<String, Vec<crate::storage::Ty>>,
    opts: &SamplerOptions,
    allow_unverified: bool,
) -> Result<(crate::frontend::Program, PremVerdict, Option<String>), TransferError> {
    let rules: Vec<Rule> = prog
        .rules
        .iter()
        .filter(|r| vector.constraints.contains_key(&r.head.pred))
        .cloned()
        .collect();
    let verdict = check_prem(&rules, vector, edb, opts)?;
    let warning = match &verdict {
        PremVerdict::Proven { .. } => None,
        PremVerdict::PassedSampling { .. } if allow_unverified => {
            Some(format!("transferring {vector} on sampling evidence only: {verdict}"))
        }
        PremVerdict::PassedSampling { .. } => return Err(TransferError::Unverified(verdict)),
        _ => return Err(TransferError::Refuted(verdict)),
    };
    Ok((transfer_constraint(prog, vector), verdict, warning))
}

/// The constraint vector implied by the predicate kinds of a stratum.
pub fn stratum_vector(c: &Compiled, s: &Stratum) -> ConstraintVector {
    let mut v = ConstraintVector::new();
    for p in &s.preds {
        let arity = c.types_of(p).map(|t| t.len()).unwrap_or(0);
        let con = match c.kind(p) {
            PredKind::Extremum { kind, col } => Constraint::per_group(kind, arity, col),
            PredKind::Accum { func, col, .. } if !func.is_extremum() => {
                Constraint::per_group(ExtremaKind::Max, arity, col)
            }
            _ => Constraint::nofilter(),
        };
        v.constraints.insert(p.clone(), con);
    }
    v
}

/// Decides whether a stratum's aggregates may be evaluated inside its
/// recursion. `db` holds the relations the stratum reads, when known; it
/// lets the positivity check of sums look at data.
pub fn verify_stratum(c: &Compiled, s: &Stratum, db: Option<&Db>, opts: &SamplerOptions) -> Result<PremVerdict, EvalError> {
    if !s.needs_prem {
        return Ok(PremVerdict::Proven {
            reason: "no aggregate inside the recursion".into(),
        });
    }
    let has_count_sum = s
        .preds
        .iter()
        .any(|p| matches!(c.kind(p), PredKind::Accum { func: AggFunc::Count | AggFunc::Sum, .. }));
    if has_count_sum {
        return validate_count_sum_in_recursion(c, s, db, opts);
    }
    let vector = stratum_vector(c, s);
    if vector.is_trivial() {
        return Ok(PremVerdict::Proven {
            reason: "only monotonic aggregates".into(),
        });
    }
    let rules: Vec<Rule> = s.rules.iter().map(|&ri| c.program.rules[ri].clone()).collect();
    check_prem(&rules, &vector, &edb_types(c, &rules), opts)
}

/// Column types of every predicate `rules` read but do not define.
pub(crate) fn edb_types(c: &Compiled, rules: &[Rule]) -> BTreeMap<String, Vec<crate::storage::Ty>> {
    let heads: BTreeSet<&str> = rules.iter().map(|r| r.head.pred.as_str()).collect();
    c.types
        .preds
        .iter()
        .filter(|(p, _)| !heads.contains(p.as_str()))
        .map(|(p, t)| (p.clone(), t.clone()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::frontend::parse_program;

    fn rows(v: &[&[i64]]) -> BTreeSet<Vec<Value>> {
        v.iter().map(|r| r.iter().map(|&x| Value::Int(x)).collect()).collect()
    }

    #[test]
    fn constraint_filters() {
        let db: Db = [("p".to_string(), rows(&[&[1, 5], &[1, 3], &[2, 7], &[2, 7]]))].into();
        let min = ConstraintVector::new().with("p", Constraint::per_group(ExtremaKind::Min, 2, 1));
        assert_eq!(min.apply(&db)["p"], rows(&[&[1, 3], &[2, 7]]));
        let max = ConstraintVector::new().with("p", Constraint::per_group(ExtremaKind::Max, 2, 1));
        assert_eq!(max.apply(&db)["p"], rows(&[&[1, 5], &[2, 7]]));
        let ub = ConstraintVector::new().with(
            "p",
            Constraint {
                kind: ConstraintKind::UpperBound {
                    value: Value::Int(5),
                    strict: true,
                },
                group: vec![],
                cost: Some(1),
            },
        );
        assert_eq!(ub.apply(&db)["p"], rows(&[&[1, 3]]));
    }

    #[test]
    fn shortest_path_stratum_is_proven() {
        let c = compile(
            &parse_program(
                "dpath(X,Z,min<D>) <- darc(X,Z,D).\n\
                 dpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.",
            )
            .unwrap(),
            &BTreeMap::new(),
        )
        .unwrap();
        let s = &c.strata[0];
        let v = verify_stratum(&c, s, None, &SamplerOptions::default()).unwrap();
        assert!(v.is_proven(), "{v}");
        assert_eq!(stratum_vector(&c, s).to_string(), "{dpath: is_min((0, 1), (2))}");
    }

    fn check(src: &str, v: &ConstraintVector) -> PremVerdict {
        let rules = parse_program(src).unwrap().rules;
        check_prem(&rules, v, &BTreeMap::new(), &SamplerOptions::default()).unwrap()
    }

    #[test]
    fn worked_examples_are_proven() {
        let min_dpath = ConstraintVector::new().with("dpath", Constraint::per_group(ExtremaKind::Min, 3, 2));
        let linear = "dpath(X,Z,Dxz) <- darc(X,Z,Dxz), is_min((X,Z),(Dxz)).\n\
                      dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), Dxz = Dxy + Dyz, is_min((X,Z),(Dxz)).";
        assert!(check(linear, &min_dpath).is_proven());
        let nonlinear = "dpath(X,Z,Dxz) <- darc(X,Z,Dxz).\n\
                         dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), dpath(Y,Z,Dyz), Dxz = Dxy + Dyz.";
        assert!(check(nonlinear, &min_dpath).is_proven());
        let party = "attend(X) <- organizer(X).\n\
                     attend(X) <- cntfriends(X,N), N >= 3.\n\
                     cntfriends(Y, mcount<X>) <- attend(X), friend(Y,X).";
        let v = ConstraintVector::new()
            .with("attend", Constraint::nofilter())
            .with("cntfriends", Constraint::per_group(ExtremaKind::Max, 2, 1));
        assert!(check(party, &v).is_proven());
    }

    #[test]
    fn party_with_count_is_proven() {
        let c = compile(
            &parse_program(
                "attend(X) <- organizer(X).\n\
                 attend(X) <- cntfriends(X,N), N >= 3.\n\
                 cntfriends(Y, count<X>) <- attend(X), friend(Y,X).",
            )
            .unwrap(),
            &BTreeMap::new(),
        )
        .unwrap();
        let s = c.strata.iter().find(|s| s.contains("attend")).unwrap();
        assert!(s.needs_prem);
        let v = verify_stratum(&c, s, None, &SamplerOptions::default()).unwrap();
        assert!(v.is_proven(), "{v}");
    }

    #[test]
    fn monotonic_counts_get_the_max_vector() {
        let c = compile(
            &parse_program(
                "attend(X) <- organizer(X).\n\
                 attend(X) <- cntfriends(X,N), N >= 3.\n\
                 cntfriends(Y, mcount<X>) <- attend(X), friend(Y,X).",
            )
            .unwrap(),
            &BTreeMap::new(),
        )
        .unwrap();
        let s = c.strata.iter().find(|s| s.contains("attend")).unwrap();
        assert_eq!(stratum_vector(&c, s).to_string(), "{attend: nofilter; cntfriends: is_max((0), (1))}");
        assert!(verify_stratum(&c, s, None, &SamplerOptions::default()).unwrap().is_proven());
    }

    #[test]
    fn checked_transfer_refuses_refuted() {
        let prog = parse_program(
            "dpath(X,Z,D) <- darc(X,Z,D).\n\
             dpath(X,Z,D) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B, D < 3.\n\
             lpath(X,Z,D) <- dpath(X,Z,D), is_max((X,Z),(D)).",
        )
        .unwrap();
        let v = ConstraintVector::new().with("dpath", Constraint::per_group(ExtremaKind::Max, 3, 2));
        let e = checked_transfer(&prog, &v, &BTreeMap::new(), &SamplerOptions::default(), true).unwrap_err();
        assert!(matches!(e, TransferError::Refuted(PremVerdict::Refuted { .. })));
        let none = ConstraintVector::new().with("dpath", Constraint::nofilter());
        let (same, verdict, warning) =
            checked_transfer(&prog, &none, &BTreeMap::new(), &SamplerOptions::default(), false).unwrap();
        assert_eq!(same, prog);
        assert!(verdict.is_proven() && warning.is_none());
    }
}
