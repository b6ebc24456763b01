//! Pushing a constraint into the rules that define its predicate, and the
//! reduction of count and sum in recursion to mcount under a max.

use std::collections::{BTreeMap, BTreeSet};

use super::{check_prem, edb_types, ConstraintKind, ConstraintVector, PremVerdict, SamplerOptions};
use crate::compiler::{Compiled, PredKind, Stratum};
use crate::evaluator::{Db, EvalError};
use crate::frontend::{
    AggFunc, AggregateSpec, ArithOp, Atom, CmpOp, Const, ExtremaKind, HeadArg, Literal, Program, Rule, Term, POSINT,
};

fn fresh(rule: &Rule, stem: &str) -> String {
    let used = rule.all_vars();
    (0..).map(|i| format!("{stem}{i}")).find(|v| !used.contains(v)).unwrap()
}

/// The head argument at `col` as a variable, adding an assignment when it
/// is an expression.
fn head_var(rule: &mut Rule, col: usize) -> Option<String> {
    match &rule.head.args[col] {
        HeadArg::Term(Term::Var(v)) => Some(v.clone()),
        HeadArg::Term(t) => {
            let v = fresh(rule, "H");
            let t = t.clone();
            rule.body.push(Literal::cmp(CmpOp::Eq, Term::var(&v), t));
            rule.head.args[col] = HeadArg::Term(Term::var(&v));
            Some(v)
        }
        HeadArg::Agg(_) => None,
    }
}

/// Adds each constraint of `vector` to the rules defining its predicate
/// and drops the then-redundant extrema goal of rules that only select the
/// extremum from it. A constrained mcount or msum becomes count or sum.
pub fn transfer_constraint(prog: &Program, vector: &ConstraintVector) -> Program {
    let mut out = prog.clone();
    for rule in &mut out.rules {
        let Some(c) = vector.get(&rule.head.pred).cloned() else { continue };
        let Some(cost) = c.cost else { continue };
        if cost >= rule.head.args.len() {
            continue;
        }
        if let HeadArg::Agg(s) = &mut rule.head.args[cost] {
            s.func = match s.func {
                AggFunc::MCount => AggFunc::Count,
                AggFunc::MSum => AggFunc::Sum,
                f => f,
            };
            continue;
        }
        match &c.kind {
            ConstraintKind::IsMin | ConstraintKind::IsMax => {
                if rule.extrema_goal().is_some() {
                    continue;
                }
                let group: Option<Vec<String>> = c.group.iter().map(|&g| head_var(rule, g)).collect();
                let (Some(group), Some(cv)) = (group, head_var(rule, cost)) else { continue };
                let mut distinct = Vec::new();
                for g in group {
                    if !distinct.contains(&g) {
                        distinct.push(g);
                    }
                }
                rule.body.push(Literal::Extrema {
                    kind: if c.kind == ConstraintKind::IsMin {
                        ExtremaKind::Min
                    } else {
                        ExtremaKind::Max
                    },
                    group: distinct,
                    cost: vec![cv],
                });
            }
            ConstraintKind::LowerBound { value, strict } | ConstraintKind::UpperBound { value, strict } => {
                let Some(cv) = head_var(rule, cost) else { continue };
                let lower = matches!(c.kind, ConstraintKind::LowerBound { .. });
                let op = match (lower, strict) {
                    (true, true) => CmpOp::Gt,
                    (true, false) => CmpOp::Ge,
                    (false, true) => CmpOp::Lt,
                    (false, false) => CmpOp::Le,
                };
                let lit = Literal::cmp(op, Term::var(&cv), value_term(value));
                if !rule.body.contains(&lit) {
                    rule.body.push(lit);
                }
            }
            ConstraintKind::NoFilter => {}
        }
    }
    // The final selection is now implied by the recursion.
    for rule in &mut out.rules {
        if vector.get(&rule.head.pred).is_some() {
            continue;
        }
        let Some((kind, group, cost)) = rule.extrema_goal().map(|(k, g, c)| (k, g.to_vec(), c.to_vec())) else {
            continue;
        };
        let implied = rule.body_atoms().any(|(a, neg)| {
            let Some(c) = vector.get(&a.pred).filter(|_| !neg) else { return false };
            let same_kind = matches!(
                (&c.kind, kind),
                (ConstraintKind::IsMin, ExtremaKind::Min) | (ConstraintKind::IsMax, ExtremaKind::Max)
            );
            let cost_ok = c.cost.and_then(|k| a.args.get(k)).and_then(|t| t.as_var()) == cost.first().map(|s| s.as_str());
            let atom_group: BTreeSet<&str> = c.group.iter().filter_map(|&g| a.args.get(g)?.as_var()).collect();
            let goal_group: BTreeSet<&str> = group.iter().map(|s| s.as_str()).collect();
            same_kind && cost_ok && atom_group == goal_group
        });
        if implied {
            rule.body.retain(|l| !matches!(l, Literal::Extrema { .. }));
        }
    }
    out
}

fn value_term(v: &crate::storage::Value) -> Term {
    use crate::storage::Value;
    match v {
        Value::Int(i) => Term::Const(Const::Int(*i)),
        Value::Float(x) => Term::Const(Const::Float(*x)),
        Value::Str(_) => Term::Const(Const::Str(v.to_string())),
    }
}

/// Rewrites count to mcount and `sum<V, W..>` to `mcount<(W.., K)>` with
/// `posint(V, K)`, the set-semantics reading of both.
pub fn count_sum_reference_rules(rules: &[Rule]) -> Vec<Rule> {
    rules
        .iter()
        .map(|r| {
            let mut r = r.clone();
            let Some((col, spec)) = r.head.aggregate().map(|(c, s)| (c, s.clone())) else { return r };
            let vars = match spec.func {
                AggFunc::Count => spec.vars.clone(),
                AggFunc::Sum => {
                    let k = fresh(&r, "K");
                    let value = spec.vars[0].clone();
                    r.body.push(Literal::pos(Atom::new(POSINT, vec![Term::var(&value), Term::var(&k)])));
                    let mut w = if spec.vars.len() > 1 {
                        spec.vars[1..].to_vec()
                    } else {
                        vec![value]
                    };
                    w.push(k);
                    w
                }
                _ => return r,
            };
            r.head.args[col] = HeadArg::Agg(AggregateSpec {
                func: AggFunc::MCount,
                vars,
            });
            r
        })
        .collect()
}

fn positive_term(t: &Term, pos: &BTreeSet<String>) -> bool {
    match t {
        Term::Var(v) => pos.contains(v),
        Term::Const(Const::Int(i)) => *i > 0,
        Term::Const(Const::Float(x)) => *x > 0.0,
        Term::Arith(ArithOp::Sub, ..) => false,
        Term::Arith(_, a, b) => positive_term(a, pos) && positive_term(b, pos),
        _ => false,
    }
}

/// Variables of `rule` known to hold positive numbers.
fn positive_vars(rule: &Rule, c: &Compiled, db: Option<&Db>) -> BTreeSet<String> {
    let mut pos = BTreeSet::new();
    for (a, neg) in rule.body_atoms() {
        if neg || a.pred == POSINT {
            continue;
        }
        for (j, t) in a.args.iter().enumerate() {
            let Term::Var(v) = t else { continue };
            let from_total = match c.kind(&a.pred) {
                PredKind::Accum { col, .. } => col == j,
                _ => false,
            };
            let from_data = db.and_then(|d| d.get(&a.pred)).is_some_and(|rows| {
                rows.iter().all(|r| r.get(j).and_then(|x| x.as_f64()).is_some_and(|x| x > 0.0))
            });
            if from_total || from_data {
                pos.insert(v.clone());
            }
        }
    }
    loop {
        let before = pos.len();
        for l in &rule.body {
            match l {
                Literal::Cmp(cmp) if cmp.op == CmpOp::Eq => {
                    if let (Term::Var(v), e) | (e, Term::Var(v)) = (&cmp.left, &cmp.right) {
                        if positive_term(e, &pos) {
                            pos.insert(v.clone());
                        }
                    }
                }
                Literal::IfThenElse {
                    then_bind, else_bind, ..
                } => {
                    let val = |b: &crate::frontend::Comparison| match (&b.left, &b.right) {
                        (Term::Var(v), e) => Some((v.clone(), positive_term(e, &pos))),
                        _ => None,
                    };
                    if let (Some((v1, p1)), Some((v2, p2))) = (val(then_bind), val(else_bind)) {
                        if v1 == v2 && p1 && p2 {
                            pos.insert(v1);
                        }
                    }
                }
                Literal::Atom { atom, negated: false } if atom.pred == POSINT => {
                    if let Some(Term::Var(k)) = atom.args.get(1) {
                        pos.insert(k.clone());
                    }
                }
                _ => {}
            }
        }
        if pos.len() == before {
            return pos;
        }
    }
}

/// Checks that every count and sum of a recursive stratum adds positive
/// values, then tests the max constraint on the mcount reading of the
/// rules.
pub fn validate_count_sum_in_recursion(
    c: &Compiled,
    s: &Stratum,
    db: Option<&Db>,
    opts: &SamplerOptions,
) -> Result<PremVerdict, EvalError> {
    let rules: Vec<Rule> = s.rules.iter().map(|&ri| c.program.rules[ri].clone()).collect();
    for (ri, r) in s.rules.iter().zip(&rules) {
        let PredKind::Accum { func, col, .. } = c.kind(&r.head.pred) else { continue };
        let value = match &r.head.args[col] {
            HeadArg::Agg(spec) => match spec.value_var() {
                Some(v) => Term::var(v),
                None => continue,
            },
            HeadArg::Term(t) => t.clone(),
        };
        if func == AggFunc::Count && matches!(r.head.args[col], HeadArg::Agg(_)) {
            continue;
        }
        if !positive_term(&value, &positive_vars(r, c, db)) {
            return Ok(PremVerdict::PreconditionFailed {
                reason: format!(
                    "rule {}: {} adds {value}, which is not known to be positive",
                    ri + 1,
                    r.head.pred
                ),
            });
        }
    }
    let reference = count_sum_reference_rules(&rules);
    let vector = super::stratum_vector(c, s);
    check_prem(&reference, &vector, &edb_types(c, &rules), opts)
}

/// Reference rules keyed by predicate, for display.
pub fn describe_reference(rules: &[Rule]) -> BTreeMap<String, Vec<String>> {
    let mut out: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for r in count_sum_reference_rules(rules) {
        out.entry(r.head.pred.clone()).or_default().push(r.to_string());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::frontend::{parse_program, parse_rule};
    use crate::prem::{verify_stratum, Constraint};
    use crate::storage::Value;

    #[test]
    fn transfer_into_shortest_paths() {
        let prog = parse_program(
            "dpath(X,Z,Dxz) <- darc(X,Z,Dxz).\n\
             dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), Dxz = Dxy + Dyz.\n\
             spath(X,Z,Dxz) <- dpath(X,Z,Dxz), is_min((X,Z),(Dxz)).",
        )
        .unwrap();
        let v = ConstraintVector::new().with("dpath", Constraint::per_group(ExtremaKind::Min, 3, 2));
        let t = transfer_constraint(&prog, &v);
        let text: Vec<String> = t.rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "dpath(X, Z, Dxz) <- darc(X, Z, Dxz), is_min((X, Z), (Dxz)).",
                "dpath(X, Z, Dxz) <- dpath(X, Y, Dxy), darc(Y, Z, Dyz), Dxz = Dxy + Dyz, is_min((X, Z), (Dxz)).",
                "spath(X, Z, Dxz) <- dpath(X, Z, Dxz).",
            ]
        );
        // Applying it twice changes nothing.
        assert_eq!(transfer_constraint(&t, &v), t);
    }

    #[test]
    fn transfer_max_turns_mcount_into_count() {
        let prog = parse_program(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).",
        )
        .unwrap();
        let v = ConstraintVector::new().with("cntfriends", Constraint::per_group(ExtremaKind::Max, 2, 1));
        let t = transfer_constraint(&prog, &v);
        assert_eq!(t.rules[2].to_string(), "cntfriends(Y, count<X>) <- attend(X), friend(Y, X).");
    }

    #[test]
    fn sum_reference_form() {
        let r = parse_rule("cpath(X,Z,sum<C,Y>) <- cpath(X,Y,C), arc(Y,Z).").unwrap();
        assert_eq!(
            count_sum_reference_rules(&[r])[0].to_string(),
            "cpath(X, Z, mcount<(Y, K0)>) <- cpath(X, Y, C), arc(Y, Z), posint(C, K0)."
        );
        let r = parse_rule("t(X, sum<V>) <- e(X, V).").unwrap();
        assert_eq!(
            count_sum_reference_rules(&[r])[0].to_string(),
            "t(X, mcount<(V, K0)>) <- e(X, V), posint(V, K0)."
        );
    }

    #[test]
    fn path_counting_is_proven() {
        let c = compile(
            &parse_program(
                "cpath(X,X,1) <- arc(X,_).\n\
                 cpath(X,Z,sum<C,Y>) <- cpath(X,Y,C), arc(Y,Z).",
            )
            .unwrap(),
            &BTreeMap::new(),
        )
        .unwrap();
        let v = verify_stratum(&c, &c.strata[0], None, &SamplerOptions::default()).unwrap();
        assert!(v.is_proven(), "{v}");
    }

    #[test]
    fn sum_over_data_needs_positive_values() {
        let c = compile(
            &parse_program(
                "tot(X, sum<W, Y>) <- w(X, Y, W).\n\
                 tot(X, sum<V, Y>) <- tot(Y, V), e(Y, X).",
            )
            .unwrap(),
            &BTreeMap::new(),
        )
        .unwrap();
        let s = &c.strata[0];
        let opts = SamplerOptions::default();
        let none = verify_stratum(&c, s, None, &opts).unwrap();
        assert_eq!(none.name(), "PreconditionFailed");
        let row = |v: &[i64]| v.iter().map(|&x| Value::Int(x)).collect::<Vec<_>>();
        let good: Db = [("w".to_string(), [row(&[1, 2, 3])].into())].into();
        assert!(verify_stratum(&c, s, Some(&good), &opts).unwrap().is_proven());
        let bad: Db = [("w".to_string(), [row(&[1, 2, -3])].into())].into();
        assert_eq!(verify_stratum(&c, s, Some(&bad), &opts).unwrap().name(), "PreconditionFailed");
    }
}
