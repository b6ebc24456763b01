//! Conservative syntactic test: the head cost must be a non-decreasing
//! function of the body costs, non-cost head columns must not depend on
//! costs, and filters on costs may only cut in the direction the
//! constraint keeps.

use std::collections::{BTreeMap, HashMap};

use crate::frontend::{ArithOp, CmpOp, Comparison, Const, HeadArg, Literal, Rule, Term, POSINT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `is_min`: the rule must be deflation preserving.
    Min,
    /// `is_max`: the rule must be inflation preserving.
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Flow {
    /// Independent of every cost.
    Const,
    /// Non-decreasing in the costs.
    Mono,
    /// Ranges over 1..=c for a non-decreasing c: only usable as a counted
    /// witness under a max constraint.
    Covered,
}

struct Analysis<'a> {
    costs: &'a BTreeMap<String, usize>,
    dir: Direction,
    vars: HashMap<String, Flow>,
}

fn literal_value(t: &Term) -> Option<f64> {
    match t {
        Term::Const(Const::Int(i)) => Some(*i as f64),
        Term::Const(Const::Float(x)) => Some(*x),
        _ => None,
    }
}

impl<'a> Analysis<'a> {
    fn flow(&self, t: &Term) -> Result<Option<Flow>, String> {
        Ok(match t {
            Term::Var(v) => self.vars.get(v).copied(),
            Term::Anon | Term::Const(_) => Some(Flow::Const),
            Term::Arith(op, a, b) => {
                let (Some(fa), Some(fb)) = (self.flow(a)?, self.flow(b)?) else { return Ok(None) };
                if fa == Flow::Covered || fb == Flow::Covered {
                    return Err(format!("{t} computes on an enumerated count"));
                }
                let both_const = fa == Flow::Const && fb == Flow::Const;
                Some(match op {
                    _ if both_const => Flow::Const,
                    ArithOp::Add => Flow::Mono,
                    ArithOp::Sub if fb == Flow::Const => Flow::Mono,
                    ArithOp::Mul if literal_value(a).is_some_and(|x| x >= 0.0) || literal_value(b).is_some_and(|x| x >= 0.0) => {
                        Flow::Mono
                    }
                    ArithOp::Div if fb == Flow::Const && literal_value(b).is_some_and(|x| x > 0.0) => Flow::Mono,
                    _ => return Err(format!("{t} is not non-decreasing in the costs")),
                })
            }
        })
    }

    fn set(&mut self, v: &str, f: Flow) -> Result<(), String> {
        match self.vars.get(v) {
            Some(&old) if old != f => Err(format!("{v} is both a cost and a join variable")),
            _ => {
                self.vars.insert(v.to_string(), f);
                Ok(())
            }
        }
    }

    /// A filter on costs keeps the extremum whenever it keeps anything.
    fn check_filter(&self, c: &Comparison) -> Result<(), String> {
        let (fl, fr) = (self.flow(&c.left)?, self.flow(&c.right)?);
        let (fl, fr) = (fl.unwrap_or(Flow::Const), fr.unwrap_or(Flow::Const));
        if fl == Flow::Const && fr == Flow::Const {
            return Ok(());
        }
        let op = match (fl, fr) {
            (Flow::Mono, Flow::Const) => c.op,
            (Flow::Const, Flow::Mono) => c.op.flip(),
            _ => return Err(format!("{c} compares costs with each other")),
        };
        let ok = match self.dir {
            Direction::Min => matches!(op, CmpOp::Lt | CmpOp::Le),
            Direction::Max => matches!(op, CmpOp::Gt | CmpOp::Ge),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("bound {c} cuts against the constraint"))
        }
    }

    /// `if(A op B then D = X else D = Y)` where {X, Y} = {A, B} computes the
    /// least or greatest of A and B; otherwise the choice must not depend
    /// on costs.
    fn branch(&self, cond: &Comparison, t: &Comparison, e: &Comparison) -> Result<Option<(String, Flow)>, String> {
        let target = |c: &Comparison| -> Option<(String, Term)> {
            match (&c.op, &c.left, &c.right) {
                (CmpOp::Eq, Term::Var(v), r) if !self.vars.contains_key(v) => Some((v.clone(), r.clone())),
                (CmpOp::Eq, l, Term::Var(v)) if !self.vars.contains_key(v) => Some((v.clone(), l.clone())),
                _ => None,
            }
        };
        let (Some((v1, x)), Some((v2, y))) = (target(t), target(e)) else { return Ok(None) };
        if v1 != v2 {
            return Ok(None);
        }
        let (Some(fx), Some(fy), Some(fa), Some(fb)) =
            (self.flow(&x)?, self.flow(&y)?, self.flow(&cond.left)?, self.flow(&cond.right)?)
        else {
            return Ok(None);
        };
        if [fx, fy].contains(&Flow::Covered) {
            return Err(format!("if-then-else over an enumerated count assigns {v1}"));
        }
        let joined = if fx == Flow::Mono || fy == Flow::Mono { Flow::Mono } else { Flow::Const };
        if fa == Flow::Const && fb == Flow::Const {
            return Ok(Some((v1, joined)));
        }
        let same = |a: &Term, b: &Term| a == b;
        let picks_pair = (same(&cond.left, &x) && same(&cond.right, &y)) || (same(&cond.left, &y) && same(&cond.right, &x));
        if picks_pair && cond.op != CmpOp::Eq && cond.op != CmpOp::Ne {
            Ok(Some((v1, joined)))
        } else {
            Err(format!("if({cond} ...) branches on a cost"))
        }
    }
}

/// Whether `rule` passes the test for constraints in direction `dir` on the
/// predicates in `costs` (predicate -> cost column). Returns the reason on
/// failure.
pub fn check_rule(rule: &Rule, costs: &BTreeMap<String, usize>, dir: Direction) -> Result<(), String> {
    let recursive = rule
        .body_atoms()
        .any(|(a, neg)| !neg && costs.contains_key(&a.pred));
    if !recursive {
        return Ok(());
    }
    let mut an = Analysis {
        costs,
        dir,
        vars: HashMap::new(),
    };
    // Atom columns first: cost columns of constrained predicates are Mono,
    // everything else Const.
    let mut seen_cost: HashMap<String, usize> = HashMap::new();
    for (atom, neg) in rule.body_atoms() {
        if atom.pred == POSINT {
            continue;
        }
        for (j, t) in atom.args.iter().enumerate() {
            let cost_col = !neg && an.costs.get(&atom.pred) == Some(&j);
            for v in t.vars() {
                if cost_col {
                    if !matches!(t, Term::Var(_)) {
                        return Err(format!("cost column of {atom} holds an expression"));
                    }
                    *seen_cost.entry(v.to_string()).or_default() += 1;
                    an.set(v, Flow::Mono)?;
                } else {
                    if neg && an.vars.get(v) == Some(&Flow::Mono) {
                        return Err(format!("cost {v} used under negation"));
                    }
                    an.set(v, Flow::Const)?;
                }
            }
        }
    }
    if let Some((v, _)) = seen_cost.iter().find(|(_, &n)| n > 1) {
        return Err(format!("cost {v} joins two atoms"));
    }
    // Builtins in dependency order.
    let mut pending: Vec<&Literal> = rule
        .body
        .iter()
        .filter(|l| !matches!(l, Literal::Extrema { .. }))
        .filter(|l| match l {
            Literal::Atom { atom, .. } => atom.pred == POSINT,
            _ => true,
        })
        .collect();
    loop {
        let before = pending.len();
        let mut rest = Vec::new();
        for l in pending {
            let done = match l {
                Literal::Cmp(c) => {
                    let lv = an.flow(&c.left)?;
                    let rv = an.flow(&c.right)?;
                    match (c.op, &c.left, &c.right, lv, rv) {
                        (_, _, _, Some(_), Some(_)) => {
                            an.check_filter(c)?;
                            true
                        }
                        (CmpOp::Eq, Term::Var(v), _, None, Some(f)) | (CmpOp::Eq, _, Term::Var(v), Some(f), None) => {
                            an.set(v, f)?;
                            true
                        }
                        _ => false,
                    }
                }
                Literal::IfThenElse {
                    cond,
                    then_bind,
                    else_bind,
                } => match an.branch(cond, then_bind, else_bind)? {
                    Some((v, f)) => {
                        an.set(&v, f)?;
                        true
                    }
                    None => false,
                },
                Literal::Atom { atom, negated: false } if atom.pred == POSINT && atom.args.len() == 2 => {
                    match (an.flow(&atom.args[0])?, &atom.args[1]) {
                        (Some(f), Term::Var(k)) => {
                            let fk = match (f, dir) {
                                (Flow::Const, _) => Flow::Const,
                                (Flow::Mono, Direction::Max) => Flow::Covered,
                                _ => return Err(format!("{atom} enumerates below a cost under min")),
                            };
                            an.set(k, fk)?;
                            true
                        }
                        (Some(_), _) => true,
                        (None, _) => false,
                    }
                }
                _ => true,
            };
            if !done {
                rest.push(l);
            }
        }
        pending = rest;
        if pending.is_empty() {
            break;
        }
        if pending.len() == before {
            return Err(format!("cannot follow the data flow of {}", pending[0]));
        }
    }
    // Head.
    let head_cost = an.costs.get(&rule.head.pred).copied();
    for (j, a) in rule.head.args.iter().enumerate() {
        match a {
            HeadArg::Term(t) => {
                let f = an.flow(t)?.unwrap_or(Flow::Const);
                let ok = match f {
                    Flow::Const => true,
                    Flow::Mono => head_cost == Some(j),
                    Flow::Covered => false,
                };
                if !ok {
                    return Err(format!("head argument {t} depends on a cost"));
                }
            }
            HeadArg::Agg(s) => {
                for (i, v) in s.vars.iter().enumerate() {
                    let f = an.vars.get(v).copied().unwrap_or(Flow::Const);
                    let is_value = i == 0 && !s.func.is_count();
                    let ok = match f {
                        Flow::Const => true,
                        Flow::Covered => s.func.is_count() && dir == Direction::Max && head_cost == Some(j),
                        Flow::Mono => is_value && dir == Direction::Max && head_cost == Some(j),
                    };
                    if !ok {
                        return Err(format!("aggregate {s} counts a cost"));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn is_deflation_preserving(rule: &Rule, costs: &BTreeMap<String, usize>) -> bool {
    check_rule(rule, costs, Direction::Min).is_ok()
}

pub fn is_inflation_preserving(rule: &Rule, costs: &BTreeMap<String, usize>) -> bool {
    check_rule(rule, costs, Direction::Max).is_ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_rule;

    fn costs(p: &[(&str, usize)]) -> BTreeMap<String, usize> {
        p.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn additive_path_rule() {
        let r = parse_rule("dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), Dxz = Dxy + Dyz.").unwrap();
        assert!(is_deflation_preserving(&r, &costs(&[("dpath", 2)])));
        assert!(is_inflation_preserving(&r, &costs(&[("dpath", 2)])));
    }

    #[test]
    fn upper_bound_breaks_max_only() {
        let r = parse_rule("dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), Dxz = Dxy + Dyz, Dxz < 10.").unwrap();
        assert!(!is_inflation_preserving(&r, &costs(&[("dpath", 2)])));
        assert!(is_deflation_preserving(&r, &costs(&[("dpath", 2)])));
        let r = parse_rule("dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), Dxz = Dxy + Dyz, Dxz > 1.").unwrap();
        assert!(!is_deflation_preserving(&r, &costs(&[("dpath", 2)])));
    }

    #[test]
    fn exit_rule_trivially_passes() {
        let r = parse_rule("dpath(X,Z,D) <- darc(X,Z,D), D < 0.").unwrap();
        assert!(is_deflation_preserving(&r, &costs(&[("dpath", 2)])));
    }

    #[test]
    fn nonlinear_min() {
        let r = parse_rule("dpath(X,Z,D) <- dpath(X,Y,A), dpath(Y,Z,B), D = A + B.").unwrap();
        assert!(is_deflation_preserving(&r, &costs(&[("dpath", 2)])));
    }

    #[test]
    fn capped_max_passes() {
        let r = parse_rule(
            "dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), ub(U), \
             if(Dxy + Dyz > U then Dxz = U else Dxz = Dxy + Dyz).",
        )
        .unwrap();
        assert!(is_inflation_preserving(&r, &costs(&[("dpath", 2)])));
    }

    #[test]
    fn cost_in_group_column_fails() {
        let r = parse_rule("p(D, X) <- p(X, D), e(X).").unwrap();
        assert!(!is_deflation_preserving(&r, &costs(&[("p", 1)])));
        let r = parse_rule("p(X, D) <- p(X, C), D = 10 - C.").unwrap();
        assert!(!is_deflation_preserving(&r, &costs(&[("p", 1)])));
    }

    #[test]
    fn threshold_on_max_count() {
        let r = parse_rule("attend(X) <- cntfriends(X, N), N >= 3.").unwrap();
        assert!(is_inflation_preserving(&r, &costs(&[("cntfriends", 1)])));
        assert!(!is_deflation_preserving(&r, &costs(&[("cntfriends", 1)])));
    }

    #[test]
    fn posint_cover_under_max() {
        let r = parse_rule("cpath(X,Z,mcount<(T,Y,K)>) <- cpath(X,Y,C), arc(Y,Z), T = 0, posint(C, K).").unwrap();
        assert!(is_inflation_preserving(&r, &costs(&[("cpath", 2)])));
        assert!(!is_deflation_preserving(&r, &costs(&[("cpath", 2)])));
    }
}
