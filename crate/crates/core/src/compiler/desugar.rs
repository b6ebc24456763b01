//! Head min/max into extrema goals, and the negation-based reading of
//! extrema goals used as a reference semantics.

use std::collections::{BTreeMap, BTreeSet};

use super::pcg::Pcg;
use crate::frontend::{AggFunc, Atom, CmpOp, ExtremaKind, HeadArg, Literal, Program, Rule, Term};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DesugarError {
    #[error("rules of {pred} disagree on their aggregate: {first} vs {second}")]
    Disagree {
        pred: String,
        first: String,
        second: String,
    },
    #[error("rule {rule}: more than one extrema goal")]
    SeveralExtrema { rule: usize },
    #[error("rule {rule}: extrema goal must have exactly one cost variable")]
    CostArity { rule: usize },
    #[error("rule {rule}: extrema goal in a recursive rule must range over the head: {detail}")]
    Misaligned { rule: usize, detail: String },
}

/// How a predicate's aggregate is written across its rules.
fn signature(r: &Rule) -> Option<(String, usize)> {
    r.head.aggregate().map(|(i, s)| {
        let family = if s.func.is_extremum() { s.func.name() } else { "count/sum" };
        (family.to_string(), i)
    })
}

/// Checks that all aggregate rules of a predicate use the same function
/// family at the same column.
pub fn check_agreement(prog: &Program) -> Result<(), DesugarError> {
    let mut seen: BTreeMap<&str, (String, usize, &Rule)> = BTreeMap::new();
    for r in &prog.rules {
        let Some((fam, col)) = signature(r) else { continue };
        if let Some((f0, c0, r0)) = seen.get(r.head.pred.as_str()) {
            let family_clash = *f0 != fam;
            let mixes_counts = {
                let a = r0.head.aggregate().unwrap().1.func;
                let b = r.head.aggregate().unwrap().1.func;
                !a.is_extremum() && a != b
            };
            if family_clash || *c0 != col || mixes_counts {
                return Err(DesugarError::Disagree {
                    pred: r.head.pred.clone(),
                    first: r0.head.to_string(),
                    second: r.head.to_string(),
                });
            }
        } else {
            seen.insert(&r.head.pred, (fam, col, r));
        }
    }
    Ok(())
}

fn kind_of(func: crate::frontend::AggFunc) -> ExtremaKind {
    if func == crate::frontend::AggFunc::Min {
        ExtremaKind::Min
    } else {
        ExtremaKind::Max
    }
}

fn distinct_vars<'a>(terms: impl Iterator<Item = &'a Term>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in terms {
        for v in t.vars() {
            if !out.iter().any(|o| o == v) {
                out.push(v.to_string());
            }
        }
    }
    out
}

fn fresh_pred(base: &str, taken: &BTreeSet<String>) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (2..).map(|i| format!("{base}{i}")).find(|n| !taken.contains(n)).unwrap()
}

fn all_preds(prog: &Program) -> BTreeSet<String> {
    let mut s = BTreeSet::new();
    for r in &prog.rules {
        s.insert(r.head.pred.clone());
        for l in &r.body {
            match l {
                Literal::Atom { atom, .. } => {
                    s.insert(atom.pred.clone());
                }
                Literal::Vertical { pred, .. } => {
                    s.insert(pred.clone());
                }
                _ => {}
            }
        }
    }
    s.extend(prog.schemas.iter().map(|x| x.pred.clone()));
    s.extend(prog.facts.iter().map(|x| x.pred.clone()));
    s
}

/// `pred(..) <- aux(..), is_min((other columns), (cost column))`.
fn final_rule(pred: &str, aux: &str, col: usize, kind: ExtremaKind, template: &[Term]) -> Rule {
    let mut names: Vec<&str> = template.iter().filter_map(|t| t.as_var()).collect();
    names.sort();
    names.dedup();
    let args: Vec<Term> = if names.len() == template.len() {
        template.to_vec()
    } else {
        (1..=template.len()).map(|i| Term::Var(format!("A{i}"))).collect()
    };
    let group = args
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != col)
        .map(|(_, t)| t.as_var().unwrap().to_string())
        .collect();
    let cost = vec![args[col].as_var().unwrap().to_string()];
    Rule {
        head: Atom::new(pred, args.clone()).to_head(),
        body: vec![Literal::pos(Atom::new(aux, args)), Literal::Extrema { kind, group, cost }],
    }
}

/// Rewrites head `min<V>`/`max<V>`. In a recursive predicate the head
/// keeps `V` and the rule gains `is_min((other head vars), (V))`. Otherwise
/// the rule defines a fresh `{pred}_{func}_aux` and a final rule filters it.
/// Count and sum heads pass through for the evaluator.
pub fn desugar_head_aggregates(prog: &Program, pcg: &Pcg) -> Result<Program, DesugarError> {
    let split = split_mixed_counts(prog);
    let prog = &split;
    check_agreement(prog)?;
    let mut out = prog.clone();
    out.rules.clear();
    let mut taken = all_preds(prog);
    for r in &prog.rules {
        let Some((col, spec)) = r.head.aggregate() else {
            out.rules.push(r.clone());
            continue;
        };
        if !spec.func.is_extremum() {
            out.rules.push(r.clone());
            continue;
        }
        let value = spec.vars[0].clone();
        let args: Vec<Term> = r
            .head
            .args
            .iter()
            .map(|a| match a {
                HeadArg::Term(t) => t.clone(),
                HeadArg::Agg(_) => Term::Var(value.clone()),
            })
            .collect();
        let kind = kind_of(spec.func);
        if pcg.is_recursive(&r.head.pred) {
            let group = distinct_vars(args.iter().enumerate().filter(|(i, _)| *i != col).map(|(_, t)| t));
            let mut body = r.body.clone();
            body.push(Literal::Extrema {
                kind,
                group,
                cost: vec![value],
            });
            out.rules.push(Rule {
                head: Atom::new(&r.head.pred, args).to_head(),
                body,
            });
        } else {
            // One aux predicate per occurrence, so each rule is filtered on its own.
            let name = fresh_pred(&format!("{}_{}_aux", r.head.pred, spec.func.name()), &taken);
            taken.insert(name.clone());
            out.rules.push(Rule {
                head: Atom::new(&name, args.clone()).to_head(),
                body: r.body.clone(),
            });
            out.rules.push(final_rule(&r.head.pred, &name, col, kind, &args));
        }
    }
    Ok(out)
}

/// A predicate defined by both `count` and `sum` rules (or `mcount` and
/// `msum`) at the same column is a sum: each counting rule moves to a
/// `{pred}_count_aux` predicate whose totals feed the sum as plain rows.
pub fn split_mixed_counts(prog: &Program) -> Program {
    let mut funcs: BTreeMap<&str, BTreeSet<(AggFunc, usize)>> = BTreeMap::new();
    for r in &prog.rules {
        if let Some((col, spec)) = r.head.aggregate() {
            if !spec.func.is_extremum() {
                funcs.entry(&r.head.pred).or_default().insert((spec.func, col));
            }
        }
    }
    let mixed = |pred: &str, f: AggFunc, col: usize| {
        let partner = match f {
            AggFunc::Count => AggFunc::Sum,
            AggFunc::MCount => AggFunc::MSum,
            _ => return false,
        };
        funcs.get(pred).is_some_and(|s| s.contains(&(partner, col)))
    };
    let mut taken = all_preds(prog);
    let mut out = prog.clone();
    out.rules.clear();
    for r in &prog.rules {
        match r.head.aggregate() {
            Some((col, spec)) if mixed(&r.head.pred, spec.func, col) => {
                let aux = fresh_pred(&format!("{}_count_aux", r.head.pred), &taken);
                taken.insert(aux.clone());
                let mut head = r.head.clone();
                head.pred = aux.clone();
                out.rules.push(Rule {
                    head,
                    body: r.body.clone(),
                });
                let args: Vec<Term> = (1..=r.head.arity()).map(|i| Term::Var(format!("A{i}"))).collect();
                out.rules.push(Rule {
                    head: Atom::new(&r.head.pred, args.clone()).to_head(),
                    body: vec![Literal::pos(Atom::new(&aux, args))],
                });
            }
            _ => out.rules.push(r.clone()),
        }
    }
    out
}

/// For a recursive predicate whose rules carry extrema goals, the head
/// column holding the cost and the extremum kind. Every such goal must use
/// the head's cost variable as its cost and cover the other head columns.
pub fn aligned_extremum(prog: &Program, pred: &str) -> Result<Option<(ExtremaKind, usize)>, DesugarError> {
    let mut found: Option<(ExtremaKind, usize, usize)> = None;
    for (ri, r) in prog.rules_of(pred) {
        let goals = r.body.iter().filter(|l| matches!(l, Literal::Extrema { .. })).count();
        if goals > 1 {
            return Err(DesugarError::SeveralExtrema { rule: ri });
        }
        let Some((kind, group, cost)) = r.extrema_goal() else { continue };
        if cost.len() != 1 {
            return Err(DesugarError::CostArity { rule: ri });
        }
        let misaligned = |detail: String| DesugarError::Misaligned { rule: ri, detail };
        let args = r
            .head
            .as_atom()
            .ok_or_else(|| misaligned("head still carries an aggregate".into()))?
            .args;
        let cols: Vec<usize> = (0..args.len()).filter(|&i| args[i].as_var() == Some(cost[0].as_str())).collect();
        if cols.len() != 1 {
            return Err(misaligned(format!("cost {} must occur once as a head argument", cost[0])));
        }
        let col = cols[0];
        for (i, t) in args.iter().enumerate() {
            if i != col && t.vars().iter().any(|v| !group.iter().any(|g| g == v)) {
                return Err(misaligned(format!("head argument {t} is not grouped")));
            }
        }
        for g in group {
            if !args.iter().enumerate().any(|(i, t)| i != col && t.vars().contains(&g.as_str())) {
                return Err(misaligned(format!("group variable {g} is not in the head")));
            }
        }
        match found {
            Some((k, c, r0)) if k != kind || c != col => {
                return Err(DesugarError::Disagree {
                    pred: pred.to_string(),
                    first: prog.rules[r0].head.to_string(),
                    second: r.head.to_string(),
                })
            }
            None => found = Some((kind, col, ri)),
            _ => {}
        }
    }
    Ok(found.map(|(k, c, _)| (k, c)))
}

/// Replaces every extrema goal `is_min((G), (C))` in a rule with
/// `~lesser_k(G, C)` where `lesser_k(G, C) <- B, B', C' < C` and `B'` is the
/// rest of the body with non-group variables renamed. Only meaningful for
/// programs whose extrema goals are not recursive.
pub fn rewrite_extrema_negation(prog: &Program) -> Program {
    let mut out = prog.clone();
    out.rules.clear();
    let mut taken = all_preds(prog);
    for r in &prog.rules {
        let Some((kind, group, cost)) = r.extrema_goal() else {
            out.rules.push(r.clone());
            continue;
        };
        let rest: Vec<Literal> = r
            .body
            .iter()
            .filter(|l| !matches!(l, Literal::Extrema { .. }))
            .cloned()
            .collect();
        let lesser = fresh_pred("lesser", &taken);
        taken.insert(lesser.clone());
        let vars = r.all_vars();
        let rename = |v: &str| -> String {
            let mut n = format!("{v}_2");
            while vars.contains(&n) {
                n.push('_');
            }
            n
        };
        let mut renamed = Vec::new();
        for l in &rest {
            renamed.push(crate::frontend::vertical::rename_literal(l, &mut |v: &str| {
                if group.iter().any(|g| g == v) {
                    Term::var(v)
                } else {
                    Term::Var(rename(v))
                }
            }));
        }
        let op = match kind {
            ExtremaKind::Min => CmpOp::Lt,
            ExtremaKind::Max => CmpOp::Gt,
        };
        let mut lhead: Vec<Term> = group.iter().map(|g| Term::var(g)).collect();
        lhead.extend(cost.iter().map(|c| Term::var(c)));
        let mut lbody = rest.clone();
        lbody.extend(renamed);
        for c in cost {
            lbody.push(Literal::cmp(op, Term::Var(rename(c)), Term::var(c)));
        }
        out.rules.push(Rule {
            head: Atom::new(&lesser, lhead.clone()).to_head(),
            body: lbody,
        });
        let mut body = rest;
        body.push(Literal::neg(Atom::new(&lesser, lhead)));
        out.rules.push(Rule { head: r.head.clone(), body });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::pcg::build_pcg;
    use crate::frontend::parse_program;

    fn desugar(src: &str) -> Result<Program, DesugarError> {
        let p = parse_program(src).unwrap();
        desugar_head_aggregates(&p, &build_pcg(&p))
    }

    #[test]
    fn counts_mixed_with_sums_move_to_an_aux_predicate() {
        let out = desugar(
            "h(C, count<(X, Y)>) <- m(X, Y, C).\n\
             h(H2, sum<C, H1>) <- h(H1, C), n(H1, H2).",
        )
        .unwrap();
        let text: Vec<String> = out.rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(text.len(), 3, "{text:?}");
        assert!(text[0].starts_with("h_count_aux(C, count<"), "{text:?}");
        assert!(text[1].starts_with("h(A1, A2) <- h_count_aux(A1, A2)"), "{text:?}");
        // Count against count still clashes.
        assert!(desugar("h(X, count<Y>) <- e(X, Y). h(X, mcount<Y>) <- e(X, Y).").is_err());
    }

    #[test]
    fn recursive_min_gets_trailing_goal() {
        let p = desugar(
            "dpath(X,Z,min<Dxz>) <- darc(X,Z,Dxz), Dxz > 0.\n\
             dpath(X,Z,min<Dxz>) <- dpath(X,Y,Dxy), dpath(Y,Z,Dyz), Dxz = Dxy + Dyz.",
        )
        .unwrap();
        assert_eq!(p.rules.len(), 2);
        for r in &p.rules {
            assert_eq!(r.body.last().unwrap().to_string(), "is_min((X, Z), (Dxz))");
            assert_eq!(r.head.to_string(), "dpath(X, Z, Dxz)");
        }
        assert_eq!(aligned_extremum(&p, "dpath").unwrap(), Some((ExtremaKind::Min, 2)));
    }

    #[test]
    fn plain_rules_unchanged() {
        let src = "tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).";
        assert_eq!(desugar(src).unwrap(), parse_program(src).unwrap());
    }

    #[test]
    fn nonrecursive_min_uses_aux() {
        let p = desugar("effdiameter(min<H>) <- cumul(H, C), C >= 9.").unwrap();
        let text: Vec<String> = p.rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "effdiameter_min_aux(H) <- cumul(H, C), C >= 9.",
                "effdiameter(H) <- effdiameter_min_aux(H), is_min((), (H)).",
            ]
        );
    }

    #[test]
    fn disagreeing_aggregates() {
        assert!(matches!(
            desugar("p(X, min<Y>) <- q(X, Y). p(X, max<Y>) <- q(X, Y)."),
            Err(DesugarError::Disagree { .. })
        ));
        assert!(matches!(
            desugar("p(X, count<Y>) <- q(X, Y). p(X, mcount<Y>) <- q(X, Y)."),
            Err(DesugarError::Disagree { .. })
        ));
        assert!(desugar("p(X, 1) <- q(X). p(X, sum<Y, Z>) <- p(Z, Y), e(Z, X).").is_ok());
    }

    #[test]
    fn negation_rewriting_shape() {
        let p = parse_program("spath(X,Z,D) <- dpath(X,Z,D), is_min((X,Z),(D)).").unwrap();
        let n = rewrite_extrema_negation(&p);
        let text: Vec<String> = n.rules.iter().map(|r| r.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "lesser(X, Z, D) <- dpath(X, Z, D), dpath(X, Z, D_2), D_2 < D.",
                "spath(X, Z, D) <- dpath(X, Z, D), ~lesser(X, Z, D).",
            ]
        );
    }
}
