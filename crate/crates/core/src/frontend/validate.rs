//! Safety, arity and type checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use super::ast::*;
use super::types::infer_types;
use crate::storage::Ty;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Diagnostic {
    /// Index of the offending rule, when there is one.
    pub rule: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.rule {
            Some(r) => write!(f, "rule {}: {}", r + 1, self.message),
            None => f.write_str(&self.message),
        }
    }
}

/// Variables a rule body binds: positive atoms bind everything they mention,
/// equalities bind a lone variable once the other side is bound, `posint`
/// binds its second argument and an if-then-else binds the variable both of
/// its branches assign.
pub fn bound_vars(body: &[Literal]) -> BTreeSet<String> {
    let mut bound: BTreeSet<String> = BTreeSet::new();
    for l in body {
        match l {
            Literal::Atom {
                atom,
                negated: false,
            } if atom.pred != POSINT => {
                bound.extend(atom.vars().into_iter().map(String::from));
            }
            Literal::Vertical { .. } => bound.extend(l.vars().into_iter().map(String::from)),
            _ => {}
        }
    }
    loop {
        let before = bound.len();
        for l in body {
            match l {
                Literal::Cmp(c) => {
                    if let Some(v) = assigned_var(c, &bound) {
                        bound.insert(v.to_string());
                    }
                }
                Literal::Atom {
                    atom,
                    negated: false,
                } if atom.pred == POSINT && atom.args.len() == 2 => {
                    if all_bound(&atom.args[0], &bound) {
                        if let Term::Var(k) = &atom.args[1] {
                            bound.insert(k.clone());
                        }
                    }
                }
                Literal::IfThenElse {
                    cond,
                    then_bind,
                    else_bind,
                } => {
                    if cond.vars().iter().all(|v| bound.contains(*v)) {
                        let a = assigned_var(then_bind, &bound);
                        let b = assigned_var(else_bind, &bound);
                        if let (Some(a), Some(b)) = (a, b) {
                            if a == b {
                                bound.insert(a.to_string());
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        if bound.len() == before {
            return bound;
        }
    }
}

fn all_bound(t: &Term, bound: &BTreeSet<String>) -> bool {
    !t.has_anon() && t.vars().iter().all(|v| bound.contains(*v))
}

/// The unbound variable an equality assigns, if it is an assignment.
pub fn assigned_var<'a>(c: &'a Comparison, bound: &BTreeSet<String>) -> Option<&'a str> {
    if c.op != CmpOp::Eq {
        return None;
    }
    match (&c.left, &c.right) {
        (Term::Var(v), r) if !bound.contains(v) && all_bound(r, bound) => Some(v),
        (l, Term::Var(v)) if !bound.contains(v) && all_bound(l, bound) => Some(v),
        _ => None,
    }
}

fn safety(ri: usize, r: &Rule, out: &mut Vec<Diagnostic>) {
    let bound = bound_vars(&r.body);
    let mut diag = |m: String| {
        out.push(Diagnostic {
            rule: Some(ri),
            message: m,
        })
    };
    for a in &r.head.args {
        if let HeadArg::Term(t) = a {
            if t.has_anon() {
                diag("anonymous variable in head".into());
            }
        }
    }
    let mut seen = BTreeSet::new();
    for v in r.head.vars() {
        if !bound.contains(v) && seen.insert(v) {
            diag(format!("unsafe variable {v} in head"));
        }
    }
    for l in &r.body {
        let what = match l {
            Literal::Atom { negated: true, .. } => "negated literal",
            Literal::Atom { atom, .. } if atom.pred == POSINT => {
                if atom.args.len() != 2 {
                    diag("posint takes two arguments".into());
                    continue;
                }
                if !all_bound(&atom.args[0], &bound) {
                    diag(format!("variable in {atom} first argument unbound"));
                }
                continue;
            }
            Literal::Atom { .. } | Literal::Vertical { .. } => continue,
            Literal::Cmp(c) => {
                if c.left.has_anon() || c.right.has_anon() {
                    diag(format!("anonymous variable in comparison {c}"));
                }
                "comparison"
            }
            Literal::Extrema { .. } => "extrema constraint",
            Literal::IfThenElse { .. } => "if-then-else",
        };
        let mut seen = BTreeSet::new();
        for v in l.vars() {
            if !bound.contains(v) && seen.insert(v) {
                diag(format!("variable {v} in {what} {l} unbound"));
            }
        }
    }
    for l in &r.body {
        if let Literal::Atom {
            atom,
            negated: true,
        } = l
        {
            if atom.pred == POSINT {
                diag(format!("{POSINT} cannot be negated"));
            }
        }
    }
    if let Some((_, s)) = r.head.aggregate() {
        let mut seen = BTreeSet::new();
        for v in &s.vars {
            if !seen.insert(v) {
                diag(format!("variable {v} repeated in {s}"));
            }
        }
    }
    let verticals = r.body.iter().filter(|l| matches!(l, Literal::Vertical { .. })).count();
    if verticals > 1 {
        diag("more than one `@` literal in a rule".into());
    }
}

/// Checks safety, arities and types. Returns an empty list iff the program
/// passes; otherwise one diagnostic per problem, sorted.
pub fn validate(prog: &Program) -> Vec<Diagnostic> {
    validate_with(prog, &BTreeMap::new())
}

/// As [`validate`], with column types of externally loaded facts.
pub fn validate_with(prog: &Program, edb: &BTreeMap<String, Vec<Ty>>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for (ri, r) in prog.rules.iter().enumerate() {
        safety(ri, r, &mut out);
    }
    // Arity: schema first, then the first use in program order.
    let mut arity: BTreeMap<&str, usize> = BTreeMap::new();
    for s in &prog.schemas {
        arity.insert(&s.pred, s.columns.len());
    }
    let mut uses: Vec<(Option<usize>, &str, usize)> = Vec::new();
    for f in &prog.facts {
        uses.push((None, &f.pred, f.args.len()));
    }
    for (ri, r) in prog.rules.iter().enumerate() {
        uses.push((Some(ri), &r.head.pred, r.head.args.len()));
        for l in &r.body {
            if let Literal::Atom { atom, .. } = l {
                if atom.pred != POSINT {
                    uses.push((Some(ri), &atom.pred, atom.args.len()));
                }
            }
        }
    }
    for (ri, p, n) in &uses {
        match arity.get(p) {
            None => {
                arity.insert(p, *n);
            }
            Some(&m) if m != *n => out.push(Diagnostic {
                rule: *ri,
                message: format!("{p} used with {n} arguments but has arity {m}"),
            }),
            _ => {}
        }
    }
    for (ri, r) in prog.rules.iter().enumerate() {
        for l in &r.body {
            if let Literal::Vertical { pred, .. } = l {
                match prog.schema(pred) {
                    None => out.push(Diagnostic {
                        rule: Some(ri),
                        message: format!("`@` over {pred}, which has no declared schema"),
                    }),
                    Some(s) if s.columns.len() < 2 => out.push(Diagnostic {
                        rule: Some(ri),
                        message: format!("`@` over {pred} needs at least two columns"),
                    }),
                    _ => {}
                }
            }
        }
    }
    if out.is_empty() {
        let (_, d) = infer_types(prog, edb);
        out.extend(d);
    }
    out.sort();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn diags(src: &str) -> Vec<Diagnostic> {
        validate(&parse_program(src).unwrap())
    }

    #[test]
    fn transitive_closure_is_clean() {
        assert!(diags("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).").is_empty());
    }

    #[test]
    fn unbound_head_variable() {
        let d = diags("p(X,Y) <- q(X).");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("Y"));
    }

    #[test]
    fn unbound_negated_variable() {
        let d = diags("p(X) <- q(X), ~r(Y).");
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("Y") && d[0].message.contains("negated"));
    }

    #[test]
    fn assignment_and_posint_bind() {
        assert!(diags("p(X, Z) <- q(X, Y), Z = X + Y.").is_empty());
        assert!(diags("p(X, K) <- q(X, N), posint(N, K).").is_empty());
        assert!(diags(
            "p(X, D) <- q(X, A), u(U), if(A > U then D = U else D = A)."
        )
        .is_empty());
    }

    #[test]
    fn arity_mismatch() {
        let d = diags("p(X) <- q(X). r(X) <- q(X, X).");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].rule, Some(1));
    }

    #[test]
    fn safety_is_independent_of_rule_order() {
        let a = parse_program("p(X,Y) <- q(X). r(X) <- q(X), ~s(Z).").unwrap();
        let mut b = a.clone();
        b.rules.reverse();
        let msgs = |p: &Program| -> BTreeSet<String> { validate(p).into_iter().map(|d| d.message).collect() };
        assert_eq!(msgs(&a), msgs(&b));
    }
}
