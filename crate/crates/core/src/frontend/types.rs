//! Column and variable type inference.
//!
//! Base column types come from schemas, inline facts and the loaded data;
//! derived columns take the join of what their rules produce (Integer and
//! Float join to Float). `/` always yields Float. Columns nothing constrains
//! default to Integer.

use std::collections::{BTreeMap, HashMap};

use super::ast::*;
use super::validate::Diagnostic;
use crate::storage::value::join_ty;
use crate::storage::Ty;

#[derive(Clone, Debug, Default)]
pub struct TypeInfo {
    pub preds: BTreeMap<String, Vec<Ty>>,
    /// Per rule: type of each named variable.
    pub rule_vars: Vec<HashMap<String, Ty>>,
}

impl TypeInfo {
    pub fn pred(&self, p: &str) -> Option<&[Ty]> {
        self.preds.get(p).map(|v| v.as_slice())
    }
}

fn const_ty(c: &Const) -> Ty {
    match c {
        Const::Int(_) => Ty::Int,
        Const::Float(_) => Ty::Float,
        Const::Str(_) => Ty::Str,
    }
}

/// Type of an expression, `None` while some variable is still untyped.
pub fn expr_ty(t: &Term, vars: &HashMap<String, Ty>) -> Result<Option<Ty>, String> {
    Ok(match t {
        Term::Var(v) => vars.get(v).copied(),
        Term::Anon => None,
        Term::Const(c) => Some(const_ty(c)),
        Term::Arith(op, a, b) => {
            let (x, y) = (expr_ty(a, vars)?, expr_ty(b, vars)?);
            for side in [x, y].into_iter().flatten() {
                if side == Ty::Str {
                    return Err(format!("arithmetic on a String in {t}"));
                }
            }
            if *op == ArithOp::Div {
                Some(Ty::Float)
            } else {
                match (x, y) {
                    (Some(Ty::Float), _) | (_, Some(Ty::Float)) => Some(Ty::Float),
                    (Some(Ty::Int), Some(Ty::Int)) => Some(Ty::Int),
                    _ => None,
                }
            }
        }
    })
}

fn is_numeric_literal(t: &Term) -> bool {
    matches!(t, Term::Const(Const::Int(_)) | Term::Const(Const::Float(_)))
}

struct Infer {
    cols: BTreeMap<String, Vec<Option<Ty>>>,
    fixed: BTreeMap<String, Vec<Ty>>,
    diags: Vec<Diagnostic>,
}

impl Infer {
    fn col(&self, pred: &str, i: usize) -> Option<Ty> {
        if let Some(f) = self.fixed.get(pred) {
            return f.get(i).copied();
        }
        self.cols.get(pred).and_then(|c| c.get(i).copied().flatten())
    }

    fn set_var(vars: &mut HashMap<String, Ty>, v: &str, t: Ty, errs: &mut Vec<String>, ctx: &dyn Fn() -> String) {
        match vars.get(v) {
            None => {
                vars.insert(v.to_string(), t);
            }
            Some(&old) if old == t => {}
            Some(&old) => errs.push(format!("variable {v} is used as {old} and as {t} in {}", ctx())),
        }
    }

    /// One pass over a rule: types its variables from the current column
    /// types and returns the head column types it produces.
    fn rule_pass(&self, r: &Rule, errs: &mut Vec<String>) -> (HashMap<String, Ty>, Vec<Option<Ty>>) {
        let mut vars: HashMap<String, Ty> = HashMap::new();
        for _ in 0..4 {
            for l in &r.body {
                match l {
                    Literal::Atom { atom, .. } if atom.pred == POSINT => {
                        for t in &atom.args {
                            if let Term::Var(v) = t {
                                Self::set_var(&mut vars, v, Ty::Int, errs, &|| atom.to_string());
                            }
                        }
                    }
                    Literal::Atom { atom, .. } => {
                        for (i, t) in atom.args.iter().enumerate() {
                            if let (Term::Var(v), Some(ct)) = (t, self.col(&atom.pred, i)) {
                                Self::set_var(&mut vars, v, ct, errs, &|| atom.to_string());
                            }
                        }
                    }
                    Literal::Vertical { pred, id, val, col } => {
                        Self::set_var(&mut vars, col, Ty::Int, errs, &|| l.to_string());
                        if let (Term::Var(v), Some(t)) = (id, self.col(pred, 0)) {
                            Self::set_var(&mut vars, v, t, errs, &|| l.to_string());
                        }
                        let n = self
                            .fixed
                            .get(pred)
                            .map(|c| c.len())
                            .or_else(|| self.cols.get(pred).map(|c| c.len()))
                            .unwrap_or(0);
                        let mut vt: Option<Ty> = None;
                        for i in 1..n {
                            if let Some(t) = self.col(pred, i) {
                                vt = Some(match vt {
                                    None => t,
                                    Some(u) => join_ty(u, t),
                                });
                            }
                        }
                        if let Some(t) = vt {
                            Self::set_var(&mut vars, val, t, errs, &|| l.to_string());
                        }
                    }
                    Literal::Cmp(c) => Self::assign(c, &mut vars, errs),
                    Literal::IfThenElse {
                        then_bind,
                        else_bind,
                        ..
                    } => {
                        Self::assign(then_bind, &mut vars, errs);
                        Self::assign(else_bind, &mut vars, errs);
                    }
                    Literal::Extrema { .. } => {}
                }
            }
        }
        let mut head = Vec::with_capacity(r.head.args.len());
        for a in &r.head.args {
            head.push(match a {
                HeadArg::Term(t) => expr_ty(t, &vars).ok().flatten(),
                HeadArg::Agg(s) if s.func.is_count() => Some(Ty::Int),
                HeadArg::Agg(s) => s.value_var().and_then(|v| vars.get(v).copied()),
            });
        }
        (vars, head)
    }

    /// Types the unknown side of an equality from the known side.
    fn assign(c: &Comparison, vars: &mut HashMap<String, Ty>, errs: &mut Vec<String>) {
        if c.op != CmpOp::Eq {
            return;
        }
        for (x, y) in [(&c.left, &c.right), (&c.right, &c.left)] {
            if let Term::Var(v) = x {
                if !vars.contains_key(v) {
                    if let Ok(Some(t)) = expr_ty(y, vars) {
                        Self::set_var(vars, v, t, errs, &|| c.to_string());
                    }
                }
            }
        }
    }

    fn check_comparison(c: &Comparison, vars: &HashMap<String, Ty>) -> Option<String> {
        let l = expr_ty(&c.left, vars);
        let r = expr_ty(&c.right, vars);
        match (l, r) {
            (Err(e), _) | (_, Err(e)) => Some(e),
            (Ok(Some(a)), Ok(Some(b))) if a != b => {
                let numeric = a.is_numeric() && b.is_numeric();
                if numeric && (is_numeric_literal(&c.left) || is_numeric_literal(&c.right)) {
                    None
                } else {
                    Some(format!("comparison {c} mixes {a} and {b}"))
                }
            }
            _ => None,
        }
    }
}

/// Infers column types for every predicate. `edb` supplies types of data
/// loaded from files; schemas take precedence over it.
pub fn infer_types(prog: &Program, edb: &BTreeMap<String, Vec<Ty>>) -> (TypeInfo, Vec<Diagnostic>) {
    let mut inf = Infer {
        cols: BTreeMap::new(),
        fixed: BTreeMap::new(),
        diags: Vec::new(),
    };
    for s in &prog.schemas {
        inf.fixed.insert(s.pred.clone(), s.types());
    }
    let derived = prog.derived_preds();
    for (p, t) in edb {
        if !inf.fixed.contains_key(p) && !derived.contains(p) {
            inf.fixed.insert(p.clone(), t.clone());
        }
    }
    for f in &prog.facts {
        let tys: Vec<Option<Ty>> = f
            .args
            .iter()
            .map(|t| match t {
                Term::Const(c) => Some(const_ty(c)),
                _ => Some(Ty::Float),
            })
            .collect();
        let e = inf.cols.entry(f.pred.clone()).or_insert_with(|| vec![None; tys.len()]);
        for (slot, t) in e.iter_mut().zip(tys) {
            *slot = match (*slot, t) {
                (None, t) => t,
                (Some(a), Some(b)) => Some(join_ty(a, b)),
                (s, None) => s,
            };
        }
    }
    // Facts of predicates with a schema must fit it.
    for f in &prog.facts {
        if let Some(fx) = inf.fixed.get(&f.pred) {
            for (i, (t, &ty)) in f.args.iter().zip(fx).enumerate() {
                if let Term::Const(c) = t {
                    let ct = const_ty(c);
                    if ct != ty && !(ct == Ty::Int && ty == Ty::Float) {
                        inf.diags.push(Diagnostic {
                            rule: None,
                            message: format!("fact {f}: column {} is {ty} but holds {ct}", i + 1),
                        });
                    }
                }
            }
        }
    }
    for r in &prog.rules {
        inf.cols
            .entry(r.head.pred.clone())
            .or_insert_with(|| vec![None; r.head.args.len()]);
    }
    let mut rule_vars = vec![HashMap::new(); prog.rules.len()];
    let mut rule_errs: Vec<Vec<String>> = vec![Vec::new(); prog.rules.len()];
    for _round in 0..(prog.rules.len() * 4 + 8) {
        let mut changed = false;
        for (ri, r) in prog.rules.iter().enumerate() {
            let mut errs = Vec::new();
            let (vars, head) = inf.rule_pass(r, &mut errs);
            rule_vars[ri] = vars;
            rule_errs[ri] = errs;
            if inf.fixed.contains_key(&r.head.pred) {
                continue;
            }
            let cols = inf.cols.get_mut(&r.head.pred).unwrap();
            if cols.len() != head.len() {
                continue;
            }
            for (slot, t) in cols.iter_mut().zip(head) {
                let new = match (*slot, t) {
                    (None, t) => t,
                    (Some(a), Some(b)) => Some(join_ty(a, b)),
                    (s, None) => s,
                };
                if new != *slot {
                    *slot = new;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut diags = std::mem::take(&mut inf.diags);
    for (ri, r) in prog.rules.iter().enumerate() {
        for e in rule_errs[ri].drain(..) {
            diags.push(Diagnostic {
                rule: Some(ri),
                message: e,
            });
        }
        let vars = &rule_vars[ri];
        for l in &r.body {
            let cmps: Vec<&Comparison> = match l {
                Literal::Cmp(c) => vec![c],
                Literal::IfThenElse {
                    cond,
                    then_bind,
                    else_bind,
                } => vec![cond, then_bind, else_bind],
                _ => vec![],
            };
            for c in cmps {
                if let Some(m) = Infer::check_comparison(c, vars) {
                    diags.push(Diagnostic {
                        rule: Some(ri),
                        message: m,
                    });
                }
            }
        }
        // Head values flowing into a fixed-type column must fit it.
        if let Some(fx) = inf.fixed.get(&r.head.pred) {
            for (i, a) in r.head.args.iter().enumerate() {
                let t = match a {
                    HeadArg::Term(t) => expr_ty(t, vars).ok().flatten(),
                    HeadArg::Agg(s) if s.func.is_count() => Some(Ty::Int),
                    HeadArg::Agg(s) => s.value_var().and_then(|v| vars.get(v).copied()),
                };
                if let (Some(t), Some(&c)) = (t, fx.get(i)) {
                    if t != c && !(t == Ty::Int && c == Ty::Float) {
                        diags.push(Diagnostic {
                            rule: Some(ri),
                            message: format!("head column {} of {} is {c} but receives {t}", i + 1, r.head.pred),
                        });
                    }
                }
            }
        }
        if let Some((_, s)) = r.head.aggregate() {
            if s.func.is_sum() {
                if let Some(Ty::Str) = s.value_var().and_then(|v| vars.get(v)) {
                    diags.push(Diagnostic {
                        rule: Some(ri),
                        message: format!("{} over a String value", s.func.name()),
                    });
                }
            }
        }
    }
    let mut preds: BTreeMap<String, Vec<Ty>> = inf.fixed.clone();
    for (p, c) in &inf.cols {
        if !preds.contains_key(p) {
            preds.insert(p.clone(), c.iter().map(|t| t.unwrap_or(Ty::Int)).collect());
        }
    }
    // Variables nothing constrains default to Integer as well.
    for (ri, r) in prog.rules.iter().enumerate() {
        for v in r.all_vars() {
            rule_vars[ri].entry(v).or_insert(Ty::Int);
        }
    }
    diags.sort();
    diags.dedup();
    (TypeInfo { preds, rule_vars }, diags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    #[test]
    fn division_is_float_and_counts_are_int() {
        let p = parse_program(
            "database({e(X:Integer, Y:Integer)}).\n\
             n(count<X>) <- e(X, _).\n\
             r(X, Q) <- e(X, Y), n(N), Q = Y / N.",
        )
        .unwrap();
        let (t, d) = infer_types(&p, &BTreeMap::new());
        assert!(d.is_empty(), "{d:?}");
        assert_eq!(t.pred("n").unwrap(), &[Ty::Int]);
        assert_eq!(t.pred("r").unwrap(), &[Ty::Int, Ty::Float]);
    }

    #[test]
    fn literal_coerces_but_variables_do_not() {
        let p = parse_program(
            "database({a(X:Float), b(Y:Integer)}).\n\
             p(X) <- a(X), X >= 1.\n\
             q(X) <- a(X), b(Y), X < Y.",
        )
        .unwrap();
        let (_, d) = infer_types(&p, &BTreeMap::new());
        assert_eq!(d.len(), 1, "{d:?}");
        assert_eq!(d[0].rule, Some(1));
    }

    #[test]
    fn string_number_mix_rejected() {
        let p = parse_program("database({a(X:String)}).\np(X) <- a(X), X > 3.").unwrap();
        let (_, d) = infer_types(&p, &BTreeMap::new());
        assert_eq!(d.len(), 1);
    }

    #[test]
    fn recursive_columns_follow_base_types() {
        let p = parse_program(
            "database({darc(X:String, Y:String, D:Float)}).\n\
             dpath(X, Z, min<D>) <- darc(X, Z, D).\n\
             dpath(X, Z, min<D>) <- dpath(X, Y, D1), darc(Y, Z, D2), D = D1 + D2.",
        )
        .unwrap();
        let (t, d) = infer_types(&p, &BTreeMap::new());
        assert!(d.is_empty(), "{d:?}");
        assert_eq!(t.pred("dpath").unwrap(), &[Ty::Str, Ty::Str, Ty::Float]);
    }
}
