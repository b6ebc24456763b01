//! Rules lowered to numbered variable slots and an evaluation order.
//!
//! Body literals run left to right. A builtin or negation whose inputs are
//! not bound yet waits until they are.

use std::collections::{BTreeSet, HashMap};

use super::EvalError;
use crate::frontend::{AggFunc, ArithOp, CmpOp, Comparison, Const, ExtremaKind, HeadArg, Literal, Rule, Term, POSINT};
use crate::storage::{Ty, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(Value),
    Slot(usize),
    Arith(ArithOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn slots(&self, out: &mut Vec<usize>) {
        match self {
            Expr::Slot(s) => out.push(*s),
            Expr::Arith(_, a, b) => {
                a.slots(out);
                b.slots(out);
            }
            Expr::Const(_) => {}
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ArgPat {
    /// First occurrence of a variable: take the column's value.
    Bind(usize),
    /// Must equal the value of an expression over bound slots.
    Check(Expr),
    /// `_`.
    Skip,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CmpIr {
    pub op: CmpOp,
    pub left: Expr,
    pub right: Expr,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    Scan {
        lit: usize,
        pred: String,
        args: Vec<ArgPat>,
    },
    /// Negated atom; `None` arguments match anything.
    Absent {
        lit: usize,
        pred: String,
        args: Vec<Option<Expr>>,
    },
    Posint {
        n: Expr,
        k: ArgPat,
    },
    Filter(CmpIr),
    Assign {
        slot: usize,
        expr: Expr,
    },
    Branch {
        cond: CmpIr,
        then: Box<Step>,
        otherwise: Box<Step>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggIr {
    pub func: AggFunc,
    pub col: usize,
    /// Witness slots for count and sum; for a sum without explicit witness
    /// this is empty and the value itself serves.
    pub witness: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExtremaIr {
    pub kind: ExtremaKind,
    pub group: Vec<usize>,
    pub cost: usize,
}

#[derive(Clone, Debug)]
pub struct RuleIr {
    /// Index of the rule in its program.
    pub index: usize,
    pub head_pred: String,
    pub slots: Vec<String>,
    pub slot_tys: Vec<Ty>,
    /// One expression per head column. Count columns hold the constant 1.
    pub head: Vec<Expr>,
    pub head_tys: Vec<Ty>,
    pub agg: Option<AggIr>,
    pub steps: Vec<Step>,
    pub extrema: Option<ExtremaIr>,
}

impl RuleIr {
    /// Steps that read a stored relation, with the body literal they came from.
    pub fn scans(&self) -> impl Iterator<Item = (usize, &str)> {
        self.steps.iter().filter_map(|s| match s {
            Step::Scan { lit, pred, .. } => Some((*lit, pred.as_str())),
            _ => None,
        })
    }
}

struct Lower<'a> {
    slots: Vec<String>,
    index: HashMap<String, usize>,
    var_tys: &'a HashMap<String, Ty>,
}

impl<'a> Lower<'a> {
    fn slot(&mut self, v: &str) -> usize {
        if let Some(&s) = self.index.get(v) {
            return s;
        }
        self.slots.push(v.to_string());
        self.index.insert(v.to_string(), self.slots.len() - 1);
        self.slots.len() - 1
    }

    fn expr(&mut self, t: &Term) -> Result<Expr, EvalError> {
        Ok(match t {
            Term::Var(v) => Expr::Slot(self.slot(v)),
            Term::Anon => return Err(EvalError::Unsupported("`_` inside an expression".into())),
            Term::Const(c) => Expr::Const(match c {
                Const::Int(i) => Value::Int(*i),
                Const::Float(x) => Value::Float(*x),
                Const::Str(s) => Value::str(s),
            }),
            Term::Arith(op, a, b) => Expr::Arith(*op, Box::new(self.expr(a)?), Box::new(self.expr(b)?)),
        })
    }

    fn cmp(&mut self, c: &Comparison) -> Result<CmpIr, EvalError> {
        Ok(CmpIr {
            op: c.op,
            left: self.expr(&c.left)?,
            right: self.expr(&c.right)?,
        })
    }
}

fn term_bound(t: &Term, bound: &BTreeSet<String>) -> bool {
    !t.has_anon() && t.vars().iter().all(|v| bound.contains(*v))
}

/// Lowers `c` if it can run with `bound`: an assignment when one side is a
/// lone unbound variable, a filter when everything is bound.
fn lower_cmp(c: &Comparison, bound: &mut BTreeSet<String>, lw: &mut Lower) -> Result<Option<Step>, EvalError> {
    let lb = term_bound(&c.left, bound);
    let rb = term_bound(&c.right, bound);
    if lb && rb {
        return Ok(Some(Step::Filter(lw.cmp(c)?)));
    }
    if c.op == CmpOp::Eq {
        let (var, other) = match (&c.left, &c.right) {
            (Term::Var(v), r) if !lb && rb => (v, r),
            (l, Term::Var(v)) if lb && !rb => (v, l),
            _ => return Ok(None),
        };
        let expr = lw.expr(other)?;
        let slot = lw.slot(var);
        bound.insert(var.clone());
        return Ok(Some(Step::Assign { slot, expr }));
    }
    Ok(None)
}

fn try_lower(l: &Literal, lit: usize, bound: &mut BTreeSet<String>, lw: &mut Lower) -> Result<Option<Step>, EvalError> {
    match l {
        Literal::Atom { atom, negated: false } if atom.pred == POSINT => {
            if atom.args.len() != 2 || !term_bound(&atom.args[0], bound) {
                return Ok(None);
            }
            let n = lw.expr(&atom.args[0])?;
            let k = match &atom.args[1] {
                Term::Anon => ArgPat::Skip,
                Term::Var(v) if !bound.contains(v) => {
                    bound.insert(v.clone());
                    ArgPat::Bind(lw.slot(v))
                }
                t if term_bound(t, bound) => ArgPat::Check(lw.expr(t)?),
                t => return Err(EvalError::Unsupported(format!("posint second argument {t}"))),
            };
            Ok(Some(Step::Posint { n, k }))
        }
        Literal::Atom { atom, negated: false } => {
            let mut args = Vec::new();
            let mut now: BTreeSet<String> = BTreeSet::new();
            for t in &atom.args {
                args.push(match t {
                    Term::Anon => ArgPat::Skip,
                    Term::Var(v) if !bound.contains(v) && !now.contains(v) => {
                        now.insert(v.clone());
                        ArgPat::Bind(lw.slot(v))
                    }
                    Term::Var(v) => ArgPat::Check(Expr::Slot(lw.slot(v))),
                    t if term_bound(t, bound) => ArgPat::Check(lw.expr(t)?),
                    t => {
                        return Err(EvalError::Unsupported(format!(
                            "argument {t} of {atom} needs variables bound before it"
                        )))
                    }
                });
            }
            bound.extend(now);
            Ok(Some(Step::Scan {
                lit,
                pred: atom.pred.clone(),
                args,
            }))
        }
        Literal::Atom { atom, negated: true } => {
            if !atom.args.iter().all(|t| matches!(t, Term::Anon) || term_bound(t, bound)) {
                return Ok(None);
            }
            let mut args = Vec::new();
            for t in &atom.args {
                args.push(match t {
                    Term::Anon => None,
                    t => Some(lw.expr(t)?),
                });
            }
            Ok(Some(Step::Absent {
                lit,
                pred: atom.pred.clone(),
                args,
            }))
        }
        Literal::Cmp(c) => lower_cmp(c, bound, lw),
        Literal::IfThenElse {
            cond,
            then_bind,
            else_bind,
        } => {
            if !term_bound(&cond.left, bound) || !term_bound(&cond.right, bound) {
                return Ok(None);
            }
            let mut b1 = bound.clone();
            let mut b2 = bound.clone();
            let (Some(t), Some(e)) = (lower_cmp(then_bind, &mut b1, lw)?, lower_cmp(else_bind, &mut b2, lw)?) else {
                return Ok(None);
            };
            if b1 != b2 {
                return Err(EvalError::Unsupported(format!("branches of {l} bind different variables")));
            }
            *bound = b1;
            Ok(Some(Step::Branch {
                cond: lw.cmp(cond)?,
                then: Box::new(t),
                otherwise: Box::new(e),
            }))
        }
        Literal::Extrema { .. } => unreachable!("extrema goals are not steps"),
        Literal::Vertical { .. } => Err(EvalError::Unsupported("`@` literal left unexpanded".into())),
    }
}

/// Lowers one rule. `var_tys` are the rule's variable types and `head_tys`
/// the head predicate's column types.
pub fn lower_rule(index: usize, rule: &Rule, var_tys: &HashMap<String, Ty>, head_tys: &[Ty]) -> Result<RuleIr, EvalError> {
    let mut lw = Lower {
        slots: Vec::new(),
        index: HashMap::new(),
        var_tys,
    };
    let mut bound: BTreeSet<String> = BTreeSet::new();
    let mut steps = Vec::new();
    let mut pending: Vec<usize> = Vec::new();
    let mut extrema_lit = None;
    for (i, l) in rule.body.iter().enumerate() {
        if matches!(l, Literal::Extrema { .. }) {
            extrema_lit = Some(l);
            continue;
        }
        pending.push(i);
        // Place everything that can run now, earliest first.
        loop {
            let mut progressed = false;
            let mut k = 0;
            while k < pending.len() {
                if let Some(s) = try_lower(&rule.body[pending[k]], pending[k], &mut bound, &mut lw)? {
                    steps.push(s);
                    pending.remove(k);
                    progressed = true;
                    break;
                }
                k += 1;
            }
            if !progressed {
                break;
            }
        }
    }
    if let Some(&i) = pending.first() {
        return Err(EvalError::Unsupported(format!(
            "rule {}: cannot order literal {}; its variables are never bound",
            index + 1,
            rule.body[i]
        )));
    }
    let mut head = Vec::new();
    let mut agg = None;
    for (col, a) in rule.head.args.iter().enumerate() {
        match a {
            HeadArg::Term(t) => head.push(lw.expr(t)?),
            HeadArg::Agg(s) => {
                if s.func.is_count() {
                    head.push(Expr::Const(Value::Int(1)));
                } else {
                    head.push(Expr::Slot(lw.slot(&s.vars[0])));
                }
                let witness = s.witness_vars().iter().map(|v| lw.slot(v)).collect();
                agg = Some(AggIr { func: s.func, col, witness });
            }
        }
    }
    let extrema = match extrema_lit {
        Some(Literal::Extrema { kind, group, cost }) => Some(ExtremaIr {
            kind: *kind,
            group: group.iter().map(|g| lw.slot(g)).collect(),
            cost: lw.slot(&cost[0]),
        }),
        _ => None,
    };
    let slot_tys = lw
        .slots
        .iter()
        .map(|v| lw.var_tys.get(v).copied().unwrap_or(Ty::Int))
        .collect();
    Ok(RuleIr {
        index,
        head_pred: rule.head.pred.clone(),
        slots: lw.slots,
        slot_tys,
        head,
        head_tys: head_tys.to_vec(),
        agg,
        steps,
        extrema,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_rule;

    fn lower(src: &str) -> RuleIr {
        let r = parse_rule(src).unwrap();
        lower_rule(0, &r, &HashMap::new(), &vec![Ty::Int; r.head.arity()]).unwrap()
    }

    #[test]
    fn deferred_builtins() {
        let ir = lower("p(X, Z) <- Z = X + 1, X > 0, q(X).");
        assert!(matches!(ir.steps[0], Step::Scan { .. }));
        assert!(matches!(ir.steps[1], Step::Assign { .. }));
        assert!(matches!(ir.steps[2], Step::Filter(_)));
    }

    #[test]
    fn repeated_variable_checks() {
        let ir = lower("p(X) <- e(X, X).");
        match &ir.steps[0] {
            Step::Scan { args, .. } => {
                assert_eq!(args[0], ArgPat::Bind(0));
                assert_eq!(args[1], ArgPat::Check(Expr::Slot(0)));
            }
            s => panic!("{s:?}"),
        }
    }

    #[test]
    fn aggregate_and_extrema() {
        let ir = lower("c(Y, sum<C, X>) <- e(X, Y, C).");
        let a = ir.agg.unwrap();
        assert_eq!(a.col, 1);
        assert_eq!(a.witness.len(), 1);
        let ir = lower("s(X, D) <- d(X, D), is_min((X), (D)).");
        assert_eq!(ir.extrema.unwrap().group, vec![0]);
        assert_eq!(ir.steps.len(), 1);
    }
}
