//! Arithmetic, comparisons, `posint` and if-then-else over decoded values.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::ir::{CmpIr, Expr};
use super::EvalError;
use crate::frontend::{ArithOp, CmpOp, Comparison, Const, Literal, Term, POSINT};
use crate::storage::{Ty, Value};

pub fn arith(op: ArithOp, a: &Value, b: &Value) -> Result<Value, EvalError> {
    let overflow = || EvalError::Overflow(format!("{a} {} {b}", op.symbol()));
    match (a, b) {
        (Value::Int(x), Value::Int(y)) if op != ArithOp::Div => {
            let r = match op {
                ArithOp::Add => x.checked_add(*y),
                ArithOp::Sub => x.checked_sub(*y),
                ArithOp::Mul => x.checked_mul(*y),
                ArithOp::Div => unreachable!(),
            };
            r.map(Value::Int).ok_or_else(overflow)
        }
        _ => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(EvalError::Type(format!("arithmetic on {a} and {b}")));
            };
            if op == ArithOp::Div && y == 0.0 {
                return Err(EvalError::DivisionByZero(format!("{a} / {b}")));
            }
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => x / y,
            };
            if r.is_nan() {
                return Err(EvalError::Type(format!("{a} {} {b} is not a number", op.symbol())));
            }
            Ok(Value::Float(r))
        }
    }
}

/// Numbers compare by value across Integer and Float; strings by text.
/// `None` for a string against a number.
pub fn compare(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        (Value::Str(_), _) | (_, Value::Str(_)) => None,
        _ => Some(a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())),
    }
}

pub fn holds(op: CmpOp, a: &Value, b: &Value) -> bool {
    match compare(a, b) {
        Some(o) => op.holds(o),
        None => op == CmpOp::Ne,
    }
}

pub fn values_equal(a: &Value, b: &Value) -> bool {
    compare(a, b) == Some(Ordering::Equal)
}

/// Converts `v` for storage in a column of type `ty`.
pub fn coerce(v: Value, ty: Ty) -> Result<Value, EvalError> {
    match (v, ty) {
        (Value::Int(i), Ty::Float) => Ok(Value::Float(i as f64)),
        (Value::Float(x), Ty::Float) => Ok(Value::Float(if x == 0.0 { 0.0 } else { x })),
        (v, t) if v.ty() == t => Ok(v),
        (v, t) => Err(EvalError::Type(format!("{v} stored in a {t} column"))),
    }
}

pub fn eval_expr(e: &Expr, slots: &[Value]) -> Result<Value, EvalError> {
    Ok(match e {
        Expr::Const(v) => v.clone(),
        Expr::Slot(s) => slots[*s].clone(),
        Expr::Arith(op, a, b) => arith(*op, &eval_expr(a, slots)?, &eval_expr(b, slots)?)?,
    })
}

pub fn eval_cmp(c: &CmpIr, slots: &[Value]) -> Result<bool, EvalError> {
    Ok(holds(c.op, &eval_expr(&c.left, slots)?, &eval_expr(&c.right, slots)?))
}

/// Upper end of `posint(N, _)`; non-positive `N` enumerates nothing.
pub fn posint_bound(n: &Value) -> Result<i64, EvalError> {
    match n {
        Value::Int(i) => Ok(*i),
        v => Err(EvalError::Type(format!("posint over non-integer {v}"))),
    }
}

fn term_value(t: &Term, b: &BTreeMap<String, Value>) -> Result<Option<Value>, EvalError> {
    Ok(match t {
        Term::Var(v) => b.get(v).cloned(),
        Term::Anon => None,
        Term::Const(Const::Int(i)) => Some(Value::Int(*i)),
        Term::Const(Const::Float(x)) => Some(Value::Float(*x)),
        Term::Const(Const::Str(s)) => Some(Value::str(s)),
        Term::Arith(op, l, r) => match (term_value(l, b)?, term_value(r, b)?) {
            (Some(x), Some(y)) => Some(arith(*op, &x, &y)?),
            _ => None,
        },
    })
}

fn unbound(what: &dyn std::fmt::Display) -> EvalError {
    EvalError::Unsupported(format!("{what} has unbound inputs"))
}

fn apply_cmp(c: &Comparison, b: &BTreeMap<String, Value>) -> Result<Option<BTreeMap<String, Value>>, EvalError> {
    let l = term_value(&c.left, b)?;
    let r = term_value(&c.right, b)?;
    match (l, r) {
        (Some(x), Some(y)) => Ok(holds(c.op, &x, &y).then(|| b.clone())),
        (None, Some(y)) | (Some(y), None) if c.op == CmpOp::Eq => {
            let var = match (&c.left, &c.right) {
                (Term::Var(v), _) if !b.contains_key(v) => v,
                (_, Term::Var(v)) if !b.contains_key(v) => v,
                _ => return Err(unbound(c)),
            };
            let mut out = b.clone();
            out.insert(var.clone(), y);
            Ok(Some(out))
        }
        _ => Err(unbound(c)),
    }
}

/// Runs one builtin literal against a binding and returns every extended
/// binding it produces.
pub fn eval_builtin(lit: &Literal, b: &BTreeMap<String, Value>) -> Result<Vec<BTreeMap<String, Value>>, EvalError> {
    match lit {
        Literal::Cmp(c) => Ok(apply_cmp(c, b)?.into_iter().collect()),
        Literal::IfThenElse {
            cond,
            then_bind,
            else_bind,
        } => {
            let (Some(l), Some(r)) = (term_value(&cond.left, b)?, term_value(&cond.right, b)?) else {
                return Err(unbound(lit));
            };
            let branch = if holds(cond.op, &l, &r) { then_bind } else { else_bind };
            Ok(apply_cmp(branch, b)?.into_iter().collect())
        }
        Literal::Atom { atom, negated: false } if atom.pred == POSINT && atom.args.len() == 2 => {
            let n = term_value(&atom.args[0], b)?.ok_or_else(|| unbound(lit))?;
            let n = posint_bound(&n)?;
            let mut out = Vec::new();
            for k in 1..=n.max(0) {
                let kv = Value::Int(k);
                match &atom.args[1] {
                    Term::Var(v) if !b.contains_key(v) => {
                        let mut e = b.clone();
                        e.insert(v.clone(), kv);
                        out.push(e);
                    }
                    Term::Anon => out.push(b.clone()),
                    t => {
                        if term_value(t, b)?.is_some_and(|x| values_equal(&x, &kv)) {
                            out.push(b.clone());
                        }
                    }
                }
            }
            Ok(out)
        }
        l => Err(EvalError::Unsupported(format!("{l} is not a builtin"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_rule;

    fn body(src: &str) -> Literal {
        parse_rule(&format!("h <- {src}.")).unwrap().body.remove(0)
    }

    fn run(src: &str, b: &[(&str, Value)]) -> Vec<BTreeMap<String, Value>> {
        let b = b.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
        eval_builtin(&body(src), &b).unwrap()
    }

    #[test]
    fn assignment() {
        let r = run("D = 2 + 3", &[]);
        assert_eq!(r[0]["D"], Value::Int(5));
    }

    #[test]
    fn cap_branch() {
        let r = run("if(5 > 3 then D = 3 else D = 5)", &[]);
        assert_eq!(r[0]["D"], Value::Int(3));
        let r = run("if(2 > 3 then D = 3 else D = 2)", &[]);
        assert_eq!(r[0]["D"], Value::Int(2));
    }

    #[test]
    fn posint_enumerates() {
        let r = run("posint(3, K)", &[]);
        let ks: Vec<Value> = r.iter().map(|b| b["K"].clone()).collect();
        assert_eq!(ks, vec![Value::Int(1), Value::Int(2), Value::Int(3)]);
        assert!(run("posint(0, K)", &[]).is_empty());
    }

    #[test]
    fn division() {
        assert_eq!(arith(ArithOp::Div, &Value::Int(3), &Value::Int(2)).unwrap(), Value::Float(1.5));
        assert!(matches!(
            arith(ArithOp::Div, &Value::Int(1), &Value::Int(0)),
            Err(EvalError::DivisionByZero(_))
        ));
        assert!(matches!(
            arith(ArithOp::Add, &Value::Int(i64::MAX), &Value::Int(1)),
            Err(EvalError::Overflow(_))
        ));
    }

    #[test]
    fn mixed_numeric_comparison() {
        assert!(holds(CmpOp::Eq, &Value::Int(2), &Value::Float(2.0)));
        assert!(holds(CmpOp::Lt, &Value::Int(2), &Value::Float(2.5)));
        assert!(holds(CmpOp::Ne, &Value::str("a"), &Value::Int(1)));
    }
}
