//! Evaluation engines: the naive reference, semi-naive and its parallel
//! partitioned form.

pub mod builtins;
pub mod ir;
pub mod naive;
pub mod psn;
pub mod raw;
pub mod stratified;

use std::collections::BTreeSet;

use crate::frontend::{Query, Term};
use crate::storage::{StorageError, Value};

pub use builtins::eval_builtin;
pub use naive::{naive_eval, Db, NaiveRun, DEFAULT_MAX_ITERATIONS};
pub use psn::{psn_eval, EngineConfig, Evaluation, Stats};
pub use stratified::{eval_stratified, Engine, RunConfig, RunOutput};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("division by zero in {0}")]
    DivisionByZero(String),
    #[error("integer overflow in {0}")]
    Overflow(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("no fixpoint for {{{}}} after {iterations} iterations", .preds.join(", "))]
    NonTermination { preds: Vec<String>, iterations: usize },
    #[error("memory cap of {cap_bytes} bytes exceeded ({used_bytes} in use)")]
    MemoryCap { cap_bytes: usize, used_bytes: usize },
    #[error("aggregate in recursion rejected: {0}")]
    Rejected(String),
    #[error(transparent)]
    Storage(#[from] StorageError),
}

/// Rows of `rel` matching the query goal's constants and repeated variables.
pub fn answer(rel: &BTreeSet<Vec<Value>>, q: &Query) -> BTreeSet<Vec<Value>> {
    let consts: Vec<Option<Value>> = q
        .goal
        .args
        .iter()
        .map(|t| {
            t.is_ground()
                .then(|| builtins::eval_expr(&ground_expr(t), &[]).ok())
                .flatten()
        })
        .collect();
    rel.iter()
        .filter(|r| {
            r.len() == consts.len()
                && consts.iter().zip(r.iter()).all(|(c, v)| c.as_ref().is_none_or(|c| builtins::values_equal(c, v)))
                && q.goal.args.iter().enumerate().all(|(i, t)| match t {
                    Term::Var(x) => q.goal.args[..i]
                        .iter()
                        .position(|u| u.as_var() == Some(x))
                        .is_none_or(|j| r[i] == r[j]),
                    _ => true,
                })
        })
        .cloned()
        .collect()
}

fn ground_expr(t: &Term) -> ir::Expr {
    use crate::frontend::Const;
    match t {
        Term::Const(Const::Int(i)) => ir::Expr::Const(Value::Int(*i)),
        Term::Const(Const::Float(x)) => ir::Expr::Const(Value::Float(*x)),
        Term::Const(Const::Str(s)) => ir::Expr::Const(Value::str(s)),
        Term::Arith(op, a, b) => ir::Expr::Arith(*op, Box::new(ground_expr(a)), Box::new(ground_expr(b))),
        _ => ir::Expr::Const(Value::Int(0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_query;

    #[test]
    fn query_filters() {
        let rel: BTreeSet<Vec<Value>> = [[1, 2], [1, 1], [2, 2]]
            .iter()
            .map(|r| r.iter().map(|&x| Value::Int(x)).collect())
            .collect();
        assert_eq!(answer(&rel, &parse_query("tc(1, Y).").unwrap()).len(), 2);
        assert_eq!(answer(&rel, &parse_query("tc(X, X).").unwrap()).len(), 2);
        assert_eq!(answer(&rel, &parse_query("tc(X, Y).").unwrap()).len(), 3);
    }
}
