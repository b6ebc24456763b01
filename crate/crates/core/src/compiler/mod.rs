//! From a parsed program to strata of rules ready for evaluation.

pub mod andor;
pub mod desugar;
pub mod pcg;
pub mod split;

use std::collections::BTreeMap;

pub use andor::{build_and_or_tree, rule_tree, AndOrTree, Node, NodeKind};
pub use desugar::{aligned_extremum, desugar_head_aggregates, rewrite_extrema_negation, DesugarError};
pub use pcg::{build_pcg, classify_recursion, stratify, EdgeLabel, NonStratifiable, Pcg, RecursionClass, Stratum};
pub use split::{choose_driver, split_exit_recursive, DeltaRule, StratumPlan, Version};

use crate::frontend::{
    expand_program, infer_types, validate_with, AggFunc, Diagnostic, ExtremaKind, Program, TypeInfo, VerticalError,
};
use crate::storage::Ty;

#[derive(Debug, thiserror::Error)]
pub enum CompileError {
    #[error("{}", .0.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Vertical(#[from] VerticalError),
    #[error(transparent)]
    Desugar(#[from] DesugarError),
    #[error(transparent)]
    NonStratifiable(#[from] NonStratifiable),
}

/// How a predicate's relation is stored and updated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PredKind {
    /// Loaded from facts, never derived.
    Base,
    /// A set of tuples.
    Set,
    /// One tuple per group, holding the least (greatest) value at `col`.
    Extremum { kind: ExtremaKind, col: usize },
    /// Count, sum and their monotonic variants, with the value at `col`.
    Accum { func: AggFunc, col: usize, witness_arity: usize },
}

impl PredKind {
    /// Column holding the aggregated value, if any.
    pub fn value_col(&self) -> Option<usize> {
        match *self {
            PredKind::Extremum { col, .. } | PredKind::Accum { col, .. } => Some(col),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Compiled {
    /// The program as written, with `@` literals expanded.
    pub source: Program,
    /// Head min/max rewritten; what the evaluators run.
    pub program: Program,
    pub pcg: Pcg,
    pub strata: Vec<Stratum>,
    pub types: TypeInfo,
    pub kinds: BTreeMap<String, PredKind>,
    pub warnings: Vec<String>,
}

impl Compiled {
    pub fn kind(&self, pred: &str) -> PredKind {
        self.kinds.get(pred).copied().unwrap_or(PredKind::Base)
    }

    pub fn types_of(&self, pred: &str) -> Option<&[Ty]> {
        self.types.pred(pred)
    }

    pub fn stratum_of(&self, pred: &str) -> Option<usize> {
        self.strata.iter().position(|s| s.contains(pred))
    }

    /// Whether a rule's extrema goal filters that rule alone rather than
    /// the whole predicate.
    pub fn filters_per_rule(&self, rule: usize) -> bool {
        let r = &self.program.rules[rule];
        r.extrema_goal().is_some() && !matches!(self.kind(&r.head.pred), PredKind::Extremum { .. })
    }
}

fn pred_kinds(prog: &Program, pcg: &Pcg) -> Result<BTreeMap<String, PredKind>, DesugarError> {
    let mut out = BTreeMap::new();
    for p in prog.base_preds() {
        out.insert(p, PredKind::Base);
    }
    for p in prog.derived_preds() {
        let agg = prog.rules_of(&p).find_map(|(_, r)| r.head.aggregate().map(|(i, s)| (i, s.clone())));
        let kind = if let Some((col, spec)) = agg {
            PredKind::Accum {
                func: spec.func,
                col,
                witness_arity: spec.witness_vars().len(),
            }
        } else if pcg.is_recursive(&p) {
            match aligned_extremum(prog, &p)? {
                Some((kind, col)) => PredKind::Extremum { kind, col },
                None => PredKind::Set,
            }
        } else {
            PredKind::Set
        };
        out.insert(p, kind);
    }
    Ok(out)
}

/// Expands, validates, desugars and stratifies. `edb` gives column types of
/// facts loaded from outside the program text.
pub fn compile(prog: &Program, edb: &BTreeMap<String, Vec<Ty>>) -> Result<Compiled, CompileError> {
    let source = expand_program(prog)?;
    let diags = validate_with(&source, edb);
    if !diags.is_empty() {
        return Err(CompileError::Invalid(diags));
    }
    let mut program = desugar_head_aggregates(&source, &build_pcg(&source))?;
    // Facts of derived predicates become body-less rules of their stratum.
    let derived = program.derived_preds();
    let (inline, base): (Vec<_>, Vec<_>) = program.facts.drain(..).partition(|f| derived.contains(&f.pred));
    program.facts = base;
    program.rules.extend(inline.into_iter().map(|f| crate::frontend::Rule {
        head: f.to_head(),
        body: Vec::new(),
    }));
    for (ri, r) in program.rules.iter().enumerate() {
        let goals = r.body.iter().filter(|l| matches!(l, crate::frontend::Literal::Extrema { .. })).count();
        if goals > 1 {
            return Err(DesugarError::SeveralExtrema { rule: ri }.into());
        }
        if let Some((_, _, cost)) = r.extrema_goal() {
            if cost.len() != 1 {
                return Err(DesugarError::CostArity { rule: ri }.into());
            }
        }
    }
    let pcg = build_pcg(&program);
    let strata = stratify(&pcg, &program)?;
    let kinds = pred_kinds(&program, &pcg)?;
    let (types, tdiags) = infer_types(&program, edb);
    if !tdiags.is_empty() {
        return Err(CompileError::Invalid(tdiags));
    }
    let mut warnings = Vec::new();
    for s in &strata {
        if let Some(d) = split_exit_recursive(s, &program, None).diagnostics.into_iter().next() {
            warnings.push(d);
        }
    }
    Ok(Compiled {
        source,
        program,
        pcg,
        strata,
        types,
        kinds,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    fn compiled(src: &str) -> Compiled {
        compile(&parse_program(src).unwrap(), &BTreeMap::new()).unwrap()
    }

    #[test]
    fn kinds() {
        let c = compiled(
            "dpath(X,Z,min<D>) <- darc(X,Z,D).\n\
             dpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.\n\
             cnt(X, count<Y>) <- dpath(X, Y, _).\n\
             best(min<D>) <- dpath(_, _, D).",
        );
        assert_eq!(c.kind("darc"), PredKind::Base);
        assert_eq!(
            c.kind("dpath"),
            PredKind::Extremum {
                kind: ExtremaKind::Min,
                col: 2
            }
        );
        assert!(matches!(c.kind("cnt"), PredKind::Accum { func: AggFunc::Count, col: 1, .. }));
        assert_eq!(c.kind("best"), PredKind::Set);
        assert_eq!(c.kind("best_min_aux"), PredKind::Set);
        let final_rule = c.program.rules.iter().position(|r| r.head.pred == "best").unwrap();
        assert!(c.filters_per_rule(final_rule));
        assert_eq!(c.types_of("best"), Some(&[Ty::Int][..]));
    }

    #[test]
    fn invalid_program() {
        let e = compile(&parse_program("p(X,Y) <- q(X).").unwrap(), &BTreeMap::new()).unwrap_err();
        assert!(matches!(e, CompileError::Invalid(_)));
    }

    #[test]
    fn misaligned_recursive_extrema() {
        let e = compile(
            &parse_program("p(X,D) <- e(X,D). p(X,D) <- p(Y,C), e(Y,X), D = C + 1, is_min((Y),(D)).").unwrap(),
            &BTreeMap::new(),
        )
        .unwrap_err();
        assert!(matches!(e, CompileError::Desugar(DesugarError::Misaligned { .. })));
    }
}
