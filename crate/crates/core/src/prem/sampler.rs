//! Semantic check: compare constrain(T(I)) with constrain(T(constrain(I)))
//! over small interpretations I, exhaustively when the space is small and
//! on seeded random draws otherwise.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ConstraintVector, PremVerdict};
use crate::evaluator::ir::{lower_rule, RuleIr};
use crate::evaluator::naive::apply_once;
use crate::evaluator::{Db, EvalError};
use crate::frontend::{infer_types, CmpOp, HeadArg, Literal, Program, Rule, Term, POSINT};
use crate::storage::{Ty, Value};

#[derive(Clone, Debug)]
pub struct SamplerOptions {
    /// Constants 1..=domain_size fill ordinary columns.
    pub domain_size: usize,
    /// Values of columns that feed costs.
    pub weights: Vec<i64>,
    pub trials: usize,
    pub seed: u64,
    /// Sweep every interpretation when there are at most this many
    /// candidate facts.
    pub exhaustive_max_facts: usize,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            domain_size: 4,
            weights: vec![1, 2, 3],
            trials: 512,
            seed: 0,
            exhaustive_max_facts: 16,
        }
    }
}

fn collect_numeric<'a>(t: &'a Term, out: &mut BTreeSet<&'a str>) {
    if let Term::Arith(..) = t {
        out.extend(t.vars());
    }
}

/// Columns whose values flow into arithmetic, orderings, aggregates or
/// constrained costs.
fn weight_columns(rules: &[Rule], vector: &ConstraintVector) -> BTreeSet<(String, usize)> {
    let mut out: BTreeSet<(String, usize)> = vector
        .constraints
        .iter()
        .filter_map(|(p, c)| c.cost.map(|k| (p.clone(), k)))
        .collect();
    for r in rules {
        let mut numeric: BTreeSet<&str> = BTreeSet::new();
        for l in &r.body {
            match l {
                Literal::Cmp(c) => {
                    collect_numeric(&c.left, &mut numeric);
                    collect_numeric(&c.right, &mut numeric);
                    if !matches!(c.op, CmpOp::Eq | CmpOp::Ne) {
                        numeric.extend(c.vars());
                    }
                }
                Literal::IfThenElse { .. } => numeric.extend(l.vars()),
                Literal::Atom { atom, .. } if atom.pred == POSINT => numeric.extend(atom.vars()),
                _ => {}
            }
        }
        for (j, a) in r.head.args.iter().enumerate() {
            match a {
                HeadArg::Agg(s) => {
                    out.insert((r.head.pred.clone(), j));
                    numeric.extend(s.value_var());
                }
                HeadArg::Term(t) => collect_numeric(t, &mut numeric),
            }
        }
        // Assignment targets of numeric expressions are numeric too.
        for (j, a) in r.head.args.iter().enumerate() {
            if let HeadArg::Term(t) = a {
                if t.vars().iter().any(|v| numeric.contains(v)) {
                    out.insert((r.head.pred.clone(), j));
                }
            }
        }
        for (atom, _) in r.body_atoms() {
            for (j, t) in atom.args.iter().enumerate() {
                if t.vars().iter().any(|v| numeric.contains(v)) {
                    out.insert((atom.pred.clone(), j));
                }
            }
        }
    }
    out
}

struct Space {
    /// Per predicate: per column, the values it may take.
    domains: BTreeMap<String, Vec<Vec<Value>>>,
}

fn make_value(i: i64, ty: Ty) -> Value {
    match ty {
        Ty::Int => Value::Int(i),
        Ty::Float => Value::Float(i as f64),
        Ty::Str => Value::str(&format!("c{i}")),
    }
}

impl Space {
    fn candidates(&self, p: &str) -> usize {
        self.domains[p].iter().map(|d| d.len()).product()
    }

    fn all_facts(&self) -> Vec<(String, Vec<Value>)> {
        let mut out = Vec::new();
        for (p, cols) in &self.domains {
            let mut rows: Vec<Vec<Value>> = vec![Vec::new()];
            for d in cols {
                rows = rows
                    .into_iter()
                    .flat_map(|r| {
                        d.iter().map(move |v| {
                            let mut r = r.clone();
                            r.push(v.clone());
                            r
                        })
                    })
                    .collect();
            }
            out.extend(rows.into_iter().map(|r| (p.clone(), r)));
        }
        out
    }

    fn random(&self, rng: &mut ChaCha8Rng, max_rows: usize) -> Db {
        let mut db = Db::new();
        for (p, cols) in &self.domains {
            let n = rng.gen_range(0..=max_rows.min(self.candidates(p)));
            let set: &mut BTreeSet<Vec<Value>> = db.entry(p.clone()).or_default();
            for _ in 0..n {
                set.insert(cols.iter().map(|d| d[rng.gen_range(0..d.len())].clone()).collect());
            }
        }
        db
    }
}

struct Problem {
    irs: Vec<RuleIr>,
    types: BTreeMap<String, Vec<Ty>>,
    heads: BTreeSet<String>,
}

impl Problem {
    fn step(&self, interp: &Db) -> Result<Db, EvalError> {
        let mut out = apply_once(&self.irs, interp, &Db::new(), &self.types)?;
        out.retain(|p, _| self.heads.contains(p));
        Ok(out)
    }

    /// `Some((direct, through))` when they differ on `interp`.
    fn counterexample(&self, vector: &ConstraintVector, interp: &Db) -> Option<(Db, Db)> {
        let direct = vector.apply(&self.step(interp).ok()?);
        let through = vector.apply(&self.step(&vector.apply(interp)).ok()?);
        (direct != through).then_some((direct, through))
    }
}

/// Tests `vector` against the immediate-consequence operator of `rules`
/// (extrema goals ignored). `edb` types the predicates the rules only read.
pub fn semantic_prem_test(
    rules: &[Rule],
    vector: &ConstraintVector,
    edb: &BTreeMap<String, Vec<Ty>>,
    opts: &SamplerOptions,
) -> Result<PremVerdict, EvalError> {
    let rules: Vec<Rule> = rules.iter().map(super::strip_extrema).collect();
    let prog = Program {
        rules: rules.clone(),
        ..Default::default()
    };
    let (info, diags) = infer_types(&prog, edb);
    if let Some(d) = diags.first() {
        return Err(EvalError::Type(d.to_string()));
    }
    let mut irs = Vec::new();
    for (i, r) in rules.iter().enumerate() {
        let tys = info.pred(&r.head.pred).map(|t| t.to_vec()).unwrap_or_default();
        irs.push(lower_rule(i, r, &info.rule_vars[i], &tys)?);
    }
    let heads: BTreeSet<String> = rules.iter().map(|r| r.head.pred.clone()).collect();
    let weights = weight_columns(&rules, vector);
    let mut domains = BTreeMap::new();
    let mut preds: BTreeSet<&str> = heads.iter().map(|s| s.as_str()).collect();
    for r in &rules {
        preds.extend(r.body_atoms().map(|(a, _)| a.pred.as_str()).filter(|p| *p != POSINT));
    }
    let mut arity: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &rules {
        for (a, _) in r.body_atoms() {
            arity.insert(&a.pred, a.args.len());
        }
    }
    for p in preds {
        let tys = match info.pred(p) {
            Some(t) => t.to_vec(),
            None => vec![Ty::Int; arity[p]],
        };
        let cols = tys
            .iter()
            .enumerate()
            .map(|(j, &ty)| {
                if weights.contains(&(p.to_string(), j)) {
                    opts.weights.iter().map(|&w| make_value(w, ty)).collect()
                } else {
                    (1..=opts.domain_size as i64).map(|i| make_value(i, ty)).collect()
                }
            })
            .collect();
        domains.insert(p.to_string(), cols);
    }
    let space = Space { domains };
    let problem = Problem {
        irs,
        types: info.preds.clone(),
        heads,
    };
    let refuted = |interp: Db, (direct, through_constraint): (Db, Db)| PremVerdict::Refuted {
        interpretation: interp,
        direct,
        through_constraint,
    };
    let facts = space.all_facts();
    if facts.len() <= opts.exhaustive_max_facts {
        let total = 1usize << facts.len();
        for mask in 0..total {
            let mut interp: Db = space.domains.keys().map(|p| (p.clone(), BTreeSet::new())).collect();
            for (i, (p, row)) in facts.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    interp.get_mut(p).unwrap().insert(row.clone());
                }
            }
            if let Some(ce) = problem.counterexample(vector, &interp) {
                return Ok(refuted(interp, ce));
            }
        }
        return Ok(PremVerdict::PassedSampling {
            trials: total,
            exhaustive: true,
            seed: opts.seed,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let max_rows = 3 * opts.domain_size.max(1);
    for _ in 0..opts.trials {
        let interp = space.random(&mut rng, max_rows);
        if let Some(ce) = problem.counterexample(vector, &interp) {
            return Ok(refuted(interp, ce));
        }
    }
    Ok(PremVerdict::PassedSampling {
        trials: opts.trials,
        exhaustive: false,
        seed: opts.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_program, ExtremaKind};
    use crate::prem::Constraint;

    fn rules(src: &str) -> Vec<Rule> {
        parse_program(src).unwrap().rules
    }

    const PATHS: &str = "dpath(X,Z,D) <- darc(X,Z,D).\n\
                         dpath(X,Z,D) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.";

    fn small() -> SamplerOptions {
        SamplerOptions {
            domain_size: 2,
            weights: vec![1, 2],
            ..Default::default()
        }
    }

    #[test]
    fn min_paths_sweep_exhaustively() {
        let v = ConstraintVector::new().with("dpath", Constraint::per_group(ExtremaKind::Min, 3, 2));
        let verdict = semantic_prem_test(&rules(PATHS), &v, &BTreeMap::new(), &small()).unwrap();
        assert_eq!(
            verdict,
            PremVerdict::PassedSampling {
                trials: 1 << 16,
                exhaustive: true,
                seed: 0
            }
        );
    }

    #[test]
    fn capped_max_refuted_with_witness() {
        let src = "dpath(X,Z,D) <- darc(X,Z,D).\n\
                   dpath(X,Z,D) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B, D < 3.";
        let v = ConstraintVector::new().with("dpath", Constraint::per_group(ExtremaKind::Max, 3, 2));
        let opts = SamplerOptions {
            domain_size: 3,
            ..Default::default()
        };
        let verdict = semantic_prem_test(&rules(src), &v, &BTreeMap::new(), &opts).unwrap();
        let PremVerdict::Refuted {
            interpretation,
            direct,
            through_constraint,
        } = verdict
        else {
            panic!("expected a refutation, got {verdict}");
        };
        // The witness reproduces.
        let prog = Program {
            rules: rules(src),
            ..Default::default()
        };
        let (info, _) = infer_types(&prog, &BTreeMap::new());
        let irs: Vec<RuleIr> = prog
            .rules
            .iter()
            .enumerate()
            .map(|(i, r)| lower_rule(i, r, &info.rule_vars[i], &[Ty::Int; 3]).unwrap())
            .collect();
        let t = |db: &Db| apply_once(&irs, db, &Db::new(), &info.preds).unwrap();
        assert_eq!(v.apply(&t(&interpretation)), direct);
        assert_eq!(v.apply(&t(&v.apply(&interpretation))), through_constraint);
        assert_ne!(direct, through_constraint);
    }

    #[test]
    fn no_filter_always_passes() {
        let v = ConstraintVector::new().with("dpath", Constraint::nofilter());
        let verdict = semantic_prem_test(&rules(PATHS), &v, &BTreeMap::new(), &SamplerOptions::default()).unwrap();
        assert!(matches!(verdict, PremVerdict::PassedSampling { exhaustive: false, .. }));
    }

    #[test]
    fn seeded_runs_repeat() {
        let src = "p(X,D) <- e(X,D).\n p(X,D) <- p(X,C), D = 10 - C.";
        let v = ConstraintVector::new().with("p", Constraint::per_group(ExtremaKind::Min, 2, 1));
        let a = semantic_prem_test(&rules(src), &v, &BTreeMap::new(), &SamplerOptions::default()).unwrap();
        let b = semantic_prem_test(&rules(src), &v, &BTreeMap::new(), &SamplerOptions::default()).unwrap();
        assert_eq!(a.name(), "Refuted");
        assert_eq!(a, b);
    }
}
