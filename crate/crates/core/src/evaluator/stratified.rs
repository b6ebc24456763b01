//! Runs a compiled program with a chosen engine, gating strata whose
//! aggregates sit inside their recursion on the PreM check.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use super::naive::{naive_eval, Db};
use super::psn::{psn_eval_gated, Admission, EngineConfig, Evaluation, Stats};
use super::EvalError;
use crate::compiler::Compiled;
use crate::frontend::Query;
use crate::planner::{plan_with, PlanAssignment};
use crate::prem::{verify_stratum, PremVerdict, SamplerOptions};
use crate::storage::{DiscriminatingSet, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Naive,
    Seminaive,
    Psn,
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Engine, String> {
        match s {
            "naive" => Ok(Engine::Naive),
            "seminaive" => Ok(Engine::Seminaive),
            "psn" => Ok(Engine::Psn),
            _ => Err(format!("unknown engine `{s}` (naive, seminaive or psn)")),
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Naive => "naive",
            Engine::Seminaive => "seminaive",
            Engine::Psn => "psn",
        })
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub engine: Engine,
    pub engine_cfg: EngineConfig,
    pub sampler: SamplerOptions,
    /// Run strata whose check only passed sampling, with a warning.
    pub allow_sampled: bool,
    /// Run strata whose check failed, with a warning. For programs whose
    /// recursion is layered so each aggregate group is complete when it is
    /// first derived, which the check cannot see.
    pub allow_unverified: bool,
    /// Discriminating sets fixed by hand instead of chosen by cost.
    pub forced: BTreeMap<String, DiscriminatingSet>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            engine: Engine::Psn,
            engine_cfg: EngineConfig::default(),
            sampler: SamplerOptions::default(),
            allow_sampled: true,
            allow_unverified: false,
            forced: BTreeMap::new(),
        }
    }
}

enum Results {
    Naive(Db),
    Encoded(Evaluation),
}

pub struct RunOutput {
    results: Results,
    pub stats: Stats,
    pub plan: Option<PlanAssignment>,
    /// Verdicts of the gated strata, by stratum index.
    pub verdicts: Vec<(usize, PremVerdict)>,
    pub warnings: Vec<String>,
}

impl RunOutput {
    pub fn len(&self, pred: &str) -> usize {
        match &self.results {
            Results::Naive(db) => db.get(pred).map_or(0, |r| r.len()),
            Results::Encoded(e) => e.len(pred),
        }
    }

    pub fn values(&self, pred: &str) -> BTreeSet<Vec<Value>> {
        match &self.results {
            Results::Naive(db) => db.get(pred).cloned().unwrap_or_default(),
            Results::Encoded(e) => e.values(pred),
        }
    }

    pub fn answer(&self, q: &Query) -> BTreeSet<Vec<Value>> {
        match &self.results {
            Results::Naive(db) => super::answer(&db.get(&q.goal.pred).cloned().unwrap_or_default(), q),
            Results::Encoded(e) => e.answer(q),
        }
    }
}

fn judge(
    c: &Compiled,
    si: usize,
    reads: &Db,
    cfg: &RunConfig,
    verdicts: &mut Vec<(usize, PremVerdict)>,
    warnings: &mut Vec<String>,
) -> Result<Admission, EvalError> {
    let s = &c.strata[si];
    let v = verify_stratum(c, s, Some(reads), &cfg.sampler)?;
    let preds = s.preds.join(", ");
    let outcome = match &v {
        PremVerdict::Proven { .. } => Ok(Admission::Verified),
        PremVerdict::PassedSampling { .. } if cfg.allow_sampled => {
            warnings.push(format!("aggregates of {{{preds}}} run inside the recursion on sampling evidence: {v}"));
            Ok(Admission::Verified)
        }
        _ if cfg.allow_unverified => {
            warnings.push(format!(
                "aggregates of {{{preds}}} run inside the recursion in strict rounds, unverified: {}",
                v.name()
            ));
            Ok(Admission::Unverified)
        }
        _ => Err(EvalError::Rejected(format!("{{{preds}}}: {v}"))),
    };
    verdicts.push((si, v));
    outcome
}

/// Evaluates every stratum bottom-up with the configured engine.
pub fn eval_stratified(c: &Compiled, edb: &Db, cfg: &RunConfig) -> Result<RunOutput, EvalError> {
    let mut verdicts = Vec::new();
    let mut warnings = Vec::new();
    match cfg.engine {
        Engine::Naive => {
            let t0 = Instant::now();
            // The oracle runs every stratum at once, so gated strata are
            // judged against the loaded facts plus lower strata afterwards.
            let run = naive_eval(c, edb, cfg.engine_cfg.max_iterations)?;
            for (si, s) in c.strata.iter().enumerate() {
                if s.needs_prem {
                    let reads: Db = run
                        .db
                        .iter()
                        .filter(|(p, _)| c.stratum_of(p).is_none_or(|k| k < si))
                        .map(|(p, r)| (p.clone(), r.clone()))
                        .collect();
                    judge(c, si, &reads, cfg, &mut verdicts, &mut warnings)?;
                }
            }
            let derived = c.program.derived_preds();
            let stats = Stats {
                iterations: run.iterations.iter().map(|&n| n as u64).sum(),
                result_size: derived.iter().map(|p| run.db.get(p).map_or(0, |r| r.len() as u64)).sum(),
                wall_time_ms: super::psn::PhaseTimes {
                    total: t0.elapsed().as_secs_f64() * 1e3,
                    ..Default::default()
                },
                ..Default::default()
            };
            Ok(RunOutput {
                results: Results::Naive(run.db),
                stats,
                plan: None,
                verdicts,
                warnings,
            })
        }
        Engine::Seminaive | Engine::Psn => {
            let mut ecfg = cfg.engine_cfg.clone();
            if cfg.engine == Engine::Seminaive {
                ecfg.workers = 1;
                ecfg.partitions = Some(1);
            }
            let n = ecfg.partitions.unwrap_or(ecfg.workers).max(1);
            let plan = plan_with(c, n, &cfg.forced);
            let e = psn_eval_gated(c, edb, &plan, &ecfg, &mut |si, reads| {
                judge(c, si, reads, cfg, &mut verdicts, &mut warnings)
            })?;
            Ok(RunOutput {
                stats: e.stats.clone(),
                results: Results::Encoded(e),
                plan: Some(plan),
                verdicts,
                warnings,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::frontend::{parse_program, parse_query};

    fn compiled(src: &str) -> Compiled {
        compile(&parse_program(src).unwrap(), &BTreeMap::new()).unwrap()
    }

    fn ints(rows: &[&[i64]]) -> BTreeSet<Vec<Value>> {
        rows.iter().map(|r| r.iter().map(|&x| Value::Int(x)).collect()).collect()
    }

    #[test]
    fn engines_agree_and_query_filters() {
        let c = compiled("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).");
        let edb: Db = [("arc".to_string(), ints(&[&[1, 2], &[2, 3], &[3, 4]]))].into();
        let q = parse_query("tc(2, Y).").unwrap();
        for engine in [Engine::Naive, Engine::Seminaive, Engine::Psn] {
            let cfg = RunConfig {
                engine,
                engine_cfg: EngineConfig {
                    workers: 3,
                    ..Default::default()
                },
                ..Default::default()
            };
            let out = eval_stratified(&c, &edb, &cfg).unwrap();
            assert_eq!(out.len("tc"), 6, "{engine}");
            assert_eq!(out.answer(&q), ints(&[&[2, 3], &[2, 4]]), "{engine}");
            assert_eq!(out.stats.result_size, 6, "{engine}");
        }
    }

    #[test]
    fn unprovable_sum_is_rejected() {
        // Weights may be negative, so the sum is not known to grow.
        let c = compiled(
            "s(X, sum<W, Y>) <- e(X, Y, W).\n\
             s(X, sum<V, Y>) <- s(Y, V), e(X, Y, _).",
        );
        let edb: Db = [("e".to_string(), ints(&[&[1, 2, -1], &[2, 3, 4]]))].into();
        assert!(c.strata.iter().any(|s| s.needs_prem));
        for engine in [Engine::Naive, Engine::Psn] {
            let cfg = RunConfig {
                engine,
                ..Default::default()
            };
            assert!(matches!(eval_stratified(&c, &edb, &cfg), Err(EvalError::Rejected(_))), "{engine}");
        }
    }

    #[test]
    fn unverified_strata_run_on_request() {
        let c = compiled(
            "s(X, sum<W, Y>) <- e(X, Y, W).\n\
             s(X, sum<V, Y>) <- s(Y, V), e(X, Y, _).",
        );
        let edb: Db = [("e".to_string(), ints(&[&[1, 2, -1], &[2, 3, 4]]))].into();
        let cfg = RunConfig {
            allow_unverified: true,
            ..Default::default()
        };
        let out = eval_stratified(&c, &edb, &cfg).unwrap();
        assert_eq!(out.warnings.len(), 1);
        assert_eq!(out.values("s"), ints(&[&[1, 4], &[2, 4]]));
    }

    #[test]
    fn proven_strata_record_verdicts() {
        let c = compiled(
            "dpath(X,Z,min<D>) <- darc(X,Z,D).\n\
             dpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.",
        );
        let edb: Db = [("darc".to_string(), ints(&[&[1, 2, 1], &[2, 1, 1]]))].into();
        let out = eval_stratified(&c, &edb, &RunConfig::default()).unwrap();
        assert_eq!(out.verdicts.len(), 1);
        assert!(out.verdicts[0].1.is_proven());
        assert_eq!(out.values("dpath"), ints(&[&[1, 2, 1], &[2, 1, 1], &[1, 1, 2], &[2, 2, 2]]));
    }

    #[test]
    fn engine_names_round_trip() {
        for e in [Engine::Naive, Engine::Seminaive, Engine::Psn] {
            assert_eq!(e.to_string().parse::<Engine>().unwrap(), e);
        }
        assert!("fast".parse::<Engine>().is_err());
    }
}
