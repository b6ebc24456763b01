//! Repeated timed runs.

use std::time::Instant;

use anyhow::Result;
use mcdl_core::evaluator::{eval_stratified, RunConfig, Stats};
use serde_json::json;

use crate::workload::Workload;

pub struct BenchReport {
    pub runs_ms: Vec<f64>,
    /// Mean of the runs left after dropping the fastest and slowest.
    pub trimmed_mean_ms: f64,
    /// Stats of the last run.
    pub stats: Stats,
    pub result_size: u64,
    /// Facts generated per second at the trimmed mean time.
    pub facts_per_sec: f64,
}

impl BenchReport {
    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "runs_ms": self.runs_ms,
            "trimmed_mean_ms": self.trimmed_mean_ms,
            "result_size": self.result_size,
            "facts_per_sec": self.facts_per_sec,
            "stats": serde_json::to_value(&self.stats).expect("stats serialize"),
        })
    }
}

/// Mean after dropping one fastest and one slowest run (plain mean below
/// three runs).
pub fn trimmed_mean(times: &[f64]) -> f64 {
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    let kept = if t.len() >= 3 { &t[1..t.len() - 1] } else { &t[..] };
    if kept.is_empty() {
        return 0.0;
    }
    kept.iter().sum::<f64>() / kept.len() as f64
}

pub fn bench(w: &Workload, cfg: &RunConfig, runs: usize) -> Result<BenchReport> {
    let mut runs_ms = Vec::with_capacity(runs);
    let mut last = None;
    for _ in 0..runs.max(1) {
        let t = Instant::now();
        let out = eval_stratified(&w.compiled, &w.edb, cfg)?;
        runs_ms.push(t.elapsed().as_secs_f64() * 1e3);
        last = Some(out.stats);
    }
    let stats = last.expect("at least one run");
    let trimmed_mean_ms = trimmed_mean(&runs_ms);
    Ok(BenchReport {
        facts_per_sec: stats.facts_generated as f64 / (trimmed_mean_ms / 1e3).max(1e-9),
        trimmed_mean_ms,
        result_size: stats.result_size,
        runs_ms,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::from_text;
    use mcdl_core::evaluator::{Engine, EngineConfig};
    use std::collections::BTreeSet;

    const TC: &str = "tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).";

    fn chain(n: i64) -> String {
        (1..n).map(|i| format!("{i}\t{}\n", i + 1)).collect()
    }

    /// Semi-naive join outputs counted directly: every arc once, then each
    /// new pair joined with every arc leaving its end.
    fn join_recount(arcs: &[(i64, i64)]) -> u64 {
        let mut all: BTreeSet<(i64, i64)> = arcs.iter().copied().collect();
        let mut delta = all.clone();
        let mut generated = arcs.len() as u64;
        while !delta.is_empty() {
            let mut next = BTreeSet::new();
            for &(x, z) in &delta {
                for &(_, y) in arcs.iter().filter(|a| a.0 == z) {
                    generated += 1;
                    if all.insert((x, y)) {
                        next.insert((x, y));
                    }
                }
            }
            delta = next;
        }
        generated
    }

    #[test]
    fn trims_extremes() {
        assert_eq!(trimmed_mean(&[10.0, 11.0, 12.0, 13.0, 50.0]), 12.0);
        assert_eq!(trimmed_mean(&[50.0, 1.0, 5.0]), 5.0);
        assert_eq!(trimmed_mean(&[4.0, 6.0]), 5.0);
    }

    #[test]
    fn bench_reports_each_run() {
        let w = from_text(TC, &[("arc", "1\t2\n2\t3\n")]).unwrap();
        let r = bench(&w, &RunConfig::default(), 5).unwrap();
        assert_eq!(r.runs_ms.len(), 5);
        assert_eq!(r.result_size, 3);
        assert!(r.to_json()["stats"]["iterations"].as_u64().is_some());
    }

    #[test]
    fn chain_facts_generated_match_recount() {
        let w = from_text(TC, &[("arc", &chain(10))]).unwrap();
        let arcs: Vec<(i64, i64)> = (1..10).map(|i| (i, i + 1)).collect();
        let r = bench(&w, &RunConfig::default(), 1).unwrap();
        assert_eq!(r.result_size, 45);
        assert_eq!(r.stats.facts_generated, join_recount(&arcs));
    }

    #[test]
    fn worker_counts_give_same_size() {
        let w = from_text(TC, &[("arc", &crate::gen::gen_grid(12).to_tsv())]).unwrap();
        let sizes: Vec<u64> = [1, 4]
            .iter()
            .map(|&workers| {
                let cfg = RunConfig {
                    engine: Engine::Psn,
                    engine_cfg: EngineConfig {
                        workers,
                        ..Default::default()
                    },
                    ..Default::default()
                };
                bench(&w, &cfg, 3).unwrap().result_size
            })
            .collect();
        assert_eq!(sizes, vec![crate::gen::grid_tc_size(12); 2]);
    }
}
