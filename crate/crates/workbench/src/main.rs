use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mcdl_core::compiler::build_and_or_tree;
use mcdl_core::evaluator::{eval_stratified, Engine, EngineConfig, RunConfig};
use mcdl_core::frontend::{parse_program, parse_query};
use mcdl_core::planner::plan_with;
use mcdl_core::prem::{stratum_vector, verify_stratum, PremVerdict, SamplerOptions};
use mcdl_core::storage::{load_str, FactFormat, Value};
use mcdl_workbench::bench::bench;
use mcdl_workbench::gen::{GraphKind, GraphSpec, Weights};
use mcdl_workbench::library::library_program;
use mcdl_workbench::workload::{assemble, Workload};

#[derive(Parser)]
#[command(name = "mcdl", about = "Datalog with aggregates in recursion on a multicore engine")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Evaluate a program and print the answer as sorted TSV.
    Run(RunArgs),
    /// Print strata, AND/OR trees and the parallel plan.
    Explain(ProgramArgs),
    /// Check whether aggregates inside recursions may run there.
    CheckPrem(ProgramArgs),
    /// Write a generated edge list.
    GenGraph(GenArgs),
    /// Time repeated runs and print a JSON report.
    Bench(BenchArgs),
}

#[derive(Args)]
struct ProgramArgs {
    /// Program file, or the name of a bundled program.
    #[arg(long)]
    program: String,
    /// Facts as `pred=path` (TSV or CSV by extension); repeatable.
    #[arg(long = "facts", value_name = "PRED=PATH")]
    facts: Vec<String>,
    /// Load a generated graph (e.g. grid50, gnp2000-0.005-7) into `--graph-pred`.
    #[arg(long)]
    graph: Option<String>,
    #[arg(long, default_value = "arc")]
    graph_pred: String,
    /// Use the bundled program's sample data.
    #[arg(long)]
    sample: bool,
    #[arg(long)]
    query: Option<String>,
    /// Number of partitions the plan is made for.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    partitions: Option<usize>,
    /// Seed of the PreM sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EngineArgs {
    #[arg(long, default_value = "psn")]
    engine: Engine,
    #[arg(long, default_value_t = 100_000)]
    max_iterations: usize,
    /// Abort when the engine's tables exceed this many MiB.
    #[arg(long)]
    memory_cap_mb: Option<usize>,
    /// Run recursions whose aggregates fail the check, in strict rounds.
    #[arg(long)]
    allow_unverified: bool,
    /// Refuse recursions whose aggregates only passed sampling.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    stats_out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    program: ProgramArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Print the plan to stderr before running.
    #[arg(long)]
    explain: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    program: ProgramArgs,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value_t = 5)]
    runs: usize,
}

#[derive(Args)]
struct GenArgs {
    /// grid, tree or gnp.
    kind: String,
    /// grid: M; tree: HEIGHT; gnp: VERTICES P.
    params: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add uniform integer weights drawn from LO:HI.
    #[arg(long, value_name = "LO:HI")]
    weights: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_workload(a: &ProgramArgs) -> Result<Workload> {
    let path = Path::new(&a.program);
    let (source, lib) = if path.exists() {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        (text, None)
    } else if let Some(p) = library_program(&a.program) {
        (p.source.to_string(), Some(p))
    } else {
        bail!("no program file or bundled program named `{}`", a.program);
    };
    let program = parse_program(&source).with_context(|| format!("parsing {}", a.program))?;
    let schema = |pred: &str| program.schema(pred).map(|s| s.types());
    let mut facts = Vec::new();
    if a.sample {
        let lib = lib.ok_or_else(|| anyhow!("--sample needs a bundled program"))?;
        for (pred, text) in lib.sample {
            facts.push((pred.to_string(), load_str(text, FactFormat::Tsv, schema(pred).as_deref(), pred)?));
        }
    }
    for spec in &a.facts {
        let (pred, file) = spec.split_once('=').ok_or_else(|| anyhow!("--facts expects pred=path, got `{spec}`"))?;
        let file = Path::new(file);
        let f = mcdl_core::storage::load_file(file, schema(pred).as_deref())
            .with_context(|| format!("loading {}", file.display()))?;
        facts.push((pred.to_string(), f));
    }
    if let Some(g) = &a.graph {
        let spec: GraphSpec = g.parse().map_err(|e: String| anyhow!(e))?;
        let tsv = spec.generate().to_tsv();
        let pred = &a.graph_pred;
        facts.push((pred.clone(), load_str(&tsv, FactFormat::Tsv, schema(pred).as_deref(), pred)?));
    }
    assemble(program, facts)
}

fn run_config(p: &ProgramArgs, e: &EngineArgs) -> RunConfig {
    RunConfig {
        engine: e.engine,
        engine_cfg: EngineConfig {
            workers: p.workers.max(1),
            partitions: p.partitions,
            max_iterations: e.max_iterations,
            memory_cap_bytes: e.memory_cap_mb.map(|mb| mb << 20),
            ..Default::default()
        },
        sampler: SamplerOptions {
            seed: p.seed,
            ..Default::default()
        },
        allow_sampled: !e.strict,
        allow_unverified: e.allow_unverified,
        ..Default::default()
    }
}

fn explain_text(w: &Workload, a: &ProgramArgs) -> Result<String> {
    let c = &w.compiled;
    let query = a.query.as_deref().map(parse_query).transpose()?;
    let mut out = String::new();
    for (i, s) in c.strata.iter().enumerate() {
        if !s.preds.iter().any(|p| c.program.is_derived(p)) {
            continue;
        }
        let driver = query
            .as_ref()
            .map(|q| q.goal.pred.as_str())
            .filter(|p| s.contains(p))
            .unwrap_or(&s.preds[0]);
        let q = query.as_ref().filter(|q| q.goal.pred == driver);
        out.push_str(&format!("stratum {} {{{}}} {}\n", i + 1, s.preds.join(", "), s.class));
        out.push_str(&build_and_or_tree(&c.program, s, driver, q).render(&c.program));
    }
    let n = a.partitions.unwrap_or(a.workers).max(1);
    out.push_str(&plan_with(c, n, &Default::default()).explain(c));
    Ok(out)
}

fn fact_lines(db: &mcdl_core::evaluator::Db) -> String {
    let mut out = String::new();
    for (p, rows) in db {
        for r in rows {
            let vals: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            out.push_str(&format!("{p}({}).\n", vals.join(", ")));
        }
    }
    out
}

fn check_prem(a: &ProgramArgs) -> Result<bool> {
    let w = load_workload(a)?;
    let c = &w.compiled;
    let opts = SamplerOptions {
        seed: a.seed,
        ..Default::default()
    };
    let reads = if w.edb.is_empty() { None } else { Some(&w.edb) };
    let mut all_proven = true;
    let mut any = false;
    for (i, s) in c.strata.iter().enumerate().filter(|(_, s)| s.needs_prem) {
        any = true;
        let v = verify_stratum(c, s, reads, &opts)?;
        println!("stratum {} {{{}}}: {}", i + 1, s.preds.join(", "), v.name());
        println!("  constraints: {}", stratum_vector(c, s));
        match &v {
            PremVerdict::Refuted {
                interpretation,
                direct,
                through_constraint,
            } => {
                println!("  counterexample:");
                print!("{}", indent(&fact_lines(interpretation)));
                println!("  derives:");
                print!("{}", indent(&fact_lines(direct)));
                println!("  but after the constraint:");
                print!("{}", indent(&fact_lines(through_constraint)));
            }
            other => println!("  {other}"),
        }
        all_proven &= v.is_proven();
    }
    if !any {
        println!("no aggregate sits inside a recursion");
    }
    Ok(all_proven)
}

fn indent(s: &str) -> String {
    s.lines().map(|l| format!("    {l}\n")).collect()
}

fn tsv(rows: &BTreeSet<Vec<Value>>, prefix: Option<&str>) -> String {
    let mut out = String::new();
    for r in rows {
        let mut cols: Vec<String> = prefix.map(str::to_string).into_iter().collect();
        cols.extend(r.iter().map(|v| v.to_string()));
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    out
}

fn write_stats(path: &Option<PathBuf>, json: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display())),
        None => {
            eprintln!("{json}");
            Ok(())
        }
    }
}

fn run(a: &RunArgs) -> Result<()> {
    let w = load_workload(&a.program)?;
    if a.explain {
        eprint!("{}", explain_text(&w, &a.program)?);
    }
    let cfg = run_config(&a.program, &a.engine);
    let out = eval_stratified(&w.compiled, &w.edb, &cfg)?;
    for warning in &out.warnings {
        eprintln!("warning: {warning}");
    }
    let text = match &a.program.query {
        Some(q) => tsv(&out.answer(&parse_query(q)?), None),
        None => w
            .program
            .derived_preds()
            .iter()
            .map(|p| tsv(&out.values(p), Some(p)))
            .collect(),
    };
    match &a.output {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    write_stats(&a.engine.stats_out, &out.stats.to_json())
}

fn gen_graph(a: &GenArgs) -> Result<()> {
    let num = |i: usize| -> Result<&str> {
        a.params.get(i).map(String::as_str).ok_or_else(|| anyhow!("{} needs more parameters", a.kind))
    };
    let kind = match a.kind.as_str() {
        "grid" => GraphKind::Grid { m: num(0)?.parse()? },
        "tree" => GraphKind::Tree {
            height: num(0)?.parse()?,
            seed: a.seed,
        },
        "gnp" => GraphKind::Gnp {
            vertices: num(0)?.parse()?,
            p: num(1)?.parse()?,
            seed: a.seed,
        },
        k => bail!("unknown graph kind `{k}` (grid, tree or gnp)"),
    };
    let weighted = match &a.weights {
        Some(w) => {
            let (lo, hi) = w.split_once(':').ok_or_else(|| anyhow!("--weights expects LO:HI"))?;
            Some(Weights {
                lo: lo.parse()?,
                hi: hi.parse()?,
                seed: a.seed,
            })
        }
        None => None,
    };
    let text = GraphSpec { kind, weighted }.generate().to_tsv();
    match &a.out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(std::io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Explain(a) => load_workload(a).and_then(|w| explain_text(&w, a)).map(|t| print!("{t}")),
        Cmd::CheckPrem(a) => match check_prem(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(2),
            Err(e) => Err(e),
        },
        Cmd::GenGraph(a) => gen_graph(a),
        Cmd::Bench(a) => load_workload(&a.program).and_then(|w| {
            let report = bench(&w, &run_config(&a.program, &a.engine), a.runs)?;
            let json = report.to_json().to_string();
            println!("{json}");
            write_stats(&a.engine.stats_out, &serde_json::to_string(&report.stats)?)
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
