//! A parsed program together with its loaded facts.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use mcdl_core::compiler::{compile, Compiled};
use mcdl_core::evaluator::Db;
use mcdl_core::frontend::{parse_program, Program};
use mcdl_core::storage::{load_file, load_str, FactFormat, Facts, Ty};

pub struct Workload {
    pub program: Program,
    pub compiled: Compiled,
    pub edb: Db,
}

/// Declared column types of `pred`, if the program has a schema for it.
fn schema_types(program: &Program, pred: &str) -> Option<Vec<Ty>> {
    program.schema(pred).map(|s| s.types())
}

/// Program text plus facts given as (predicate, tab-separated text).
pub fn from_text(source: &str, facts: &[(&str, &str)]) -> Result<Workload> {
    let program = parse_program(source)?;
    let mut loaded = Vec::new();
    for (pred, text) in facts {
        let tys = schema_types(&program, pred);
        let f = load_str(text, FactFormat::Tsv, tys.as_deref(), pred).with_context(|| format!("facts for {pred}"))?;
        loaded.push((pred.to_string(), f));
    }
    assemble(program, loaded)
}

/// Program file plus `pred=path` fact files.
pub fn from_files(program_path: &Path, facts: &[(String, std::path::PathBuf)]) -> Result<Workload> {
    let source = std::fs::read_to_string(program_path).with_context(|| format!("reading {}", program_path.display()))?;
    let program = parse_program(&source).with_context(|| format!("parsing {}", program_path.display()))?;
    let mut loaded = Vec::new();
    for (pred, path) in facts {
        let tys = schema_types(&program, pred);
        loaded.push((pred.clone(), load_file(path, tys.as_deref())?));
    }
    assemble(program, loaded)
}

pub fn assemble(program: Program, facts: Vec<(String, Facts)>) -> Result<Workload> {
    let mut edb = Db::new();
    let mut types: BTreeMap<String, Vec<Ty>> = BTreeMap::new();
    for (pred, f) in facts {
        if !f.rows.is_empty() || !f.types.is_empty() {
            types.insert(pred.clone(), f.types.clone());
        }
        edb.entry(pred).or_default().extend(f.rows);
    }
    let compiled = compile(&program, &types)?;
    Ok(Workload { program, compiled, edb })
}
