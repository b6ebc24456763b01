//! Workbench around the engine: graph generators, the program library,
//! benchmark runs and the `mcdl` command line.

pub mod bench;
pub mod gen;
pub mod library;
pub mod workload;
