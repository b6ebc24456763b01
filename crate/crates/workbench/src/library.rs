//! Bundled analytics programs, each with a small dataset.

const ARC_DAG: &str = "1\t2\n1\t3\n2\t4\n3\t4\n4\t5\n2\t5\n5\t6\n";
const ARC_CYCLIC: &str = "1\t2\n2\t3\n3\t1\n3\t4\n4\t5\n5\t4\n2\t6\n";
const ARC_TREE: &str = "1\t2\n1\t3\n2\t4\n2\t5\n3\t6\n3\t7\n6\t8\n7\t9\n";
const DARC_DAG: &str = "1\t2\t4\n1\t3\t1\n3\t2\t2\n2\t4\t5\n3\t4\t8\n4\t5\t3\n";
const DARC_CYCLIC: &str = "1\t2\t4\n1\t3\t1\n3\t2\t2\n2\t4\t5\n4\t1\t1\n3\t4\t8\n4\t5\t3\n5\t3\t2\n";
const KCORE_ARC: &str = "1\t2\n2\t1\n2\t3\n3\t2\n1\t3\n3\t1\n3\t4\n4\t3\n5\t6\n6\t5\n";
const ORGANIZER: &str = "1\n2\n3\n";
const FRIEND: &str = "9\t1\n9\t2\n9\t3\n8\t9\n8\t1\n8\t2\n7\t8\n7\t1\n6\t7\n";
const PQS: &str = "p1\ts1\t3\np1\ts2\t3\np1\ts3\t5\np2\ts1\t2\n";
const CS: &str = "s1\tla\ns2\tla\ns3\tsf\n";
pub const PLAYTENNIS: &str = include_str!("../data/playtennis.tsv");

#[derive(Clone, Debug)]
pub struct LibraryProgram {
    pub name: &'static str,
    pub source: &'static str,
    /// Small dataset as (predicate, tab-separated rows).
    pub sample: &'static [(&'static str, &'static str)],
    /// Predicates to compare when checking engines against each other.
    pub outputs: &'static [&'static str],
    /// Its aggregates in recursion fail the PreM check but are layered by a
    /// column counter, so they run with `allow_unverified`.
    pub layered: bool,
}

pub fn program_library() -> Vec<LibraryProgram> {
    vec![
        LibraryProgram {
            name: "tc",
            source: include_str!("../programs/tc.dl"),
            sample: &[("arc", ARC_CYCLIC)],
            outputs: &["tc"],
            layered: false,
        },
        LibraryProgram {
            name: "sg",
            source: include_str!("../programs/sg.dl"),
            sample: &[("arc", ARC_TREE)],
            outputs: &["sg"],
            layered: false,
        },
        LibraryProgram {
            name: "spath_stratified",
            source: include_str!("../programs/spath_stratified.dl"),
            sample: &[("darc", DARC_DAG)],
            outputs: &["spath"],
            layered: false,
        },
        LibraryProgram {
            name: "spath",
            source: include_str!("../programs/spath.dl"),
            sample: &[("darc", DARC_CYCLIC)],
            outputs: &["spath", "dpath"],
            layered: false,
        },
        LibraryProgram {
            name: "spath_nonlinear",
            source: include_str!("../programs/spath_nonlinear.dl"),
            sample: &[("darc", DARC_CYCLIC)],
            outputs: &["dpath"],
            layered: false,
        },
        LibraryProgram {
            name: "attend",
            source: include_str!("../programs/attend.dl"),
            sample: &[("organizer", ORGANIZER), ("friend", FRIEND)],
            outputs: &["attend", "finalcnt"],
            layered: false,
        },
        LibraryProgram {
            name: "attend_count",
            source: include_str!("../programs/attend_count.dl"),
            sample: &[("organizer", ORGANIZER), ("friend", FRIEND)],
            outputs: &["attend", "finalcnt"],
            layered: false,
        },
        LibraryProgram {
            name: "diameter",
            source: include_str!("../programs/diameter.dl"),
            sample: &[("arc", ARC_CYCLIC)],
            outputs: &["minhops", "totalpairs", "hopcount", "cumulhops", "effdiameter"],
            layered: false,
        },
        LibraryProgram {
            name: "kcores",
            source: include_str!("../programs/kcores.dl"),
            sample: &[("arc", KCORE_ARC), ("kval", "2\n")],
            outputs: &["kCores"],
            layered: false,
        },
        LibraryProgram {
            name: "rollup",
            source: include_str!("../programs/rollup.dl"),
            sample: &[("train", PLAYTENNIS)],
            outputs: &["myrupt"],
            layered: true,
        },
        LibraryProgram {
            name: "longest_pattern",
            source: include_str!("../programs/longest_pattern.dl"),
            sample: &[("train", PLAYTENNIS), ("kval", "3\n")],
            outputs: &["len", "longest"],
            layered: true,
        },
        LibraryProgram {
            name: "cpath",
            source: include_str!("../programs/cpath.dl"),
            sample: &[("arc", ARC_DAG)],
            outputs: &["cpath"],
            layered: false,
        },
        LibraryProgram {
            name: "pcnt_incity",
            source: include_str!("../programs/pcnt_incity.dl"),
            sample: &[("pqs", PQS), ("cs", CS)],
            outputs: &["pCnt_InCity", "partCnt_InCity"],
            layered: false,
        },
    ]
}

pub fn library_program(name: &str) -> Option<LibraryProgram> {
    let name = name.strip_suffix(".dl").unwrap_or(name);
    program_library().into_iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::from_text;
    use mcdl_core::evaluator::{eval_stratified, Engine, EngineConfig, RunConfig};

    #[test]
    fn every_program_agrees_across_engines() {
        for p in program_library() {
            let w = from_text(p.source, p.sample).unwrap_or_else(|e| panic!("{}: {e:#}", p.name));
            let run = |engine, workers| {
                let cfg = RunConfig {
                    engine,
                    engine_cfg: EngineConfig {
                        workers,
                        ..Default::default()
                    },
                    allow_unverified: p.layered,
                    ..Default::default()
                };
                eval_stratified(&w.compiled, &w.edb, &cfg).unwrap_or_else(|e| panic!("{} {engine}: {e}", p.name))
            };
            let want = run(Engine::Naive, 1);
            for (engine, n) in [(Engine::Seminaive, 1), (Engine::Psn, 1), (Engine::Psn, 2), (Engine::Psn, 4), (Engine::Psn, 8)] {
                let got = run(engine, n);
                for o in p.outputs {
                    assert!(want.len(o) > 0, "{}: {o} is empty", p.name);
                    assert_eq!(got.values(o), want.values(o), "{}: {o} with {engine} on {n}", p.name);
                }
            }
        }
    }

    #[test]
    fn diameter_of_an_edge_is_one() {
        let p = library_program("diameter").unwrap();
        let w = from_text(p.source, &[("arc", "1\t2\n")]).unwrap();
        let out = eval_stratified(&w.compiled, &w.edb, &RunConfig::default()).unwrap();
        assert_eq!(out.values("effdiameter"), [vec![mcdl_core::storage::Value::Int(1)]].into());
    }

    #[test]
    fn lookup_by_file_name() {
        assert!(library_program("tc.dl").is_some());
        assert!(library_program("nope").is_none());
    }
}
