//! Deterministic graph generators.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::str::FromStr;

use mcdl_core::storage::Value;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq)]
pub enum GraphKind {
    Grid { m: usize },
    Tree { height: usize, seed: u64 },
    Gnp { vertices: usize, p: f64, seed: u64 },
}

/// Uniform integer weights in `lo..=hi`.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub lo: i64,
    pub hi: i64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphSpec {
    pub kind: GraphKind,
    pub weighted: Option<Weights>,
}

impl GraphSpec {
    pub fn grid(m: usize) -> GraphSpec {
        GraphSpec {
            kind: GraphKind::Grid { m },
            weighted: None,
        }
    }

    pub fn generate(&self) -> Graph {
        let mut g = match self.kind {
            GraphKind::Grid { m } => gen_grid(m),
            GraphKind::Tree { height, seed } => gen_tree(height, seed),
            GraphKind::Gnp { vertices, p, seed } => gen_gnp(vertices, p, seed),
        };
        if let Some(w) = &self.weighted {
            g = g.with_weights(w);
        }
        g
    }

    /// Short name used for dataset files, e.g. `grid50` or `gnp2000-0.005-7`.
    pub fn name(&self) -> String {
        match &self.kind {
            GraphKind::Grid { m } => format!("grid{m}"),
            GraphKind::Tree { height, seed } => format!("tree{height}-{seed}"),
            GraphKind::Gnp { vertices, p, seed } => format!("gnp{vertices}-{p}-{seed}"),
        }
    }
}

impl FromStr for GraphSpec {
    type Err = String;

    /// Parses `grid50`, `tree11-3` or `gnp2000-0.005-7`.
    fn from_str(s: &str) -> Result<GraphSpec, String> {
        let bad = || format!("bad graph name `{s}`");
        let kind = if let Some(m) = s.strip_prefix("grid") {
            GraphKind::Grid {
                m: m.parse().map_err(|_| bad())?,
            }
        } else if let Some(rest) = s.strip_prefix("tree") {
            let (h, seed) = rest.split_once('-').unwrap_or((rest, "0"));
            GraphKind::Tree {
                height: h.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }
        } else if let Some(rest) = s.strip_prefix("gnp") {
            let parts: Vec<&str> = rest.split('-').collect();
            let [v, p, seed] = parts[..] else { return Err(bad()) };
            GraphKind::Gnp {
                vertices: v.parse().map_err(|_| bad())?,
                p: p.parse().map_err(|_| bad())?,
                seed: seed.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        Ok(GraphSpec { kind, weighted: None })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub vertices: usize,
    pub edges: Vec<(i64, i64)>,
    pub weights: Option<Vec<i64>>,
}

impl Graph {
    pub fn with_weights(mut self, w: &Weights) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(w.seed);
        self.weights = Some(self.edges.iter().map(|_| rng.gen_range(w.lo..=w.hi)).collect());
        self
    }

    /// One `src\tdst[\tweight]` line per edge.
    pub fn to_tsv(&self) -> String {
        let mut out = String::with_capacity(self.edges.len() * 12);
        for (i, (a, b)) in self.edges.iter().enumerate() {
            match &self.weights {
                Some(w) => writeln!(out, "{a}\t{b}\t{}", w[i]),
                None => writeln!(out, "{a}\t{b}"),
            }
            .unwrap();
        }
        out
    }

    pub fn rows(&self) -> BTreeSet<Vec<Value>> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| {
                let mut r = vec![Value::Int(a), Value::Int(b)];
                if let Some(w) = &self.weights {
                    r.push(Value::Int(w[i]));
                }
                r
            })
            .collect()
    }
}

/// `(m+1)²` vertices labelled `row*(m+1)+col`, each linked to its right
/// and lower neighbour.
pub fn gen_grid(m: usize) -> Graph {
    let side = m as i64 + 1;
    let mut edges = Vec::with_capacity(2 * m * (m + 1));
    for r in 0..side {
        for c in 0..side {
            let v = r * side + c;
            if c + 1 < side {
                edges.push((v, v + 1));
            }
            if r + 1 < side {
                edges.push((v, v + side));
            }
        }
    }
    Graph {
        vertices: (side * side) as usize,
        edges,
        weights: None,
    }
}

/// Size of the transitive closure of `gen_grid(m)`: every vertex reaches
/// the ones weakly below and to its right.
pub fn grid_tc_size(m: u64) -> u64 {
    let s = (m + 1) * (m + 2) / 2;
    s * s - (m + 1) * (m + 1)
}

/// Tree of the given height whose inner vertices have 2 to 6 children,
/// numbered breadth first from the root 0.
pub fn gen_tree(height: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut level = vec![0i64];
    let mut next_id = 1i64;
    for _ in 0..height {
        let mut next = Vec::new();
        for &v in &level {
            for _ in 0..rng.gen_range(2..=6) {
                edges.push((v, next_id));
                next.push(next_id);
                next_id += 1;
            }
        }
        level = next;
    }
    Graph {
        vertices: next_id as usize,
        edges,
        weights: None,
    }
}

/// Random directed graph with each ordered pair of distinct vertices
/// present with probability `p`.
pub fn gen_gnp(vertices: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let n = vertices as i64;
    for u in 0..n {
        for v in 0..n {
            if u != v && rng.gen_bool(p.clamp(0.0, 1.0)) {
                edges.push((u, v));
            }
        }
    }
    Graph {
        vertices,
        edges,
        weights: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mcdl_core::compiler::compile;
    use mcdl_core::evaluator::naive_eval;
    use mcdl_core::frontend::parse_program;
    use proptest::prelude::*;
    use std::collections::{BTreeMap, HashMap};

    #[test]
    fn grid_sizes() {
        let g = gen_grid(1);
        assert_eq!((g.vertices, g.edges.len()), (4, 4));
        let g = gen_grid(150);
        assert_eq!((g.vertices, g.edges.len()), (22_801, 45_300));
        let g = gen_grid(250);
        assert_eq!((g.vertices, g.edges.len()), (63_001, 125_500));
    }

    #[test]
    fn grid_closure_sizes() {
        assert_eq!(grid_tc_size(150), 131_675_775);
        assert_eq!(grid_tc_size(250), 1_000_140_875);
        assert_eq!(grid_tc_size(50), 1_755_675);
        assert_eq!(grid_tc_size(10), 4_235);
    }

    /// Reachable pairs counted by search from every vertex.
    fn reach_count(g: &Graph) -> u64 {
        let mut adj: HashMap<i64, Vec<i64>> = HashMap::new();
        for &(a, b) in &g.edges {
            adj.entry(a).or_default().push(b);
        }
        let mut total = 0;
        for s in 0..g.vertices as i64 {
            let mut seen = BTreeSet::new();
            let mut stack = vec![s];
            while let Some(v) = stack.pop() {
                for &w in adj.get(&v).into_iter().flatten() {
                    if seen.insert(w) {
                        stack.push(w);
                    }
                }
            }
            total += seen.len() as u64;
        }
        total
    }

    #[test]
    fn closure_formula_matches_search() {
        for m in 1..8 {
            assert_eq!(grid_tc_size(m as u64), reach_count(&gen_grid(m)), "m = {m}");
        }
    }

    #[test]
    fn tree_shapes() {
        let g = gen_tree(0, 5);
        assert_eq!((g.vertices, g.edges.len()), (1, 0));
        for seed in 0..5 {
            let g = gen_tree(3, seed);
            assert_eq!(g.edges.len(), g.vertices - 1);
            let mut kids: BTreeMap<i64, usize> = BTreeMap::new();
            for &(a, _) in &g.edges {
                *kids.entry(a).or_default() += 1;
            }
            assert!(kids.values().all(|&k| (2..=6).contains(&k)));
        }
    }

    #[test]
    fn tree_closure_is_depth_sum() {
        let g = gen_tree(2, 9);
        let mut depth: HashMap<i64, u64> = HashMap::from([(0, 0)]);
        for &(a, b) in &g.edges {
            let d = depth[&a] + 1;
            depth.insert(b, d);
        }
        let want: u64 = depth.values().sum();
        let p = parse_program("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).").unwrap();
        let c = compile(&p, &BTreeMap::new()).unwrap();
        let edb = [("arc".to_string(), g.rows())].into();
        let run = naive_eval(&c, &edb, 1000).unwrap();
        assert_eq!(run.db["tc"].len() as u64, want);
        assert_eq!(reach_count(&g), want);
    }

    #[test]
    fn gnp_extremes() {
        assert!(gen_gnp(30, 0.0, 1).edges.is_empty());
        assert_eq!(gen_gnp(30, 1.0, 1).edges.len(), 30 * 29);
    }

    #[test]
    fn names_parse() {
        for s in ["grid50", "tree11-3", "gnp2000-0.005-7"] {
            assert_eq!(s.parse::<GraphSpec>().unwrap().name(), s);
        }
        assert!("ring5".parse::<GraphSpec>().is_err());
    }

    proptest! {
        #[test]
        fn generators_are_deterministic(h in 0usize..4, v in 1usize..40, p in 0.0f64..1.0, seed in any::<u64>()) {
            prop_assert_eq!(gen_tree(h, seed).to_tsv(), gen_tree(h, seed).to_tsv());
            prop_assert_eq!(gen_gnp(v, p, seed).to_tsv(), gen_gnp(v, p, seed).to_tsv());
            let w = Weights { lo: 1, hi: 9, seed };
            prop_assert_eq!(gen_grid(3).with_weights(&w), gen_grid(3).with_weights(&w));
        }
    }
}
