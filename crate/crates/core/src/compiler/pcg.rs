//! Predicate connection graph, strata and recursion classes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use petgraph::algo::tarjan_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::frontend::{Literal, Program, Rule, POSINT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeLabel {
    Positive,
    Negated,
    /// The head carries an aggregate or the body an extrema goal.
    Aggregated,
}

#[derive(Clone, Debug)]
pub struct Pcg {
    pub preds: Vec<String>,
    /// (body predicate, head predicate, label).
    pub edges: BTreeSet<(String, String, EdgeLabel)>,
    /// Strongly connected components, dependencies first.
    pub sccs: Vec<Vec<String>>,
    scc_index: BTreeMap<String, usize>,
}

impl Pcg {
    pub fn scc_of(&self, pred: &str) -> Option<usize> {
        self.scc_index.get(pred).copied()
    }

    pub fn same_scc(&self, a: &str, b: &str) -> bool {
        matches!((self.scc_of(a), self.scc_of(b)), (Some(x), Some(y)) if x == y)
    }

    /// Whether `pred` depends on itself.
    pub fn is_recursive(&self, pred: &str) -> bool {
        match self.scc_of(pred) {
            Some(i) => self.sccs[i].len() > 1 || self.edges.iter().any(|(a, b, _)| a == pred && b == pred),
            None => false,
        }
    }

    pub fn has_edge(&self, from: &str, to: &str, label: EdgeLabel) -> bool {
        self.edges.contains(&(from.to_string(), to.to_string(), label))
    }
}

fn rule_is_aggregating(r: &Rule) -> bool {
    r.head.aggregate().is_some() || r.extrema_goal().is_some()
}

pub fn build_pcg(prog: &Program) -> Pcg {
    let mut preds: BTreeSet<String> = BTreeSet::new();
    let mut edges = BTreeSet::new();
    for s in &prog.schemas {
        preds.insert(s.pred.clone());
    }
    for f in &prog.facts {
        preds.insert(f.pred.clone());
    }
    for r in &prog.rules {
        preds.insert(r.head.pred.clone());
        let agg = rule_is_aggregating(r);
        for l in &r.body {
            let (p, negated) = match l {
                Literal::Atom { atom, negated } if atom.pred != POSINT => (&atom.pred, *negated),
                Literal::Vertical { pred, .. } => (pred, false),
                _ => continue,
            };
            preds.insert(p.clone());
            let label = if negated {
                EdgeLabel::Negated
            } else if agg {
                EdgeLabel::Aggregated
            } else {
                EdgeLabel::Positive
            };
            edges.insert((p.clone(), r.head.pred.clone(), label));
        }
    }
    let preds: Vec<String> = preds.into_iter().collect();
    let mut g: DiGraph<&str, ()> = DiGraph::new();
    let idx: BTreeMap<&str, NodeIndex> = preds.iter().map(|p| (p.as_str(), g.add_node(p.as_str()))).collect();
    for (a, b, _) in &edges {
        g.update_edge(idx[a.as_str()], idx[b.as_str()], ());
    }
    let mut sccs: Vec<Vec<String>> = tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut v: Vec<String> = c.into_iter().map(|n| g[n].to_string()).collect();
            v.sort();
            v
        })
        .collect();
    sccs.reverse();
    let scc_index = sccs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.iter().map(move |p| (p.clone(), i)))
        .collect();
    Pcg {
        preds,
        edges,
        sccs,
        scc_index,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RecursionClass {
    NonRecursive,
    Linear,
    NonLinear,
    Mutual,
}

impl RecursionClass {
    pub fn name(self) -> &'static str {
        match self {
            RecursionClass::NonRecursive => "non-recursive",
            RecursionClass::Linear => "linear",
            RecursionClass::NonLinear => "non-linear",
            RecursionClass::Mutual => "mutual",
        }
    }

    pub fn is_recursive(self) -> bool {
        self != RecursionClass::NonRecursive
    }
}

impl fmt::Display for RecursionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Recursion class of the component `scc` given the rules defining it.
pub fn classify_recursion(scc: &[String], rules: &[&Rule]) -> RecursionClass {
    let inside = |p: &str| scc.iter().any(|s| s == p);
    let scc_atoms = |r: &Rule| r.body_atoms().filter(|(a, neg)| !neg && inside(&a.pred)).count();
    if !rules.iter().any(|r| scc_atoms(r) > 0) {
        return RecursionClass::NonRecursive;
    }
    if scc.len() > 1 {
        return RecursionClass::Mutual;
    }
    if rules.iter().any(|r| scc_atoms(r) >= 2) {
        RecursionClass::NonLinear
    } else {
        RecursionClass::Linear
    }
}

#[derive(Clone, Debug)]
pub struct Stratum {
    pub preds: Vec<String>,
    /// Indexes into the program's rules, in program order.
    pub rules: Vec<usize>,
    pub class: RecursionClass,
    /// An aggregate edge lies inside the component; evaluation is only
    /// sound once the aggregate has been shown premappable.
    pub needs_prem: bool,
}

impl Stratum {
    pub fn contains(&self, pred: &str) -> bool {
        self.preds.iter().any(|p| p == pred)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("negation through recursion among {{{}}}", .0.join(", "))]
pub struct NonStratifiable(pub Vec<String>);

/// One stratum per component of derived predicates, dependencies first.
pub fn stratify(pcg: &Pcg, prog: &Program) -> Result<Vec<Stratum>, NonStratifiable> {
    let derived = prog.derived_preds();
    let mut out = Vec::new();
    for scc in &pcg.sccs {
        if !scc.iter().any(|p| derived.contains(p)) {
            continue;
        }
        let inside = |p: &str| scc.iter().any(|s| s == p);
        let internal: Vec<EdgeLabel> = pcg
            .edges
            .iter()
            .filter(|(a, b, _)| inside(a) && inside(b))
            .map(|e| e.2)
            .collect();
        if internal.contains(&EdgeLabel::Negated) {
            return Err(NonStratifiable(scc.clone()));
        }
        let rules: Vec<usize> = prog
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| inside(&r.head.pred))
            .map(|(i, _)| i)
            .collect();
        let rule_refs: Vec<&Rule> = rules.iter().map(|&i| &prog.rules[i]).collect();
        out.push(Stratum {
            preds: scc.clone(),
            class: classify_recursion(scc, &rule_refs),
            needs_prem: internal.contains(&EdgeLabel::Aggregated),
            rules,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    const EX1: &str = "dpath(X,Z,Dxz) <- darc(X,Z,Dxz).\n\
        dpath(X,Z,Dxz) <- dpath(X,Y,Dxy), darc(Y,Z,Dyz), Dxz = Dxy + Dyz.\n\
        spath(X,Z,Dxz) <- dpath(X,Z,Dxz), is_min((X,Z),(Dxz)).";

    #[test]
    fn tc_graph() {
        let p = parse_program("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).").unwrap();
        let g = build_pcg(&p);
        assert!(g.has_edge("arc", "tc", EdgeLabel::Positive));
        assert!(g.has_edge("tc", "tc", EdgeLabel::Positive));
        assert_eq!(g.sccs, vec![vec!["arc".to_string()], vec!["tc".to_string()]]);
        let s = stratify(&g, &p).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].class, RecursionClass::Linear);
    }

    #[test]
    fn shortest_path_strata() {
        let p = parse_program(EX1).unwrap();
        let g = build_pcg(&p);
        assert!(g.has_edge("dpath", "spath", EdgeLabel::Aggregated));
        let s = stratify(&g, &p).unwrap();
        let preds: Vec<Vec<String>> = s.iter().map(|s| s.preds.clone()).collect();
        assert_eq!(preds, vec![vec!["dpath".to_string()], vec!["spath".to_string()]]);
        assert!(!s[0].needs_prem && !s[1].needs_prem);
    }

    #[test]
    fn negation_through_recursion() {
        let p = parse_program("p(X) <- q(X), ~p(X).").unwrap();
        assert_eq!(stratify(&build_pcg(&p), &p).unwrap_err(), NonStratifiable(vec!["p".into()]));
    }

    #[test]
    fn min_in_recursion_needs_prem() {
        let p = parse_program(
            "dpath(X,Z,min<Dxz>) <- darc(X,Z,Dxz), Dxz > 0.\n\
             dpath(X,Z,min<Dxz>) <- dpath(X,Y,Dxy), dpath(Y,Z,Dyz), Dxz = Dxy + Dyz.",
        )
        .unwrap();
        let s = stratify(&build_pcg(&p), &p).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s[0].needs_prem);
        assert_eq!(s[0].class, RecursionClass::NonLinear);
    }

    #[test]
    fn mutual_recursion() {
        let p = parse_program(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).",
        )
        .unwrap();
        let g = build_pcg(&p);
        assert!(g.has_edge("attend", "cntfriends", EdgeLabel::Aggregated));
        let s = stratify(&g, &p).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].preds, vec!["attend".to_string(), "cntfriends".to_string()]);
        assert_eq!(s[0].class, RecursionClass::Mutual);
        assert!(s[0].needs_prem);
    }
}
