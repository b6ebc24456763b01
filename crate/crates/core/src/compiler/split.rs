//! Exit and delta-rewritten recursive rules of a stratum.

use std::collections::BTreeSet;
use std::fmt;

use super::pcg::Stratum;
use crate::frontend::{Literal, Program, Rule};

/// Which version of a relation a body atom reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Version {
    /// Facts new in the previous iteration.
    Delta,
    /// Everything derived so far.
    All,
}

/// A recursive rule with one SCC atom reading the delta.
#[derive(Clone, Debug)]
pub struct DeltaRule {
    pub source_rule: usize,
    pub rule: Rule,
    /// Body index of the atom reading the delta.
    pub delta_lit: usize,
    /// Body indexes of all atoms over the stratum's predicates.
    pub scc_lits: Vec<usize>,
}

impl DeltaRule {
    pub fn version(&self, lit: usize) -> Option<Version> {
        if lit == self.delta_lit {
            Some(Version::Delta)
        } else if self.scc_lits.contains(&lit) {
            Some(Version::All)
        } else {
            None
        }
    }
}

impl fmt::Display for DeltaRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} <- ", self.rule.head)?;
        for (i, l) in self.rule.body.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if i == self.delta_lit {
                write!(f, "δ{l}")?;
            } else {
                write!(f, "{l}")?;
            }
        }
        f.write_str(".")
    }
}

#[derive(Clone, Debug)]
pub struct StratumPlan {
    pub driver: String,
    pub exit_rules: Vec<usize>,
    pub recursive_rules: Vec<DeltaRule>,
    pub diagnostics: Vec<String>,
}

fn scc_lits(stratum: &Stratum, r: &Rule) -> Vec<usize> {
    r.body
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, Literal::Atom { atom, negated: false } if stratum.contains(&atom.pred)))
        .map(|(i, _)| i)
        .collect()
}

/// Driver of a stratum: the query predicate when it belongs here, else the
/// member read by later rules, else the first by name.
pub fn choose_driver(stratum: &Stratum, prog: &Program, query_pred: Option<&str>) -> String {
    if let Some(q) = query_pred {
        if stratum.contains(q) {
            return q.to_string();
        }
    }
    let read_outside: BTreeSet<&str> = prog
        .rules
        .iter()
        .filter(|r| !stratum.contains(&r.head.pred))
        .flat_map(|r| r.body_atoms().map(|(a, _)| a.pred.as_str()))
        .filter(|p| stratum.contains(p))
        .collect();
    read_outside
        .into_iter()
        .next()
        .map(String::from)
        .unwrap_or_else(|| stratum.preds[0].clone())
}

pub fn split_exit_recursive(stratum: &Stratum, prog: &Program, query_pred: Option<&str>) -> StratumPlan {
    let mut exit_rules = Vec::new();
    let mut recursive_rules = Vec::new();
    for &ri in &stratum.rules {
        let r = &prog.rules[ri];
        let lits = scc_lits(stratum, r);
        if lits.is_empty() {
            exit_rules.push(ri);
            continue;
        }
        for &d in &lits {
            recursive_rules.push(DeltaRule {
                source_rule: ri,
                rule: r.clone(),
                delta_lit: d,
                scc_lits: lits.clone(),
            });
        }
    }
    let mut diagnostics = Vec::new();
    if stratum.class.is_recursive() && exit_rules.is_empty() {
        diagnostics.push(format!(
            "stratum {{{}}} has no exit rule; its fixpoint is empty",
            stratum.preds.join(", ")
        ));
    }
    StratumPlan {
        driver: choose_driver(stratum, prog, query_pred),
        exit_rules,
        recursive_rules,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::pcg::{build_pcg, stratify};
    use crate::frontend::parse_program;

    fn plan(src: &str) -> Vec<StratumPlan> {
        let p = parse_program(src).unwrap();
        stratify(&build_pcg(&p), &p)
            .unwrap()
            .iter()
            .map(|s| split_exit_recursive(s, &p, None))
            .collect()
    }

    #[test]
    fn tc_split() {
        let s = plan("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).");
        assert_eq!(s[0].exit_rules, vec![0]);
        assert_eq!(s[0].recursive_rules.len(), 1);
        assert_eq!(s[0].recursive_rules[0].to_string(), "tc(X, Y) <- δtc(X, Z), arc(Z, Y).");
        assert_eq!(s[0].driver, "tc");
    }

    #[test]
    fn nonlinear_expands() {
        let s = plan("p(X,Y) <- e(X,Y). p(X,Z) <- p(X,Y), p(Y,Z).");
        let text: Vec<String> = s[0].recursive_rules.iter().map(|d| d.to_string()).collect();
        assert_eq!(
            text,
            vec!["p(X, Z) <- δp(X, Y), p(Y, Z).", "p(X, Z) <- p(X, Y), δp(Y, Z)."]
        );
        assert_eq!(s[0].recursive_rules[1].version(0), Some(Version::All));
    }

    #[test]
    fn nonrecursive_is_all_exit() {
        let s = plan("p(X) <- q(X). p(X) <- r(X).");
        assert_eq!(s[0].exit_rules, vec![0, 1]);
        assert!(s[0].recursive_rules.is_empty());
    }

    #[test]
    fn missing_exit_rule() {
        let s = plan("p(X) <- p(X).");
        assert_eq!(s[0].diagnostics.len(), 1);
    }

    #[test]
    fn mutual_driver() {
        let s = plan(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).\n\
             out(X) <- attend(X).",
        );
        assert_eq!(s[0].driver, "attend");
    }
}
