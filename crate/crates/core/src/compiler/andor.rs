//! Adorned AND/OR trees. OR nodes stand for literal occurrences, AND nodes
//! for rules. Node ids follow breadth-first order starting at 1.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write as _};

use super::pcg::Stratum;
use crate::frontend::validate::assigned_var;
use crate::frontend::vertical::rename_literal;
use crate::frontend::{Atom, HeadArg, Literal, Program, Query, Rule, Term, POSINT};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Or,
    And,
}

#[derive(Clone, Debug)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// OR nodes: the literal with tree-wide variable names.
    pub literal: Option<Literal>,
    /// OR nodes: position in the parent rule's body.
    pub body_index: Option<usize>,
    /// AND nodes: index of the rule in the program.
    pub rule: Option<usize>,
    /// AND nodes: the rule head with tree-wide variable names.
    pub head: Option<String>,
    pub adornment: String,
    pub r_node: bool,
    pub w_node: bool,
    pub entry: bool,
}

impl Node {
    /// Predicate of an OR node's atom.
    pub fn pred(&self) -> Option<&str> {
        match &self.literal {
            Some(Literal::Atom { atom, .. }) => Some(&atom.pred),
            _ => None,
        }
    }

    pub fn atom(&self) -> Option<&Atom> {
        match &self.literal {
            Some(Literal::Atom { atom, .. }) => Some(atom),
            _ => None,
        }
    }

    /// 0-based positions marked `b`.
    pub fn bound_positions(&self) -> BTreeSet<usize> {
        self.adornment
            .chars()
            .enumerate()
            .filter(|(_, c)| *c == 'b')
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct AndOrTree {
    pub nodes: Vec<Node>,
}

impl AndOrTree {
    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id - 1]
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn ids_where(&self, f: impl Fn(&Node) -> bool) -> Vec<usize> {
        self.nodes.iter().filter(|n| f(n)).map(|n| n.id).collect()
    }

    /// OR ancestors of `id`, nearest first, excluding `id`.
    pub fn or_ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.node(id).parent;
        while let Some(p) = cur {
            if self.node(p).kind == NodeKind::Or {
                out.push(p);
            }
            cur = self.node(p).parent;
        }
        out
    }

    pub fn subtree(&self, id: usize) -> Vec<usize> {
        let mut out = vec![id];
        let mut i = 0;
        while i < out.len() {
            out.extend(self.node(out[i]).children.iter().copied());
            i += 1;
        }
        out
    }

    /// Indented text, one node per line.
    pub fn render(&self, prog: &Program) -> String {
        let mut s = String::new();
        self.render_node(prog, 1, 0, &mut s);
        s
    }

    fn render_node(&self, prog: &Program, id: usize, depth: usize, out: &mut String) {
        let n = self.node(id);
        let pad = "  ".repeat(depth);
        match n.kind {
            NodeKind::Or => {
                let mut marks = Vec::new();
                if n.w_node {
                    marks.push("W");
                }
                if n.r_node {
                    marks.push("R");
                }
                if n.entry {
                    marks.push("entry");
                }
                let _ = write!(out, "{pad}OR{} {} [{}]", id, n.literal.as_ref().unwrap(), n.adornment);
                if !marks.is_empty() {
                    let _ = write!(out, " {}", marks.join(" "));
                }
                out.push('\n');
            }
            NodeKind::And => {
                let r = n.rule.unwrap();
                let _ = writeln!(out, "{pad}AND{} {} (rule {}: {})", id, n.head.as_ref().unwrap(), r + 1, prog.rules[r]);
            }
        }
        for &c in &n.children {
            self.render_node(prog, c, depth + 1, out);
        }
    }
}

impl fmt::Display for AndOrTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for n in &self.nodes {
            match n.kind {
                NodeKind::Or => writeln!(f, "OR{} {} [{}]", n.id, n.literal.as_ref().unwrap(), n.adornment)?,
                NodeKind::And => writeln!(f, "AND{} {}", n.id, n.head.as_ref().unwrap())?,
            }
        }
        Ok(())
    }
}

fn term_bound(t: &Term, bound: &BTreeSet<String>) -> bool {
    !t.has_anon() && t.vars().iter().all(|v| bound.contains(*v))
}

fn flag(b: bool) -> char {
    if b {
        'b'
    } else {
        'f'
    }
}

/// Adornment of a literal given the variables bound before it.
pub fn adorn_literal(l: &Literal, bound: &BTreeSet<String>) -> String {
    match l {
        Literal::Atom { atom, .. } => atom.args.iter().map(|t| flag(term_bound(t, bound))).collect(),
        Literal::Cmp(c) => [&c.left, &c.right].iter().map(|t| flag(term_bound(t, bound))).collect(),
        Literal::Extrema { group, cost, .. } => group.iter().chain(cost).map(|v| flag(bound.contains(v))).collect(),
        Literal::IfThenElse { cond, .. } => [&cond.left, &cond.right].iter().map(|t| flag(term_bound(t, bound))).collect(),
        Literal::Vertical { id, val, col, .. } => [
            flag(term_bound(id, bound)),
            flag(bound.contains(val) && bound.contains(col)),
        ]
        .iter()
        .collect(),
    }
}

/// Variables bound after evaluating `l` with `bound` already bound.
/// Variables assigned by arithmetic count as bound.
pub fn bind_literal(l: &Literal, bound: &mut BTreeSet<String>) {
    match l {
        Literal::Atom { atom, negated: false } if atom.pred == POSINT => {
            if atom.args.len() == 2 && term_bound(&atom.args[0], bound) {
                if let Term::Var(k) = &atom.args[1] {
                    bound.insert(k.clone());
                }
            }
        }
        Literal::Atom { atom, negated: false } => bound.extend(atom.vars().into_iter().map(String::from)),
        Literal::Vertical { .. } => bound.extend(l.vars().into_iter().map(String::from)),
        Literal::Cmp(c) => {
            if let Some(v) = assigned_var(c, bound) {
                bound.insert(v.to_string());
            }
        }
        Literal::IfThenElse {
            cond,
            then_bind,
            else_bind,
        } => {
            if cond.vars().iter().all(|v| bound.contains(*v)) {
                if let (Some(a), Some(b)) = (assigned_var(then_bind, bound), assigned_var(else_bind, bound)) {
                    if a == b {
                        bound.insert(a.to_string());
                    }
                }
            }
        }
        _ => {}
    }
}

/// Whether an OR leaf reads a stored relation through its own scan or
/// lookup. Negated atoms only test membership and are not counted.
fn reads_relation(l: &Literal) -> bool {
    matches!(l, Literal::Atom { atom, negated: false } if atom.pred != POSINT)
}

struct Builder<'a> {
    prog: &'a Program,
    stratum: &'a Stratum,
    rules: Vec<usize>,
    nodes: Vec<Node>,
    expanded: BTreeSet<String>,
    expand_children: bool,
}

impl<'a> Builder<'a> {
    fn push(&mut self, mut n: Node) -> usize {
        n.id = self.nodes.len() + 1;
        if let Some(p) = n.parent {
            self.nodes[p - 1].children.push(n.id);
        }
        self.nodes.push(n);
        self.nodes.len()
    }

    fn blank(kind: NodeKind, parent: Option<usize>) -> Node {
        Node {
            id: 0,
            kind,
            parent,
            children: Vec::new(),
            literal: None,
            body_index: None,
            rule: None,
            head: None,
            adornment: String::new(),
            r_node: false,
            w_node: false,
            entry: false,
        }
    }

    fn on_ancestor_path(&self, id: usize, pred: &str) -> bool {
        let mut cur = self.nodes[id - 1].parent;
        while let Some(p) = cur {
            let n = &self.nodes[p - 1];
            if n.pred() == Some(pred) {
                return true;
            }
            cur = n.parent;
        }
        false
    }

    fn should_expand(&self, id: usize) -> bool {
        let n = &self.nodes[id - 1];
        if id == 1 {
            return true;
        }
        if !self.expand_children {
            return false;
        }
        match &n.literal {
            Some(Literal::Atom { atom, negated: false }) => {
                self.stratum.contains(&atom.pred)
                    && !self.expanded.contains(&atom.pred)
                    && !self.on_ancestor_path(id, &atom.pred)
            }
            _ => false,
        }
    }

    fn expand_or(&mut self, id: usize, queue: &mut VecDeque<usize>) {
        let atom = self.nodes[id - 1].atom().unwrap().clone();
        self.expanded.insert(atom.pred.clone());
        let rules: Vec<usize> = self
            .rules
            .iter()
            .copied()
            .filter(|&ri| self.prog.rules[ri].head.pred == atom.pred)
            .collect();
        for ri in rules {
            let mut n = Self::blank(NodeKind::And, Some(id));
            n.rule = Some(ri);
            n.adornment = self.nodes[id - 1].adornment.clone();
            let and_id = self.push(n);
            queue.push_back(and_id);
        }
    }

    fn expand_and(&mut self, id: usize, queue: &mut VecDeque<usize>) {
        let parent = self.nodes[id - 1].parent.unwrap();
        let ri = self.nodes[id - 1].rule.unwrap();
        let rule: &Rule = &self.prog.rules[ri];
        let call = self.nodes[parent - 1].atom().unwrap().clone();
        let call_adorn: Vec<char> = self.nodes[parent - 1].adornment.chars().collect();

        // Unify head variables with the call's arguments; everything else
        // gets a name local to this AND node.
        let mut map: BTreeMap<String, Term> = BTreeMap::new();
        let mut bound: BTreeSet<String> = BTreeSet::new();
        for (i, (h, a)) in rule.head.args.iter().zip(&call.args).enumerate() {
            if let HeadArg::Term(Term::Var(v)) = h {
                if !map.contains_key(v) {
                    let t = match a {
                        Term::Anon => Term::Var(format!("{v}_{id}")),
                        t => t.clone(),
                    };
                    map.insert(v.clone(), t);
                }
            }
            if call_adorn.get(i) == Some(&'b') {
                bound.extend(a.vars().into_iter().map(String::from));
            }
        }
        let mut rn = |v: &str| -> Term { map.get(v).cloned().unwrap_or_else(|| Term::Var(format!("{v}_{id}"))) };
        let head_args: Vec<String> = rule
            .head
            .args
            .iter()
            .map(|a| match a {
                HeadArg::Term(t) => t.rename(&mut rn).to_string(),
                HeadArg::Agg(s) => {
                    let vars: Vec<String> = s.vars.iter().map(|v| rn(v).to_string()).collect();
                    format!("{}<{}>", s.func.name(), vars.join(", "))
                }
            })
            .collect();
        self.nodes[id - 1].head = Some(if head_args.is_empty() {
            rule.head.pred.clone()
        } else {
            format!("{}({})", rule.head.pred, head_args.join(", "))
        });
        let body: Vec<Literal> = rule.body.iter().map(|l| rename_literal(l, &mut rn)).collect();
        for (bi, l) in body.into_iter().enumerate() {
            let mut n = Self::blank(NodeKind::Or, Some(id));
            n.adornment = adorn_literal(&l, &bound);
            bind_literal(&l, &mut bound);
            n.literal = Some(l);
            n.body_index = Some(bi);
            let or_id = self.push(n);
            queue.push_back(or_id);
        }
    }

    fn run(&mut self) {
        let mut queue = VecDeque::from([1usize]);
        while let Some(id) = queue.pop_front() {
            match self.nodes[id - 1].kind {
                NodeKind::Or => {
                    if self.should_expand(id) {
                        self.expand_or(id, &mut queue);
                    }
                }
                NodeKind::And => self.expand_and(id, &mut queue),
            }
        }
    }
}

/// Assigns R, W and entry marks from the node structure.
pub fn mark(tree: &mut AndOrTree) {
    for i in 0..tree.nodes.len() {
        let n = &tree.nodes[i];
        if n.kind != NodeKind::Or {
            continue;
        }
        let w = n.id == 1 || !n.is_leaf();
        let r = n.is_leaf() && reads_relation(n.literal.as_ref().unwrap());
        tree.nodes[i].w_node = w;
        tree.nodes[i].r_node = r;
    }
    let marked = |t: &AndOrTree, id: usize| t.subtree(id).iter().any(|&d| t.node(d).r_node || t.node(d).w_node);
    for i in 0..tree.nodes.len() {
        let n = &tree.nodes[i];
        if !n.r_node {
            continue;
        }
        let siblings = &tree.node(n.parent.unwrap()).children;
        let first_r = siblings.iter().copied().find(|&s| tree.node(s).r_node);
        if first_r != Some(n.id) {
            continue;
        }
        let clear = tree.or_ancestors(n.id).into_iter().all(|a| match tree.node(a).parent {
            None => true,
            Some(p) => tree
                .node(p)
                .children
                .iter()
                .take_while(|&&s| s != a)
                .all(|&s| !marked(tree, s)),
        });
        tree.nodes[i].entry = clear;
    }
}

fn root_args(prog: &Program, driver: &str, rules: &[usize], query: Option<&Query>) -> (Vec<Term>, String) {
    if let Some(q) = query.filter(|q| q.goal.pred == driver) {
        return (q.goal.args.clone(), q.adornment());
    }
    let head = rules.iter().map(|&r| &prog.rules[r].head).find(|h| h.pred == driver);
    let arity = head.map(|h| h.arity()).unwrap_or(0);
    let mut names: Vec<Term> = Vec::new();
    if let Some(h) = head {
        for a in &h.args {
            match a {
                HeadArg::Term(Term::Var(v)) if !names.contains(&Term::var(v)) => names.push(Term::var(v)),
                HeadArg::Agg(s) if s.func.is_extremum() || s.func.is_sum() => {
                    let v = Term::var(&s.vars[0]);
                    if !names.contains(&v) {
                        names.push(v);
                    }
                }
                _ => break,
            }
        }
    }
    if names.len() != arity {
        names = (1..=arity).map(|i| Term::Var(format!("V{i}"))).collect();
    }
    (names, "f".repeat(arity))
}

/// Tree for a stratum rooted at `driver`. Stratum predicates are expanded
/// at their first breadth-first occurrence that is not recursive on its own
/// ancestor path; every other occurrence is a leaf.
pub fn build_and_or_tree(prog: &Program, stratum: &Stratum, driver: &str, query: Option<&Query>) -> AndOrTree {
    let (args, adornment) = root_args(prog, driver, &stratum.rules, query);
    let mut root = Builder::blank(NodeKind::Or, None);
    root.literal = Some(Literal::pos(Atom::new(driver, args)));
    root.adornment = adornment;
    let mut b = Builder {
        prog,
        stratum,
        rules: stratum.rules.clone(),
        nodes: Vec::new(),
        expanded: BTreeSet::new(),
        expand_children: true,
    };
    b.push(root);
    b.run();
    let mut t = AndOrTree { nodes: b.nodes };
    mark(&mut t);
    t
}

/// Three-level tree for a single rule: the head, one AND node and one leaf
/// per body literal. `head_adornment` defaults to all free.
pub fn rule_tree(prog: &Program, stratum: &Stratum, rule: usize, head_adornment: Option<&str>) -> AndOrTree {
    let r = &prog.rules[rule];
    let args: Vec<Term> = r
        .head
        .args
        .iter()
        .enumerate()
        .map(|(i, a)| match a {
            HeadArg::Term(t) => t.clone(),
            HeadArg::Agg(s) if !s.func.is_count() => Term::var(&s.vars[0]),
            HeadArg::Agg(_) => Term::Var(format!("Agg{i}")),
        })
        .collect();
    let mut root = Builder::blank(NodeKind::Or, None);
    root.adornment = head_adornment.map(String::from).unwrap_or_else(|| "f".repeat(args.len()));
    root.literal = Some(Literal::pos(Atom::new(&r.head.pred, args)));
    let mut b = Builder {
        prog,
        stratum,
        rules: vec![rule],
        nodes: Vec::new(),
        expanded: BTreeSet::new(),
        expand_children: false,
    };
    b.push(root);
    b.run();
    let mut t = AndOrTree { nodes: b.nodes };
    mark(&mut t);
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::pcg::{build_pcg, stratify};
    use crate::frontend::parse_program;

    const SG: &str = "sg(X,Y) <- arc(P,X), arc(P,Y), X != Y.\n\
                      sg(X,Y) <- arc(A,X), sg(A,B), arc(B,Y).";

    fn tree(src: &str, pred: &str) -> (Program, AndOrTree) {
        let p = parse_program(src).unwrap();
        let strata = stratify(&build_pcg(&p), &p).unwrap();
        let s = strata.iter().find(|s| s.contains(pred)).unwrap().clone();
        let t = build_and_or_tree(&p, &s, pred, None);
        (p, t)
    }

    #[test]
    fn same_generation_marks() {
        let (_, t) = tree(SG, "sg");
        assert_eq!(t.nodes.len(), 9);
        assert_eq!(t.ids_where(|n| n.kind == NodeKind::And), vec![2, 3]);
        assert_eq!(t.ids_where(|n| n.r_node), vec![4, 5, 7, 8, 9]);
        assert_eq!(t.ids_where(|n| n.w_node), vec![1]);
        assert_eq!(t.ids_where(|n| n.entry), vec![4, 7]);
        assert_eq!(t.node(8).pred(), Some("sg"));
        assert_eq!(t.node(4).adornment, "ff");
        assert_eq!(t.node(5).adornment, "bf");
        assert_eq!(t.node(6).adornment, "bb");
        assert_eq!(t.node(8).adornment, "bf");
        assert_eq!(t.node(9).adornment, "bf");
    }

    #[test]
    fn transitive_closure_entries() {
        let (p, t) = tree("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).", "tc");
        assert_eq!(t.ids_where(|n| n.entry), vec![4, 5]);
        assert_eq!(t.node(4).pred(), Some("arc"));
        assert_eq!(t.node(5).pred(), Some("tc"));
        assert!(t.render(&p).contains("OR5 tc(X, Z_3) [ff] R entry"));
    }

    #[test]
    fn smallest_tree() {
        let (_, t) = tree("p(X) <- q(X).", "p");
        assert_eq!(t.nodes.len(), 3);
        assert_eq!(t.node(1).kind, NodeKind::Or);
        assert_eq!(t.node(2).kind, NodeKind::And);
        assert!(t.node(3).r_node && t.node(3).entry);
    }

    #[test]
    fn query_adornment_propagates() {
        let p = parse_program("tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).").unwrap();
        let s = stratify(&build_pcg(&p), &p).unwrap().remove(0);
        let q = crate::frontend::parse_query("tc(1, Y).").unwrap();
        let t = build_and_or_tree(&p, &s, "tc", Some(&q));
        assert_eq!(t.node(1).adornment, "bf");
        assert_eq!(t.node(4).to_owned().literal.unwrap().to_string(), "arc(1, Y)");
        assert_eq!(t.node(4).adornment, "bf");
        assert_eq!(t.node(5).adornment, "bf");
    }

    #[test]
    fn mutual_recursion_expands_partner_once() {
        let (_, t) = tree(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).",
            "attend",
        );
        let cnt = t.ids_where(|n| n.pred() == Some("cntfriends"));
        assert_eq!(cnt.len(), 1);
        assert!(t.node(cnt[0]).w_node && !t.node(cnt[0]).is_leaf());
        let attend_leaf = t.ids_where(|n| n.pred() == Some("attend") && n.id != 1);
        assert_eq!(attend_leaf.len(), 1);
        assert!(t.node(attend_leaf[0]).entry);
        assert!(t.node(t.ids_where(|n| n.pred() == Some("organizer"))[0]).entry);
    }

    #[test]
    fn arithmetic_binds() {
        let (_, t) = tree("p(X, Z) <- q(X, Y), Z = Y + 1, r(Z).", "p");
        let r = t.ids_where(|n| n.pred() == Some("r"))[0];
        assert_eq!(t.node(r).adornment, "b");
    }
}
