//! Abstract syntax for programs, rules and queries, with a printer whose
//! output parses back to an equal value.

use std::collections::BTreeSet;
use std::fmt;

use crate::storage::Ty;

#[derive(Clone, Debug, PartialEq)]
pub enum Const {
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }

    fn prec(self) -> u8 {
        match self {
            ArithOp::Add | ArithOp::Sub => 1,
            ArithOp::Mul | ArithOp::Div => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Term {
    Var(String),
    /// `_`: every occurrence is a distinct fresh variable.
    Anon,
    Const(Const),
    Arith(ArithOp, Box<Term>, Box<Term>),
}

impl Term {
    pub fn var(name: &str) -> Term {
        Term::Var(name.to_string())
    }

    pub fn int(i: i64) -> Term {
        Term::Const(Const::Int(i))
    }

    pub fn as_var(&self) -> Option<&str> {
        match self {
            Term::Var(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_ground(&self) -> bool {
        match self {
            Term::Const(_) => true,
            Term::Arith(_, a, b) => a.is_ground() && b.is_ground(),
            _ => false,
        }
    }

    /// Named variables in left-to-right order, with repeats.
    pub fn vars_into<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Term::Var(v) => out.push(v),
            Term::Arith(_, a, b) => {
                a.vars_into(out);
                b.vars_into(out);
            }
            _ => {}
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut v = Vec::new();
        self.vars_into(&mut v);
        v
    }

    pub fn has_anon(&self) -> bool {
        match self {
            Term::Anon => true,
            Term::Arith(_, a, b) => a.has_anon() || b.has_anon(),
            _ => false,
        }
    }

    /// Applies `f` to every named variable.
    pub fn rename(&self, f: &mut impl FnMut(&str) -> Term) -> Term {
        match self {
            Term::Var(v) => f(v),
            Term::Arith(op, a, b) => Term::Arith(*op, Box::new(a.rename(f)), Box::new(b.rename(f))),
            t => t.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggFunc {
    Min,
    Max,
    Count,
    Sum,
    MCount,
    MSum,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::MCount => "mcount",
            AggFunc::MSum => "msum",
        }
    }

    pub fn from_name(s: &str) -> Option<AggFunc> {
        Some(match s {
            "min" => AggFunc::Min,
            "max" => AggFunc::Max,
            "count" => AggFunc::Count,
            "sum" => AggFunc::Sum,
            "mcount" => AggFunc::MCount,
            "msum" => AggFunc::MSum,
            _ => return None,
        })
    }

    pub fn is_extremum(self) -> bool {
        matches!(self, AggFunc::Min | AggFunc::Max)
    }

    pub fn is_count(self) -> bool {
        matches!(self, AggFunc::Count | AggFunc::MCount)
    }

    pub fn is_sum(self) -> bool {
        matches!(self, AggFunc::Sum | AggFunc::MSum)
    }

    /// Whether the stored value expands to every integer up to it.
    pub fn is_monotonic_expansion(self) -> bool {
        matches!(self, AggFunc::MCount | AggFunc::MSum)
    }
}

/// A head aggregate. For min/max/sum/msum the first variable is the
/// aggregated value; sum and msum may add witness variables after it. For
/// count and mcount all variables form the counted tuple.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateSpec {
    pub func: AggFunc,
    pub vars: Vec<String>,
}

impl AggregateSpec {
    pub fn value_var(&self) -> Option<&str> {
        if self.func.is_count() {
            None
        } else {
            self.vars.first().map(|s| s.as_str())
        }
    }

    pub fn witness_vars(&self) -> &[String] {
        if self.func.is_count() {
            &self.vars
        } else if self.vars.is_empty() {
            &[]
        } else {
            &self.vars[1..]
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum HeadArg {
    Term(Term),
    Agg(AggregateSpec),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub pred: String,
    pub args: Vec<HeadArg>,
}

impl Head {
    pub fn aggregate(&self) -> Option<(usize, &AggregateSpec)> {
        self.args.iter().enumerate().find_map(|(i, a)| match a {
            HeadArg::Agg(s) => Some((i, s)),
            _ => None,
        })
    }

    pub fn arity(&self) -> usize {
        self.args.len()
    }

    /// Variables of the head, aggregate variables included.
    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for a in &self.args {
            match a {
                HeadArg::Term(t) => t.vars_into(&mut out),
                HeadArg::Agg(s) => out.extend(s.vars.iter().map(|v| v.as_str())),
            }
        }
        out
    }

    /// The head as a plain atom when it carries no aggregate.
    pub fn as_atom(&self) -> Option<Atom> {
        let mut args = Vec::new();
        for a in &self.args {
            match a {
                HeadArg::Term(t) => args.push(t.clone()),
                HeadArg::Agg(_) => return None,
            }
        }
        Some(Atom {
            pred: self.pred.clone(),
            args,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub pred: String,
    pub args: Vec<Term>,
}

impl Atom {
    pub fn new(pred: &str, args: Vec<Term>) -> Atom {
        Atom {
            pred: pred.to_string(),
            args,
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for t in &self.args {
            t.vars_into(&mut out);
        }
        out
    }

    pub fn is_ground(&self) -> bool {
        self.args.iter().all(|t| t.is_ground())
    }

    pub fn to_head(&self) -> Head {
        Head {
            pred: self.pred.clone(),
            args: self.args.iter().cloned().map(HeadArg::Term).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    /// The operator with its operands swapped: `a op b` iff `b op' a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
            o => o,
        }
    }

    pub fn holds(self, o: std::cmp::Ordering) -> bool {
        use std::cmp::Ordering::*;
        match self {
            CmpOp::Eq => o == Equal,
            CmpOp::Ne => o != Equal,
            CmpOp::Lt => o == Less,
            CmpOp::Le => o != Greater,
            CmpOp::Gt => o == Greater,
            CmpOp::Ge => o != Less,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub op: CmpOp,
    pub left: Term,
    pub right: Term,
}

impl Comparison {
    pub fn vars(&self) -> Vec<&str> {
        let mut v = self.left.vars();
        self.right.vars_into(&mut v);
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtremaKind {
    Min,
    Max,
}

impl ExtremaKind {
    pub fn name(self) -> &'static str {
        match self {
            ExtremaKind::Min => "is_min",
            ExtremaKind::Max => "is_max",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Literal {
    Atom { atom: Atom, negated: bool },
    Cmp(Comparison),
    Extrema {
        kind: ExtremaKind,
        group: Vec<String>,
        cost: Vec<String>,
    },
    IfThenElse {
        cond: Comparison,
        then_bind: Comparison,
        else_bind: Comparison,
    },
    /// `pred(Id, Val@Col)`: one row per non-id column of `pred`.
    Vertical {
        pred: String,
        id: Term,
        val: String,
        col: String,
    },
}

impl Literal {
    pub fn pos(atom: Atom) -> Literal {
        Literal::Atom {
            atom,
            negated: false,
        }
    }

    pub fn neg(atom: Atom) -> Literal {
        Literal::Atom {
            atom,
            negated: true,
        }
    }

    pub fn cmp(op: CmpOp, left: Term, right: Term) -> Literal {
        Literal::Cmp(Comparison { op, left, right })
    }

    pub fn as_atom(&self) -> Option<(&Atom, bool)> {
        match self {
            Literal::Atom { atom, negated } => Some((atom, *negated)),
            _ => None,
        }
    }

    pub fn positive_atom(&self) -> Option<&Atom> {
        match self {
            Literal::Atom {
                atom,
                negated: false,
            } => Some(atom),
            _ => None,
        }
    }

    pub fn vars(&self) -> Vec<&str> {
        match self {
            Literal::Atom { atom, .. } => atom.vars(),
            Literal::Cmp(c) => c.vars(),
            Literal::Extrema { group, cost, .. } => {
                group.iter().chain(cost).map(|s| s.as_str()).collect()
            }
            Literal::IfThenElse {
                cond,
                then_bind,
                else_bind,
            } => {
                let mut v = cond.vars();
                v.extend(then_bind.vars());
                v.extend(else_bind.vars());
                v
            }
            Literal::Vertical { id, val, col, .. } => {
                let mut v = id.vars();
                v.push(val);
                v.push(col);
                v
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rule {
    pub head: Head,
    pub body: Vec<Literal>,
}

impl Rule {
    /// Every named variable of the rule.
    pub fn all_vars(&self) -> BTreeSet<String> {
        let mut s: BTreeSet<String> = self.head.vars().into_iter().map(String::from).collect();
        for l in &self.body {
            s.extend(l.vars().into_iter().map(String::from));
        }
        s
    }

    pub fn extrema_goal(&self) -> Option<(ExtremaKind, &[String], &[String])> {
        self.body.iter().find_map(|l| match l {
            Literal::Extrema { kind, group, cost } => Some((*kind, group.as_slice(), cost.as_slice())),
            _ => None,
        })
    }

    pub fn body_atoms(&self) -> impl Iterator<Item = (&Atom, bool)> {
        self.body.iter().filter_map(|l| l.as_atom())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    pub pred: String,
    pub columns: Vec<(String, Ty)>,
}

impl Schema {
    pub fn types(&self) -> Vec<Ty> {
        self.columns.iter().map(|c| c.1).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Program {
    pub schemas: Vec<Schema>,
    pub rules: Vec<Rule>,
    pub facts: Vec<Atom>,
}

/// Name of the builtin that enumerates `1..=N` into its second argument.
pub const POSINT: &str = "posint";

impl Program {
    pub fn schema(&self, pred: &str) -> Option<&Schema> {
        self.schemas.iter().find(|s| s.pred == pred)
    }

    /// Predicates defined by at least one rule.
    pub fn derived_preds(&self) -> BTreeSet<String> {
        self.rules.iter().map(|r| r.head.pred.clone()).collect()
    }

    pub fn is_derived(&self, pred: &str) -> bool {
        self.rules.iter().any(|r| r.head.pred == pred)
    }

    /// Predicates read in bodies but never defined by a rule (builtins excluded).
    pub fn base_preds(&self) -> BTreeSet<String> {
        let derived = self.derived_preds();
        let mut out = BTreeSet::new();
        for r in &self.rules {
            for l in &r.body {
                let p = match l {
                    Literal::Atom { atom, .. } => &atom.pred,
                    Literal::Vertical { pred, .. } => pred,
                    _ => continue,
                };
                if p != POSINT && !derived.contains(p) {
                    out.insert(p.clone());
                }
            }
        }
        for s in &self.schemas {
            if !derived.contains(&s.pred) {
                out.insert(s.pred.clone());
            }
        }
        for f in &self.facts {
            if !derived.contains(&f.pred) {
                out.insert(f.pred.clone());
            }
        }
        out
    }

    pub fn rules_of<'a>(&'a self, pred: &'a str) -> impl Iterator<Item = (usize, &'a Rule)> + 'a {
        self.rules
            .iter()
            .enumerate()
            .filter(move |(_, r)| r.head.pred == pred)
    }
}

/// A query goal; constants mark bound positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Query {
    pub goal: Atom,
}

impl Query {
    pub fn bound_positions(&self) -> Vec<bool> {
        self.goal.args.iter().map(|t| t.is_ground()).collect()
    }

    pub fn adornment(&self) -> String {
        self.bound_positions()
            .iter()
            .map(|&b| if b { 'b' } else { 'f' })
            .collect()
    }
}

pub fn is_bare_constant(s: &str) -> bool {
    let mut c = s.chars();
    matches!(c.next(), Some(ch) if ch.is_ascii_lowercase())
        && s.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_')
        && !matches!(s, "if" | "then" | "else")
}

fn write_str_const(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    if is_bare_constant(s) {
        return f.write_str(s);
    }
    f.write_str("\"")?;
    for ch in s.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for Const {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const::Int(i) => write!(f, "{i}"),
            Const::Float(x) => {
                if x.is_finite() {
                    write!(f, "{x:?}")
                } else {
                    write!(f, "\"{x}\"")
                }
            }
            Const::Str(s) => write_str_const(f, s),
        }
    }
}

impl Term {
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        match self {
            Term::Var(v) => f.write_str(v),
            Term::Anon => f.write_str("_"),
            Term::Const(c) => write!(f, "{c}"),
            Term::Arith(op, a, b) => {
                let p = op.prec();
                let paren = p < min_prec;
                if paren {
                    f.write_str("(")?;
                }
                a.fmt_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                // Right operands bind tighter so `a - (b - c)` keeps its parentheses.
                b.fmt_prec(f, p + 1)?;
                if paren {
                    f.write_str(")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

fn comma_list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, items: &[T]) -> fmt::Result {
    for (i, x) in items.iter().enumerate() {
        if i > 0 {
            f.write_str(", ")?;
        }
        write!(f, "{x}")?;
    }
    Ok(())
}

impl fmt::Display for AggregateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}<", self.func.name())?;
        if self.func.is_count() && self.vars.len() > 1 {
            f.write_str("(")?;
            comma_list(f, &self.vars)?;
            f.write_str(")")?;
        } else {
            comma_list(f, &self.vars)?;
        }
        f.write_str(">")
    }
}

impl fmt::Display for HeadArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HeadArg::Term(t) => write!(f, "{t}"),
            HeadArg::Agg(a) => write!(f, "{a}"),
        }
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            comma_list(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.pred)?;
        if !self.args.is_empty() {
            f.write_str("(")?;
            comma_list(f, &self.args)?;
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left, self.op.symbol(), self.right)
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Atom { atom, negated } => {
                if *negated {
                    f.write_str("~")?;
                }
                write!(f, "{atom}")
            }
            Literal::Cmp(c) => write!(f, "{c}"),
            Literal::Extrema { kind, group, cost } => {
                write!(f, "{}((", kind.name())?;
                comma_list(f, group)?;
                f.write_str("), (")?;
                comma_list(f, cost)?;
                f.write_str("))")
            }
            Literal::IfThenElse {
                cond,
                then_bind,
                else_bind,
            } => write!(f, "if({cond} then {then_bind} else {else_bind})"),
            Literal::Vertical { pred, id, val, col } => write!(f, "{pred}({id}, {val}@{col})"),
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.head)?;
        if !self.body.is_empty() {
            f.write_str(" <- ")?;
            comma_list(f, &self.body)?;
        }
        f.write_str(".")
    }
}

impl fmt::Display for Schema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.pred)?;
        for (i, (name, ty)) in self.columns.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}:{ty}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if !self.schemas.is_empty() {
            f.write_str("database({")?;
            comma_list(f, &self.schemas)?;
            f.write_str("}).\n")?;
        }
        for a in &self.facts {
            writeln!(f, "{a}.")?;
        }
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Query {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.", self.goal)
    }
}
