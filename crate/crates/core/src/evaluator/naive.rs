//! Reference evaluator over decoded values. Each stratum iterates the full
//! immediate-consequence step until nothing changes. Slow and simple; used
//! as the oracle for the other engines and by the premappability sampler.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use super::builtins::{coerce, compare, eval_cmp, eval_expr, posint_bound, values_equal};
use super::ir::{lower_rule, ArgPat, Expr, RuleIr, Step};
use super::EvalError;
use crate::compiler::{Compiled, PredKind};
use crate::frontend::{AggFunc, ExtremaKind};
use crate::storage::{Ty, Value};

pub type Db = BTreeMap<String, BTreeSet<Vec<Value>>>;

pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct NaiveRun {
    pub db: Db,
    /// Immediate-consequence applications per stratum.
    pub iterations: Vec<usize>,
}

type Index = HashMap<Vec<Value>, Vec<Vec<Value>>>;

/// Read access to relations, layered: `top` shadows `base`. Predicates in
/// `expand` store one row per group and read back as every value 1..=n.
pub struct View<'a> {
    top: &'a Db,
    base: &'a Db,
    types: &'a BTreeMap<String, Vec<Ty>>,
    expanded: HashMap<String, BTreeSet<Vec<Value>>>,
    index: RefCell<HashMap<(String, Vec<usize>), Rc<Index>>>,
}

static EMPTY: BTreeSet<Vec<Value>> = BTreeSet::new();

impl<'a> View<'a> {
    pub fn new(top: &'a Db, base: &'a Db, types: &'a BTreeMap<String, Vec<Ty>>, expand: &BTreeMap<String, usize>) -> Self {
        let mut expanded = HashMap::new();
        for (p, &col) in expand {
            let Some(rows) = top.get(p).or_else(|| base.get(p)) else { continue };
            let mut out = BTreeSet::new();
            for r in rows {
                let n = r[col].as_i64().unwrap_or(0);
                for k in 1..=n {
                    let mut e = r.clone();
                    e[col] = Value::Int(k);
                    out.insert(e);
                }
            }
            expanded.insert(p.clone(), out);
        }
        View {
            top,
            base,
            types,
            expanded,
            index: RefCell::new(HashMap::new()),
        }
    }

    pub fn rel(&self, pred: &str) -> &BTreeSet<Vec<Value>> {
        self.expanded
            .get(pred)
            .or_else(|| self.top.get(pred))
            .or_else(|| self.base.get(pred))
            .unwrap_or(&EMPTY)
    }

    fn col_ty(&self, pred: &str, col: usize) -> Option<Ty> {
        self.types.get(pred).and_then(|t| t.get(col)).copied()
    }

    fn lookup(&self, pred: &str, cols: &[usize], key: &[Value]) -> Vec<Vec<Value>> {
        let mut norm = Vec::with_capacity(key.len());
        for (&c, v) in cols.iter().zip(key) {
            match self.col_ty(pred, c) {
                Some(t) => match coerce(v.clone(), t) {
                    Ok(v) => norm.push(v),
                    Err(_) => return Vec::new(),
                },
                None => norm.push(v.clone()),
            }
        }
        let idx = self
            .index
            .borrow_mut()
            .entry((pred.to_string(), cols.to_vec()))
            .or_insert_with(|| {
                let mut m: Index = HashMap::new();
                for r in self.rel(pred) {
                    m.entry(cols.iter().map(|&c| r[c].clone()).collect()).or_default().push(r.clone());
                }
                Rc::new(m)
            })
            .clone();
        idx.get(&norm).cloned().unwrap_or_default()
    }
}

fn set_slot(slots: &mut [Value], s: usize, v: &Value, tys: &[Ty]) -> Result<(), EvalError> {
    slots[s] = coerce(v.clone(), tys[s])?;
    Ok(())
}

fn bind_pat(p: &ArgPat, v: &Value, slots: &mut [Value], tys: &[Ty]) -> Result<bool, EvalError> {
    Ok(match p {
        ArgPat::Bind(s) => {
            set_slot(slots, *s, v, tys)?;
            true
        }
        ArgPat::Check(e) => values_equal(&eval_expr(e, slots)?, v),
        ArgPat::Skip => true,
    })
}

fn run_steps(ir: &RuleIr, view: &View, k: usize, slots: &mut Vec<Value>, out: &mut Vec<Vec<Value>>) -> Result<(), EvalError> {
    let Some(step) = ir.steps.get(k) else {
        out.push(slots.clone());
        return Ok(());
    };
    match step {
        Step::Scan { pred, args, .. } => {
            let binds: Vec<usize> = args
                .iter()
                .filter_map(|a| match a {
                    ArgPat::Bind(s) => Some(*s),
                    _ => None,
                })
                .collect();
            let mut cols = Vec::new();
            let mut key = Vec::new();
            for (i, a) in args.iter().enumerate() {
                if let ArgPat::Check(e) = a {
                    let mut used = Vec::new();
                    e.slots(&mut used);
                    if used.iter().all(|u| !binds.contains(u)) {
                        cols.push(i);
                        key.push(eval_expr(e, slots)?);
                    }
                }
            }
            let rows: Vec<Vec<Value>> = if cols.is_empty() {
                view.rel(pred).iter().cloned().collect()
            } else {
                view.lookup(pred, &cols, &key)
            };
            'rows: for row in &rows {
                for (i, a) in args.iter().enumerate() {
                    if let ArgPat::Bind(s) = a {
                        set_slot(slots, *s, &row[i], &ir.slot_tys)?;
                    }
                }
                for (i, a) in args.iter().enumerate() {
                    if let ArgPat::Check(e) = a {
                        if !values_equal(&eval_expr(e, slots)?, &row[i]) {
                            continue 'rows;
                        }
                    }
                }
                run_steps(ir, view, k + 1, slots, out)?;
            }
        }
        Step::Absent { pred, args, .. } => {
            let mut cols = Vec::new();
            let mut key = Vec::new();
            for (i, a) in args.iter().enumerate() {
                if let Some(e) = a {
                    cols.push(i);
                    key.push(eval_expr(e, slots)?);
                }
            }
            let present = if cols.is_empty() {
                !view.rel(pred).is_empty()
            } else {
                !view.lookup(pred, &cols, &key).is_empty()
            };
            if !present {
                run_steps(ir, view, k + 1, slots, out)?;
            }
        }
        Step::Posint { n, k: pat } => {
            let n = posint_bound(&eval_expr(n, slots)?)?;
            for i in 1..=n.max(0) {
                if bind_pat(pat, &Value::Int(i), slots, &ir.slot_tys)? {
                    run_steps(ir, view, k + 1, slots, out)?;
                }
            }
        }
        Step::Filter(c) => {
            if eval_cmp(c, slots)? {
                run_steps(ir, view, k + 1, slots, out)?;
            }
        }
        Step::Assign { slot, expr } => {
            let v = eval_expr(expr, slots)?;
            set_slot(slots, *slot, &v, &ir.slot_tys)?;
            run_steps(ir, view, k + 1, slots, out)?;
        }
        Step::Branch { cond, then, otherwise } => {
            let s = if eval_cmp(cond, slots)? { then } else { otherwise };
            let pass = match &**s {
                Step::Assign { slot, expr } => {
                    let v = eval_expr(expr, slots)?;
                    set_slot(slots, *slot, &v, &ir.slot_tys)?;
                    true
                }
                Step::Filter(c) => eval_cmp(c, slots)?,
                _ => unreachable!(),
            };
            if pass {
                run_steps(ir, view, k + 1, slots, out)?;
            }
        }
    }
    Ok(())
}

/// Every complete binding of the rule body.
pub fn bindings(ir: &RuleIr, view: &View) -> Result<Vec<Vec<Value>>, EvalError> {
    let mut slots = vec![Value::Int(0); ir.slots.len()];
    let mut out = Vec::new();
    run_steps(ir, view, 0, &mut slots, &mut out)?;
    Ok(out)
}

/// Keeps, per group, the bindings whose cost is least (greatest).
pub fn filter_extrema(ir: &RuleIr, bs: Vec<Vec<Value>>) -> Vec<Vec<Value>> {
    let Some(x) = &ir.extrema else { return bs };
    let mut best: BTreeMap<Vec<Value>, Value> = BTreeMap::new();
    for b in &bs {
        let g: Vec<Value> = x.group.iter().map(|&s| b[s].clone()).collect();
        let c = &b[x.cost];
        best.entry(g)
            .and_modify(|cur| {
                let o = compare(c, cur).unwrap_or(std::cmp::Ordering::Equal);
                let better = match x.kind {
                    ExtremaKind::Min => o.is_lt(),
                    ExtremaKind::Max => o.is_gt(),
                };
                if better {
                    *cur = c.clone();
                }
            })
            .or_insert_with(|| c.clone());
    }
    bs.into_iter()
        .filter(|b| {
            let g: Vec<Value> = x.group.iter().map(|&s| b[s].clone()).collect();
            values_equal(&b[x.cost], &best[&g])
        })
        .collect()
}

/// One derived head: the row (aggregate column holding the contributed
/// value), the contribution tag and the witness tuple.
pub struct Derived {
    pub row: Vec<Value>,
    pub tag: u64,
    pub witness: Vec<Value>,
}

pub fn heads(ir: &RuleIr, bs: &[Vec<Value>]) -> Result<Vec<Derived>, EvalError> {
    let mut out = Vec::with_capacity(bs.len());
    for b in bs {
        let mut row = Vec::with_capacity(ir.head.len());
        for (e, &t) in ir.head.iter().zip(&ir.head_tys) {
            row.push(coerce(eval_expr(e, b)?, t)?);
        }
        let (tag, witness) = match &ir.agg {
            Some(a) if a.func.is_extremum() => (0, Vec::new()),
            Some(a) if a.witness.is_empty() && a.func.is_sum() => (0, vec![row[a.col].clone()]),
            Some(a) => (0, a.witness.iter().map(|&s| b[s].clone()).collect()),
            None => (ir.index as u64 + 1, Vec::new()),
        };
        out.push(Derived { row, tag, witness });
    }
    Ok(out)
}

fn group_key(row: &[Value], col: usize) -> Vec<Value> {
    row.iter().enumerate().filter(|(i, _)| *i != col).map(|(_, v)| v.clone()).collect()
}

/// Totals of a count or sum relation: per group, the largest value for each
/// distinct (tag, witness), added up in that order.
pub fn accumulate(func: AggFunc, col: usize, ty: Ty, ds: &[Derived]) -> Result<BTreeMap<Vec<Value>, Value>, EvalError> {
    let mut per: BTreeMap<Vec<Value>, BTreeMap<(u64, Vec<Value>), Value>> = BTreeMap::new();
    for d in ds {
        let v = if func.is_count() && d.tag == 0 {
            Value::Int(1)
        } else {
            d.row[col].clone()
        };
        let slot = per.entry(group_key(&d.row, col)).or_default();
        let e = slot.entry((d.tag, d.witness.clone())).or_insert_with(|| v.clone());
        if compare(&v, e) == Some(std::cmp::Ordering::Greater) {
            *e = v;
        }
    }
    let mut out = BTreeMap::new();
    for (g, ws) in per {
        let total = match ty {
            Ty::Int => {
                let mut s: i64 = 0;
                for v in ws.values() {
                    let x = v.as_i64().ok_or_else(|| EvalError::Type(format!("{v} in an Integer sum")))?;
                    s = s.checked_add(x).ok_or_else(|| EvalError::Overflow("integer sum".into()))?;
                }
                Value::Int(s)
            }
            Ty::Float => {
                if func == AggFunc::MSum {
                    return Err(EvalError::Unsupported("msum over Float values".into()));
                }
                let s: f64 = ws.values().map(|v| v.as_f64().unwrap()).sum();
                coerce(Value::Float(s), Ty::Float)?
            }
            Ty::Str => return Err(EvalError::Type("sum over strings".into())),
        };
        out.insert(g, total);
    }
    Ok(out)
}

fn with_value(mut g: Vec<Value>, col: usize, v: Value) -> Vec<Value> {
    g.insert(col, v);
    g
}

/// Assembles one predicate's relation from the heads derived in one step.
pub fn assemble(kind: PredKind, ty_of_col: impl Fn(usize) -> Ty, ds: &[Derived]) -> Result<BTreeSet<Vec<Value>>, EvalError> {
    Ok(match kind {
        PredKind::Base | PredKind::Set => ds.iter().map(|d| d.row.clone()).collect(),
        PredKind::Extremum { kind, col } => {
            let mut best: BTreeMap<Vec<Value>, Value> = BTreeMap::new();
            for d in ds {
                let v = &d.row[col];
                best.entry(group_key(&d.row, col))
                    .and_modify(|cur| {
                        let o = compare(v, cur).unwrap_or(std::cmp::Ordering::Equal);
                        if (kind == ExtremaKind::Min && o.is_lt()) || (kind == ExtremaKind::Max && o.is_gt()) {
                            *cur = v.clone();
                        }
                    })
                    .or_insert_with(|| v.clone());
            }
            best.into_iter().map(|(g, v)| with_value(g, col, v)).collect()
        }
        PredKind::Accum { func, col, .. } => accumulate(func, col, ty_of_col(col), ds)?
            .into_iter()
            .map(|(g, v)| with_value(g, col, v))
            .collect(),
    })
}

/// Lowers every rule of a compiled program.
pub fn lower_all(c: &Compiled) -> Result<Vec<RuleIr>, EvalError> {
    c.program
        .rules
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let tys = c.types.pred(&r.head.pred).map(|t| t.to_vec()).unwrap_or_else(|| vec![Ty::Int; r.head.arity()]);
            lower_rule(i, r, &c.types.rule_vars[i], &tys)
        })
        .collect()
}

/// Predicates read back as 1..=n, with their value column.
pub fn expanding_preds(c: &Compiled) -> BTreeMap<String, usize> {
    c.kinds
        .iter()
        .filter_map(|(p, k)| match k {
            PredKind::Accum { func, col, .. } if func.is_monotonic_expansion() => Some((p.clone(), *col)),
            _ => None,
        })
        .collect()
}

/// Base relations: the loaded facts plus facts written in the program,
/// converted to their column types.
pub fn base_db(c: &Compiled, edb: &Db) -> Result<Db, EvalError> {
    let mut db = Db::new();
    for (p, rows) in edb {
        let tys = c.types.pred(p);
        let set = db.entry(p.clone()).or_default();
        for r in rows {
            set.insert(match tys {
                Some(t) => r.iter().zip(t).map(|(v, &t)| coerce(v.clone(), t)).collect::<Result<_, _>>()?,
                None => r.clone(),
            });
        }
    }
    for f in &c.program.facts {
        let tys = c.types.pred(&f.pred).map(|t| t.to_vec()).unwrap_or_default();
        let mut row = Vec::new();
        for (i, t) in f.args.iter().enumerate() {
            let v = eval_expr(&const_expr(t)?, &[])?;
            row.push(match tys.get(i) {
                Some(&ty) => coerce(v, ty)?,
                None => v,
            });
        }
        db.entry(f.pred.clone()).or_default().insert(row);
    }
    Ok(db)
}

fn const_expr(t: &crate::frontend::Term) -> Result<Expr, EvalError> {
    use crate::frontend::{Const, Term};
    Ok(match t {
        Term::Const(Const::Int(i)) => Expr::Const(Value::Int(*i)),
        Term::Const(Const::Float(x)) => Expr::Const(Value::Float(*x)),
        Term::Const(Const::Str(s)) => Expr::Const(Value::str(s)),
        Term::Arith(op, a, b) => Expr::Arith(*op, Box::new(const_expr(a)?), Box::new(const_expr(b)?)),
        t => return Err(EvalError::Unsupported(format!("non-ground fact argument {t}"))),
    })
}

/// Iterates every stratum to its fixpoint.
pub fn naive_eval(c: &Compiled, edb: &Db, max_iterations: usize) -> Result<NaiveRun, EvalError> {
    let irs = lower_all(c)?;
    let expand = expanding_preds(c);
    let mut db = base_db(c, edb)?;
    let mut iterations = Vec::new();
    for s in &c.strata {
        let mut cur: Db = s.preds.iter().map(|p| (p.clone(), BTreeSet::new())).collect();
        let mut n = 0usize;
        loop {
            let next = {
                let view = View::new(&cur, &db, &c.types.preds, &expand);
                let mut derived: BTreeMap<&str, Vec<Derived>> = BTreeMap::new();
                for &ri in &s.rules {
                    let ir = &irs[ri];
                    let mut bs = bindings(ir, &view)?;
                    if c.filters_per_rule(ri) {
                        bs = filter_extrema(ir, bs);
                    }
                    derived.entry(&ir.head_pred).or_default().extend(heads(ir, &bs)?);
                }
                let mut next = Db::new();
                for p in &s.preds {
                    let ds = derived.remove(p.as_str()).unwrap_or_default();
                    let tys = c.types.pred(p).map(|t| t.to_vec()).unwrap_or_default();
                    next.insert(p.clone(), assemble(c.kind(p), |i| tys[i], &ds)?);
                }
                next
            };
            n += 1;
            if next == cur {
                break;
            }
            if n >= max_iterations {
                return Err(EvalError::NonTermination {
                    preds: s.preds.clone(),
                    iterations: n,
                });
            }
            cur = next;
        }
        iterations.push(n);
        db.extend(cur);
    }
    Ok(NaiveRun { db, iterations })
}

/// One application of the rules to `interp` (layered over `base`) under
/// plain set semantics: monotonic count and sum heads produce every value
/// up to their total, and extrema goals are ignored.
pub fn apply_once(
    irs: &[RuleIr],
    interp: &Db,
    base: &Db,
    types: &BTreeMap<String, Vec<Ty>>,
) -> Result<Db, EvalError> {
    let view = View::new(interp, base, types, &BTreeMap::new());
    let mut derived: BTreeMap<String, Vec<Derived>> = BTreeMap::new();
    for ir in irs {
        let bs = bindings(ir, &view)?;
        derived.entry(ir.head_pred.clone()).or_default().extend(heads(ir, &bs)?);
    }
    let mut out = Db::new();
    for ir in irs {
        out.entry(ir.head_pred.clone()).or_default();
    }
    for (p, ds) in derived {
        let ir = irs.iter().find(|r| r.head_pred == p).unwrap();
        let agg = irs.iter().filter(|r| r.head_pred == p).find_map(|r| r.agg.clone());
        let rows = match agg {
            Some(a) if a.func.is_monotonic_expansion() => {
                let totals = accumulate(a.func, a.col, ir.head_tys[a.col], &ds)?;
                let mut s = BTreeSet::new();
                for (g, v) in totals {
                    for k in 1..=v.as_i64().unwrap_or(0) {
                        s.insert(with_value(g.clone(), a.col, Value::Int(k)));
                    }
                }
                s
            }
            Some(a) if !a.func.is_extremum() => {
                return Err(EvalError::Unsupported(format!(
                    "{} under set semantics; use its monotonic form",
                    a.func.name()
                )))
            }
            _ => ds.into_iter().map(|d| d.row).collect(),
        };
        out.insert(p, rows);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::compile;
    use crate::frontend::parse_program;

    pub fn run(src: &str, edb: &[(&str, Vec<Vec<Value>>)]) -> Db {
        let p = parse_program(src).unwrap();
        let db: Db = edb.iter().map(|(k, v)| (k.to_string(), v.iter().cloned().collect())).collect();
        let tys = db.iter().map(|(k, v)| (k.clone(), v.iter().next().unwrap().iter().map(|x| x.ty()).collect())).collect();
        let c = compile(&p, &tys).unwrap();
        naive_eval(&c, &db, DEFAULT_MAX_ITERATIONS).unwrap().db
    }

    fn ints(rows: &[&[i64]]) -> Vec<Vec<Value>> {
        rows.iter().map(|r| r.iter().map(|&x| Value::Int(x)).collect()).collect()
    }

    fn set(rows: &[&[i64]]) -> BTreeSet<Vec<Value>> {
        ints(rows).into_iter().collect()
    }

    #[test]
    fn tc_chain() {
        let db = run(
            "tc(X,Y) <- arc(X,Y). tc(X,Y) <- tc(X,Z), arc(Z,Y).",
            &[("arc", ints(&[&[1, 2], &[2, 3]]))],
        );
        assert_eq!(db["tc"], set(&[&[1, 2], &[2, 3], &[1, 3]]));
    }

    #[test]
    fn shortest_paths_on_two_cycle() {
        let s = |a: &str, b: &str, d: i64| vec![Value::str(a), Value::str(b), Value::Int(d)];
        let db = run(
            "dpath(X,Z,min<D>) <- darc(X,Z,D).\n\
             dpath(X,Z,min<D>) <- dpath(X,Y,A), darc(Y,Z,B), D = A + B.",
            &[("darc", vec![s("a", "b", 1), s("b", "a", 1)])],
        );
        let want: BTreeSet<_> = [s("a", "b", 1), s("b", "a", 1), s("a", "a", 2), s("b", "b", 2)].into_iter().collect();
        assert_eq!(db["dpath"], want);
    }

    #[test]
    fn path_counting_on_diamond() {
        let db = run(
            "cpath(X,Z,count<Y>) <- arc(X,Y), arc(Y,Z).\n\
             npaths(X,Y,1) <- arc(X,Y).\n\
             npaths(X,Z,sum<C,Y>) <- npaths(X,Y,C), arc(Y,Z).",
            &[("arc", ints(&[&[1, 2], &[1, 3], &[2, 4], &[3, 4]]))],
        );
        assert!(db["cpath"].contains(&ints(&[&[1, 4, 2]])[0]));
        assert!(db["npaths"].contains(&ints(&[&[1, 4, 2]])[0]));
    }

    #[test]
    fn mcount_reads_expand() {
        let db = run(
            "attend(X) <- organizer(X).\n\
             attend(X) <- cntfriends(X, N), N >= 3.\n\
             cntfriends(Y, mcount<X>) <- attend(X), friend(Y, X).",
            &[
                ("organizer", ints(&[&[1], &[2], &[3]])),
                ("friend", ints(&[&[9, 1], &[9, 2], &[9, 3], &[8, 9], &[8, 1]])),
            ],
        );
        assert_eq!(db["attend"], set(&[&[1], &[2], &[3], &[9]]));
        assert!(db["cntfriends"].contains(&ints(&[&[9, 3]])[0]));
        assert!(db["cntfriends"].contains(&ints(&[&[8, 2]])[0]));
    }

    #[test]
    fn negation_and_per_rule_extrema() {
        let db = run(
            "p(X) <- q(X), ~r(X).\n\
             best(min<V>) <- q(V).",
            &[("q", ints(&[&[3], &[1], &[2]])), ("r", ints(&[&[1]]))],
        );
        assert_eq!(db["p"], set(&[&[2], &[3]]));
        assert_eq!(db["best"], set(&[&[1]]));
    }

    #[test]
    fn non_termination_reported() {
        let p = parse_program("n(0). n(Y) <- n(X), Y = X + 1.").unwrap();
        let c = compile(&p, &BTreeMap::new()).unwrap();
        assert!(matches!(naive_eval(&c, &Db::new(), 50), Err(EvalError::NonTermination { .. })));
    }
}
