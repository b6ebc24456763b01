//! Rules over encoded column values. Arithmetic and comparisons follow the
//! decoded builtins exactly; only the representation differs.

use std::cmp::Ordering;

use super::ir::{ArgPat, CmpIr, Expr, RuleIr, Step};
use super::EvalError;
use crate::frontend::{AggFunc, ArithOp, CmpOp, ExtremaKind};
use crate::storage::value::cmp_raw;
use crate::storage::{intern, resolve, Ty, Value};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rv {
    I(i64),
    F(f64),
    /// Interned string id.
    S(u64),
}

#[inline]
fn canon(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

impl Rv {
    #[inline]
    pub fn of(raw: u64, ty: Ty) -> Rv {
        match ty {
            Ty::Int => Rv::I(raw as i64),
            Ty::Float => Rv::F(f64::from_bits(raw)),
            Ty::Str => Rv::S(raw),
        }
    }

    pub fn from_value(v: &Value) -> Rv {
        match v {
            Value::Int(i) => Rv::I(*i),
            Value::Float(x) => Rv::F(*x),
            Value::Str(s) => Rv::S(intern(s)),
        }
    }

    pub fn to_value(self) -> Value {
        match self {
            Rv::I(i) => Value::Int(i),
            Rv::F(x) => Value::Float(x),
            Rv::S(id) => Value::Str(resolve(id)),
        }
    }

    #[inline]
    fn as_f64(self) -> Option<f64> {
        match self {
            Rv::I(i) => Some(i as f64),
            Rv::F(x) => Some(x),
            Rv::S(_) => None,
        }
    }
}

pub fn arith(op: ArithOp, a: Rv, b: Rv) -> Result<Rv, EvalError> {
    let show = || format!("{} {} {}", a.to_value(), op.symbol(), b.to_value());
    match (a, b) {
        (Rv::I(x), Rv::I(y)) if op != ArithOp::Div => {
            let r = match op {
                ArithOp::Add => x.checked_add(y),
                ArithOp::Sub => x.checked_sub(y),
                ArithOp::Mul => x.checked_mul(y),
                ArithOp::Div => unreachable!(),
            };
            r.map(Rv::I).ok_or_else(|| EvalError::Overflow(show()))
        }
        _ => {
            let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) else {
                return Err(EvalError::Type(format!("arithmetic on {} and {}", a.to_value(), b.to_value())));
            };
            if op == ArithOp::Div && y == 0.0 {
                return Err(EvalError::DivisionByZero(show()));
            }
            let r = match op {
                ArithOp::Add => x + y,
                ArithOp::Sub => x - y,
                ArithOp::Mul => x * y,
                ArithOp::Div => x / y,
            };
            if r.is_nan() {
                return Err(EvalError::Type(format!("{} is not a number", show())));
            }
            Ok(Rv::F(r))
        }
    }
}

#[inline]
pub fn compare(a: Rv, b: Rv) -> Option<Ordering> {
    match (a, b) {
        (Rv::I(x), Rv::I(y)) => Some(x.cmp(&y)),
        (Rv::S(x), Rv::S(y)) => Some(cmp_raw(x, y, Ty::Str)),
        (Rv::S(_), _) | (_, Rv::S(_)) => None,
        _ => Some(a.as_f64().unwrap().total_cmp(&b.as_f64().unwrap())),
    }
}

#[inline]
pub fn holds(op: CmpOp, a: Rv, b: Rv) -> bool {
    match compare(a, b) {
        Some(o) => op.holds(o),
        None => op == CmpOp::Ne,
    }
}

/// Encoding of `v` stored in a column of type `ty`.
#[inline]
pub fn store(v: Rv, ty: Ty) -> Result<u64, EvalError> {
    match (v, ty) {
        (Rv::I(i), Ty::Int) => Ok(i as u64),
        (Rv::I(i), Ty::Float) => Ok(canon(i as f64).to_bits()),
        (Rv::F(x), Ty::Float) => Ok(canon(x).to_bits()),
        (Rv::S(s), Ty::Str) => Ok(s),
        (v, t) => Err(EvalError::Type(format!("{} stored in a {t} column", v.to_value()))),
    }
}

/// Encoding a column of type `ty` holds for a value equal to `v`, if any
/// value of that type can be equal to it.
#[inline]
pub fn probe(v: Rv, ty: Ty) -> Option<u64> {
    match (v, ty) {
        (Rv::I(i), Ty::Int) => Some(i as u64),
        (Rv::F(x), Ty::Int) => {
            let i = x as i64;
            (i as f64 == x).then_some(i as u64)
        }
        (Rv::I(i), Ty::Float) => Some(canon(i as f64).to_bits()),
        (Rv::F(x), Ty::Float) => Some(canon(x).to_bits()),
        (Rv::S(s), Ty::Str) => Some(s),
        _ => None,
    }
}

#[derive(Clone, Debug)]
pub enum RExpr {
    Const(Rv),
    Slot(usize, Ty),
    Arith(ArithOp, Box<RExpr>, Box<RExpr>),
}

impl RExpr {
    fn lower(e: &Expr, tys: &[Ty]) -> RExpr {
        match e {
            Expr::Const(v) => RExpr::Const(Rv::from_value(v)),
            Expr::Slot(s) => RExpr::Slot(*s, tys[*s]),
            Expr::Arith(op, a, b) => RExpr::Arith(*op, Box::new(RExpr::lower(a, tys)), Box::new(RExpr::lower(b, tys))),
        }
    }

    #[inline]
    pub fn eval(&self, slots: &[u64]) -> Result<Rv, EvalError> {
        match self {
            RExpr::Const(v) => Ok(*v),
            RExpr::Slot(s, t) => Ok(Rv::of(slots[*s], *t)),
            RExpr::Arith(op, a, b) => arith(*op, a.eval(slots)?, b.eval(slots)?),
        }
    }

    /// Value for a column of type `ty`; `None` when nothing there can equal it.
    #[inline]
    pub fn probe(&self, slots: &[u64], ty: Ty) -> Result<Option<u64>, EvalError> {
        match self {
            RExpr::Slot(s, t) if *t == ty => Ok(Some(slots[*s])),
            e => Ok(probe(e.eval(slots)?, ty)),
        }
    }

    /// Value stored in a column of type `ty`.
    #[inline]
    pub fn store(&self, slots: &[u64], ty: Ty) -> Result<u64, EvalError> {
        match self {
            RExpr::Slot(s, t) if *t == ty => Ok(slots[*s]),
            e => store(e.eval(slots)?, ty),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RCmp {
    pub op: CmpOp,
    pub left: RExpr,
    pub right: RExpr,
}

impl RCmp {
    fn lower(c: &CmpIr, tys: &[Ty]) -> RCmp {
        RCmp {
            op: c.op,
            left: RExpr::lower(&c.left, tys),
            right: RExpr::lower(&c.right, tys),
        }
    }

    #[inline]
    pub fn eval(&self, slots: &[u64]) -> Result<bool, EvalError> {
        Ok(holds(self.op, self.left.eval(slots)?, self.right.eval(slots)?))
    }
}

#[derive(Clone, Debug)]
pub enum RPat {
    Bind(usize),
    Check(RExpr),
    Skip,
}

/// Where a scanned literal reads from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RelRef {
    /// A relation that does not change while the stratum runs.
    Fixed(usize),
    /// Facts new in the previous iteration of a stratum relation.
    Delta(usize),
    /// Everything derived so far for a stratum relation.
    All(usize),
}

/// What the evaluator needs to know about a relation to read it.
#[derive(Clone, Debug)]
pub struct RelShape {
    pub rel: RelRef,
    pub types: Vec<Ty>,
    /// Aggregate value column; never used as a lookup key.
    pub value_col: Option<usize>,
    /// Rows read back as every value 1..=n of this column.
    pub expand: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct RScan {
    pub lit: usize,
    pub pred: String,
    pub rel: RelRef,
    pub pats: Vec<RPat>,
    pub col_tys: Vec<Ty>,
    /// Columns looked up by value, and how to compute each value.
    pub key_cols: Vec<usize>,
    pub key_exprs: Vec<RExpr>,
    pub expand: Option<usize>,
    /// Partition layout an entry scan reads; set by the engine.
    pub layout: usize,
}

#[derive(Clone, Debug)]
pub enum RStep {
    Scan(RScan),
    /// Negated atom; every pattern is `Check` or `Skip`.
    Absent(RScan),
    Posint { n: RExpr, k: RPat },
    Filter(RCmp),
    Assign { slot: usize, expr: RExpr },
    Branch { cond: RCmp, then: Box<RStep>, otherwise: Box<RStep> },
}

/// How derived heads reach their relation.
#[derive(Clone, Debug, PartialEq)]
pub enum HeadMode {
    Set,
    /// Aggregate contribution identified by the witness slots.
    Agg { witness: Vec<usize> },
    /// A plain rule feeding an aggregate relation, under its own tag.
    Plain { tag: u64 },
}

#[derive(Clone, Debug)]
pub struct RawRule {
    pub index: usize,
    pub head_pred: String,
    pub slot_tys: Vec<Ty>,
    pub steps: Vec<RStep>,
    pub head: Vec<RExpr>,
    pub head_tys: Vec<Ty>,
    pub mode: HeadMode,
    /// Step index of the first scan, the one workers split by partition.
    pub entry: Option<usize>,
    pub extrema: Option<(ExtremaKind, Vec<usize>, usize)>,
    /// Engine index of the head relation.
    pub target: usize,
}

fn lower_pat(p: &ArgPat, tys: &[Ty]) -> RPat {
    match p {
        ArgPat::Bind(s) => RPat::Bind(*s),
        ArgPat::Check(e) => RPat::Check(RExpr::lower(e, tys)),
        ArgPat::Skip => RPat::Skip,
    }
}

fn lower_scan(lit: usize, pred: &str, pats: Vec<RPat>, shape: &RelShape) -> RScan {
    let binds: Vec<usize> = pats
        .iter()
        .filter_map(|p| match p {
            RPat::Bind(s) => Some(*s),
            _ => None,
        })
        .collect();
    let mut key_cols = Vec::new();
    let mut key_exprs = Vec::new();
    for (i, p) in pats.iter().enumerate() {
        if Some(i) == shape.value_col || Some(i) == shape.expand {
            continue;
        }
        if let RPat::Check(e) = p {
            if !uses_any(e, &binds) {
                key_cols.push(i);
                key_exprs.push(e.clone());
            }
        }
    }
    RScan {
        lit,
        pred: pred.to_string(),
        rel: shape.rel,
        pats,
        col_tys: shape.types.clone(),
        key_cols,
        key_exprs,
        expand: shape.expand,
        layout: 0,
    }
}

fn uses_any(e: &RExpr, slots: &[usize]) -> bool {
    match e {
        RExpr::Slot(s, _) => slots.contains(s),
        RExpr::Arith(_, a, b) => uses_any(a, slots) || uses_any(b, slots),
        RExpr::Const(_) => false,
    }
}

fn lower_step(s: &Step, tys: &[Ty], shape: &dyn Fn(usize, &str) -> Result<RelShape, EvalError>) -> Result<RStep, EvalError> {
    Ok(match s {
        Step::Scan { lit, pred, args } => {
            let sh = shape(*lit, pred)?;
            let pats = args.iter().map(|a| lower_pat(a, tys)).collect();
            RStep::Scan(lower_scan(*lit, pred, pats, &sh))
        }
        Step::Absent { lit, pred, args } => {
            let sh = shape(*lit, pred)?;
            let pats = args
                .iter()
                .map(|a| match a {
                    Some(e) => RPat::Check(RExpr::lower(e, tys)),
                    None => RPat::Skip,
                })
                .collect();
            RStep::Absent(lower_scan(*lit, pred, pats, &sh))
        }
        Step::Posint { n, k } => RStep::Posint {
            n: RExpr::lower(n, tys),
            k: lower_pat(k, tys),
        },
        Step::Filter(c) => RStep::Filter(RCmp::lower(c, tys)),
        Step::Assign { slot, expr } => RStep::Assign {
            slot: *slot,
            expr: RExpr::lower(expr, tys),
        },
        Step::Branch { cond, then, otherwise } => RStep::Branch {
            cond: RCmp::lower(cond, tys),
            then: Box::new(lower_step(then, tys, shape)?),
            otherwise: Box::new(lower_step(otherwise, tys, shape)?),
        },
    })
}

/// Lowers a rule for encoded evaluation. `shape` describes the relation
/// read by the body literal at a given position.
pub fn lower_raw(
    ir: &RuleIr,
    mode: HeadMode,
    shape: &dyn Fn(usize, &str) -> Result<RelShape, EvalError>,
) -> Result<RawRule, EvalError> {
    let tys = &ir.slot_tys;
    let steps = ir
        .steps
        .iter()
        .map(|s| lower_step(s, tys, shape))
        .collect::<Result<Vec<_>, _>>()?;
    let entry = steps.iter().position(|s| matches!(s, RStep::Scan(_)));
    Ok(RawRule {
        index: ir.index,
        head_pred: ir.head_pred.clone(),
        slot_tys: tys.clone(),
        steps,
        head: ir.head.iter().map(|e| RExpr::lower(e, tys)).collect(),
        head_tys: ir.head_tys.clone(),
        mode,
        entry,
        extrema: ir.extrema.as_ref().map(|x| (x.kind, x.group.clone(), x.cost)),
        target: 0,
    })
}

/// Head mode of a rule given the aggregate, if any, of its head predicate.
pub fn head_mode(ir: &RuleIr, pred_agg: Option<AggFunc>) -> HeadMode {
    match (&ir.agg, pred_agg) {
        (_, None) => HeadMode::Set,
        (Some(a), Some(_)) if !a.func.is_extremum() => HeadMode::Agg {
            witness: a.witness.clone(),
        },
        (Some(_), Some(_)) => HeadMode::Agg { witness: Vec::new() },
        (None, Some(f)) if f.is_extremum() => HeadMode::Agg { witness: Vec::new() },
        (None, Some(_)) => HeadMode::Plain {
            tag: ir.index as u64 + 1,
        },
    }
}

/// Access to relations during rule evaluation.
pub trait Relations {
    /// Calls `f` on every row of `rel` whose `cols` hold `vals` until it
    /// returns false.
    fn each(
        &self,
        rel: RelRef,
        cols: &[usize],
        vals: &[u64],
        f: &mut dyn FnMut(&[u64]) -> Result<bool, EvalError>,
    ) -> Result<(), EvalError>;

    /// Calls `f` on every row of `scan`'s relation in the partitions this
    /// reader drives.
    fn each_owned(&self, scan: &RScan, f: &mut dyn FnMut(&[u64]) -> Result<bool, EvalError>) -> Result<(), EvalError>;
}

pub trait Sink {
    fn emit(&mut self, rule: &RawRule, slots: &[u64]) -> Result<(), EvalError>;
}

#[inline]
fn bind(p: &RPat, raw: u64, col_ty: Ty, slots: &mut [u64], tys: &[Ty]) -> Result<bool, EvalError> {
    match p {
        RPat::Bind(s) => {
            slots[*s] = if tys[*s] == col_ty {
                raw
            } else {
                store(Rv::of(raw, col_ty), tys[*s])?
            };
            Ok(true)
        }
        RPat::Check(e) => Ok(e.probe(slots, col_ty)? == Some(raw)),
        RPat::Skip => Ok(true),
    }
}

/// Binds `row` into `slots` and checks the scan's remaining patterns.
#[inline]
fn match_row(scan: &RScan, row: &[u64], slots: &mut [u64], tys: &[Ty]) -> Result<bool, EvalError> {
    for (i, p) in scan.pats.iter().enumerate() {
        if let RPat::Bind(s) = p {
            slots[*s] = if tys[*s] == scan.col_tys[i] {
                row[i]
            } else {
                store(Rv::of(row[i], scan.col_tys[i]), tys[*s])?
            };
        }
    }
    for (i, p) in scan.pats.iter().enumerate() {
        if let RPat::Check(e) = p {
            if e.probe(slots, scan.col_tys[i])? != Some(row[i]) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Feeds one stored row through the scan at step `k`, expanding counted
/// relations, and continues with the following steps.
fn feed(
    rule: &RawRule,
    k: usize,
    scan: &RScan,
    row: &[u64],
    slots: &mut [u64],
    rels: &dyn Relations,
    sink: &mut dyn Sink,
) -> Result<(), EvalError> {
    match scan.expand {
        None => {
            if match_row(scan, row, slots, &rule.slot_tys)? {
                run_from(rule, k + 1, slots, rels, sink)?;
            }
        }
        Some(c) => {
            let n = row[c] as i64;
            let mut tmp = row.to_vec();
            for v in 1..=n {
                tmp[c] = v as u64;
                if match_row(scan, &tmp, slots, &rule.slot_tys)? {
                    run_from(rule, k + 1, slots, rels, sink)?;
                }
            }
        }
    }
    Ok(())
}

const KEY_INLINE: usize = 8;

fn key_values(scan: &RScan, slots: &[u64], buf: &mut [u64; KEY_INLINE], spill: &mut Vec<u64>) -> Result<bool, EvalError> {
    let n = scan.key_cols.len();
    for (j, (e, &c)) in scan.key_exprs.iter().zip(&scan.key_cols).enumerate() {
        let Some(v) = e.probe(slots, scan.col_tys[c])? else {
            return Ok(false);
        };
        if n <= KEY_INLINE {
            buf[j] = v;
        } else {
            spill.push(v);
        }
    }
    Ok(true)
}

/// Whether some row of the negated atom's relation matches.
fn present(scan: &RScan, slots: &[u64], rels: &dyn Relations) -> Result<bool, EvalError> {
    let mut buf = [0u64; KEY_INLINE];
    let mut spill = Vec::new();
    if !key_values(scan, slots, &mut buf, &mut spill)? {
        return Ok(false);
    }
    let vals = if scan.key_cols.len() <= KEY_INLINE {
        &buf[..scan.key_cols.len()]
    } else {
        &spill[..]
    };
    let mut found = false;
    rels.each(scan.rel, &scan.key_cols, vals, &mut |row| {
        let hit = |r: &[u64]| -> Result<bool, EvalError> {
            for (i, p) in scan.pats.iter().enumerate() {
                if let RPat::Check(e) = p {
                    if e.probe(slots, scan.col_tys[i])? != Some(r[i]) {
                        return Ok(false);
                    }
                }
            }
            Ok(true)
        };
        let m = match scan.expand {
            None => hit(row)?,
            Some(c) => {
                let mut tmp = row.to_vec();
                let mut any = false;
                for v in 1..=(row[c] as i64) {
                    tmp[c] = v as u64;
                    if hit(&tmp)? {
                        any = true;
                        break;
                    }
                }
                any
            }
        };
        found = m;
        Ok(!m)
    })?;
    Ok(found)
}

/// Runs the rule body from step `k` with `slots` holding earlier bindings.
/// The entry scan reads only the partitions `rels` drives.
pub fn run_from(rule: &RawRule, k: usize, slots: &mut [u64], rels: &dyn Relations, sink: &mut dyn Sink) -> Result<(), EvalError> {
    let Some(step) = rule.steps.get(k) else {
        return sink.emit(rule, slots);
    };
    match step {
        RStep::Scan(scan) => {
            if rule.entry == Some(k) {
                return rels.each_owned(scan, &mut |row| {
                    feed(rule, k, scan, row, slots, rels, sink)?;
                    Ok(true)
                });
            }
            let mut buf = [0u64; KEY_INLINE];
            let mut spill = Vec::new();
            if !key_values(scan, slots, &mut buf, &mut spill)? {
                return Ok(());
            }
            let vals = if scan.key_cols.len() <= KEY_INLINE {
                &buf[..scan.key_cols.len()]
            } else {
                &spill[..]
            };
            rels.each(scan.rel, &scan.key_cols, vals, &mut |row| {
                feed(rule, k, scan, row, slots, rels, sink)?;
                Ok(true)
            })
        }
        RStep::Absent(scan) => {
            if !present(scan, slots, rels)? {
                run_from(rule, k + 1, slots, rels, sink)?;
            }
            Ok(())
        }
        RStep::Posint { n, k: pat } => {
            let n = match n.eval(slots)? {
                Rv::I(i) => i,
                v => return Err(EvalError::Type(format!("posint over non-integer {}", v.to_value()))),
            };
            for i in 1..=n.max(0) {
                if bind(pat, i as u64, Ty::Int, slots, &rule.slot_tys)? {
                    run_from(rule, k + 1, slots, rels, sink)?;
                }
            }
            Ok(())
        }
        RStep::Filter(c) => {
            if c.eval(slots)? {
                run_from(rule, k + 1, slots, rels, sink)?;
            }
            Ok(())
        }
        RStep::Assign { slot, expr } => {
            slots[*slot] = expr.store(slots, rule.slot_tys[*slot])?;
            run_from(rule, k + 1, slots, rels, sink)
        }
        RStep::Branch { cond, then, otherwise } => {
            let s = if cond.eval(slots)? { then } else { otherwise };
            let pass = match &**s {
                RStep::Assign { slot, expr } => {
                    slots[*slot] = expr.store(slots, rule.slot_tys[*slot])?;
                    true
                }
                RStep::Filter(c) => c.eval(slots)?,
                _ => unreachable!(),
            };
            if pass {
                run_from(rule, k + 1, slots, rels, sink)?;
            }
            Ok(())
        }
    }
}

/// Encoded head row of a complete binding.
#[inline]
pub fn head_row(rule: &RawRule, slots: &[u64], out: &mut Vec<u64>) -> Result<(), EvalError> {
    out.clear();
    for (e, &t) in rule.head.iter().zip(&rule.head_tys) {
        out.push(e.store(slots, t)?);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluator::builtins;
    use crate::storage::encode;
    use proptest::prelude::*;

    fn value() -> impl Strategy<Value = Value> {
        prop_oneof![
            (-50i64..50).prop_map(Value::Int),
            (-50i64..50).prop_map(|i| Value::Float(i as f64 / 4.0)),
            prop_oneof![Just("a"), Just("b"), Just("zz")].prop_map(Value::str),
        ]
    }

    fn op() -> impl Strategy<Value = ArithOp> {
        prop_oneof![Just(ArithOp::Add), Just(ArithOp::Sub), Just(ArithOp::Mul), Just(ArithOp::Div)]
    }

    proptest! {
        #[test]
        fn arithmetic_matches_decoded(a in value(), b in value(), op in op()) {
            let want = builtins::arith(op, &a, &b);
            let got = arith(op, Rv::from_value(&a), Rv::from_value(&b));
            match (want, got) {
                (Ok(w), Ok(g)) => prop_assert!(builtins::values_equal(&w, &g.to_value())),
                (Err(_), Err(_)) => {}
                (w, g) => prop_assert!(false, "{w:?} vs {g:?}"),
            }
        }

        #[test]
        fn comparison_matches_decoded(a in value(), b in value()) {
            for op in [CmpOp::Eq, CmpOp::Ne, CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge] {
                prop_assert_eq!(builtins::holds(op, &a, &b), holds(op, Rv::from_value(&a), Rv::from_value(&b)));
            }
        }

        #[test]
        fn probe_agrees_with_equality(a in value(), b in value()) {
            // A stored `b` is found by probing with `a` exactly when they are equal.
            let ty = b.ty();
            let raw = encode(&b, ty).unwrap();
            let hit = probe(Rv::from_value(&a), ty) == Some(raw);
            prop_assert_eq!(hit, builtins::values_equal(&a, &b));
        }

        #[test]
        fn store_matches_coerce(a in value()) {
            for ty in [Ty::Int, Ty::Float, Ty::Str] {
                let want = builtins::coerce(a.clone(), ty).ok().map(|v| encode(&v, ty).unwrap());
                prop_assert_eq!(store(Rv::from_value(&a), ty).ok(), want);
            }
        }
    }
}
