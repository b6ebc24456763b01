//! Aggregate stores: one row per group holding the current min, max, count
//! or sum, updated in place as new contributions arrive.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use hashbrown::HashMap;

use super::hash::HashScheme;
use super::partitioned::DiscriminatingSet;
use super::table::{KeySpec, Table};
use super::value::{cmp_raw, decode, encode_f64, Ty, Value};
use super::StorageError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AggKind {
    Min,
    Max,
    Count,
    Sum,
}

impl AggKind {
    pub fn name(self) -> &'static str {
        match self {
            AggKind::Min => "min",
            AggKind::Max => "max",
            AggKind::Count => "count",
            AggKind::Sum => "sum",
        }
    }
}

/// Layout shared by every partition of one aggregate relation.
#[derive(Clone, Debug)]
pub struct AggLayout {
    pub kind: AggKind,
    /// Types of the full stored row, aggregate column included.
    pub types: Vec<Ty>,
    /// Position of the aggregate column.
    pub value_col: usize,
    /// Types of the witness tuple for count and sum. Empty for min and max,
    /// and for a sum whose witness is the contributed value itself.
    pub witness_types: Vec<Ty>,
}

impl AggLayout {
    pub fn group_cols(&self) -> Vec<usize> {
        (0..self.types.len()).filter(|&c| c != self.value_col).collect()
    }

    pub fn value_ty(&self) -> Ty {
        self.types[self.value_col]
    }

    fn effective_witness_types(&self) -> Vec<Ty> {
        if self.kind == AggKind::Sum && self.witness_types.is_empty() {
            vec![self.value_ty()]
        } else {
            self.witness_types.clone()
        }
    }
}

/// One partition of an aggregate relation.
#[derive(Clone)]
pub struct AggPart {
    layout: AggLayout,
    group_cols: Vec<usize>,
    wtys: Vec<Ty>,
    rows: Table,
    /// `[group id, tag, witness.., value]` keyed on everything but the value.
    witnesses: Table,
    /// Witness row ids per group, kept only for float sums so the total can
    /// be recomputed in a fixed order.
    members: HashMap<u32, Vec<u32>>,
    scratch: Vec<u64>,
}

impl AggPart {
    pub fn new(layout: AggLayout) -> AggPart {
        let group_cols = layout.group_cols();
        let wtys = layout.effective_witness_types();
        let warity = 2 + wtys.len() + 1;
        AggPart {
            rows: Table::new(layout.types.len(), KeySpec::Cols(group_cols.clone())),
            witnesses: Table::new(warity, KeySpec::Cols((0..warity - 1).collect())),
            members: HashMap::new(),
            scratch: Vec::with_capacity(warity),
            group_cols,
            wtys,
            layout,
        }
    }

    pub fn layout(&self) -> &AggLayout {
        &self.layout
    }

    pub fn table(&self) -> &Table {
        &self.rows
    }

    pub fn table_mut(&mut self) -> &mut Table {
        &mut self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn group_cols(&self) -> &[usize] {
        &self.group_cols
    }

    /// Current row of the group `row` belongs to.
    pub fn get(&self, row: &[u64]) -> Option<&[u64]> {
        self.rows.find(row).map(|id| self.rows.row(id))
    }

    /// Folds one contribution into its group. `row` carries the group columns
    /// and the contributed value (ignored for count); `witness` identifies the
    /// contribution for count and sum. Returns the group's new aggregate value
    /// when it changed.
    pub fn update(&mut self, row: &[u64], witness: &[u64]) -> Result<Option<u64>, StorageError> {
        let vc = self.layout.value_col;
        let vty = self.layout.value_ty();
        match self.layout.kind {
            AggKind::Min | AggKind::Max => {
                let (id, new) = self.rows.find_or_insert(row);
                if new {
                    return Ok(Some(row[vc]));
                }
                let cur = self.rows.row(id)[vc];
                let want = if self.layout.kind == AggKind::Min {
                    Ordering::Less
                } else {
                    Ordering::Greater
                };
                if cmp_raw(row[vc], cur, vty) == want {
                    self.rows.set_cell(id, vc, row[vc]);
                    Ok(Some(row[vc]))
                } else {
                    Ok(None)
                }
            }
            AggKind::Count => self.accumulate(row, 0, witness, 1),
            AggKind::Sum => {
                if witness.is_empty() && self.layout.witness_types.is_empty() {
                    let v = [row[vc]];
                    self.accumulate(row, 0, &v, row[vc])
                } else {
                    self.accumulate(row, 0, witness, row[vc])
                }
            }
        }
    }

    /// Folds in the value a plain (non-aggregate) rule derived for a group.
    /// For count and sum it is added under its own witness, `tag`, which must
    /// be non-zero and distinct per rule; min and max treat it like any other
    /// contribution.
    pub fn update_plain(&mut self, row: &[u64], tag: u64) -> Result<Option<u64>, StorageError> {
        debug_assert!(tag != 0);
        match self.layout.kind {
            AggKind::Min | AggKind::Max => self.update(row, &[]),
            AggKind::Count | AggKind::Sum => {
                let zeros = vec![0u64; self.wtys.len()];
                self.accumulate(row, tag, &zeros, row[self.layout.value_col])
            }
        }
    }

    /// Keeps the largest value per (tag, witness) and the group total.
    fn accumulate(&mut self, row: &[u64], tag: u64, witness: &[u64], v: u64) -> Result<Option<u64>, StorageError> {
        let vc = self.layout.value_col;
        let vty = self.layout.value_ty();
        if witness.len() != self.wtys.len() {
            return Err(StorageError::Arity {
                expected: self.wtys.len(),
                found: witness.len(),
            });
        }
        let zero = match vty {
            Ty::Float => 0f64.to_bits(),
            _ => 0,
        };
        let (id, _) = self.find_group(row, zero);
        self.scratch.clear();
        self.scratch.push(id as u64);
        self.scratch.push(tag);
        self.scratch.extend_from_slice(witness);
        self.scratch.push(v);
        let (wid, new_w) = self.witnesses.find_or_insert(&self.scratch);
        let last = self.scratch.len() - 1;
        let mut old = None;
        if !new_w {
            let o = self.witnesses.row(wid)[last];
            if cmp_raw(v, o, vty) != Ordering::Greater {
                return Ok(None);
            }
            self.witnesses.set_cell(wid, last, v);
            old = Some(o);
        }
        let total = match vty {
            Ty::Int => {
                let cur = self.rows.row(id)[vc] as i64;
                let inc = (v as i64).checked_sub(old.map_or(0, |o| o as i64));
                inc.and_then(|d| cur.checked_add(d))
                    .ok_or_else(|| StorageError::Aggregate("integer sum overflow".into()))? as u64
            }
            Ty::Float => {
                if new_w {
                    self.members.entry(id).or_default().push(wid);
                }
                self.float_total(id)?
            }
            Ty::Str => return Err(StorageError::Aggregate("sum over strings".into())),
        };
        self.rows.set_cell(id, vc, total);
        Ok(Some(total))
    }

    fn find_group(&mut self, row: &[u64], init: u64) -> (u32, bool) {
        let vc = self.layout.value_col;
        let (id, new) = self.rows.find_or_insert(row);
        if new {
            self.rows.set_cell(id, vc, init);
        }
        (id, new)
    }

    fn float_total(&self, id: u32) -> Result<u64, StorageError> {
        let ids = self.members.get(&id).map(|v| v.as_slice()).unwrap_or(&[]);
        let mut ws: Vec<&[u64]> = ids.iter().map(|&w| self.witnesses.row(w)).collect();
        let wtys = &self.wtys;
        ws.sort_by(|a, b| {
            if a[1] != b[1] {
                return a[1].cmp(&b[1]);
            }
            for (i, &t) in wtys.iter().enumerate() {
                let o = cmp_raw(a[2 + i], b[2 + i], t);
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        });
        let last = 2 + wtys.len();
        let s: f64 = ws.iter().map(|w| f64::from_bits(w[last])).sum();
        encode_f64(s).map_err(|_| StorageError::Aggregate("sum produced NaN".into()))
    }

    /// Decoded rows.
    pub fn to_values(&self) -> Vec<Vec<Value>> {
        self.rows
            .rows()
            .map(|r| r.iter().zip(&self.layout.types).map(|(&x, &t)| decode(x, t)).collect())
            .collect()
    }
}

/// An aggregate relation split into partitions by a subset of its group
/// columns, so each group lives in exactly one partition.
pub struct AggregateStore {
    disc: DiscriminatingSet,
    scheme: HashScheme,
    parts: Vec<AggPart>,
}

impl AggregateStore {
    pub fn new(
        layout: AggLayout,
        disc: DiscriminatingSet,
        n: usize,
        scheme: HashScheme,
    ) -> Result<Self, StorageError> {
        disc.validate(layout.types.len())?;
        if disc.cols().contains(&layout.value_col) {
            return Err(StorageError::Aggregate(
                "discriminating set includes the aggregate column".into(),
            ));
        }
        let n = n.max(1);
        Ok(AggregateStore {
            parts: (0..n).map(|_| AggPart::new(layout.clone())).collect(),
            disc,
            scheme,
        })
    }

    pub fn n(&self) -> usize {
        self.parts.len()
    }

    pub fn disc(&self) -> &DiscriminatingSet {
        &self.disc
    }

    pub fn partition_of(&self, row: &[u64]) -> usize {
        self.scheme.partition(row, self.disc.cols(), self.parts.len())
    }

    pub fn parts(&self) -> &[AggPart] {
        &self.parts
    }

    pub fn into_parts(self) -> Vec<AggPart> {
        self.parts
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn agg_update(&mut self, row: &[u64], witness: &[u64]) -> Result<Option<u64>, StorageError> {
        let p = self.partition_of(row);
        self.parts[p].update(row, witness)
    }

    pub fn get(&self, row: &[u64]) -> Option<&[u64]> {
        self.parts[self.partition_of(row)].get(row)
    }

    /// Decoded rows keyed by group.
    pub fn to_map(&self) -> BTreeMap<Vec<Value>, Value> {
        let mut out = BTreeMap::new();
        for p in &self.parts {
            let vc = p.layout.value_col;
            for mut r in p.to_values() {
                let v = r.remove(vc);
                out.insert(r, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::storage::value::encode;

    fn layout(kind: AggKind, vty: Ty, wt: Vec<Ty>) -> AggLayout {
        AggLayout {
            kind,
            types: vec![Ty::Int, vty],
            value_col: 1,
            witness_types: wt,
        }
    }

    #[test]
    fn min_keeps_smallest() {
        let mut p = AggPart::new(layout(AggKind::Min, Ty::Int, vec![]));
        assert_eq!(p.update(&[1, 5], &[]).unwrap(), Some(5));
        assert_eq!(p.update(&[1, 7], &[]).unwrap(), None);
        assert_eq!(p.update(&[1, 3], &[]).unwrap(), Some(3));
        assert_eq!(p.get(&[1, 0]).unwrap(), &[1, 3]);
        let neg = encode(&Value::Int(-2), Ty::Int).unwrap();
        assert_eq!(p.update(&[1, neg], &[]).unwrap(), Some(neg));
    }

    #[test]
    fn count_ignores_repeated_witness() {
        let mut p = AggPart::new(layout(AggKind::Count, Ty::Int, vec![Ty::Int]));
        assert_eq!(p.update(&[1, 0], &[10]).unwrap(), Some(1));
        assert_eq!(p.update(&[1, 0], &[10]).unwrap(), None);
        assert_eq!(p.update(&[1, 0], &[11]).unwrap(), Some(2));
        assert_eq!(p.update(&[2, 0], &[10]).unwrap(), Some(1));
    }

    #[test]
    fn sum_takes_max_per_witness() {
        let mut p = AggPart::new(layout(AggKind::Sum, Ty::Int, vec![Ty::Int]));
        assert_eq!(p.update(&[1, 4], &[7]).unwrap(), Some(4));
        assert_eq!(p.update(&[1, 6], &[8]).unwrap(), Some(10));
        assert_eq!(p.update(&[1, 5], &[7]).unwrap(), Some(11));
        assert_eq!(p.update(&[1, 2], &[7]).unwrap(), None);
    }

    #[test]
    fn sum_without_witness_adds_distinct_values() {
        let mut p = AggPart::new(layout(AggKind::Sum, Ty::Int, vec![]));
        assert_eq!(p.update(&[1, 4], &[]).unwrap(), Some(4));
        assert_eq!(p.update(&[1, 4], &[]).unwrap(), None);
        assert_eq!(p.update(&[1, 3], &[]).unwrap(), Some(7));
    }

    #[test]
    fn plain_contributions_add_under_their_tag() {
        let mut p = AggPart::new(layout(AggKind::Count, Ty::Int, vec![Ty::Int]));
        assert_eq!(p.update_plain(&[1, 1], 1).unwrap(), Some(1));
        assert_eq!(p.update(&[1, 0], &[5]).unwrap(), Some(2));
        assert_eq!(p.update_plain(&[1, 1], 1).unwrap(), None);
        assert_eq!(p.update_plain(&[1, 3], 1).unwrap(), Some(4));
    }

    #[test]
    fn float_sum_is_order_independent() {
        let vals = [0.1, 0.2, 0.3, 1e16, -1e16];
        let run = |order: &[usize]| {
            let mut p = AggPart::new(layout(AggKind::Sum, Ty::Float, vec![Ty::Int]));
            let mut last = None;
            for &i in order {
                let v = encode_f64(vals[i]).unwrap();
                last = p.update(&[1, v], &[i as u64]).unwrap().or(last);
            }
            last.unwrap()
        };
        assert_eq!(run(&[0, 1, 2, 3, 4]), run(&[4, 3, 2, 1, 0]));
        assert_eq!(run(&[0, 1, 2, 3, 4]), run(&[2, 4, 0, 3, 1]));
    }

    #[test]
    fn store_routes_by_group() {
        let mut s = AggregateStore::new(
            layout(AggKind::Max, Ty::Int, vec![]),
            DiscriminatingSet::from_positions(&[1]),
            4,
            HashScheme::MIXER,
        )
        .unwrap();
        for g in 0..20u64 {
            s.agg_update(&[g, g], &[]).unwrap();
            s.agg_update(&[g, g + 1], &[]).unwrap();
        }
        assert_eq!(s.len(), 20);
        for (k, v) in s.to_map() {
            assert_eq!(v, Value::Int(k[0].as_i64().unwrap() + 1));
        }
        assert!(AggregateStore::new(
            layout(AggKind::Max, Ty::Int, vec![]),
            DiscriminatingSet::from_positions(&[2]),
            4,
            HashScheme::MIXER
        )
        .is_err());
    }
}
