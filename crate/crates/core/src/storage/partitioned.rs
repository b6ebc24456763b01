//! Hash-partitioned set relations.

use std::collections::BTreeSet;
use std::fmt;

use super::hash::HashScheme;
use super::table::Table;
use super::value::{decode, encode, Ty, Value};
use super::StorageError;

/// Column positions (stored 0-based, ascending) whose hash picks a partition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct DiscriminatingSet {
    cols: Vec<usize>,
}

impl DiscriminatingSet {
    /// From 1-based positions, as written in plans and explain output.
    pub fn from_positions(pos: &[usize]) -> DiscriminatingSet {
        let mut cols: Vec<usize> = pos.iter().map(|p| p - 1).collect();
        cols.sort_unstable();
        cols.dedup();
        DiscriminatingSet { cols }
    }

    pub fn from_cols(cols: &[usize]) -> DiscriminatingSet {
        let mut cols = cols.to_vec();
        cols.sort_unstable();
        cols.dedup();
        DiscriminatingSet { cols }
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn positions(&self) -> Vec<usize> {
        self.cols.iter().map(|c| c + 1).collect()
    }

    pub fn len(&self) -> usize {
        self.cols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cols.is_empty()
    }

    pub fn is_subset_of(&self, cols: &[usize]) -> bool {
        self.cols.iter().all(|c| cols.contains(c))
    }

    pub fn validate(&self, arity: usize) -> Result<(), StorageError> {
        match self.cols.iter().find(|&&c| c >= arity) {
            Some(&c) => Err(StorageError::BadDiscriminatingSet {
                position: c + 1,
                arity,
            }),
            None => Ok(()),
        }
    }
}

impl fmt::Display for DiscriminatingSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p: Vec<String> = self.positions().iter().map(|p| p.to_string()).collect();
        write!(f, "{{{}}}", p.join(","))
    }
}

/// `hash_partition` in value form: partition index in `[0, n)`.
pub fn hash_partition(row: &[u64], disc: &DiscriminatingSet, n: usize, scheme: HashScheme) -> usize {
    scheme.partition(row, disc.cols(), n)
}

#[derive(Clone)]
pub struct PartitionedRelation {
    types: Vec<Ty>,
    disc: DiscriminatingSet,
    scheme: HashScheme,
    parts: Vec<Table>,
}

impl PartitionedRelation {
    pub fn new(
        types: Vec<Ty>,
        disc: DiscriminatingSet,
        n: usize,
        scheme: HashScheme,
    ) -> Result<Self, StorageError> {
        disc.validate(types.len())?;
        let n = n.max(1);
        let arity = types.len();
        Ok(PartitionedRelation {
            types,
            disc,
            scheme,
            parts: (0..n).map(|_| Table::set(arity)).collect(),
        })
    }

    pub fn arity(&self) -> usize {
        self.types.len()
    }

    pub fn types(&self) -> &[Ty] {
        &self.types
    }

    pub fn n(&self) -> usize {
        self.parts.len()
    }

    pub fn disc(&self) -> &DiscriminatingSet {
        &self.disc
    }

    pub fn scheme(&self) -> HashScheme {
        self.scheme
    }

    pub fn partitions(&self) -> &[Table] {
        &self.parts
    }

    pub fn partition(&self, i: usize) -> &Table {
        &self.parts[i]
    }

    pub fn len(&self) -> usize {
        self.parts.iter().map(|p| p.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn partition_of(&self, row: &[u64]) -> usize {
        self.scheme.partition(row, self.disc.cols(), self.parts.len())
    }

    pub fn insert_distinct(&mut self, row: &[u64]) -> Result<bool, StorageError> {
        if row.len() != self.arity() {
            return Err(StorageError::Arity {
                expected: self.arity(),
                found: row.len(),
            });
        }
        let p = self.partition_of(row);
        Ok(self.parts[p].insert_distinct(row))
    }

    /// Encodes and inserts a value tuple, checking arity and column types.
    pub fn insert_values(&mut self, vals: &[Value]) -> Result<bool, StorageError> {
        if vals.len() != self.arity() {
            return Err(StorageError::Arity {
                expected: self.arity(),
                found: vals.len(),
            });
        }
        let mut row = Vec::with_capacity(vals.len());
        for (i, (v, &ty)) in vals.iter().zip(&self.types).enumerate() {
            row.push(encode(v, ty).map_err(|e| StorageError::Type {
                column: i + 1,
                source: e,
            })?);
        }
        self.insert_distinct(&row)
    }

    pub fn contains(&self, row: &[u64]) -> bool {
        self.parts[self.partition_of(row)].contains(row)
    }

    pub fn ensure_index(&mut self, cols: &[usize]) {
        for p in &mut self.parts {
            p.ensure_index(cols);
        }
    }

    /// Whether a lookup binding `cols` can be answered by one partition.
    pub fn single_partition_lookup(&self, cols: &[usize]) -> bool {
        self.parts.len() == 1 || self.disc.is_subset_of(cols)
    }

    /// Partitions a lookup binding `cols` to `vals` must visit.
    pub fn lookup_partitions(&self, cols: &[usize], vals: &[u64]) -> Vec<usize> {
        if self.parts.len() == 1 {
            return vec![0];
        }
        if self.disc.is_subset_of(cols) && !self.disc.is_empty() {
            let mut s = 0u64;
            for &d in self.disc.cols() {
                let at = cols.iter().position(|&c| c == d).unwrap();
                s = s.wrapping_add(self.scheme.g(vals[at]));
            }
            vec![(s % self.parts.len() as u64) as usize]
        } else {
            (0..self.parts.len()).collect()
        }
    }

    /// Rows whose `cols` equal `vals`; requires an index on `cols`.
    pub fn lookup(&self, cols: &[usize], vals: &[u64]) -> Result<Vec<&[u64]>, StorageError> {
        let mut out = Vec::new();
        for p in self.lookup_partitions(cols, vals) {
            let t = &self.parts[p];
            for id in t.lookup(cols, vals)? {
                out.push(t.row(id));
            }
        }
        Ok(out)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> + '_ {
        self.parts.iter().flat_map(|p| p.rows())
    }

    /// Same tuples under a new discriminating set and partition count.
    pub fn repartition(&self, disc: DiscriminatingSet, n: usize) -> Result<Self, StorageError> {
        let mut out = PartitionedRelation::new(self.types.clone(), disc, n, self.scheme)?;
        for row in self.rows() {
            let p = out.partition_of(row);
            out.parts[p].insert_distinct(row);
        }
        Ok(out)
    }

    pub fn to_values(&self) -> BTreeSet<Vec<Value>> {
        self.rows()
            .map(|r| r.iter().zip(&self.types).map(|(&x, &t)| decode(x, t)).collect())
            .collect()
    }

    pub fn heap_bytes(&self) -> usize {
        self.parts.iter().map(|p| p.heap_bytes()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(disc: &[usize], n: usize) -> PartitionedRelation {
        PartitionedRelation::new(
            vec![Ty::Int, Ty::Int],
            DiscriminatingSet::from_positions(disc),
            n,
            HashScheme::MIXER,
        )
        .unwrap()
    }

    #[test]
    fn insert_twice() {
        let mut r = rel(&[1], 4);
        assert!(r.insert_distinct(&[1, 2]).unwrap());
        assert!(!r.insert_distinct(&[1, 2]).unwrap());
        assert!(r.contains(&[1, 2]));
    }

    #[test]
    fn lookup_on_chain() {
        let mut r = rel(&[1], 3);
        r.insert_distinct(&[1, 2]).unwrap();
        r.insert_distinct(&[2, 3]).unwrap();
        r.ensure_index(&[0]);
        let hits: Vec<Vec<u64>> = r.lookup(&[0], &[2]).unwrap().iter().map(|x| x.to_vec()).collect();
        assert_eq!(hits, vec![vec![2, 3]]);
        assert!(r.single_partition_lookup(&[0]));
        assert!(!r.single_partition_lookup(&[1]));
        assert_eq!(r.lookup_partitions(&[1], &[3]).len(), 3);
    }

    #[test]
    fn bad_disc_rejected() {
        assert!(PartitionedRelation::new(
            vec![Ty::Int],
            DiscriminatingSet::from_positions(&[2]),
            2,
            HashScheme::MIXER
        )
        .is_err());
    }

    #[test]
    fn values_type_checked() {
        let mut r = rel(&[1], 2);
        assert!(r.insert_values(&[Value::Int(1), Value::str("x")]).is_err());
        assert!(r.insert_values(&[Value::Int(1)]).is_err());
        assert!(r.insert_values(&[Value::Int(1), Value::Int(2)]).unwrap());
    }
}
