//! A single partition: append-only fixed-width rows, a unique index over the
//! key columns and lazily created secondary indexes.

use std::hash::{BuildHasher, Hasher};

use hashbrown::{HashMap, HashTable};

use super::hash::{hash_cols, hash_row};
use super::StorageError;

/// Rows per storage chunk. Chunks never move once full, which keeps large
/// relations from paying for whole-array reallocation.
pub const CHUNK_ROWS: usize = 1 << 16;

/// Which columns identify a row for deduplication.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KeySpec {
    /// No unique index: plain append buffer.
    None,
    /// Set semantics over the whole row.
    All,
    /// Set semantics over these columns; the remaining columns are payload
    /// that may be overwritten in place.
    Cols(Vec<usize>),
}

/// Pass-through hasher for maps keyed by precomputed 64-bit hashes.
#[derive(Default, Clone, Copy)]
pub struct PreHashed(u64);

impl Hasher for PreHashed {
    fn finish(&self) -> u64 {
        self.0
    }
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = self.0.rotate_left(8) ^ b as u64;
        }
    }
    fn write_u64(&mut self, x: u64) {
        self.0 = x;
    }
}

#[derive(Default, Clone, Copy)]
pub struct BuildPreHashed;

impl BuildHasher for BuildPreHashed {
    type Hasher = PreHashed;
    fn build_hasher(&self) -> PreHashed {
        PreHashed(0)
    }
}

#[derive(Clone)]
struct SecondaryIndex {
    cols: Vec<usize>,
    map: HashMap<u64, Vec<u32>, BuildPreHashed>,
}

#[derive(Clone)]
pub struct Table {
    arity: usize,
    key: KeySpec,
    key_cols: Vec<usize>,
    chunks: Vec<Vec<u64>>,
    len: usize,
    unique: HashTable<u32>,
    indexes: Vec<SecondaryIndex>,
}

#[inline]
fn row_at(chunks: &[Vec<u64>], arity: usize, id: u32) -> &[u64] {
    if arity == 0 {
        return &[];
    }
    let id = id as usize;
    let c = &chunks[id / CHUNK_ROWS];
    let off = (id % CHUNK_ROWS) * arity;
    &c[off..off + arity]
}

#[inline]
fn keys_equal(a: &[u64], b: &[u64], key_cols: &[usize], whole: bool) -> bool {
    if whole {
        a == b
    } else {
        key_cols.iter().all(|&c| a[c] == b[c])
    }
}

/// Hash of a projected key, consistent with `hash_cols` on the full row.
#[inline]
pub fn hash_key(vals: &[u64]) -> u64 {
    hash_row(vals)
}

impl Table {
    pub fn new(arity: usize, key: KeySpec) -> Table {
        let key_cols = match &key {
            KeySpec::None => vec![],
            KeySpec::All => (0..arity).collect(),
            KeySpec::Cols(c) => c.clone(),
        };
        Table {
            arity,
            key,
            key_cols,
            chunks: Vec::new(),
            len: 0,
            unique: HashTable::new(),
            indexes: Vec::new(),
        }
    }

    /// A set-semantics table over whole rows.
    pub fn set(arity: usize) -> Table {
        Table::new(arity, KeySpec::All)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn key(&self) -> &KeySpec {
        &self.key
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn row(&self, id: u32) -> &[u64] {
        row_at(&self.chunks, self.arity, id)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> + '_ {
        (0..self.len as u32).map(move |i| self.row(i))
    }

    /// Rows with ids in `from..to`.
    pub fn rows_range(&self, from: usize, to: usize) -> impl Iterator<Item = &[u64]> + '_ {
        (from as u32..to as u32).map(move |i| self.row(i))
    }

    fn whole_key(&self) -> bool {
        matches!(self.key, KeySpec::All)
    }

    #[inline]
    fn key_hash(&self, row: &[u64]) -> u64 {
        hash_cols(row, &self.key_cols)
    }

    /// Row id whose key columns equal those of `row`.
    pub fn find(&self, row: &[u64]) -> Option<u32> {
        if matches!(self.key, KeySpec::None) {
            return None;
        }
        let h = self.key_hash(row);
        let whole = self.whole_key();
        self.unique
            .find(h, |&id| {
                keys_equal(row_at(&self.chunks, self.arity, id), row, &self.key_cols, whole)
            })
            .copied()
    }

    pub fn contains(&self, row: &[u64]) -> bool {
        self.find(row).is_some()
    }

    fn push_row(&mut self, row: &[u64]) -> u32 {
        assert!(self.len < u32::MAX as usize, "partition exceeds 2^32 rows");
        let id = self.len as u32;
        if self.arity > 0 {
            let need_new = match self.chunks.last() {
                None => true,
                Some(c) => c.len() == CHUNK_ROWS * self.arity,
            };
            if need_new {
                let cap = if self.chunks.is_empty() {
                    16 * self.arity
                } else {
                    CHUNK_ROWS * self.arity
                };
                self.chunks.push(Vec::with_capacity(cap));
            }
            self.chunks.last_mut().unwrap().extend_from_slice(row);
        }
        self.len += 1;
        for ix in &mut self.indexes {
            let h = hash_cols(row, &ix.cols);
            ix.map.entry(h).or_default().push(id);
        }
        id
    }

    fn unique_insert(&mut self, h: u64, id: u32) {
        let chunks = &self.chunks;
        let arity = self.arity;
        let key_cols = &self.key_cols;
        self.unique
            .insert_unique(h, id, |&i| hash_cols(row_at(chunks, arity, i), key_cols));
    }

    /// Appends `row` unless a row with the same key exists. Returns whether
    /// it was new. Tables without a unique index always append.
    pub fn insert_distinct(&mut self, row: &[u64]) -> bool {
        debug_assert_eq!(row.len(), self.arity);
        if matches!(self.key, KeySpec::None) {
            self.push_row(row);
            return true;
        }
        let h = self.key_hash(row);
        let whole = self.whole_key();
        let exists = self
            .unique
            .find(h, |&id| {
                keys_equal(row_at(&self.chunks, self.arity, id), row, &self.key_cols, whole)
            })
            .is_some();
        if exists {
            return false;
        }
        let id = self.push_row(row);
        self.unique_insert(h, id);
        true
    }

    /// Like `insert_distinct` but returns the row id in both cases.
    pub fn find_or_insert(&mut self, row: &[u64]) -> (u32, bool) {
        if let Some(id) = self.find(row) {
            return (id, false);
        }
        let id = self.push_row(row);
        if !matches!(self.key, KeySpec::None) {
            let h = self.key_hash(row);
            self.unique_insert(h, id);
        }
        (id, true)
    }

    /// Overwrites a payload column in place.
    pub fn set_cell(&mut self, id: u32, col: usize, value: u64) {
        debug_assert!(!self.key_cols.contains(&col) || matches!(self.key, KeySpec::None));
        debug_assert!(self.indexes.iter().all(|ix| !ix.cols.contains(&col)));
        let id = id as usize;
        let off = (id % CHUNK_ROWS) * self.arity + col;
        self.chunks[id / CHUNK_ROWS][off] = value;
    }

    pub fn has_index(&self, cols: &[usize]) -> bool {
        self.indexes.iter().any(|ix| ix.cols == cols)
    }

    /// Builds a secondary index on `cols` (in the given order) if missing.
    pub fn ensure_index(&mut self, cols: &[usize]) {
        if cols.is_empty() || self.has_index(cols) {
            return;
        }
        let mut map: HashMap<u64, Vec<u32>, BuildPreHashed> = HashMap::with_hasher(BuildPreHashed);
        for id in 0..self.len as u32 {
            let h = hash_cols(self.row(id), cols);
            map.entry(h).or_default().push(id);
        }
        self.indexes.push(SecondaryIndex {
            cols: cols.to_vec(),
            map,
        });
    }

    /// Row ids whose `cols` equal `vals`. An empty `cols` scans every row.
    pub fn lookup<'a>(
        &'a self,
        cols: &'a [usize],
        vals: &'a [u64],
    ) -> Result<Lookup<'a>, StorageError> {
        if cols.is_empty() {
            return Ok(Lookup {
                table: self,
                cols,
                vals,
                ids: LookupIds::Range(0..self.len as u32),
            });
        }
        let ix = self
            .indexes
            .iter()
            .find(|ix| ix.cols == cols)
            .ok_or_else(|| StorageError::NoIndex(cols.iter().map(|c| c + 1).collect()))?;
        let ids = match ix.map.get(&hash_key(vals)) {
            Some(v) => LookupIds::List(v.iter()),
            None => LookupIds::List([].iter()),
        };
        Ok(Lookup {
            table: self,
            cols,
            vals,
            ids,
        })
    }

    /// Approximate heap footprint in bytes.
    pub fn heap_bytes(&self) -> usize {
        let rows: usize = self.chunks.iter().map(|c| c.capacity() * 8).sum();
        let uniq = self.unique.capacity() * 5;
        let ix: usize = self
            .indexes
            .iter()
            .map(|ix| ix.map.capacity() * 40 + self.len * 4)
            .sum();
        rows + uniq + ix
    }
}

enum LookupIds<'a> {
    Range(std::ops::Range<u32>),
    List(std::slice::Iter<'a, u32>),
}

/// Iterator over matching row ids; verifies every probed row.
pub struct Lookup<'a> {
    table: &'a Table,
    cols: &'a [usize],
    vals: &'a [u64],
    ids: LookupIds<'a>,
}

impl<'a> Iterator for Lookup<'a> {
    type Item = u32;
    fn next(&mut self) -> Option<u32> {
        loop {
            let id = match &mut self.ids {
                LookupIds::Range(r) => r.next()?,
                LookupIds::List(it) => *it.next()?,
            };
            let row = self.table.row(id);
            if self.cols.iter().zip(self.vals).all(|(&c, &v)| row[c] == v) {
                return Some(id);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_semantics_and_lookup() {
        let mut t = Table::set(2);
        assert!(t.insert_distinct(&[1, 2]));
        assert!(!t.insert_distinct(&[1, 2]));
        t.ensure_index(&[0]);
        assert!(t.insert_distinct(&[2, 3]));
        let hits: Vec<_> = t.lookup(&[0], &[2]).unwrap().map(|i| t.row(i).to_vec()).collect();
        assert_eq!(hits, vec![vec![2, 3]]);
        assert!(t.lookup(&[1], &[3]).is_err());
    }

    #[test]
    fn many_rows_cross_chunks() {
        let mut t = Table::set(2);
        let n = CHUNK_ROWS as u64 * 2 + 17;
        for i in 0..n {
            assert!(t.insert_distinct(&[i, i + 1]));
        }
        for i in (0..n).step_by(997) {
            assert!(t.contains(&[i, i + 1]));
            assert!(!t.contains(&[i, i]));
        }
        assert_eq!(t.len() as u64, n);
    }

    #[test]
    fn keyed_rows_update_payload() {
        let mut t = Table::new(3, KeySpec::Cols(vec![0, 1]));
        let (id, new) = t.find_or_insert(&[1, 2, 9]);
        assert!(new);
        let (id2, new2) = t.find_or_insert(&[1, 2, 4]);
        assert_eq!((id, false), (id2, new2));
        t.set_cell(id, 2, 4);
        assert_eq!(t.row(id), &[1, 2, 4]);
    }

    #[test]
    fn nullary_table_holds_one_row() {
        let mut t = Table::set(0);
        assert!(t.insert_distinct(&[]));
        assert!(!t.insert_distinct(&[]));
        assert_eq!(t.len(), 1);
    }
}
