//! Partitioned relation storage.

pub mod agg;
pub mod hash;
pub mod load;
pub mod partitioned;
pub mod table;
pub mod value;

pub use agg::{AggKind, AggLayout, AggPart, AggregateStore};
pub use hash::{mix64, HashScheme};
pub use load::{load_file, load_str, FactFormat, Facts, LoadError};
pub use partitioned::{hash_partition, DiscriminatingSet, PartitionedRelation};
pub use table::{KeySpec, Table};
pub use value::{decode, encode, intern, resolve, EncodeError, Ty, Value};

#[derive(Debug, thiserror::Error)]
pub enum StorageError {
    #[error("no index on columns {0:?}")]
    NoIndex(Vec<usize>),
    #[error("arity mismatch: expected {expected}, found {found}")]
    Arity { expected: usize, found: usize },
    #[error("column {column}: {source}")]
    Type { column: usize, source: EncodeError },
    #[error("discriminating position {position} out of range for arity {arity}")]
    BadDiscriminatingSet { position: usize, arity: usize },
    #[error("aggregate: {0}")]
    Aggregate(String),
}
