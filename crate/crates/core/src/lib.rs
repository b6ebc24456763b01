//! Datalog with aggregates in recursion, evaluated sequentially or by
//! partitioned parallel semi-naive workers.

pub mod compiler;
pub mod evaluator;
pub mod frontend;
pub mod planner;
pub mod prem;
pub mod storage;
