//! Program text to validated syntax trees.

pub mod ast;
pub mod parser;
pub mod types;
pub mod validate;
pub mod vertical;

pub use ast::*;
pub use parser::{parse_program, parse_query, parse_rule, ParseError};
pub use types::{infer_types, TypeInfo};
pub use validate::{validate, validate_with, Diagnostic};
pub use vertical::{expand_program, expand_verticalize, VerticalError};
