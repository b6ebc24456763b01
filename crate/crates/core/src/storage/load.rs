//! Fact file loading: TSV (tab-separated, no header) and CSV.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use super::value::{guess_ty, join_ty, parse_field, Ty, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactFormat {
    Tsv,
    Csv,
}

impl FactFormat {
    /// `.csv` files are CSV; everything else is read as TSV.
    pub fn from_path(path: &Path) -> FactFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => FactFormat::Csv,
            _ => FactFormat::Tsv,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Line { path: String, line: u64, msg: String },
}

/// Loaded facts plus the column types they were read with.
#[derive(Clone, Debug)]
pub struct Facts {
    pub types: Vec<Ty>,
    pub rows: Vec<Vec<Value>>,
}

pub fn load_file(path: &Path, types: Option<&[Ty]>) -> Result<Facts, LoadError> {
    let name = path.display().to_string();
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| LoadError::Io {
            path: name.clone(),
            source,
        })?;
    load_str(&text, FactFormat::from_path(path), types, &name)
}

/// Parses fact text. With `types` absent, each column gets the narrowest
/// type that fits every row.
pub fn load_str(
    text: &str,
    format: FactFormat,
    types: Option<&[Ty]>,
    name: &str,
) -> Result<Facts, LoadError> {
    let err = |line: u64, msg: String| LoadError::Line {
        path: name.to_string(),
        line,
        msg,
    };
    let mut b = csv::ReaderBuilder::new();
    b.has_headers(false).flexible(true);
    if format == FactFormat::Tsv {
        b.delimiter(b'\t').quoting(false);
    }
    let mut raw: Vec<(u64, Vec<String>)> = Vec::new();
    for rec in b.from_reader(text.as_bytes()).records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        raw.push((line, rec.iter().map(|f| f.to_string()).collect()));
    }
    let types: Vec<Ty> = match types {
        Some(t) => t.to_vec(),
        None => {
            let mut t: Vec<Ty> = Vec::new();
            for (line, r) in &raw {
                if t.is_empty() {
                    t = r.iter().map(|f| guess_ty(f)).collect();
                } else if r.len() != t.len() {
                    return Err(err(*line, format!("expected {} fields, found {}", t.len(), r.len())));
                } else {
                    for (ty, f) in t.iter_mut().zip(r) {
                        *ty = join_ty(*ty, guess_ty(f));
                    }
                }
            }
            t
        }
    };
    let mut rows = Vec::with_capacity(raw.len());
    for (line, r) in raw {
        if r.len() != types.len() {
            return Err(err(line, format!("expected {} fields, found {}", types.len(), r.len())));
        }
        let mut row = Vec::with_capacity(r.len());
        for (i, (f, &ty)) in r.iter().zip(&types).enumerate() {
            let v = parse_field(f, ty).ok_or_else(|| {
                err(line, format!("column {}: {:?} is not a valid {}", i + 1, f, ty))
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    Ok(Facts { types, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_with_guessed_types() {
        let f = load_str("1\t2\n2\t3.5\n", FactFormat::Tsv, None, "t").unwrap();
        assert_eq!(f.types, vec![Ty::Int, Ty::Float]);
        assert_eq!(f.rows[1], vec![Value::Int(2), Value::Float(3.5)]);
    }

    #[test]
    fn csv_quoted_fields() {
        let f = load_str("sunny,\"hot, dry\",no\n", FactFormat::Csv, None, "t").unwrap();
        assert_eq!(f.rows[0][1], Value::str("hot, dry"));
    }

    #[test]
    fn type_error_names_the_line() {
        let e = load_str("1\t2\n3\tx\n", FactFormat::Tsv, Some(&[Ty::Int, Ty::Int]), "arc.tsv")
            .unwrap_err();
        assert!(e.to_string().starts_with("arc.tsv:2:"), "{e}");
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(load_str("1\t2\n3\n", FactFormat::Tsv, None, "t").is_err());
    }
}
