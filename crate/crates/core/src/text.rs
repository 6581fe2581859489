//! Shared helpers for the compact text forms (`pr:1`, `pow:0.5`, `bk1:n=50`, ...).
//!
//! Columns reported in parse errors are 1-based character offsets into the
//! string handed to the top-level `FromStr` impl.

use crate::error::{Error, Result};

pub(crate) fn parse_f64(s: &str, column: usize) -> Result<f64> {
    let t = s.trim();
    let v: f64 = t
        .parse()
        .map_err(|_| Error::parse(column, format!("expected a number, found `{t}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(column, format!("number `{t}` is not finite")));
    }
    Ok(v)
}

pub(crate) fn parse_usize(s: &str, column: usize) -> Result<usize> {
    let t = s.trim();
    t.parse()
        .map_err(|_| Error::parse(column, format!("expected a non-negative integer, found `{t}`")))
}

/// Comma separated list of numbers. Columns of individual items are reported.
pub(crate) fn parse_f64_list(s: &str, column: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    let mut col = column;
    for item in s.split(',') {
        out.push(parse_f64(item, col)?);
        col += item.chars().count() + 1;
    }
    Ok(out)
}

pub(crate) fn join_f64(values: &[f64], sep: &str) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

/// Split `key=value` pairs separated by commas. A comma only starts a new pair
/// when the next piece begins with a letter, so values such as capacity
/// tables (`cap=table:0,0;0.5,0.8;1,1`) may contain commas themselves.
/// Returns `(key, value, column_of_value)`; bare keys get an empty value.
pub(crate) fn split_params(s: &str, column: usize) -> Vec<(String, String, usize)> {
    let mut out: Vec<(String, String, usize)> = Vec::new();
    let mut col = column;
    for piece in s.split(',') {
        let starts_key = piece.chars().next().is_some_and(|c| c.is_ascii_alphabetic());
        if starts_key || out.is_empty() {
            match piece.split_once('=') {
                Some((k, v)) => {
                    let vcol = col + k.chars().count() + 1;
                    out.push((k.trim().to_string(), v.to_string(), vcol));
                }
                None => out.push((piece.trim().to_string(), String::new(), col)),
            }
        } else if let Some(last) = out.last_mut() {
            last.1.push(',');
            last.1.push_str(piece);
        }
        col += piece.chars().count() + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn params_keep_commas_inside_values() {
        let p = split_params("n=5,cap=table:0,0;0.5,0.8;1,1", 1);
        assert_eq!(p.len(), 2);
        assert_eq!(p[0], ("n".into(), "5".into(), 3));
        assert_eq!(p[1].0, "cap");
        assert_eq!(p[1].1, "table:0,0;0.5,0.8;1,1");
        assert_eq!(p[1].2, 9);
    }

    #[test]
    fn bare_flags() {
        let p = split_params("r=-1,R=1,shrink", 1);
        assert_eq!(p[2], ("shrink".into(), String::new(), 10));
    }

    #[test]
    fn number_errors_carry_column() {
        match parse_f64("x", 7) {
            Err(Error::Parse { column, .. }) => assert_eq!(column, 7),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_f64("inf", 1).is_err());
    }
}
