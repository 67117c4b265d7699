//! Number formatting and matrix file input shared by the command line tools.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::matrix::RealMatrix;

/// Significant digits used for every persisted float.
pub const OUTPUT_DIGITS: usize = 12;

/// Formats like C's `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let mantissa = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        strip_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.max(1) - 1, x)
        .parse()
        .expect("round trip")
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(num) if num.is_f64() => {
            let x = num.as_f64().expect("f64 number");
            if let Some(r) = serde_json::Number::from_f64(round_sig(x, OUTPUT_DIGITS)) {
                *num = r;
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_value),
        Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Pretty JSON with floats rounded to [`OUTPUT_DIGITS`] significant digits.
/// Non-finite floats become `null`.
pub fn to_rounded_json<T: Serialize>(value: &T) -> serde_json::Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    serde_json::to_string_pretty(&v)
}

#[derive(Debug, thiserror::Error)]
pub enum MatrixFileError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a square matrix: {0}")]
    Shape(String),
    #[error("cannot parse {0:?} as a number")]
    Number(String),
}

/// Parses a square matrix given as JSON (nested rows) or whitespace-separated text rows.
pub fn parse_matrix(text: &str) -> Result<RealMatrix, MatrixFileError> {
    let trimmed = text.trim_start();
    let rows: Vec<Vec<f64>> = if trimmed.starts_with('[') {
        serde_json::from_str(trimmed).map_err(|e| MatrixFileError::Shape(e.to_string()))?
    } else {
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .map(|t| t.parse().map_err(|_| MatrixFileError::Number(t.into())))
                    .collect()
            })
            .collect::<Result<_, _>>()?
    };
    let n = rows.len();
    if n == 0 {
        return Err(MatrixFileError::Shape("empty input".into()));
    }
    RealMatrix::from_rows(rows)
        .ok_or_else(|| MatrixFileError::Shape(format!("{n} rows of unequal or wrong length")))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<RealMatrix, MatrixFileError> {
    parse_matrix(&std::fs::read_to_string(path)?)
}
