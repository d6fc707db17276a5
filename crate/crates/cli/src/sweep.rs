//! Sweep axes: `linspace(a, b, n)`, `logspace(a, b, n)` (powers of ten),
//! `geomspace(a, b, n)` or a plain comma-separated list.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

pub const MAX_SWEEP_POINTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SweepError {
    #[error("empty sweep specification")]
    Empty,
    #[error("cannot parse `{0}` as a number")]
    Number(String),
    #[error("unknown sweep function `{0}`; expected linspace, logspace or geomspace")]
    Function(String),
    #[error("`{0}` takes (start, stop, count)")]
    Arity(String),
    #[error("point count must be a positive integer, got `{0}`")]
    Count(String),
    #[error("sweep has {0} points, more than the limit of 10000")]
    TooLarge(usize),
    #[error("sweep values must be finite")]
    NonFinite,
    #[error("geomspace needs both end points > 0")]
    GeomSign,
    #[error("value {0} appears twice")]
    Duplicate(String),
}

fn number(s: &str) -> Result<f64, SweepError> {
    let t = s.trim();
    let v: f64 = t.parse().map_err(|_| SweepError::Number(t.to_string()))?;
    if !v.is_finite() {
        return Err(SweepError::NonFinite);
    }
    Ok(v)
}

fn count(s: &str) -> Result<usize, SweepError> {
    let t = s.trim();
    let n: usize = t.parse().map_err(|_| SweepError::Count(t.to_string()))?;
    if n == 0 {
        return Err(SweepError::Count(t.to_string()));
    }
    if n > MAX_SWEEP_POINTS {
        return Err(SweepError::TooLarge(n));
    }
    Ok(n)
}

fn spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| if k == n - 1 { b } else { a + (b - a) * k as f64 / (n - 1) as f64 }).collect()
}

/// Values of one axis, sorted ascending.
pub fn parse_axis(spec: &str) -> Result<Vec<f64>, SweepError> {
    let s = spec.trim();
    if s.is_empty() {
        return Err(SweepError::Empty);
    }
    let values = if let Some(open) = s.find('(') {
        let name = s[..open].trim();
        let inner = s[open + 1..].strip_suffix(')').ok_or_else(|| SweepError::Arity(name.to_string()))?;
        let args: Vec<&str> = inner.split(',').collect();
        if args.len() != 3 {
            return Err(SweepError::Arity(name.to_string()));
        }
        let (a, b, n) = (number(args[0])?, number(args[1])?, count(args[2])?);
        match name {
            "linspace" => spaced(a, b, n),
            "logspace" => spaced(a, b, n).into_iter().map(|e| 10f64.powf(e)).collect(),
            "geomspace" => {
                if a <= 0.0 || b <= 0.0 {
                    return Err(SweepError::GeomSign);
                }
                let mut v: Vec<f64> = spaced(a.ln(), b.ln(), n).into_iter().map(f64::exp).collect();
                // exp(ln x) need not return x
                v[0] = a;
                v[n - 1] = b;
                v
            }
            other => return Err(SweepError::Function(other.to_string())),
        }
    } else {
        s.split(',').map(number).collect::<Result<Vec<_>, _>>()?
    };
    from_values(values)
}

/// Validate and sort an explicit list.
pub fn from_values(mut values: Vec<f64>) -> Result<Vec<f64>, SweepError> {
    if values.is_empty() {
        return Err(SweepError::Empty);
    }
    if values.len() > MAX_SWEEP_POINTS {
        return Err(SweepError::TooLarge(values.len()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(SweepError::NonFinite);
    }
    values.sort_by(f64::total_cmp);
    if let Some(w) = values.windows(2).find(|w| w[0] == w[1]) {
        return Err(SweepError::Duplicate(w[0].to_string()));
    }
    Ok(values)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

/// One point of the Cartesian product: (axis name, value) in axis order.
pub type SweepPoint = Vec<(String, f64)>;

/// Full product of the axes, axes ordered by name and rows lexicographic,
/// so the plan (and every table built from it) is sorted by sweep key.
pub fn plan(axes: &BTreeMap<String, Vec<f64>>) -> Result<Vec<SweepPoint>, SweepError> {
    let total = axes.values().try_fold(1usize, |acc, v| acc.checked_mul(v.len()).filter(|&n| n <= MAX_SWEEP_POINTS));
    let total = match total {
        Some(n) => n,
        None => {
            let approx = axes.values().fold(1f64, |acc, v| acc * v.len() as f64);
            return Err(SweepError::TooLarge(approx.min(usize::MAX as f64) as usize));
        }
    };
    let mut rows: Vec<SweepPoint> = vec![Vec::new()];
    for (name, values) in axes {
        let mut next = Vec::with_capacity(rows.len() * values.len());
        for row in &rows {
            for &v in values {
                let mut r = row.clone();
                r.push((name.clone(), v));
                next.push(r);
            }
        }
        rows = next;
    }
    debug_assert_eq!(rows.len(), total);
    Ok(rows)
}
