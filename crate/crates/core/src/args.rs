//! Parsers for the compact command-line value syntaxes.

use crate::basis::Domain;
use crate::error::{Error, Result};

/// `"N:ratio"`, a path of `N` penalties down to `ratio * lambda_max`.
pub fn parse_lambda_path(s: &str) -> Result<(usize, f64)> {
    let (n, r) = s
        .split_once(':')
        .ok_or_else(|| Error::invalid(format!("lambda path {s:?} must look like N:ratio")))?;
    let n: usize = n
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("invalid path length in {s:?}")))?;
    let r: f64 = r
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("invalid ratio in {s:?}")))?;
    if n == 0 || !(r > 0.0 && r < 1.0) {
        return Err(Error::invalid("lambda path needs N >= 1 and 0 < ratio < 1"));
    }
    Ok((n, r))
}

/// `"a..b"` (inclusive) or a comma-separated list.
pub fn parse_k_grid(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::invalid(format!("invalid k grid {s:?}"));
    let ks: Vec<usize> = if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().parse().map_err(|_| bad())?;
        if a > b || b - a > 1000 {
            return Err(bad());
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse().map_err(|_| bad()))
            .collect::<Result<_>>()?
    };
    if ks.is_empty() || ks.contains(&0) {
        return Err(bad());
    }
    Ok(ks)
}

/// `"start,end"`
pub fn parse_domain(s: &str) -> Result<Domain> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| Error::invalid(format!("domain {s:?} must look like start,end")))?;
    let a: f64 = a.trim().parse().map_err(|_| Error::invalid(format!("invalid domain start in {s:?}")))?;
    let b: f64 = b.trim().parse().map_err(|_| Error::invalid(format!("invalid domain end in {s:?}")))?;
    Domain::new(a, b)
}

/// Comma-separated items through `item`.
pub fn parse_list<T>(s: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let out: Vec<T> = s.split(',').filter(|t| !t.trim().is_empty()).map(item).collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::invalid("empty list"));
    }
    Ok(out)
}
