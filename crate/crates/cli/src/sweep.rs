//! Sweep axes on the command line: `1,2,5`, `0..12`, or a mix like `0..3,8`.

use std::str::FromStr;

/// A parsed sweep axis. Wrapped so clap treats it as one value.
#[derive(Debug, Clone, PartialEq)]
pub struct Sweep<T>(pub Vec<T>);

pub fn int_sweep(text: &str) -> Result<Sweep<usize>, String> {
    parse_int_list(text).map(Sweep)
}

pub fn prob_sweep(text: &str) -> Result<Sweep<f64>, String> {
    parse_prob_list(text).map(Sweep)
}

fn split(text: &str) -> Result<Vec<&str>, String> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("empty entry in {text:?}"));
    }
    Ok(parts)
}

/// Integers; `a..b` includes both ends.
pub fn parse_int_list(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in split(text)? {
        if let Some((lo, hi)) = part.split_once("..") {
            let lo: usize = lo.trim().parse().map_err(|_| format!("bad range start in {part:?}"))?;
            let hi: usize = hi.trim().parse().map_err(|_| format!("bad range end in {part:?}"))?;
            if lo > hi {
                return Err(format!("range {part:?} is empty"));
            }
            out.extend(lo..=hi);
        } else {
            out.push(part.parse().map_err(|_| format!("not an integer: {part:?}"))?);
        }
    }
    Ok(out)
}

/// Comma-separated values of any parseable type.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>, String> {
    split(text)?
        .into_iter()
        .map(|p| p.parse().map_err(|_| format!("cannot parse {p:?}")))
        .collect()
}

pub fn parse_prob_list(text: &str) -> Result<Vec<f64>, String> {
    let ps: Vec<f64> = parse_list(text)?;
    match ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(format!("probability {p} is outside [0, 1]")),
        None => Ok(ps),
    }
}
