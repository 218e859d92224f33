//! Reservoir mini-language:
//!
//! ```text
//! uniform:LO,HI
//! atoms:V1@W1,V2@W2,...
//! admissible:alpha=A,beta=B,eta=E,rho=R
//! ```

use std::str::FromStr;

use crate::error::{Error, Result};

use super::{admissible_reservoir, Reservoir};

fn parse_err<T>(position: usize, message: impl Into<String>) -> Result<T> {
    Err(Error::Parse { position, message: message.into() })
}

/// Comma-separated items with their byte offsets in the original string.
fn items(body: &str, offset: usize) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, c) in body.char_indices() {
        if c == ',' {
            out.push((offset + start, &body[start..i]));
            start = i + 1;
        }
    }
    out.push((offset + start, &body[start..]));
    out
}

fn number(pos: usize, s: &str) -> Result<f64> {
    let t = s.trim();
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => parse_err(pos, format!("expected a number, found {t:?}")),
    }
}

impl FromStr for Reservoir {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let Some(colon) = text.find(':') else {
            return parse_err(0, "expected KIND:ARGS (uniform, atoms or admissible)");
        };
        let kind = text[..colon].trim();
        let offset = colon + 1;
        let body = &text[offset..];
        let wrap = |e: Error| match e {
            Error::Domain(m) => Error::Parse { position: offset, message: m },
            other => other,
        };
        match kind {
            "uniform" => {
                let parts = items(body, offset);
                if parts.len() != 2 {
                    return parse_err(offset, "uniform takes exactly two bounds LO,HI");
                }
                let lo = number(parts[0].0, parts[0].1)?;
                let hi = number(parts[1].0, parts[1].1)?;
                Reservoir::uniform(lo, hi).map_err(wrap)
            }
            "atoms" => {
                let mut atoms = Vec::new();
                for (pos, item) in items(body, offset) {
                    let Some(at) = item.find('@') else {
                        return parse_err(pos, format!("expected VALUE@WEIGHT, found {item:?}"));
                    };
                    let v = number(pos, &item[..at])?;
                    let w = number(pos + at + 1, &item[at + 1..])?;
                    atoms.push((v, w));
                }
                Reservoir::atoms(atoms).map_err(wrap)
            }
            "admissible" => {
                let (mut alpha, mut beta, mut eta, mut rho) = (None, None, None, None);
                for (pos, item) in items(body, offset) {
                    let Some(eq) = item.find('=') else {
                        return parse_err(pos, format!("expected KEY=VALUE, found {item:?}"));
                    };
                    let v = number(pos + eq + 1, &item[eq + 1..])?;
                    let slot = match item[..eq].trim() {
                        "alpha" => &mut alpha,
                        "beta" => &mut beta,
                        "eta" => &mut eta,
                        "rho" => &mut rho,
                        other => return parse_err(pos, format!("unknown key {other:?}")),
                    };
                    *slot = Some(v);
                }
                let need = |v: Option<f64>, name: &str| {
                    v.ok_or_else(|| Error::Parse { position: text.len(), message: format!("missing {name}") })
                };
                let adm = admissible_reservoir(need(alpha, "alpha")?, need(beta, "beta")?, need(eta, "eta")?, need(rho, "rho")?)
                    .map_err(wrap)?;
                Ok(adm.reservoir)
            }
            other => parse_err(0, format!("unknown reservoir kind {other:?}")),
        }
    }
}
