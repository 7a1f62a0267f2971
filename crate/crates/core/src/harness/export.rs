//! CSV and JSON output of evaluation rows.
//!
//! The CSV carries the fixed column set only; the JSON mirror carries the
//! same rows plus the effective configuration and seed.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::eval::MethodStats;

pub const CSV_HEADER: &str = "method,P,rate_mean,rate_ci,crlb_theta_sqrt,crlb_d_sqrt,n";

/// `%.9g`: nine significant digits, trailing zeros trimmed, scientific
/// notation outside `[1e-4, 1e9)`.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mant.to_string()), exp.abs())
    } else {
        trim(format!("{x:.prec$}", prec = (8 - exp) as usize))
    }
}

pub fn to_csv_string(rows: &[MethodStats]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method,
            fmt_sig9(r.power),
            fmt_sig9(r.rate_mean),
            fmt_sig9(r.rate_ci),
            fmt_sig9(r.crlb_theta_sqrt),
            fmt_sig9(r.crlb_d_sqrt),
            r.n
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonMirror {
    pub config: Vec<(String, String)>,
    pub seed: u64,
    pub rows: Vec<MethodStats>,
}

pub fn write_csv(rows: &[MethodStats], path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(rows)).map_err(|e| Error::io(path, e))
}

pub fn write_json(mirror: &JsonMirror, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(mirror)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json(path: &Path) -> Result<JsonMirror> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
