//! Plain-text report formatting.
//!
//! Numbers are written in fixed notation with 15 significant digits so that
//! outputs compare byte for byte across runs.

use std::fmt::Write as _;

use crate::experiments::{IqaTable, PerturbationTable, SweepPoint};
use crate::similarity::Ranking;

pub const SIGNIFICANT_DIGITS: usize = 15;

/// Fixed-notation decimal with [`SIGNIFICANT_DIGITS`] significant digits.
pub fn fmt_sig(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        // avoid "-0"
        return format!("{:.*}", SIGNIFICANT_DIGITS - 1, 0.0);
    }
    let sci = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x);
    let exp: i32 = sci
        .rsplit('e')
        .next()
        .and_then(|e| e.parse().ok())
        .unwrap_or(0);
    let decimals = (SIGNIFICANT_DIGITS as i32 - 1 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// `pair,cosine,mse`
pub fn iqa_csv(table: &IqaTable) -> String {
    let mut out = String::from("pair,cosine,mse\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.pair_id(),
            fmt_sig(r.cosine),
            fmt_sig(r.mse)
        );
    }
    out
}

/// `sigma,cosine,mse`
pub fn sweep_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("sigma,cosine,mse\n");
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_sig(p.sigma),
            fmt_sig(p.cosine),
            fmt_sig(p.mse)
        );
    }
    out
}

/// `image,sigma,cosine,rank`
pub fn perturbation_csv(table: &PerturbationTable) -> String {
    let mut out = String::from("image,sigma,cosine,rank\n");
    for r in &table.rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.index,
            fmt_sig(r.sigma),
            fmt_sig(r.cosine),
            r.rank
        );
    }
    out
}

/// `rank,index,pair,cosine,mse`
pub fn ranking_csv(ranking: &Ranking) -> String {
    let mut out = String::from("rank,index,pair,cosine,mse\n");
    for (i, r) in ranking.reports.iter().enumerate() {
        let index = r.index.map(|k| k.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            i + 1,
            index,
            r.pair_id(),
            fmt_sig(r.cosine),
            fmt_sig(r.mse)
        );
    }
    out
}
