//! Plain-text summaries of `summary.json` files.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

fn num(v: &Value) -> String {
    match v.as_f64() {
        Some(x) if x.abs() >= 1e4 || (x != 0.0 && x.abs() < 1e-3) => format!("{x:.3e}"),
        Some(x) => format!("{x:.4}"),
        None => "-".into(),
    }
}

/// Formats the `summary.json` in `dir` (or the file itself) as a table.
pub fn render_report(path: &Path) -> Result<String> {
    let file = if path.is_dir() {
        path.join("summary.json")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file)?;
    let v: Value = serde_json::from_str(&text)?;
    let bad = |msg: &str| Error::Parse {
        path: file.clone(),
        msg: msg.into(),
    };
    let mut out = String::new();
    match v["command"].as_str() {
        Some("run") => {
            let runs = v["runs"].as_array().ok_or_else(|| bad("missing `runs`"))?;
            writeln!(
                out,
                "{:<12} {:>6} {:>6} {:>12} {:>10} {:>8} {:>10}",
                "algorithm", "seed", "iters", "epsilon_%", "recovery", "events", "secs"
            )
            .expect("write to string");
            for r in runs {
                let recovery = r["recovery"]["rate"]
                    .as_f64()
                    .map_or("-".into(), |x| format!("{x:.3}"));
                writeln!(
                    out,
                    "{:<12} {:>6} {:>6} {:>12} {:>10} {:>8} {:>10}",
                    r["algorithm"].as_str().unwrap_or("?"),
                    r["seed"].to_string(),
                    r["iterations"].to_string(),
                    num(&r["final_epsilon"]),
                    recovery,
                    r["events"].as_array().map_or(0, Vec::len),
                    num(&r["total_secs"]),
                )
                .expect("write to string");
            }
        }
        Some("sweep") => {
            let param = v["config"]["sweep"]["param"].as_str().unwrap_or("value");
            let rows = v["aggregates"]
                .as_array()
                .ok_or_else(|| bad("missing `aggregates`"))?;
            writeln!(
                out,
                "{:>10} {:<12} {:>12} {:>10} {:>10} {:>10}",
                param, "algorithm", "epsilon_%", "recovery", "secs", "ratio"
            )
            .expect("write to string");
            for r in rows {
                writeln!(
                    out,
                    "{:>10} {:<12} {:>12} {:>10} {:>10} {:>10}",
                    num(&r["value"]),
                    r["algorithm"].as_str().unwrap_or("?"),
                    num(&r["mean_epsilon"]),
                    num(&r["mean_recovery"]),
                    num(&r["mean_secs"]),
                    num(&r["time_ratio"]),
                )
                .expect("write to string");
            }
        }
        _ => return Err(bad("not a run or sweep summary")),
    }
    Ok(out)
}
