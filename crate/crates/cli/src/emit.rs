//! CSV and JSON result emission.
//!
//! The CSV column order is fixed; downstream plotting scripts index by
//! position. The JSON mirror embeds the full config so a result file is
//! self-describing and replayable.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};

use crate::config::ExperimentConfig;
use crate::runner::ResultRecord;

pub const CSV_HEADER: &str = "method,basis,d,J,y_max,I,M,M_test,seed_train,seed_test,\
lower_bound,mc_half_width_997,v0,t_train_s,t_eval_s,n_lsq_solves,n_basis_evals";

/// Formats with `n` significant digits, plain decimal notation.
pub fn sig(x: f64, n: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (n as i32 - 1 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn csv_row(r: &ResultRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.method,
        r.basis,
        r.d,
        r.epochs,
        r.y_max,
        r.depth,
        r.train_paths,
        r.test_paths,
        r.seed_train,
        r.seed_test,
        sig(r.lower_bound, 6),
        sig(r.half_width, 3),
        sig(r.v0, 6),
        sig(r.t_train_s, 6),
        sig(r.t_eval_s, 6),
        r.n_lsq_solves,
        r.n_basis_evals,
    )
}

pub fn to_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

pub fn to_json(cfg: &ExperimentConfig, records: &[ResultRecord]) -> Result<String> {
    let value = serde_json::json!({
        "config": cfg,
        "results": records,
    });
    serde_json::to_string_pretty(&value).context("serializing results")
}

/// Writes `<base>.csv` and `<base>.json`; returns the two paths.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    records: &[ResultRecord],
    base: &Path,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    if let Some(parent) = base.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .with_context(|| format!("creating output directory {}", parent.display()))?;
        }
    }
    let csv_path = base.with_extension("csv");
    let json_path = base.with_extension("json");
    fs::write(&csv_path, to_csv(records))
        .with_context(|| format!("writing {}", csv_path.display()))?;
    fs::write(&json_path, to_json(cfg, records)?)
        .with_context(|| format!("writing {}", json_path.display()))?;
    Ok((csv_path, json_path))
}
