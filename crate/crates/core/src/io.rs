//! CSV and JSON file formats.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so reruns
//! produce byte-identical files. JSON documents carry `schema_version`.

use std::fmt::Write as _;

use serde_json::{json, Map, Number, Value};

use crate::calibrate::{CalibrationProblem, CalibrationRun, CalibrationResult, PARAM_NAMES};
use crate::chain::DerivativeChain;
use crate::discriminate::{Approach1, Approach2, ClosenessReport, Thresholds};
use crate::error::{Error, Result};
use crate::models::{ModelDef, PartialCombos};
use crate::ode::Trajectory;
use crate::reconstruct::{ReconstructionResult, ThetaHat};

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_HEADER: &str = "t,S_sir,I_sir,S_sirs,I_sirs,gap,bound";
/// Objective below which a calibration run counts as an exact fit.
pub const FIT_THRESHOLD: f64 = 1e-8;

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON number with the same 17-digit text as the CSV files; non-finite
/// values become `null`.
pub fn json_f64(x: f64) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    serde_json::from_str::<Number>(&fmt_f64(x))
        .map(Value::Number)
        .unwrap_or(Value::Null)
}

pub fn json_vec(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| json_f64(x)).collect())
}

fn write_row(out: &mut String, values: &[f64]) {
    let cells: Vec<String> = values.iter().map(|&v| fmt_f64(v)).collect();
    out.push_str(&cells.join(","));
    out.push('\n');
}

/// Header plus numeric rows of a CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }
}

/// Parses a CSV with a header line and numeric cells. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_table(text: &str) -> Result<Table> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (_, head) = lines
        .next()
        .ok_or_else(|| Error::Parse("empty CSV file".into()))?;
    let header: Vec<String> = head.split(',').map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Parse(format!(
                "line {lineno}: {} cells, header has {}",
                cells.len(),
                header.len()
            )));
        }
        let row = cells
            .iter()
            .map(|c| {
                c.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {lineno}: bad number '{}'", c.trim())))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

/// `t,<state names>` with one row per grid point.
pub fn trajectory_csv(model: &dyn ModelDef<f64>, traj: &Trajectory<f64>) -> String {
    let mut out = format!("t,{}\n", model.state_names().join(","));
    for (t, x) in traj.times.iter().zip(&traj.states) {
        let mut row = vec![*t];
        row.extend(x.iter().copied());
        write_row(&mut out, &row);
    }
    out
}

/// Outputs sampled at `times`: `t,y` or `t,y1,y2`.
pub fn observations_csv(names: &[&str], times: &[f64], outputs: &[Vec<f64>]) -> String {
    let mut out = format!("t,{}\n", names.join(","));
    for (t, y) in times.iter().zip(outputs) {
        let mut row = vec![*t];
        row.extend(y.iter().copied());
        write_row(&mut out, &row);
    }
    out
}

fn derivative_column(name: &str, k: usize) -> String {
    if k == 0 {
        name.to_string()
    } else {
        format!("{name}_d{k}")
    }
}

/// Outputs with their derivatives: `t,y,y_d1,...` per channel.
pub fn chain_csv(names: &[&str], chain: &DerivativeChain<f64>) -> String {
    let mut header = vec!["t".to_string()];
    for name in names.iter().take(chain.channels()) {
        header.extend((0..=chain.order).map(|k| derivative_column(name, k)));
    }
    let mut out = header.join(",");
    out.push('\n');
    for (i, t) in chain.times.iter().enumerate() {
        let mut row = vec![*t];
        for ch in &chain.values {
            row.extend(ch[i].iter().copied());
        }
        write_row(&mut out, &row);
    }
    out
}

fn split_column(name: &str) -> (&str, usize) {
    if let Some((base, k)) = name.rsplit_once("_d") {
        if let Ok(k) = k.parse::<usize>() {
            return (base, k);
        }
    }
    (name, 0)
}

/// Reads a file written by [`chain_csv`] or [`observations_csv`]; the
/// latter gives a chain of order zero.
pub fn parse_chain(text: &str) -> Result<(Vec<String>, DerivativeChain<f64>)> {
    let table = parse_table(text)?;
    if table.header.first().map(String::as_str) != Some("t") {
        return Err(Error::Parse("first column must be 't'".into()));
    }
    let mut names: Vec<String> = Vec::new();
    let mut columns: Vec<Vec<usize>> = Vec::new();
    for (j, col) in table.header.iter().enumerate().skip(1) {
        let (base, k) = split_column(col);
        let c = match names.iter().position(|n| n == base) {
            Some(c) => c,
            None => {
                names.push(base.to_string());
                columns.push(Vec::new());
                names.len() - 1
            }
        };
        if columns[c].len() != k {
            return Err(Error::Parse(format!(
                "column '{col}' out of order: expected derivative {} of '{base}'",
                columns[c].len()
            )));
        }
        columns[c].push(j);
    }
    if names.is_empty() {
        return Err(Error::Parse("no output columns".into()));
    }
    let order = columns[0].len() - 1;
    if columns.iter().any(|c| c.len() - 1 != order) {
        return Err(Error::Parse("channels carry different derivative orders".into()));
    }
    let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
    let values = columns
        .iter()
        .map(|cols| {
            table
                .rows
                .iter()
                .map(|r| cols.iter().map(|&j| r[j]).collect())
                .collect()
        })
        .collect();
    let n = times.len();
    Ok((
        names,
        DerivativeChain {
            times,
            order,
            values,
            boundary: vec![false; n],
        },
    ))
}

/// Checks that `times` form a uniform grid and returns its step.
pub fn uniform_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: times.len(),
        });
    }
    let h = times[1] - times[0];
    if !(h > 0.0) {
        return Err(Error::InvalidGrid("times must increase".into()));
    }
    for (i, w) in times.windows(2).enumerate() {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0) {
            return Err(Error::InvalidGrid(format!(
                "non-uniform spacing at row {}",
                i + 2
            )));
        }
    }
    Ok(h)
}

/// Samples spaced a whole day or more apart.
pub fn is_daily(times: &[f64]) -> bool {
    uniform_step(times).map(|h| h >= 1.0 - 1e-9).unwrap_or(false)
}

fn combos_json(c: &PartialCombos<f64>) -> Value {
    json!({
        "gamma": json_f64(c.gamma),
        "beta_over_k": json_f64(c.beta_over_k),
        "beta_S0": json_f64(c.beta_s0),
        "k_I0": json_f64(c.k_i0),
    })
}

fn named(names: &[&str], values: &[f64]) -> Value {
    let mut m = Map::new();
    for (n, &v) in names.iter().zip(values) {
        m.insert((*n).to_string(), json_f64(v));
    }
    Value::Object(m)
}

pub fn reconstruction_json(
    model: &dyn ModelDef<f64>,
    result: &ReconstructionResult<f64>,
    timing: bool,
) -> Value {
    let blocks: Vec<Value> = result
        .blocks
        .iter()
        .map(|b| {
            json!({
                "block": b.block,
                "sigma": json_vec(&b.sigma),
                "times": json_vec(&b.times),
                "det": json_f64(b.det),
                "cond": json_f64(b.cond),
                "residual": json_f64(b.residual),
            })
        })
        .collect();
    let (theta, combos) = match &result.theta_hat {
        ThetaHat::Full(p) => (named(model.param_names(), p), Value::Null),
        ThetaHat::Partial(c) => (Value::Null, combos_json(c)),
    };
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "reconstruction",
        "model": result.model_id.as_str(),
        "method": result.method.as_str(),
        "regime": result.regime(),
        "t_tilde": json_f64(result.t_tilde),
        "blocks": blocks,
        "theta_hat": theta,
        "partial_combos": combos,
        "theta_in_box": result.theta_in_box,
        "x0_hat": json_vec(&result.x0_hat),
        "x0_coordinates": result.x0_coordinates,
        "trusted": result.trusted,
        "max_cond": json_f64(result.max_cond()),
    });
    if timing {
        doc["elapsed_seconds"] = json_f64(result.elapsed_seconds);
    }
    doc
}

/// Verdict document for either or both approaches. The top-level
/// `verdict` is the common answer, or `"Disagree"`.
pub fn verdict_json(
    window: (f64, f64),
    thresholds: &Thresholds<f64>,
    a1: Option<&Approach1<f64>>,
    a2: Option<&Approach2<f64>>,
) -> Value {
    let v1 = a1.map(|a| {
        json!({
            "verdict": a.verdict,
            "nearest": a.nearest,
            "sigma": json_vec(&a.sigma),
            "sirs_residual": json_f64(a.sirs_residual),
            "sir_fit_residual": json_f64(a.sir_fit_residual),
            "times": json_vec(&a.times),
        })
    });
    let v2 = a2.map(|a| {
        json!({
            "verdict": a.verdict,
            "dependence_residual": json_f64(a.dependence_residual),
            "samples": a.samples,
        })
    });
    let verdict = match (a1, a2) {
        (Some(a), Some(b)) if a.verdict == b.verdict => a.verdict.as_str(),
        (Some(_), Some(_)) => "Disagree",
        (Some(a), None) => a.verdict.as_str(),
        (None, Some(b)) => b.verdict.as_str(),
        (None, None) => "None",
    };
    json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "discrimination",
        "verdict": verdict,
        "window": json_vec(&[window.0, window.1]),
        "thresholds": {
            "tol_sir": json_f64(thresholds.tol_sir),
            "dep_tol": json_f64(thresholds.dep_tol),
        },
        "approach1": v1,
        "approach2": v2,
    })
}

/// One row per successful start, best objective first.
pub fn calibration_csv(problem: &CalibrationProblem, run: &CalibrationRun, timing: bool) -> String {
    let mut header: Vec<String> = vec!["index".into()];
    header.extend(PARAM_NAMES.iter().map(|n| format!("start_{n}")));
    if problem.truth.is_some() {
        header.extend(PARAM_NAMES.iter().map(|n| format!("abs_err_{n}")));
    }
    header.push("objective".into());
    if timing {
        header.push("elapsed_seconds".into());
    }
    header.extend(PARAM_NAMES.iter().map(|n| n.to_string()));
    header.extend(["combo_gamma", "combo_beta_over_k", "combo_beta_S0"].map(String::from));
    header.extend(["iterations", "converged", "stop"].map(String::from));
    let mut out = header.join(",");
    out.push('\n');
    for r in &run.results {
        let mut cells = vec![r.index.to_string()];
        cells.extend(r.start_point.iter().map(|&v| fmt_f64(v)));
        if let Some(err) = r.abs_error {
            cells.extend(err.iter().map(|&v| fmt_f64(v)));
        }
        cells.push(fmt_f64(r.objective));
        if timing {
            cells.push(fmt_f64(r.elapsed_seconds));
        }
        cells.extend(r.theta_hat.iter().map(|&v| fmt_f64(v)));
        cells.extend(r.combos.iter().map(|&v| fmt_f64(v)));
        cells.push(r.iterations.to_string());
        cells.push(r.converged.to_string());
        cells.push(r.stop.as_str().to_string());
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Min, median and max of each combination over `runs`.
pub fn combo_stats(runs: &[&CalibrationResult]) -> Value {
    let names = ["gamma", "beta_over_k", "beta_S0"];
    let mut m = Map::new();
    for (c, name) in names.iter().enumerate() {
        let mut v: Vec<f64> = runs.iter().map(|r| r.combos[c]).collect();
        if v.is_empty() {
            m.insert((*name).into(), Value::Null);
            continue;
        }
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        m.insert(
            (*name).into(),
            json!({"min": json_f64(v[0]), "median": json_f64(median), "max": json_f64(v[n - 1])}),
        );
    }
    Value::Object(m)
}

pub fn calibration_summary_json(
    problem: &CalibrationProblem,
    run: &CalibrationRun,
    timing: bool,
) -> Value {
    let converged: Vec<&CalibrationResult> = run.results.iter().filter(|r| r.converged).collect();
    let fits: Vec<&CalibrationResult> = run
        .results
        .iter()
        .filter(|r| r.objective < FIT_THRESHOLD)
        .collect();
    let failed: Vec<Value> = run
        .failed_starts
        .iter()
        .map(|(i, e)| json!({"index": i, "kind": e.kind(), "message": e.to_string()}))
        .collect();
    let best = &run.results[0];
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "kind": "calibration",
        "model": problem.model_id.as_str(),
        "starts": problem.starts,
        "seed": problem.seed,
        "amplification": json_f64(problem.amplification),
        "h": json_f64(problem.h),
        "succeeded": run.results.len(),
        "converged": converged.len(),
        "failed": failed,
        "best": {
            "index": best.index,
            "objective": json_f64(best.objective),
            "theta_hat": named(&PARAM_NAMES, &best.theta_hat),
            "combos": json_vec(&best.combos),
        },
        "combo_stats_converged": combo_stats(&converged),
        "fit_threshold": json_f64(FIT_THRESHOLD),
        "fits": fits.len(),
        "combo_stats_fits": combo_stats(&fits),
    });
    if timing {
        let total: f64 = run.results.iter().map(|r| r.elapsed_seconds).sum();
        doc["elapsed_seconds_sum"] = json_f64(total);
    }
    doc
}

pub fn report_csv(report: &ClosenessReport<f64>) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for i in 0..report.times.len() {
        write_row(
            &mut out,
            &[
                report.times[i],
                report.sir[i][0],
                report.sir[i][1],
                report.sirs[i][0],
                report.sirs[i][1],
                report.gap[i],
                report.bound[i],
            ],
        );
    }
    out
}

pub fn to_json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_keep_seventeen_digits() {
        let v = json!({"x": json_f64(0.1), "n": json_f64(f64::NAN)});
        let s = serde_json::to_string(&v).unwrap();
        assert_eq!(s, r#"{"n":null,"x":1.0000000000000001e-1}"#);
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn chain_roundtrip() {
        let chain = DerivativeChain {
            times: vec![0.0, 0.5],
            order: 2,
            values: vec![vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]],
            boundary: vec![false; 2],
        };
        let text = chain_csv(&["y"], &chain);
        assert!(text.starts_with("t,y,y_d1,y_d2\n"));
        let (names, back) = parse_chain(&text).unwrap();
        assert_eq!(names, vec!["y"]);
        assert_eq!(back, chain);
    }

    #[test]
    fn observations_parse_as_order_zero() {
        let text = observations_csv(&["y1", "y2"], &[0.0, 1.0], &[vec![0.1, 0.2], vec![0.3, 0.4]]);
        let (names, chain) = parse_chain(&text).unwrap();
        assert_eq!(names, vec!["y1", "y2"]);
        assert_eq!(chain.order, 0);
        assert_eq!(chain.series(1, 0), vec![0.2, 0.4]);
        assert!(is_daily(&chain.times));
    }

    #[test]
    fn misordered_derivative_columns_rejected() {
        assert!(parse_chain("t,y_d1,y\n0,1,2\n").is_err());
        assert!(parse_chain("t,y\n0,abc\n").is_err());
        assert!(parse_chain("t,y\n0,1,2\n").is_err());
    }

    #[test]
    fn non_uniform_grid_detected() {
        assert!(uniform_step(&[0.0, 1.0, 2.5]).is_err());
        assert_eq!(uniform_step(&[0.0, 0.25, 0.5]).unwrap(), 0.25);
    }
}
