//! Files written for a run, and the readers that parse them back.
//!
//! Floats are written with Rust's shortest round-trip formatting, so parsing
//! a table reproduces the logged values bit for bit. Missing values are
//! empty fields.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::record::{parse_source, source_label, Diagnostics, Row, Summary};
use super::run::RunRecord;
use super::HarnessError;
use crate::control::{Active, IdentityCheck};

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const VOLTAGE_FIGURE: &str = "figure_voltage.csv";
pub const POWER_FIGURE: &str = "figure_power.csv";
pub const SWITCHING_FIGURE: &str = "figure_switching.csv";

fn io_err(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

fn indexed(prefix: &str, m: usize) -> impl Iterator<Item = String> + '_ {
    (1..=m).map(move |i| format!("{prefix}{i}"))
}

pub fn timeseries_header(m: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(indexed("v_o", m));
    h.extend(indexed("e", m));
    h.extend(["eL_norm", "eN_norm", "xi_L", "xi_N", "active"].map(String::from));
    h.extend(indexed("P", m));
    h.extend(indexed("Q", m));
    h
}

pub fn diagnostics_header() -> Vec<String> {
    [
        "k",
        "source",
        "identity",
        "identity_residual_v",
        "eta_L",
        "eta_N",
        "invariants_checked",
        "dead_zone_violations",
        "floor_violations",
        "sigma_min",
        "theta_L_norm",
        "theta_N_norm",
        "w_norm",
        "h_hat_norm",
    ]
    .map(String::from)
    .to_vec()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn active_label(a: Option<Active>) -> String {
    a.map(|a| a.label().to_string()).unwrap_or_default()
}

fn flag(b: Option<bool>) -> String {
    b.map(|b| u8::from(b).to_string()).unwrap_or_default()
}

fn timeseries_record(r: &Row, m: usize) -> Vec<String> {
    let mut out = vec![r.t.to_string()];
    out.extend(r.v.iter().map(f64::to_string));
    out.extend(r.e.iter().map(f64::to_string));
    out.extend([
        opt(r.el_norm),
        opt(r.en_norm),
        opt(r.xi_l),
        opt(r.xi_n),
        active_label(r.active),
    ]);
    for pq in [&r.p, &r.q] {
        match pq {
            Some(v) => out.extend(v.iter().map(f64::to_string)),
            None => out.extend(std::iter::repeat_n(String::new(), m)),
        }
    }
    out
}

fn diagnostics_record(r: &Row) -> Vec<String> {
    let d = &r.diag;
    let (kind, residual) = match d.identity {
        IdentityCheck::NotApplicable => ("", None),
        IdentityCheck::Exempt { residual_v } => ("exempt", Some(residual_v)),
        IdentityCheck::Checked { residual_v } => ("checked", Some(residual_v)),
    };
    vec![
        r.k.to_string(),
        d.source.map(source_label).unwrap_or("").to_string(),
        kind.to_string(),
        opt(residual),
        flag(d.eta_l),
        flag(d.eta_n),
        u8::from(d.invariants_checked).to_string(),
        d.dead_zone_violations.to_string(),
        d.floor_violations.to_string(),
        opt(d.sigma_min),
        opt(d.theta_l_norm),
        opt(d.theta_n_norm),
        opt(d.w_norm),
        opt(d.h_hat_norm),
    ]
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// The main time-series table.
pub fn write_timeseries(path: &Path, rows: &[Row], m: usize) -> Result<(), HarnessError> {
    write_table(
        path,
        &timeseries_header(m),
        rows.iter().map(|r| timeseries_record(r, m)),
    )
}

pub fn write_diagnostics(path: &Path, rows: &[Row]) -> Result<(), HarnessError> {
    write_table(path, &diagnostics_header(), rows.iter().map(diagnostics_record))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Plot-ready panels: voltages against their references, powers, and the
/// switching signal with both performance indices.
fn write_figures(dir: &Path, rec: &RunRecord, m: usize) -> Result<Vec<PathBuf>, HarnessError> {
    let v_ref = &rec.summary.context.v_ref_v;
    let mut header = vec!["t".to_string()];
    header.extend(indexed("v_o", m));
    header.extend(indexed("v_ref", m));
    let voltage = dir.join(VOLTAGE_FIGURE);
    write_table(
        &voltage,
        &header,
        rec.rows.iter().map(|r| {
            let mut o = vec![r.t.to_string()];
            o.extend(r.v.iter().map(f64::to_string));
            o.extend(v_ref.iter().map(f64::to_string));
            o
        }),
    )?;
    let mut files = vec![voltage];

    if rec.rows.first().is_none_or(|r| r.p.is_some()) {
        let mut header = vec!["t".to_string()];
        header.extend(indexed("P", m));
        header.extend(indexed("Q", m));
        let power = dir.join(POWER_FIGURE);
        write_table(
            &power,
            &header,
            rec.rows.iter().map(|r| {
                let mut o = vec![r.t.to_string()];
                for pq in [&r.p, &r.q] {
                    match pq {
                        Some(v) => o.extend(v.iter().map(f64::to_string)),
                        None => o.extend(std::iter::repeat_n(String::new(), m)),
                    }
                }
                o
            }),
        )?;
        files.push(power);
    }

    let switching = dir.join(SWITCHING_FIGURE);
    write_table(
        &switching,
        &["t", "switch", "xi_L", "xi_N"].map(String::from),
        rec.rows.iter().map(|r| {
            let s = match r.active {
                Some(Active::Linear) => "0".to_string(),
                Some(Active::Nonlinear) => "1".to_string(),
                None => String::new(),
            };
            vec![r.t.to_string(), s, opt(r.xi_l), opt(r.xi_n)]
        }),
    )?;
    files.push(switching);
    Ok(files)
}

#[derive(Debug, Serialize)]
struct SummaryDocument<'a> {
    summary: &'a Summary,
    calibration: &'a Option<super::run::Calibration>,
    failure: &'a Option<super::run::RunFailure>,
}

/// Writes every artifact of a run into `dir` and returns the paths.
pub fn emit_outputs(rec: &RunRecord, dir: &Path, figures: bool) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let m = rec.summary.context.channels;
    let ts = dir.join(TIMESERIES_FILE);
    write_timeseries(&ts, &rec.rows, m)?;
    let diag = dir.join(DIAGNOSTICS_FILE);
    write_diagnostics(&diag, &rec.rows)?;
    let summary = dir.join(SUMMARY_FILE);
    write_json(
        &summary,
        &SummaryDocument {
            summary: &rec.summary,
            calibration: &rec.calibration,
            failure: &rec.failure,
        },
    )?;
    let config = dir.join(CONFIG_FILE);
    fs::write(&config, rec.config.to_toml_string()).map_err(|e| io_err(&config, e))?;
    let mut files = vec![ts, diag, summary, config];
    if figures {
        files.extend(write_figures(dir, rec, m)?);
    }
    Ok(files)
}

fn parse_f64(s: &str, path: &Path) -> Result<f64, HarnessError> {
    s.parse().map_err(|_| io_err(path, format!("bad number {s:?}")))
}

fn parse_opt(s: &str, path: &Path) -> Result<Option<f64>, HarnessError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse_f64(s, path).map(Some)
    }
}

fn parse_flag(s: &str, path: &Path) -> Result<Option<bool>, HarnessError> {
    match s {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        _ => Err(io_err(path, format!("bad flag {s:?}"))),
    }
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<csv::StringRecord>), HarnessError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    let header = r
        .headers()
        .map_err(|e| io_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let recs = r
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| io_err(path, e))?;
    Ok((header, recs))
}

/// Parses a time-series table; diagnostics are left at their defaults.
pub fn read_timeseries(path: &Path) -> Result<Vec<Row>, HarnessError> {
    let (header, recs) = read_records(path)?;
    let m = (header.len() - 6) / 4;
    if header != timeseries_header(m) {
        return Err(io_err(path, "unexpected time-series header"));
    }
    recs.iter()
        .enumerate()
        .map(|(k, rec)| {
            let f = |i: usize| rec.get(i).unwrap_or("");
            let vec_at = |start: usize| -> Result<Vec<f64>, HarnessError> {
                (start..start + m).map(|i| parse_f64(f(i), path)).collect()
            };
            let pq_at = |start: usize| -> Result<Option<Vec<f64>>, HarnessError> {
                if f(start).is_empty() {
                    Ok(None)
                } else {
                    vec_at(start).map(Some)
                }
            };
            let a = 1 + 2 * m;
            let active = match f(a + 4) {
                "" => None,
                s => Some(Active::parse(s).ok_or_else(|| io_err(path, format!("bad active {s:?}")))?),
            };
            Ok(Row {
                k,
                t: parse_f64(f(0), path)?,
                v: vec_at(1)?,
                e: vec_at(1 + m)?,
                el_norm: parse_opt(f(a), path)?,
                en_norm: parse_opt(f(a + 1), path)?,
                xi_l: parse_opt(f(a + 2), path)?,
                xi_n: parse_opt(f(a + 3), path)?,
                active,
                p: pq_at(a + 5)?,
                q: pq_at(a + 5 + m)?,
                diag: Diagnostics::default(),
            })
        })
        .collect()
}

/// Fills the diagnostics of `rows` from a diagnostics table.
pub fn read_diagnostics(path: &Path, rows: &mut [Row]) -> Result<(), HarnessError> {
    let (header, recs) = read_records(path)?;
    if header != diagnostics_header() || recs.len() != rows.len() {
        return Err(io_err(path, "diagnostics do not match the time series"));
    }
    for (rec, row) in recs.iter().zip(rows.iter_mut()) {
        let f = |i: usize| rec.get(i).unwrap_or("");
        let residual = parse_opt(f(3), path)?;
        let identity = match (f(2), residual) {
            ("", _) => IdentityCheck::NotApplicable,
            ("exempt", Some(r)) => IdentityCheck::Exempt { residual_v: r },
            ("checked", Some(r)) => IdentityCheck::Checked { residual_v: r },
            (s, _) => return Err(io_err(path, format!("bad identity {s:?}"))),
        };
        let count = |s: &str| {
            s.parse::<u32>()
                .map_err(|_| io_err(path, format!("bad count {s:?}")))
        };
        row.diag = Diagnostics {
            source: match f(1) {
                "" => None,
                s => Some(parse_source(s).ok_or_else(|| io_err(path, format!("bad source {s:?}")))?),
            },
            identity,
            eta_l: parse_flag(f(4), path)?,
            eta_n: parse_flag(f(5), path)?,
            invariants_checked: parse_flag(f(6), path)?.unwrap_or(false),
            dead_zone_violations: count(f(7))?,
            floor_violations: count(f(8))?,
            sigma_min: parse_opt(f(9), path)?,
            theta_l_norm: parse_opt(f(10), path)?,
            theta_n_norm: parse_opt(f(11), path)?,
            w_norm: parse_opt(f(12), path)?,
            h_hat_norm: parse_opt(f(13), path)?,
        };
    }
    Ok(())
}

/// Reads back the rows and the stored summary of an output directory.
pub fn read_run(dir: &Path) -> Result<(Vec<Row>, Summary), HarnessError> {
    let mut rows = read_timeseries(&dir.join(TIMESERIES_FILE))?;
    read_diagnostics(&dir.join(DIAGNOSTICS_FILE), &mut rows)?;
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let doc: serde_json::Value = serde_json::from_str(&text).map_err(|e| io_err(&path, e))?;
    let summary = serde_json::from_value(doc["summary"].clone()).map_err(|e| io_err(&path, e))?;
    Ok((rows, summary))
}
