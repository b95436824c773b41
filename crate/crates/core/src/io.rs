//! File formats: CSV signals and tables, TOML configuration and reports.
//!
//! Configuration keys carry their unit as a suffix (`tau_h_min`, `bw_kg`, ...).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::estimation::FitReport;
use crate::fopdt::BodePoint;
use crate::host::HostParams;
use crate::metrics::{AccuracyReport, Quartiles};
use crate::params::PatientParams;
use crate::scenario::{BasalSegment, CarbIntake, HrInput, ScenarioSpec};
use crate::signal::{TimeSeries, Unit};
use crate::sim::EventKind;

pub const TIMESERIES_HEADER: [&str; 3] = ["time_min", "value", "unit"];
pub const QUARTILE_HEADER: [&str; 4] = ["time_min", "q25", "median", "q75"];
pub const BODE_HEADER: [&str; 3] = ["omega_rad_per_min", "mag_db", "phase_deg"];
pub const ACCURACY_HEADER: [&str; 3] = ["patient_id", "e_fit", "e_rms_mg_dl"];
pub const EVENT_HEADER: [&str; 2] = ["time_min", "event"];

fn csv_err(row: usize, e: impl std::fmt::Display) -> Error {
    Error::Parse {
        row,
        message: e.to_string(),
    }
}

fn create_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Reads a `time_min,value,unit` file.
///
/// Rows must be strictly increasing in time and share one unit. Irregularly
/// spaced rows are interpolated onto the most common spacing, with a warning.
/// Row numbers in errors count the header as row 1.
pub fn load_timeseries_csv(path: impl AsRef<Path>) -> Result<TimeSeries<f64>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let header = rdr.headers().map_err(|e| csv_err(1, e))?.clone();
    if header.iter().collect::<Vec<_>>() != TIMESERIES_HEADER {
        return Err(csv_err(
            1,
            format!("expected header `{}`", TIMESERIES_HEADER.join(",")),
        ));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut unit: Option<Unit> = None;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| csv_err(row, e))?;
        let num = |i: usize, what: &str| -> Result<f64> {
            let cell = rec
                .get(i)
                .ok_or_else(|| csv_err(row, format!("missing {what}")))?;
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(row, format!("non-numeric {what} `{cell}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(csv_err(row, format!("non-finite {what}")))
            }
        };
        let t = num(0, "time")?;
        let v = num(1, "value")?;
        let u: Unit = rec
            .get(2)
            .unwrap_or("")
            .parse()
            .map_err(|e: String| csv_err(row, e))?;
        match unit {
            None => unit = Some(u),
            Some(prev) if prev != u => {
                return Err(csv_err(row, format!("unit `{u}` differs from `{prev}`")));
            }
            _ => {}
        }
        if let Some(&last) = times.last() {
            if t == last {
                return Err(csv_err(row, format!("duplicate timestamp {t}")));
            }
            if t < last {
                return Err(csv_err(row, format!("non-monotone time: {t} after {last}")));
            }
        }
        times.push(t);
        values.push(v);
    }
    let unit = unit.ok_or_else(|| Error::EmptySignal(format!("{} has no rows", path.display())))?;
    if times.len() == 1 {
        return TimeSeries::new(times[0], 1.0, values, unit);
    }
    match exact_uniform_dt(&times) {
        Some(dt) => TimeSeries::new(times[0], dt, values, unit),
        None => {
            let dt = dominant_dt(&times);
            log::warn!(
                "{}: irregular sampling, resampling {} rows onto a {dt} min grid",
                path.display(),
                times.len()
            );
            TimeSeries::from_irregular(&times, &values, unit, dt)
        }
    }
}

/// Spacing `dt` with `t0 + i*dt == times[i]` for every row, preferring the
/// shortest decimal, or `None` if the rows are not uniform.
fn exact_uniform_dt(times: &[f64]) -> Option<f64> {
    let n = times.len();
    let t0 = times[0];
    let estimate = (times[n - 1] - t0) / (n - 1) as f64;
    let reproduces = |dt: f64| {
        times
            .iter()
            .enumerate()
            .all(|(i, &t)| t0 + i as f64 * dt == t)
    };
    for digits in 0..17 {
        let cand: f64 = format!("{estimate:.digits$e}").parse().ok()?;
        if reproduces(cand) {
            return Some(cand);
        }
    }
    let tol = 1e-9 * estimate.abs().max(1e-300);
    let uniform = times.iter().enumerate().all(|(i, &t)| {
        (t0 + i as f64 * estimate - t).abs() <= tol * (i as f64 + 1.0) + 1e-12 * t.abs()
    });
    uniform.then_some(estimate)
}

/// Most frequent spacing between consecutive rows (rounded to 1e-6 min).
fn dominant_dt(times: &[f64]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for w in times.windows(2) {
        *counts
            .entry(((w[1] - w[0]) * 1e6).round() as i64)
            .or_default() += 1;
    }
    let (&key, _) = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .expect("at least one spacing");
    key as f64 / 1e6
}

pub fn write_timeseries_csv(path: impl AsRef<Path>, series: &TimeSeries<f64>) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(TIMESERIES_HEADER)
        .map_err(|e| Error::Config(e.to_string()))?;
    for (t, v) in series.iter() {
        w.write_record([t.to_string(), v.to_string(), series.unit().to_string()])
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn write_rows(
    path: &Path,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    create_parent(path)?;
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    w.write_record(header)
        .map_err(|e| Error::Config(e.to_string()))?;
    for r in rows {
        w.write_record(&r)
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_csv(path: impl AsRef<Path>, events: &[(f64, EventKind)]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &EVENT_HEADER,
        events
            .iter()
            .map(|(t, k)| vec![t.to_string(), k.as_str().to_string()]),
    )
}

pub fn write_quartiles_csv(path: impl AsRef<Path>, q: &Quartiles<f64>) -> Result<()> {
    let rows = (0..q.median.len()).map(|i| {
        vec![
            q.median.time_at(i).to_string(),
            q.q25.values()[i].to_string(),
            q.median.values()[i].to_string(),
            q.q75.values()[i].to_string(),
        ]
    });
    write_rows(path.as_ref(), &QUARTILE_HEADER, rows)
}

pub fn write_bode_csv(path: impl AsRef<Path>, points: &[BodePoint<f64>]) -> Result<()> {
    write_rows(
        path.as_ref(),
        &BODE_HEADER,
        points.iter().map(|p| {
            vec![
                p.omega.to_string(),
                p.mag_db.to_string(),
                p.phase_deg.to_string(),
            ]
        }),
    )
}

/// Appends one row to an accuracy table, writing the header if the file is new.
pub fn append_accuracy_csv(
    path: impl AsRef<Path>,
    patient_id: &str,
    report: &AccuracyReport<f64>,
) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let fresh = !path.exists() || fs::metadata(path)?.len() == 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::Config(e.to_string());
    if fresh {
        w.write_record(ACCURACY_HEADER).map_err(io)?;
    }
    w.write_record([
        patient_id.to_string(),
        report.e_fit.to_string(),
        report.e_rms.to_string(),
    ])
    .map_err(io)?;
    w.flush()?;
    Ok(())
}

/// Flat TOML rendering of a fit: one key per parameter plus the diagnostics.
pub fn fit_report_toml(report: &FitReport<f64>) -> String {
    let mut t = toml::Table::new();
    t.insert(
        "parameters".into(),
        toml::Value::Array(
            report
                .names
                .iter()
                .cloned()
                .map(toml::Value::String)
                .collect(),
        ),
    );
    for (name, v) in report.names.iter().zip(&report.xi_hat) {
        t.insert(name.clone(), toml::Value::Float(*v));
    }
    t.insert("cost".into(), toml::Value::Float(report.cost));
    t.insert(
        "initial_cost".into(),
        toml::Value::Float(report.initial_cost),
    );
    t.insert(
        "iterations".into(),
        toml::Value::Integer(report.iterations as i64),
    );
    t.insert(
        "evaluations".into(),
        toml::Value::Integer(report.evaluations as i64),
    );
    t.insert("converged".into(), toml::Value::Boolean(report.converged));
    t.insert(
        "bounds_hit".into(),
        toml::Value::Array(
            report
                .bounds_hit
                .iter()
                .cloned()
                .map(toml::Value::String)
                .collect(),
        ),
    );
    t.to_string()
}

pub fn parse_fit_report(text: &str) -> Result<FitReport<f64>> {
    let t: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
    let get = |k: &str| {
        t.get(k)
            .ok_or_else(|| Error::Config(format!("missing key `{k}`")))
    };
    let float = |k: &str| -> Result<f64> {
        match get(k)? {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            _ => Err(Error::Config(format!("`{k}` is not a number"))),
        }
    };
    let strings = |k: &str| -> Result<Vec<String>> {
        get(k)?
            .as_array()
            .ok_or_else(|| Error::Config(format!("`{k}` is not an array")))?
            .iter()
            .map(|v| {
                v.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| Error::Config(format!("`{k}` holds a non-string")))
            })
            .collect()
    };
    let names = strings("parameters")?;
    let xi_hat = names.iter().map(|n| float(n)).collect::<Result<Vec<_>>>()?;
    Ok(FitReport {
        xi_hat,
        names,
        cost: float("cost")?,
        initial_cost: float("initial_cost")?,
        iterations: get("iterations")?.as_integer().unwrap_or(0) as usize,
        evaluations: get("evaluations")?.as_integer().unwrap_or(0) as usize,
        converged: get("converged")?.as_bool().unwrap_or(false),
        bounds_hit: strings("bounds_hit")?,
    })
}

fn read_toml<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

pub fn load_patient(path: impl AsRef<Path>) -> Result<PatientParams<f64>> {
    read_toml(path.as_ref())
}

pub fn load_host(path: impl AsRef<Path>) -> Result<HostParams<f64>> {
    read_toml(path.as_ref())
}

pub fn patient_toml(p: &PatientParams<f64>) -> String {
    toml::to_string(p).expect("plain numeric struct serializes")
}

pub fn host_toml(h: &HostParams<f64>) -> String {
    toml::to_string(h).expect("plain numeric struct serializes")
}

/// On-disk scenario layout. Exactly one of `hr_step_bpm` / `hr_series_csv` is set;
/// a relative series path is resolved against the scenario file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    duration_min: f64,
    exercise_start_min: f64,
    exercise_end_min: f64,
    hr_step_bpm: Option<f64>,
    hr_series_csv: Option<PathBuf>,
    meal_time_min: f64,
    meal_carbs_g: f64,
    bolus_time_min: f64,
    bolus_units: f64,
    #[serde(default = "default_fasting_bg")]
    fasting_bg_mg_dl: f64,
    #[serde(default)]
    basal_schedule: Vec<BasalSegment<f64>>,
    #[serde(default)]
    carb_intakes: Vec<CarbIntake<f64>>,
}

fn default_fasting_bg() -> f64 {
    125.0
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioSpec<f64>> {
    let path = path.as_ref();
    let f: ScenarioFile = read_toml(path)?;
    let hr_input = match (f.hr_step_bpm, f.hr_series_csv) {
        (Some(amplitude), None) => HrInput::Step { amplitude },
        (None, Some(csv)) => {
            let csv = if csv.is_relative() {
                path.parent().unwrap_or(Path::new(".")).join(csv)
            } else {
                csv
            };
            HrInput::Series(load_timeseries_csv(csv)?)
        }
        _ => {
            return Err(Error::Config(format!(
                "{}: set exactly one of `hr_step_bpm` and `hr_series_csv`",
                path.display()
            )))
        }
    };
    ScenarioSpec {
        duration: f.duration_min,
        exercise_start: f.exercise_start_min,
        exercise_end: f.exercise_end_min,
        hr_input,
        meal_time: f.meal_time_min,
        meal_grams: f.meal_carbs_g,
        bolus_time: f.bolus_time_min,
        bolus_units: f.bolus_units,
        basal_schedule: f.basal_schedule,
        carb_intakes: f.carb_intakes,
        fasting_bg: f.fasting_bg_mg_dl,
    }
    .validate()
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    create_parent(path)?;
    let mut f = fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}
