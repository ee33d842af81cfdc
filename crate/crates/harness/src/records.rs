//! Result rows and their CSV form.
//!
//! Column order, fixed for every kind:
//!
//! ```text
//! kind,series,<coord>,scheme,duplex,trial,swsr,dl_sum_rate,ul_sum_rate,iterations,status
//! ```
//!
//! `<coord>` is named after the swept quantity (see
//! [`ExperimentKind::coordinate_name`]). Floats carry 9 significant digits.
//! `status` is `ok` or `error: <message>`; the numeric columns of an
//! errored row are empty. Wall-clock times live in a `.timing.csv` sidecar
//! so that the record file itself is reproducible byte for byte.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use fdirs_core::orchestrator::Duplex;

use crate::config::{ExperimentKind, SchemeSpec};
use crate::error::{HarnessError, Result};

/// One output row.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub kind: ExperimentKind,
    pub series: String,
    pub coord: f64,
    pub scheme: SchemeSpec,
    pub trial: usize,
    pub swsr: f64,
    pub dl_sum_rate: f64,
    pub ul_sum_rate: f64,
    /// Outer iterations of the run.
    pub iterations: usize,
    pub wall_time: Duration,
    /// Set when the run failed; the numeric fields are then meaningless.
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn header(kind: ExperimentKind) -> [&'static str; 11] {
    [
        "kind",
        "series",
        kind.coordinate_name(),
        "scheme",
        "duplex",
        "trial",
        "swsr",
        "dl_sum_rate",
        "ul_sum_rate",
        "iterations",
        "status",
    ]
}

/// Nine significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.8e}")
}

fn duplex_tag(d: Duplex) -> &'static str {
    match d {
        Duplex::Full => "fd",
        Duplex::Half => "hd",
    }
}

/// Serializes `records` to CSV bytes.
pub fn records_to_csv(kind: ExperimentKind, records: &[SweepRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Config(format!("CSV encoding failed: {e}"));
    w.write_record(header(kind)).map_err(csv_err)?;
    for r in records {
        if r.kind != kind {
            return Err(HarnessError::Config(format!(
                "record of kind {} in a {kind} file",
                r.kind
            )));
        }
        let (nums, status) = match &r.error {
            None => (
                [
                    format_float(r.swsr),
                    format_float(r.dl_sum_rate),
                    format_float(r.ul_sum_rate),
                    r.iterations.to_string(),
                ],
                "ok".to_string(),
            ),
            Some(e) => (
                Default::default(),
                format!("error: {}", e.replace(['\n', '\r'], " ")),
            ),
        };
        w.write_record([
            kind.name(),
            &r.series,
            &format_float(r.coord),
            &r.scheme.scheme.number().to_string(),
            duplex_tag(r.scheme.duplex),
            &r.trial.to_string(),
            &nums[0],
            &nums[1],
            &nums[2],
            &nums[3],
            &status,
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| HarnessError::Config(format!("CSV encoding failed: {e}")))
}

/// Writes `bytes` to `path` through a temporary file in the same
/// directory, so `path` is either absent or complete.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes)
        .map_err(|e| HarnessError::io(path, e))?;
    tmp.as_file()
        .sync_all()
        .map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

/// Writes the record CSV atomically.
pub fn write_records(kind: ExperimentKind, records: &[SweepRecord], path: &Path) -> Result<()> {
    write_atomic(path, &records_to_csv(kind, records)?)
}

/// `results/x.csv` → `results/x.timing.csv`.
pub fn timing_path(path: &Path) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.timing.csv"))
}

/// Writes `series,<coord>,scheme,duplex,trial,wall_time_s`, one row per
/// run.
pub fn write_timing(kind: ExperimentKind, records: &[SweepRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| HarnessError::Config(format!("CSV encoding failed: {e}"));
    w.write_record([
        "series",
        kind.coordinate_name(),
        "scheme",
        "duplex",
        "trial",
        "wall_time_s",
    ])
    .map_err(csv_err)?;
    let mut last = None;
    for r in records {
        let key = (&r.series, r.coord.to_bits(), r.scheme, r.trial);
        if kind == ExperimentKind::Convergence && last == Some(key) {
            continue;
        }
        last = Some(key);
        w.write_record([
            &r.series,
            &format_float(r.coord),
            &r.scheme.scheme.number().to_string(),
            duplex_tag(r.scheme.duplex),
            &r.trial.to_string(),
            &format_float(r.wall_time.as_secs_f64()),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| HarnessError::Config(format!("CSV encoding failed: {e}")))?;
    write_atomic(path, &bytes)
}

/// Parses a record CSV back. Wall times are not stored and read as zero.
pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    let bad = |message: String| HarnessError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rd = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let head = rd.headers().map_err(|e| bad(e.to_string()))?.clone();
    let kind = ExperimentKind::ALL
        .into_iter()
        .find(|k| head.iter().eq(header(*k)))
        .ok_or_else(|| bad(format!("unrecognized header {head:?}")))?;
    let mut out = Vec::new();
    for (line, row) in rd.records().enumerate() {
        let row = row.map_err(|e| bad(e.to_string()))?;
        let at = |what: &str| bad(format!("row {}: bad {what}", line + 1));
        let float = |i: usize, what: &str| row[i].parse::<f64>().map_err(|_| at(what));
        let duplex = match &row[4] {
            "fd" => Duplex::Full,
            "hd" => Duplex::Half,
            _ => return Err(at("duplex")),
        };
        let scheme: SchemeSpec = format!("{}-{}", &row[3], &row[4])
            .parse()
            .map_err(|_| at("scheme"))?;
        debug_assert_eq!(scheme.duplex, duplex);
        let status = &row[10];
        let error = match status {
            "ok" => None,
            s => Some(
                s.strip_prefix("error: ")
                    .ok_or_else(|| at("status"))?
                    .to_string(),
            ),
        };
        let ok = error.is_none();
        out.push(SweepRecord {
            kind,
            series: row[1].to_string(),
            coord: float(2, "coordinate")?,
            scheme,
            trial: row[5].parse().map_err(|_| at("trial"))?,
            swsr: if ok { float(6, "swsr")? } else { f64::NAN },
            dl_sum_rate: if ok {
                float(7, "dl_sum_rate")?
            } else {
                f64::NAN
            },
            ul_sum_rate: if ok {
                float(8, "ul_sum_rate")?
            } else {
                f64::NAN
            },
            iterations: if ok {
                row[9].parse().map_err(|_| at("iterations"))?
            } else {
                0
            },
            wall_time: Duration::ZERO,
            error,
        });
    }
    Ok(out)
}
