//! Sweep execution.
//!
//! Every (grid point, trial) pair is one job. A job draws one channel
//! realization and runs every requested scheme on it, so schemes are always
//! compared on identical channels. The random stream of a job depends only
//! on the experiment seed and the trial index: trial `t` sees the same
//! draws at every grid point whose dimensions agree, which keeps curves
//! over the grid free of resampling noise. Jobs run on a rayon pool and are
//! reassembled in a fixed order, so the output does not depend on the
//! worker count.

use std::time::Duration;

use fdirs_core::channelgen::{generate_channels, RngSeed};
use fdirs_core::orchestrator::{run, RunResult};
use rayon::prelude::*;

use crate::config::{ExperimentKind, ExperimentSpec, GridPoint, SchemeSpec};
use crate::error::{HarnessError, Result};
use crate::records::SweepRecord;

/// Runs one scheme on the channel of (`point`, `trial`).
pub fn run_single(
    spec: &ExperimentSpec,
    point: &GridPoint,
    trial: usize,
    scheme: SchemeSpec,
) -> Result<RunResult> {
    let channels = generate_channels(
        &point.geometry,
        &point.cfg,
        &mut RngSeed::new(spec.seed, trial as u64).rng(),
    )?;
    Ok(run(
        &channels,
        &point.cfg,
        &spec.solver.run_options(scheme)?,
    )?)
}

fn run_job(
    spec: &ExperimentSpec,
    point: &GridPoint,
    trial: usize,
) -> Vec<std::result::Result<RunResult, String>> {
    let channels = generate_channels(
        &point.geometry,
        &point.cfg,
        &mut RngSeed::new(spec.seed, trial as u64).rng(),
    );
    spec.schemes
        .iter()
        .map(|&scheme| {
            let channels = channels
                .as_ref()
                .map_err(|e| format!("channel generation: {e}"))?;
            let opts = spec.solver.run_options(scheme).map_err(|e| e.to_string())?;
            run(channels, &point.cfg, &opts).map_err(|e| e.to_string())
        })
        .collect()
}

/// Runs the whole experiment on at most `jobs` worker threads (all cores
/// when `None`). Rows come out grid-major (series, then value), then by
/// scheme, then by trial. Solver failures become error rows.
pub fn run_experiment(spec: &ExperimentSpec, jobs: Option<usize>) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let grid = spec.grid()?;
    let trials = spec.trials();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))?;
    let work: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..trials).map(move |t| (p, t)))
        .collect();
    let results: Vec<_> = pool.install(|| {
        work.par_iter()
            .map(|&(p, t)| run_job(spec, &grid[p], t))
            .collect()
    });

    let mut records = Vec::new();
    for (p, point) in grid.iter().enumerate() {
        for (s, &scheme) in spec.schemes.iter().enumerate() {
            for trial in 0..trials {
                let outcome = &results[p * trials + trial][s];
                push_records(&mut records, spec.kind, point, scheme, trial, outcome);
            }
        }
    }
    Ok(records)
}

fn push_records(
    out: &mut Vec<SweepRecord>,
    kind: ExperimentKind,
    point: &GridPoint,
    scheme: SchemeSpec,
    trial: usize,
    outcome: &std::result::Result<RunResult, String>,
) {
    let base = SweepRecord {
        kind,
        series: point.series.clone(),
        coord: point.coord,
        scheme,
        trial,
        swsr: 0.0,
        dl_sum_rate: 0.0,
        ul_sum_rate: 0.0,
        iterations: 0,
        wall_time: Duration::ZERO,
        error: None,
    };
    let r = match outcome {
        Ok(r) => r,
        Err(e) => {
            out.push(SweepRecord {
                error: Some(e.clone()),
                ..base
            });
            return;
        }
    };
    let iterations = r.outer_iterations();
    if kind == ExperimentKind::Convergence {
        for (i, &swsr) in r.outer_trace.iter().enumerate() {
            out.push(SweepRecord {
                coord: i as f64,
                swsr,
                dl_sum_rate: r.dl_sum_trace[i],
                ul_sum_rate: r.ul_sum_trace[i],
                iterations,
                wall_time: r.wall_time,
                ..base.clone()
            });
        }
    } else {
        out.push(SweepRecord {
            swsr: r.swsr,
            dl_sum_rate: r.dl_sum_rate(),
            ul_sum_rate: r.ul_sum_rate(),
            iterations,
            wall_time: r.wall_time,
            ..base
        });
    }
}

/// Mean of the successful records of one (series, coordinate, scheme).
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub series: String,
    pub coord: f64,
    pub scheme: SchemeSpec,
    pub ok: usize,
    pub failed: usize,
    pub mean_swsr: f64,
    pub mean_dl: f64,
    pub mean_ul: f64,
    pub mean_iterations: f64,
}

/// Per-group means in first-appearance order; NaN for a group without a
/// successful run. Convergence rows are reduced to the last trace entry of
/// each run, keyed by iteration 0.
pub fn summarize(records: &[SweepRecord]) -> Vec<SummaryRow> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut sums: Vec<[f64; 4]> = Vec::new();
    let finals: Vec<&SweepRecord> = records
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            r.kind != ExperimentKind::Convergence
                || !r.is_ok()
                || records.get(i + 1).is_none_or(|n| n.coord == 0.0)
        })
        .map(|(_, r)| r)
        .collect();
    for r in finals {
        let coord = if r.kind == ExperimentKind::Convergence {
            0.0
        } else {
            r.coord
        };
        let idx = match rows
            .iter()
            .position(|x| x.series == r.series && x.coord == coord && x.scheme == r.scheme)
        {
            Some(i) => i,
            None => {
                rows.push(SummaryRow {
                    series: r.series.clone(),
                    coord,
                    scheme: r.scheme,
                    ok: 0,
                    failed: 0,
                    mean_swsr: 0.0,
                    mean_dl: 0.0,
                    mean_ul: 0.0,
                    mean_iterations: 0.0,
                });
                sums.push([0.0; 4]);
                rows.len() - 1
            }
        };
        if r.is_ok() {
            rows[idx].ok += 1;
            let s = &mut sums[idx];
            s[0] += r.swsr;
            s[1] += r.dl_sum_rate;
            s[2] += r.ul_sum_rate;
            s[3] += r.iterations as f64;
        } else {
            rows[idx].failed += 1;
        }
    }
    for (row, s) in rows.iter_mut().zip(&sums) {
        let n = if row.ok == 0 { f64::NAN } else { row.ok as f64 };
        row.mean_swsr = s[0] / n;
        row.mean_dl = s[1] / n;
        row.mean_ul = s[2] / n;
        row.mean_iterations = s[3] / n;
    }
    rows
}
