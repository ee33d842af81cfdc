//! Outer alternating optimization and the benchmark schemes.
//!
//! * [`Scheme::Joint`] alternates phase ascent and the WMMSE solver.
//! * [`Scheme::FixedPhases`] runs the WMMSE solver at fixed phases.
//! * [`Scheme::NoIrs`] runs the WMMSE solver with every IRS link removed.
//! * [`Scheme::MrtMrc`] fixes MRT/MRC transceivers at full power and
//!   optimizes the phases only.
//!
//! Half-duplex baselines split the frame into a DL slot and a UL slot of
//! equal length, each with the full power budget and no self-interference.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channelgen::RngSeed;
use crate::model::{
    compose_effective_channels, rates, ChannelSet, EffectiveChannels, OpCounters, PhaseVector,
    SolverState, SystemConfig,
};
use crate::phaseopt::{optimize_phases, AscentOptions};
use crate::wmmse::{initial_state, run_algorithm1, Algorithm1Options};
use crate::{CVector, Error, Result, C64};

/// Optimization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Joint transceiver and phase optimization.
    Joint,
    /// Transceivers optimized, phases fixed.
    FixedPhases,
    /// Transceivers optimized without any IRS.
    NoIrs,
    /// MRT/MRC at full power, phases optimized.
    MrtMrc,
}

impl Scheme {
    /// Numeric label 1 to 4.
    pub fn number(self) -> u8 {
        match self {
            Scheme::Joint => 1,
            Scheme::FixedPhases => 2,
            Scheme::NoIrs => 3,
            Scheme::MrtMrc => 4,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Scheme::Joint),
            2 => Some(Scheme::FixedPhases),
            3 => Some(Scheme::NoIrs),
            4 => Some(Scheme::MrtMrc),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Duplex {
    Full,
    Half,
}

/// Phases used as the fixed point of [`Scheme::FixedPhases`] and as the
/// starting point of the other schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseInit {
    Zero,
    /// Uniform in `[0, 2π)` from the given seed.
    Random(u64),
}

impl PhaseInit {
    pub fn phases(self, m: usize) -> PhaseVector {
        match self {
            PhaseInit::Zero => PhaseVector::zeros(m),
            PhaseInit::Random(seed) => {
                let mut rng = RngSeed::new(seed, 0).rng();
                PhaseVector::new((0..m).map(|_| std::f64::consts::TAU * rng.random::<f64>()))
            }
        }
    }
}

/// Convergence controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// WMMSE stopping threshold on the SWSR change.
    pub eps1: f64,
    /// Phase-ascent stopping threshold on the gradient norm.
    pub eps2: f64,
    /// Outer stopping threshold on the SWSR change.
    pub eps3: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_ascent: usize,
    pub bisection_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            eps1: 1e-3,
            eps2: 1e-4,
            eps3: 1e-3,
            max_outer: 100,
            max_inner: 200,
            max_ascent: 500,
            bisection_tol: 1e-14,
        }
    }
}

impl Tolerances {
    fn inner(&self) -> Algorithm1Options {
        Algorithm1Options {
            eps1: self.eps1,
            max_iter: self.max_inner,
            bisection_tol: self.bisection_tol,
            trace_blocks: false,
        }
    }

    fn ascent(&self) -> AscentOptions {
        AscentOptions {
            eps2: self.eps2,
            max_iter: self.max_ascent,
            ..AscentOptions::default()
        }
    }
}

/// Everything needed to run one optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub scheme: Scheme,
    pub duplex: Duplex,
    pub tolerances: Tolerances,
    pub phase_init: PhaseInit,
}

impl RunOptions {
    pub fn new(scheme: Scheme, duplex: Duplex) -> Self {
        RunOptions {
            scheme,
            duplex,
            tolerances: Tolerances::default(),
            phase_init: PhaseInit::Zero,
        }
    }
}

/// Final transceivers and phases of a full-duplex run.
#[derive(Debug, Clone)]
pub struct Solution {
    pub state: SolverState,
    pub phases: PhaseVector,
}

/// Outcome of one optimization.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub swsr: f64,
    /// Per-user rates (already halved for half duplex).
    pub dl_rates: Vec<f64>,
    pub ul_rates: Vec<f64>,
    /// SWSR after every outer iteration, starting with the initial point.
    pub outer_trace: Vec<f64>,
    /// DL and UL sum rates alongside `outer_trace`.
    pub dl_sum_trace: Vec<f64>,
    pub ul_sum_trace: Vec<f64>,
    /// WMMSE iteration counts, one per solver call.
    pub inner_iterations: Vec<usize>,
    /// Phase-ascent iteration counts, one per ascent call.
    pub ascent_iterations: Vec<usize>,
    /// True when the outer loop met its threshold.
    pub converged: bool,
    pub wall_time: Duration,
    pub counters: OpCounters,
    /// DL-slot and UL-slot solutions for half duplex, a single one for
    /// full duplex.
    pub solutions: Vec<Solution>,
}

impl RunResult {
    pub fn outer_iterations(&self) -> usize {
        self.outer_trace.len().saturating_sub(1)
    }

    pub fn dl_sum_rate(&self) -> f64 {
        self.dl_rates.iter().sum()
    }

    pub fn ul_sum_rate(&self) -> f64 {
        self.ul_rates.iter().sum()
    }
}

/// Runs the configured scheme in the configured duplex mode.
pub fn run(channels: &ChannelSet, cfg: &SystemConfig, opts: &RunOptions) -> Result<RunResult> {
    match opts.duplex {
        Duplex::Full => run_algorithm2(channels, cfg, opts),
        Duplex::Half => run_half_duplex(channels, cfg, opts),
    }
}

struct Tracker {
    trace: Vec<f64>,
    dl_trace: Vec<f64>,
    ul_trace: Vec<f64>,
    inner: Vec<usize>,
    ascent: Vec<usize>,
    counters: OpCounters,
}

impl Tracker {
    fn new() -> Self {
        Tracker {
            trace: Vec::new(),
            dl_trace: Vec::new(),
            ul_trace: Vec::new(),
            inner: Vec::new(),
            ascent: Vec::new(),
            counters: OpCounters::default(),
        }
    }

    /// Appends the SWSR and sum rates of `state` to the traces.
    fn record(
        &mut self,
        state: &SolverState,
        eff: &EffectiveChannels,
        cfg: &SystemConfig,
    ) -> Result<f64> {
        let r = rates(state, eff, cfg)?;
        let value = r.weighted_sum(cfg);
        self.trace.push(value);
        self.dl_trace.push(r.dl_sum());
        self.ul_trace.push(r.ul_sum());
        Ok(value)
    }
}

/// Full-duplex optimization.
///
/// For [`Scheme::Joint`] the WMMSE solver first runs at the initial phases;
/// each outer iteration then ascends the phases for the current
/// transceivers and re-runs the WMMSE solver from there, until the SWSR
/// changes by less than `eps3`. Both blocks are monotone in the SWSR, so
/// the outer trace is non-decreasing and the result is never below
/// [`Scheme::FixedPhases`] at the same initial phases.
pub fn run_algorithm2(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    opts: &RunOptions,
) -> Result<RunResult> {
    let start = Instant::now();
    cfg.validate()?;
    channels.check(cfg)?;
    let tol = &opts.tolerances;
    let channels_owned;
    let channels = if opts.scheme == Scheme::NoIrs {
        channels_owned = channels.without_irs();
        &channels_owned
    } else {
        channels
    };
    let mut tracker = Tracker::new();
    let phases0 = opts.phase_init.phases(channels.total_irs_elements());
    let (state, phases, converged) = match opts.scheme {
        Scheme::Joint => joint(channels, cfg, tol, phases0, &mut tracker)?,
        Scheme::FixedPhases | Scheme::NoIrs => {
            let eff = compose_effective_channels(channels, &phases0)?;
            let rep = run_algorithm1(&initial_state(&eff, cfg)?, &eff, cfg, &tol.inner())?;
            tracker.inner.push(rep.iterations);
            tracker.counters.merge(&rep.counters);
            tracker.record(&rep.state, &eff, cfg)?;
            (rep.state, phases0, rep.converged)
        }
        Scheme::MrtMrc => mrt_mrc(channels, cfg, tol, phases0, &mut tracker)?,
    };
    let eff = compose_effective_channels(channels, &phases)?;
    let r = rates(&state, &eff, cfg)?;
    Ok(RunResult {
        swsr: r.weighted_sum(cfg),
        dl_rates: r.dl,
        ul_rates: r.ul,
        outer_trace: tracker.trace,
        dl_sum_trace: tracker.dl_trace,
        ul_sum_trace: tracker.ul_trace,
        inner_iterations: tracker.inner,
        ascent_iterations: tracker.ascent,
        converged,
        wall_time: start.elapsed(),
        counters: tracker.counters,
        solutions: vec![Solution { state, phases }],
    })
}

fn joint(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    tol: &Tolerances,
    phases0: PhaseVector,
    tracker: &mut Tracker,
) -> Result<(SolverState, PhaseVector, bool)> {
    let eff = compose_effective_channels(channels, &phases0)?;
    let rep = run_algorithm1(&initial_state(&eff, cfg)?, &eff, cfg, &tol.inner())
        .map_err(|e| e.context("initial WMMSE solve"))?;
    tracker.inner.push(rep.iterations);
    tracker.counters.merge(&rep.counters);
    let mut state = rep.state;
    let mut phases = phases0;
    let mut prev = tracker.record(&state, &eff, cfg)?;
    for outer in 1..=tol.max_outer {
        let ctx = |e: Error| e.context(format!("outer iteration {outer}"));
        let asc = optimize_phases(channels, &state, &phases, cfg, &tol.ascent()).map_err(ctx)?;
        tracker.ascent.push(asc.iterations);
        tracker.counters.merge(&asc.counters);
        phases = asc.phases;
        let eff = compose_effective_channels(channels, &phases).map_err(ctx)?;
        let rep = run_algorithm1(&state, &eff, cfg, &tol.inner()).map_err(ctx)?;
        tracker.inner.push(rep.iterations);
        tracker.counters.merge(&rep.counters);
        state = rep.state;
        let value = tracker.record(&state, &eff, cfg).map_err(ctx)?;
        if (value - prev).abs() < tol.eps3 {
            return Ok((state, phases, true));
        }
        prev = value;
    }
    Ok((state, phases, false))
}

/// MRT beamformers with an equal power split, MRC combiners, full UL power.
pub fn mrt_mrc_state(eff: &EffectiveChannels, cfg: &SystemConfig) -> SolverState {
    let mut state = SolverState::zeros(cfg);
    let k = eff.n_dl_users().max(1) as f64;
    let unit = |v: &CVector| {
        let n = v.norm();
        if n > 0.0 {
            v / C64::from(n)
        } else {
            v.clone()
        }
    };
    for (w, h) in state.w.iter_mut().zip(&eff.h_bar) {
        *w = unit(h) * C64::from((cfg.p_max_bs / k).sqrt());
    }
    for (u, g) in state.u.iter_mut().zip(&eff.g_bar) {
        *u = unit(g);
    }
    for (p, pmax) in state.p.iter_mut().zip(&cfg.p_max_ul) {
        *p = pmax.sqrt();
    }
    state
}

fn mrt_mrc(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    tol: &Tolerances,
    phases0: PhaseVector,
    tracker: &mut Tracker,
) -> Result<(SolverState, PhaseVector, bool)> {
    let mut phases = phases0;
    let eff = compose_effective_channels(channels, &phases)?;
    let mut state = mrt_mrc_state(&eff, cfg);
    let mut prev = tracker.record(&state, &eff, cfg)?;
    for outer in 1..=tol.max_outer {
        let ctx = |e: Error| e.context(format!("outer iteration {outer}"));
        let asc = optimize_phases(channels, &state, &phases, cfg, &tol.ascent()).map_err(ctx)?;
        tracker.ascent.push(asc.iterations);
        tracker.counters.merge(&asc.counters);
        phases = asc.phases;
        let eff = compose_effective_channels(channels, &phases).map_err(ctx)?;
        state = mrt_mrc_state(&eff, cfg);
        let value = tracker.record(&state, &eff, cfg).map_err(ctx)?;
        if (value - prev).abs() < tol.eps3 {
            return Ok((state, phases, true));
        }
        prev = value;
    }
    Ok((state, phases, false))
}

/// Half-duplex baseline: a DL-only slot and a UL-only slot optimized
/// independently with the same scheme, rates halved.
pub fn run_half_duplex(
    channels: &ChannelSet,
    cfg: &SystemConfig,
    opts: &RunOptions,
) -> Result<RunResult> {
    let start = Instant::now();
    cfg.validate()?;
    channels.check(cfg)?;
    let full = RunOptions {
        duplex: Duplex::Full,
        ..*opts
    };
    let dl = if cfg.n_dl_users > 0 {
        Some(
            run_algorithm2(&channels.downlink_only(), &cfg.downlink_only(), &full)
                .map_err(|e| e.context("DL slot"))?,
        )
    } else {
        None
    };
    let ul = if cfg.n_ul_users > 0 {
        Some(
            run_algorithm2(&channels.uplink_only(), &cfg.uplink_only(), &full)
                .map_err(|e| e.context("UL slot"))?,
        )
    } else {
        None
    };
    let slots: Vec<&RunResult> = dl.iter().chain(ul.iter()).collect();
    let dl_rates: Vec<f64> = dl
        .as_ref()
        .map_or(Vec::new(), |r| r.dl_rates.iter().map(|x| 0.5 * x).collect());
    let ul_rates: Vec<f64> = ul
        .as_ref()
        .map_or(Vec::new(), |r| r.ul_rates.iter().map(|x| 0.5 * x).collect());
    let rates = crate::model::Rates {
        dl: dl_rates,
        ul: ul_rates,
    };
    let len = slots.iter().map(|r| r.outer_trace.len()).max().unwrap_or(0);
    let merged = |pick: fn(&RunResult) -> &Vec<f64>| -> Vec<f64> {
        (0..len)
            .map(|i| {
                slots
                    .iter()
                    .map(|r| pick(r).get(i).or(pick(r).last()).copied().unwrap_or(0.0))
                    .sum::<f64>()
                    * 0.5
            })
            .collect()
    };
    let outer_trace = merged(|r| &r.outer_trace);
    let dl_sum_trace = merged(|r| &r.dl_sum_trace);
    let ul_sum_trace = merged(|r| &r.ul_sum_trace);
    let mut counters = OpCounters::default();
    slots.iter().for_each(|r| counters.merge(&r.counters));
    Ok(RunResult {
        swsr: rates.weighted_sum(cfg),
        dl_rates: rates.dl,
        ul_rates: rates.ul,
        outer_trace,
        dl_sum_trace,
        ul_sum_trace,
        inner_iterations: slots
            .iter()
            .flat_map(|r| r.inner_iterations.iter().copied())
            .collect(),
        ascent_iterations: slots
            .iter()
            .flat_map(|r| r.ascent_iterations.iter().copied())
            .collect(),
        converged: slots.iter().all(|r| r.converged),
        wall_time: start.elapsed(),
        counters,
        solutions: slots
            .iter()
            .flat_map(|r| r.solutions.iter().cloned())
            .collect(),
    })
}
