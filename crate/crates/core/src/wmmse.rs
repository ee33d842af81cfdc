//! Alternating WMMSE solver for fixed IRS phases.
//!
//! The weighted sum-rate problem is replaced by the equivalent weighted
//! MSE minimization
//!
//! ```text
//! min  α_1 Σ_k β_k (μ_k e_k − ln μ_k) + α_2 Σ_l β_l (μ_l e_l − ln μ_l)
//! ```
//!
//! whose blocks (decoders `u_{1,k}`, combiners `u_l`, weights `μ`,
//! beamformers `w_k`, UL amplitudes `p_l`) each have a closed-form
//! minimizer. Cycling through them never increases the objective.

use nalgebra::linalg::{Cholesky, SymmetricEigen};

use crate::model::{
    rsi_power, swsr, DlTerms, EffectiveChannels, OpCounters, SolverState, SystemConfig, UlTerms,
};
use crate::{CMatrix, CVector, Error, Result, C64};

/// Eigenvalues at or below this fraction of the largest are treated as 0.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Smallest MSE accepted when forming `μ = 1/e`.
pub const MSE_FLOOR: f64 = 1e-12;

fn cabs2(z: C64) -> f64 {
    z.norm_sqr()
}

/// `E|y_k|²` at DL user `k`, including its own front-end distortion.
fn dl_received_power(
    k: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> f64 {
    DlTerms::new(k, state, eff).input_power(&cfg.hw) + cfg.noise_dl
}

/// DL mean-square error `E|u_{1,k} y_k − s_k|²`.
pub fn mse_dl(k: usize, state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> f64 {
    mse_dl_with(k, state.u1[k], state, eff, cfg)
}

/// DL MSE for an arbitrary decoding scalar.
pub fn mse_dl_with(
    k: usize,
    u1: C64,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> f64 {
    let hw = &cfg.hw;
    let gain = (hw.xi_ue_dl * hw.xi_bs_dl).sqrt() * eff.h_bar[k].dotc(&state.w[k]);
    let e = cabs2(u1) * dl_received_power(k, state, eff, cfg) - 2.0 * (u1 * gain).re + 1.0;
    e.max(0.0)
}

/// Covariance `R` of the signal at the BS combiner input. It does not
/// depend on the user index.
pub fn ul_covariance(state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> CMatrix {
    let hw = &cfg.hw;
    let n = cfg.n_tx;
    let mut r = CMatrix::zeros(n, n);
    let mut total_ul_power = 0.0;
    for (j, g) in eff.g_bar.iter().enumerate() {
        let rho = state.rho(j);
        r.gerc(C64::from(hw.xi_bs_ul * rho), g, g, C64::from(1.0));
        total_ul_power += g.norm_squared() * rho;
    }
    let scaled_identity = hw.bs_ul_bar() * total_ul_power
        + cfg.rsi_variance * state.bs_power() * hw.rsi_factor(cfg.n_tx)
        + cfg.noise_ul;
    for i in 0..n {
        r[(i, i)] += scaled_identity;
    }
    r
}

fn ul_cross(l: usize, state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> CVector {
    let hw = &cfg.hw;
    &eff.g_bar[l] * C64::from((hw.xi_ue_ul * hw.xi_bs_ul).sqrt() * state.p[l])
}

/// UL mean-square error of user `l` under the stored combiner.
pub fn mse_ul(l: usize, state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> f64 {
    mse_ul_with(l, &state.u[l], state, eff, cfg)
}

/// UL MSE `E|u^H y − s_l|²` for an arbitrary combiner.
pub fn mse_ul_with(
    l: usize,
    u: &CVector,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> f64 {
    let hw = &cfg.hw;
    let t = UlTerms::new(l, u, state, eff);
    let received = hw.xi_bs_ul * (t.desired + t.other_users)
        + t.combiner_norm * (hw.bs_ul_bar() * t.total_ul_power + cfg.noise_ul)
        + rsi_power(u, state, cfg);
    let cross = u.dotc(&ul_cross(l, state, eff, cfg));
    (received - 2.0 * cross.re + 1.0).max(0.0)
}

/// MMSE decoding scalar `u_{1,k} = √(ξ_UE^DL ξ_BS^DL) w_k^H h̄_k / E|y_k|²`.
pub fn update_u1k(
    k: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> C64 {
    let hw = &cfg.hw;
    let gain = (hw.xi_ue_dl * hw.xi_bs_dl).sqrt() * state.w[k].dotc(&eff.h_bar[k]);
    gain / dl_received_power(k, state, eff, cfg)
}

/// MMSE combiner `u_l = R^{-1} √(ξ_UE^UL ξ_BS^UL ρ_l) ḡ_l`.
pub fn update_ul(
    l: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> Result<CVector> {
    let r = ul_covariance(state, eff, cfg);
    let chol = Cholesky::new(r)
        .ok_or_else(|| Error::Degenerate("UL covariance is not positive definite".into()))?;
    Ok(chol.solve(&ul_cross(l, state, eff, cfg)))
}

/// `μ = 1/e` for every user.
pub fn update_weights(
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let inv = |e: f64, what: String| {
        if e <= MSE_FLOOR {
            Err(Error::Degenerate(format!(
                "{what} MSE {e:e} is not positive"
            )))
        } else {
            Ok(1.0 / e)
        }
    };
    let mu_dl = (0..eff.n_dl_users())
        .map(|k| inv(mse_dl(k, state, eff, cfg), format!("DL user {k}")))
        .collect::<Result<_>>()?;
    let mu_ul = (0..eff.n_ul_users())
        .map(|l| inv(mse_ul(l, state, eff, cfg), format!("UL user {l}")))
        .collect::<Result<_>>()?;
    Ok((mu_dl, mu_ul))
}

/// The weighted-MSE objective being minimized.
pub fn wmse_objective(state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> f64 {
    let dl: f64 = (0..eff.n_dl_users())
        .map(|k| {
            let mu = state.mu_dl[k];
            cfg.beta_dl[k] * (mu * mse_dl(k, state, eff, cfg) - mu.ln())
        })
        .sum();
    let ul: f64 = (0..eff.n_ul_users())
        .map(|l| {
            let mu = state.mu_ul[l];
            cfg.beta_ul[l] * (mu * mse_ul(l, state, eff, cfg) - mu.ln())
        })
        .sum();
    cfg.alpha_dl * dl + cfg.alpha_ul * ul
}

/// Quadratic beamformer subproblem `min Σ_k w_k^H A w_k − 2Re(rhs_k^H w_k)`
/// subject to `Σ_k |w_k|² ≤ P`, in the eigenbasis of `A`.
#[derive(Debug, Clone)]
pub struct BeamformerSubproblem {
    pub a_matrix: CMatrix,
    /// Eigenvectors of `A` as columns, in ascending eigenvalue order.
    pub eigvecs: CMatrix,
    /// Eigenvalues of `A`; those at or below the rank threshold are 0.
    pub eigvals: Vec<f64>,
    pub rhs: Vec<CVector>,
    /// `|t_i^H rhs_k|²` summed over `k`, per eigenvector `i`.
    pub energy: Vec<f64>,
}

impl BeamformerSubproblem {
    /// Number of eigenvalues above the rank threshold.
    pub fn n_tau(&self) -> usize {
        self.eigvals.iter().filter(|&&y| y > 0.0).count()
    }

    /// Right-hand side energy outside the range of `A`.
    fn null_energy(&self) -> f64 {
        self.eigvals
            .iter()
            .zip(&self.energy)
            .filter(|(y, _)| **y == 0.0)
            .map(|(_, e)| e)
            .sum()
    }

    /// Whether the unregularized problem is unbounded below (part of some
    /// `rhs_k` lies in the null space of `A`).
    fn unbounded_at_zero(&self) -> bool {
        let total: f64 = self.energy.iter().sum();
        self.null_energy() > 1e-12 * total
    }
}

/// Builds `A` and the right-hand sides from the current receivers and
/// weights, and eigendecomposes `A`.
pub fn build_beamformer_subproblem(
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> Result<BeamformerSubproblem> {
    let hw = &cfg.hw;
    let n = cfg.n_tx;
    let mut a = CMatrix::zeros(n, n);
    let mut identity_coeff = 0.0;
    let mut rhs = Vec::with_capacity(eff.n_dl_users());
    let amp = (hw.xi_ue_dl * hw.xi_bs_dl).sqrt();
    for (k, h) in eff.h_bar.iter().enumerate() {
        let weight = cfg.alpha_dl * cfg.beta_dl[k] * state.mu_dl[k];
        let c = weight * cabs2(state.u1[k]);
        a.gerc(C64::from(c * hw.xi_bs_dl), h, h, C64::from(1.0));
        identity_coeff += c * hw.bs_dl_bar() * h.norm_squared();
        rhs.push(h * (state.u1[k].conj() * (weight * amp)));
    }
    let ul_weight: f64 = (0..eff.n_ul_users())
        .map(|l| cfg.beta_ul[l] * state.mu_ul[l] * state.u[l].norm_squared())
        .sum();
    identity_coeff += cfg.alpha_ul * cfg.rsi_variance * hw.rsi_factor(n) * ul_weight;
    for i in 0..n {
        a[(i, i)] += identity_coeff;
    }
    let a = (&a + a.adjoint()) * C64::from(0.5);
    if !a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        return Err(Error::Numerical(
            "beamformer matrix has non-finite entries".into(),
        ));
    }

    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let largest = eig.eigenvalues.iter().fold(0.0f64, |m, &y| m.max(y));
    let cutoff = RANK_THRESHOLD * largest;
    let eigvecs = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let eigvals: Vec<f64> = order
        .iter()
        .map(|&i| {
            let y = eig.eigenvalues[i];
            if y <= cutoff || largest <= 0.0 {
                0.0
            } else {
                y
            }
        })
        .collect();
    let energy = (0..n)
        .map(|i| {
            let t = eigvecs.column(i);
            rhs.iter().map(|b| cabs2(t.dotc(b))).sum()
        })
        .collect();
    Ok(BeamformerSubproblem {
        a_matrix: a,
        eigvecs,
        eigvals,
        rhs,
        energy,
    })
}

/// `w_k(λ) = (A + λI)^{-1} rhs_k`, computed in the eigenbasis. At `λ = 0`
/// null-space components are dropped (pseudo-inverse).
pub fn w_of_lambda(sub: &BeamformerSubproblem, lambda: f64) -> Vec<CVector> {
    let n = sub.eigvals.len();
    sub.rhs
        .iter()
        .map(|b| {
            let mut w = CVector::zeros(n);
            for (i, &y) in sub.eigvals.iter().enumerate() {
                let d = y + lambda;
                if d <= 0.0 {
                    continue;
                }
                let t = sub.eigvecs.column(i);
                w.axpy(t.dotc(b) / d, &t, C64::from(1.0));
            }
            w
        })
        .collect()
}

/// Total beamformer power `J(λ) = Σ_k |w_k(λ)|² = Σ_i E_i / (y_i + λ)²`
/// with `E_i = Σ_k |t_i^H rhs_k|²`. Infinite at `λ = 0` when the
/// unregularized problem is unbounded.
pub fn j_of_lambda(sub: &BeamformerSubproblem, lambda: f64) -> f64 {
    if lambda <= 0.0 && sub.unbounded_at_zero() {
        return f64::INFINITY;
    }
    sub.eigvals
        .iter()
        .zip(&sub.energy)
        .filter(|(y, _)| **y + lambda > 0.0)
        .map(|(y, e)| e / ((y + lambda) * (y + lambda)))
        .sum()
}

/// Upper bound on the optimal multiplier: `J(λ_max) ≤ P` for
/// `λ_max = √(Σ_i E_i / P)`.
pub fn lambda_upper_bound(sub: &BeamformerSubproblem, p_max: f64) -> f64 {
    (sub.energy.iter().sum::<f64>() / p_max).sqrt()
}

/// Solution of the beamformer subproblem.
#[derive(Debug, Clone)]
pub struct BeamformerSolution {
    pub w: Vec<CVector>,
    pub lambda: f64,
    /// Number of `J(λ)` evaluations spent.
    pub evaluations: u64,
}

const MAX_BISECTION: usize = 300;
const MAX_DOUBLINGS: usize = 60;

/// Minimizes the subproblem under `Σ|w_k|² ≤ p_max`. When the constraint
/// binds, bisects on `λ` until `J(λ) ∈ [p_max(1 − tol), p_max]`.
pub fn solve_beamformer(
    sub: &BeamformerSubproblem,
    p_max: f64,
    tol: f64,
) -> Result<BeamformerSolution> {
    if p_max.is_nan() || p_max <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "BS power budget {p_max} must be positive"
        )));
    }
    let mut evaluations = 1;
    if j_of_lambda(sub, 0.0) <= p_max {
        return Ok(BeamformerSolution {
            w: w_of_lambda(sub, 0.0),
            lambda: 0.0,
            evaluations,
        });
    }
    let mut lo = 0.0;
    let mut hi = lambda_upper_bound(sub, p_max).max(f64::MIN_POSITIVE);
    let mut doublings = 0;
    loop {
        evaluations += 1;
        if j_of_lambda(sub, hi) <= p_max {
            break;
        }
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::Numerical(
                "could not bracket the beamformer multiplier".into(),
            ));
        }
    }
    let mut lambda = hi;
    for _ in 0..MAX_BISECTION {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        evaluations += 1;
        let j = j_of_lambda(sub, mid);
        if j > p_max {
            lo = mid;
        } else {
            hi = mid;
            lambda = mid;
            if j >= p_max * (1.0 - tol) {
                break;
            }
        }
    }
    Ok(BeamformerSolution {
        w: w_of_lambda(sub, lambda),
        lambda,
        evaluations,
    })
}

/// UL amplitude update: the minimizer of the objective in `p_l` clamped
/// to `[0, √P_max^l]`.
pub fn update_power(
    l: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> f64 {
    let hw = &cfg.hw;
    let g = &eff.g_bar[l];
    let p_cap = cfg.p_max_ul[l].sqrt();
    let num = cfg.alpha_ul
        * cfg.beta_ul[l]
        * state.mu_ul[l]
        * (hw.xi_ue_ul * hw.xi_bs_ul).sqrt()
        * state.u[l].dotc(g).re;
    let dl: f64 = (0..eff.n_dl_users())
        .map(|k| cfg.beta_dl[k] * state.mu_dl[k] * cabs2(state.u1[k]) * cabs2(eff.f_bar[(k, l)]))
        .sum();
    let ul_proj: f64 = (0..eff.n_ul_users())
        .map(|j| cfg.beta_ul[j] * state.mu_ul[j] * cabs2(g.dotc(&state.u[j])))
        .sum();
    let ul_norm: f64 = (0..eff.n_ul_users())
        .map(|j| cfg.beta_ul[j] * state.mu_ul[j] * state.u[j].norm_squared())
        .sum();
    let den = cfg.alpha_dl * dl
        + cfg.alpha_ul * (hw.xi_bs_ul * ul_proj + hw.bs_ul_bar() * g.norm_squared() * ul_norm);
    if den <= f64::MIN_POSITIVE {
        return if num > 0.0 { p_cap } else { 0.0 };
    }
    (num / den).clamp(0.0, p_cap)
}

/// Maximum-ratio transmission with an equal power split, full UL power,
/// unit weights, and receivers from one MMSE pass.
pub fn initial_state(eff: &EffectiveChannels, cfg: &SystemConfig) -> Result<SolverState> {
    let mut state = SolverState::zeros(cfg);
    let k = eff.n_dl_users();
    for (w, h) in state.w.iter_mut().zip(&eff.h_bar) {
        let norm = h.norm();
        if norm > 0.0 {
            *w = h * C64::from((cfg.p_max_bs / k as f64).sqrt() / norm);
        }
    }
    for (p, pmax) in state.p.iter_mut().zip(&cfg.p_max_ul) {
        *p = pmax.sqrt();
    }
    let mut counters = OpCounters::default();
    refresh_receivers(&mut state, eff, cfg, &mut counters, |_, _| {})?;
    state.mu_dl.fill(1.0);
    state.mu_ul.fill(1.0);
    Ok(state)
}

/// Which block an objective sample was recorded after.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Block {
    Start,
    Decoders,
    Combiners,
    Weights,
    Beamformers,
    Powers,
}

/// `u_{1,k}`, then `u_l`, then `μ`, each using the freshest values.
fn refresh_receivers(
    state: &mut SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
    counters: &mut OpCounters,
    mut record: impl FnMut(Block, &SolverState),
) -> Result<()> {
    for k in 0..eff.n_dl_users() {
        state.u1[k] = update_u1k(k, state, eff, cfg);
    }
    record(Block::Decoders, state);
    if eff.n_ul_users() > 0 {
        let r = ul_covariance(state, eff, cfg);
        let chol = Cholesky::new(r)
            .ok_or_else(|| Error::Degenerate("UL covariance is not positive definite".into()))?;
        for l in 0..eff.n_ul_users() {
            state.u[l] = chol.solve(&ul_cross(l, state, eff, cfg));
            counters.linear_solves += 1;
        }
    }
    record(Block::Combiners, state);
    let (mu_dl, mu_ul) = update_weights(state, eff, cfg)?;
    state.mu_dl = mu_dl;
    state.mu_ul = mu_ul;
    record(Block::Weights, state);
    Ok(())
}

/// Solver knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Algorithm1Options {
    /// Stop once the SWSR changes by less than this between iterations.
    pub eps1: f64,
    pub max_iter: usize,
    /// Relative bisection tolerance on the BS power.
    pub bisection_tol: f64,
    /// Record the objective after every block update.
    pub trace_blocks: bool,
}

impl Default for Algorithm1Options {
    fn default() -> Self {
        Algorithm1Options {
            eps1: 1e-3,
            max_iter: 200,
            bisection_tol: 1e-14,
            trace_blocks: false,
        }
    }
}

/// Outcome of [`run_algorithm1`].
#[derive(Debug, Clone)]
pub struct Algorithm1Report {
    pub iterations: usize,
    /// SWSR at the start and after each iteration.
    pub swsr_trace: Vec<f64>,
    /// Weighted-MSE objective at the start and after each iteration.
    pub objective_trace: Vec<f64>,
    /// Objective after every block update (empty unless requested).
    pub block_trace: Vec<(Block, f64)>,
    pub converged: bool,
    pub state: SolverState,
    pub counters: OpCounters,
}

/// Runs the alternating WMMSE iterations at fixed phases.
///
/// The receivers and weights are first refreshed for `state0`'s
/// transmitters. Each iteration then updates the beamformers, the UL
/// powers, and again the receivers and weights, so the returned state
/// always carries MMSE receivers matched to its transmitters.
pub fn run_algorithm1(
    state0: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
    opts: &Algorithm1Options,
) -> Result<Algorithm1Report> {
    let mut state = state0.clone();
    let mut counters = OpCounters::default();
    let mut block_trace = Vec::new();
    let record = |b: Block, s: &SolverState, trace: &mut Vec<(Block, f64)>| {
        if opts.trace_blocks {
            trace.push((b, wmse_objective(s, eff, cfg)));
        }
    };
    record(Block::Start, &state, &mut block_trace);
    refresh_receivers(&mut state, eff, cfg, &mut counters, |b, s| {
        record(b, s, &mut block_trace)
    })
    .map_err(|e| e.context("initial receiver update"))?;
    let mut swsr_trace = vec![swsr(&state, eff, cfg)?];
    let mut objective_trace = vec![wmse_objective(&state, eff, cfg)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let ctx = |e: Error| e.context(format!("WMMSE iteration {iterations}"));
        if eff.n_dl_users() > 0 {
            let sub = build_beamformer_subproblem(&state, eff, cfg).map_err(ctx)?;
            counters.eigendecompositions += 1;
            let sol = solve_beamformer(&sub, cfg.p_max_bs, opts.bisection_tol).map_err(ctx)?;
            counters.bisection_steps += sol.evaluations;
            state.w = sol.w;
        }
        record(Block::Beamformers, &state, &mut block_trace);
        for l in 0..eff.n_ul_users() {
            state.p[l] = update_power(l, &state, eff, cfg);
        }
        record(Block::Powers, &state, &mut block_trace);
        refresh_receivers(&mut state, eff, cfg, &mut counters, |b, s| {
            record(b, s, &mut block_trace)
        })
        .map_err(ctx)?;
        let value = swsr(&state, eff, cfg).map_err(ctx)?;
        let change = (value - swsr_trace.last().copied().unwrap_or(0.0)).abs();
        swsr_trace.push(value);
        objective_trace.push(wmse_objective(&state, eff, cfg));
        if change < opts.eps1 {
            converged = true;
            break;
        }
    }
    Ok(Algorithm1Report {
        iterations,
        swsr_trace,
        objective_trace,
        block_trace,
        converged,
        state,
        counters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channelgen::complex_normal;
    use crate::model::{
        compose_effective_channels, dl_sinr, ul_sinr, ChannelSet, HardwareQuality, PhaseVector,
    };
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn cfg(n_tx: usize, k: usize, l: usize, m: usize) -> SystemConfig {
        SystemConfig {
            n_tx,
            n_dl_users: k,
            n_ul_users: l,
            irs_sizes: vec![m],
            p_max_bs: 10.0,
            p_max_ul: vec![2.0; l],
            noise_dl: 0.5,
            noise_ul: 0.3,
            rsi_variance: 0.05,
            hw: HardwareQuality {
                xi_ue_dl: 0.93,
                xi_ue_ul: 0.9,
                xi_bs_dl: 0.95,
                xi_bs_ul: 0.92,
            },
            alpha_dl: 1.0,
            alpha_ul: 0.8,
            beta_dl: (0..k).map(|i| 1.0 + 0.3 * i as f64).collect(),
            beta_ul: (0..l).map(|i| 1.2 - 0.2 * i as f64).collect(),
        }
    }

    fn instance(cfg: &SystemConfig, seed: u64) -> (EffectiveChannels, SolverState) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ch = ChannelSet::zeros(cfg);
        let mut draw = || complex_normal(&mut rng);
        ch.h_direct
            .iter_mut()
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = draw());
        ch.g_direct
            .iter_mut()
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = draw());
        ch.f_uu.iter_mut().for_each(|x| *x = draw() * 0.5);
        ch.h_bs_irs
            .iter_mut()
            .flat_map(|h| h.iter_mut())
            .for_each(|x| *x = draw() * 0.3);
        ch.h_irs_dl
            .iter_mut()
            .flatten()
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = draw());
        ch.g_irs_ul
            .iter_mut()
            .flatten()
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = draw());
        let phases = PhaseVector::new((0..cfg.total_irs_elements()).map(|i| 0.37 * i as f64));
        let eff = compose_effective_channels(&ch, &phases).unwrap();
        let mut s = SolverState::zeros(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let mut draw = || complex_normal(&mut rng);
        s.w.iter_mut()
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = draw());
        s.u.iter_mut()
            .flat_map(|v| v.iter_mut())
            .for_each(|x| *x = draw());
        s.u1.iter_mut().for_each(|x| *x = draw());
        s.p.iter_mut().for_each(|p| *p = 1.0);
        let scale = (cfg.p_max_bs / s.bs_power()).sqrt() * 0.9;
        s.w.iter_mut().for_each(|w| *w *= C64::from(scale));
        s.mu_dl
            .iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m = 1.0 + i as f64);
        s.mu_ul
            .iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m = 1.5 + i as f64);
        (eff, s)
    }

    fn ideal_one_user(n_tx: usize) -> SystemConfig {
        SystemConfig {
            n_tx,
            n_dl_users: 1,
            n_ul_users: 0,
            irs_sizes: vec![1],
            p_max_bs: 100.0,
            p_max_ul: vec![],
            noise_dl: 1.0,
            noise_ul: 1.0,
            rsi_variance: 0.0,
            hw: HardwareQuality::IDEAL,
            alpha_dl: 1.0,
            alpha_ul: 1.0,
            beta_dl: vec![1.0],
            beta_ul: vec![],
        }
    }

    #[test]
    fn u1k_examples() {
        let cfg = ideal_one_user(2);
        let eff = EffectiveChannels {
            h_bar: vec![CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)])],
            g_bar: vec![],
            f_bar: CMatrix::zeros(1, 0),
        };
        let mut s = SolverState::zeros(&cfg);
        s.w[0] = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert!((update_u1k(0, &s, &eff, &cfg) - c(0.5, 0.0)).norm() < 1e-15);
        s.u1[0] = c(0.0, 0.0);
        assert_eq!(mse_dl(0, &s, &eff, &cfg), 1.0);
        s.w[0].fill(c(0.0, 0.0));
        assert_eq!(update_u1k(0, &s, &eff, &cfg), c(0.0, 0.0));
    }

    #[test]
    fn u1k_beats_polar_grid() {
        let cfg = cfg(3, 2, 2, 3);
        let (eff, mut s) = instance(&cfg, 1);
        for k in 0..2 {
            let opt = update_u1k(k, &s, &eff, &cfg);
            s.u1[k] = opt;
            let best = mse_dl(k, &s, &eff, &cfg);
            let rmax = 3.0 * opt.norm().max(1e-3);
            for i in 1..=100 {
                for j in 0..100 {
                    let z = C64::from_polar(
                        rmax * i as f64 / 100.0,
                        std::f64::consts::TAU * j as f64 / 100.0,
                    );
                    assert!(mse_dl_with(k, z, &s, &eff, &cfg) >= best - 1e-12);
                }
            }
        }
    }

    #[test]
    fn mmse_identity() {
        let cfg = cfg(4, 2, 3, 4);
        for seed in 0..20 {
            let (eff, mut s) = instance(&cfg, seed);
            for k in 0..2 {
                s.u1[k] = update_u1k(k, &s, &eff, &cfg);
                let expect = 1.0 / (1.0 + dl_sinr(k, &s, &eff, &cfg).unwrap());
                let e = mse_dl(k, &s, &eff, &cfg);
                assert!((e - expect).abs() <= 1e-8 * expect, "{e} vs {expect}");
            }
            for l in 0..3 {
                s.u[l] = update_ul(l, &s, &eff, &cfg).unwrap();
            }
            for l in 0..3 {
                let expect = 1.0 / (1.0 + ul_sinr(l, &s, &eff, &cfg).unwrap());
                let e = mse_ul(l, &s, &eff, &cfg);
                assert!((e - expect).abs() <= 1e-8 * expect, "{e} vs {expect}");
            }
        }
    }

    #[test]
    fn ul_combiner_examples() {
        let mut cfg = cfg(2, 0, 1, 1);
        let (eff, mut s) = instance(&cfg, 3);
        s.p[0] = 0.0;
        assert!(update_ul(0, &s, &eff, &cfg)
            .unwrap()
            .iter()
            .all(|z| *z == c(0.0, 0.0)));

        // Rank-one closed form: (ρ g g^H + σ² I)^{-1} √ρ g = √ρ g / (σ² + ρ|g|²).
        cfg.hw = HardwareQuality::IDEAL;
        cfg.rsi_variance = 0.0;
        s.p[0] = 1.3;
        let g = &eff.g_bar[0];
        let rho = 1.69;
        let expect = g * C64::from(1.3 / (cfg.noise_ul + rho * g.norm_squared()));
        assert!((update_ul(0, &s, &eff, &cfg).unwrap() - expect).norm() < 1e-12);
    }

    #[test]
    fn ul_combiner_is_stationary() {
        let cfg = cfg(3, 2, 2, 2);
        let (eff, mut s) = instance(&cfg, 4);
        let h = 1e-6;
        for l in 0..2 {
            let u = update_ul(l, &s, &eff, &cfg).unwrap();
            s.u[l] = u.clone();
            for a in 0..3 {
                for dir in [c(1.0, 0.0), c(0.0, 1.0)] {
                    let mut up = u.clone();
                    up[a] += dir * h;
                    let mut dn = u.clone();
                    dn[a] -= dir * h;
                    let d = (mse_ul_with(l, &up, &s, &eff, &cfg)
                        - mse_ul_with(l, &dn, &s, &eff, &cfg))
                        / (2.0 * h);
                    assert!(d.abs() < 1e-6, "user {l} coord {a}: {d}");
                }
            }
        }
    }

    #[test]
    fn weight_examples() {
        let cfg = ideal_one_user(1);
        let eff = EffectiveChannels {
            h_bar: vec![CVector::from_element(1, c(1.0, 0.0))],
            g_bar: vec![],
            f_bar: CMatrix::zeros(1, 0),
        };
        let mut s = SolverState::zeros(&cfg);
        s.w[0] = CVector::from_element(1, c(1.0, 0.0));
        // E|y|² = 2, gain = 1: u1 = 0.5 gives e = 0.5 and μ = 2.
        s.u1[0] = c(0.5, 0.0);
        assert_eq!(update_weights(&s, &eff, &cfg).unwrap().0, vec![2.0]);
        s.u1[0] = c(0.0, 0.0);
        assert_eq!(update_weights(&s, &eff, &cfg).unwrap().0, vec![1.0]);
    }

    #[test]
    fn weights_at_optimum_equal_one_plus_sinr() {
        let cfg = cfg(3, 2, 2, 2);
        let (eff, s0) = instance(&cfg, 5);
        let mut s = s0.clone();
        let mut counters = OpCounters::default();
        refresh_receivers(&mut s, &eff, &cfg, &mut counters, |_, _| {}).unwrap();
        for k in 0..2 {
            let g = dl_sinr(k, &s, &eff, &cfg).unwrap();
            assert!((s.mu_dl[k] - (1.0 + g)).abs() < 1e-8 * (1.0 + g));
        }
        for l in 0..2 {
            let g = ul_sinr(l, &s, &eff, &cfg).unwrap();
            assert!((s.mu_ul[l] - (1.0 + g)).abs() < 1e-8 * (1.0 + g));
        }
        assert_eq!(counters.linear_solves, 2);
    }

    #[test]
    fn subproblem_spectrum_and_reconstruction() {
        let cfg = cfg(4, 2, 2, 3);
        let (eff, s) = instance(&cfg, 6);
        let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
        let largest = sub.eigvals.iter().cloned().fold(0.0, f64::max);
        assert!(sub.eigvals.iter().all(|&y| y >= -1e-10 * largest));
        assert_eq!(sub.n_tau(), 4);
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            4,
            sub.eigvals.iter().map(|&y| C64::from(y)),
        ));
        let rebuilt = &sub.eigvecs * d * sub.eigvecs.adjoint();
        assert!((rebuilt - &sub.a_matrix).norm() <= 1e-10 * sub.a_matrix.norm());
        assert!((&sub.a_matrix - sub.a_matrix.adjoint()).norm() < 1e-12 * sub.a_matrix.norm());
    }

    #[test]
    fn subproblem_rank_one_spectrum() {
        // One DL user, ideal hardware, no UL: A = μ|u1|² h h^H has rank one.
        let mut cfg = ideal_one_user(3);
        cfg.p_max_bs = 1.0;
        let h = CVector::from_vec(vec![c(1.0, 0.5), c(-0.3, 0.2), c(0.0, 1.0)]);
        let eff = EffectiveChannels {
            h_bar: vec![h.clone()],
            g_bar: vec![],
            f_bar: CMatrix::zeros(1, 0),
        };
        let mut s = SolverState::zeros(&cfg);
        s.u1[0] = c(0.4, -0.2);
        s.mu_dl[0] = 2.0;
        let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
        assert_eq!(sub.n_tau(), 1);
        let expect = 2.0 * 0.2 * h.norm_squared();
        assert!((sub.eigvals[2] - expect).abs() < 1e-12 * expect);

        // Impairments add a scaled identity: full rank with the rank-one
        // eigenvalue shifted by the identity coefficient.
        cfg.hw.xi_bs_dl = 0.9;
        let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
        assert_eq!(sub.n_tau(), 3);
        let shift = 2.0 * 0.2 * 0.1 * h.norm_squared();
        assert!((sub.eigvals[0] - shift).abs() < 1e-12 * shift);
        assert!((sub.eigvals[2] - (0.9 * expect + shift)).abs() < 1e-12 * expect);
    }

    fn toy_subproblem(a: CMatrix, rhs: Vec<CVector>) -> BeamformerSubproblem {
        let n = a.nrows();
        let eig = SymmetricEigen::new(a.clone());
        let energy = (0..n)
            .map(|i| {
                rhs.iter()
                    .map(|b| cabs2(eig.eigenvectors.column(i).dotc(b)))
                    .sum()
            })
            .collect();
        BeamformerSubproblem {
            a_matrix: a,
            eigvecs: eig.eigenvectors.clone(),
            eigvals: eig.eigenvalues.iter().copied().collect(),
            rhs,
            energy,
        }
    }

    #[test]
    fn w_of_lambda_examples() {
        let sub = toy_subproblem(
            CMatrix::identity(2, 2),
            vec![CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)])],
        );
        let w = w_of_lambda(&sub, 1.0);
        assert!((w[0][0] - c(1.0, 0.0)).norm() < 1e-15 && w[0][1].norm() < 1e-15);
        let mut prev = f64::INFINITY;
        for lambda in [0.0, 1.0, 10.0, 100.0, 1e6] {
            let n = w_of_lambda(&sub, lambda)[0].norm();
            assert!(n < prev);
            prev = n;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn w_of_lambda_matches_dense_solve_and_j() {
        let cfg = cfg(4, 2, 2, 3);
        let (eff, s) = instance(&cfg, 7);
        let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
        for lambda in [0.0, 0.3, 5.0] {
            let w = w_of_lambda(&sub, lambda);
            let m = &sub.a_matrix + CMatrix::identity(4, 4) * C64::from(lambda);
            let lu = m.lu();
            let mut total = 0.0;
            for (wk, b) in w.iter().zip(&sub.rhs) {
                let direct = lu.solve(b).unwrap();
                assert!((wk - &direct).norm() <= 1e-10 * direct.norm());
                total += wk.norm_squared();
            }
            let j = j_of_lambda(&sub, lambda);
            assert!((j - total).abs() <= 1e-9 * total);
        }
    }

    #[test]
    fn bisection_binds_and_bounds() {
        let mut cfg = cfg(4, 2, 3, 3);
        cfg.p_max_bs = 0.01;
        for seed in 0..10 {
            let (eff, s) = instance(&cfg, seed);
            let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
            assert!(j_of_lambda(&sub, lambda_upper_bound(&sub, cfg.p_max_bs)) <= cfg.p_max_bs);
            let sol = solve_beamformer(&sub, cfg.p_max_bs, 1e-10).unwrap();
            let power: f64 = sol.w.iter().map(|w| w.norm_squared()).sum();
            assert!(sol.lambda > 0.0);
            assert!((power - cfg.p_max_bs).abs() <= 1e-6 * cfg.p_max_bs);
            assert!(power <= cfg.p_max_bs * (1.0 + 1e-9));
        }
    }

    #[test]
    fn inactive_constraint_gives_unconstrained_point() {
        let sub = toy_subproblem(
            CMatrix::from_diagonal(&CVector::from_vec(vec![c(2.0, 0.0), c(4.0, 0.0)])),
            vec![CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 2.0)])],
        );
        let sol = solve_beamformer(&sub, 1e6, 1e-10).unwrap();
        assert_eq!(sol.lambda, 0.0);
        assert!((sol.w[0][0] - c(0.5, 0.0)).norm() < 1e-15);
        assert!((sol.w[0][1] - c(0.0, 0.5)).norm() < 1e-15);
    }

    #[test]
    fn power_update_examples() {
        let cfg = cfg(2, 1, 1, 1);
        let (eff, mut s) = instance(&cfg, 8);
        // Combiner orthogonal to ḡ: Re(u^H ḡ) = 0.
        let g = &eff.g_bar[0];
        s.u[0] = CVector::from_vec(vec![g[1].conj(), -g[0].conj()]);
        assert!(s.u[0].dotc(g).norm() < 1e-12);
        assert_eq!(update_power(0, &s, &eff, &cfg), 0.0);

        // Huge numerator clamps to √P_max.
        s.u[0] = g * C64::from(1e-3);
        s.mu_ul[0] = 1e9;
        let mut big = cfg.clone();
        big.alpha_dl = 0.0;
        assert_eq!(update_power(0, &s, &eff, &big), big.p_max_ul[0].sqrt());
    }

    #[test]
    fn power_update_interior_is_stationary() {
        let mut cfg = cfg(3, 2, 2, 2);
        cfg.p_max_ul = vec![1e6; 2];
        let (eff, mut s) = instance(&cfg, 9);
        let mut counters = OpCounters::default();
        refresh_receivers(&mut s, &eff, &cfg, &mut counters, |_, _| {}).unwrap();
        for l in 0..2 {
            let p = update_power(l, &s, &eff, &cfg);
            assert!(p > 0.0 && p < 1e3);
            s.p[l] = p;
            let h = 1e-6 * p.max(1.0);
            let f = |x: f64| {
                let mut t = s.clone();
                t.p[l] = x;
                wmse_objective(&t, &eff, &cfg)
            };
            let d = (f(p + h) - f(p - h)) / (2.0 * h);
            assert!(d.abs() < 1e-6, "user {l}: {d}");
        }
    }

    #[test]
    fn algorithm1_monotone_per_block() {
        for seed in 0..5 {
            let cfg = cfg(2, 1, 1, 4);
            let (eff, _) = instance(&cfg, seed);
            let s0 = initial_state(&eff, &cfg).unwrap();
            let opts = Algorithm1Options {
                eps1: 1e-9,
                max_iter: 30,
                trace_blocks: true,
                ..Default::default()
            };
            let rep = run_algorithm1(&s0, &eff, &cfg, &opts).unwrap();
            for pair in rep.block_trace.windows(2).skip(1) {
                let (prev, next) = (pair[0].1, pair[1].1);
                assert!(
                    next <= prev + 1e-9 * prev.abs(),
                    "{:?} -> {:?}",
                    pair[0],
                    pair[1]
                );
            }
            for pair in rep.objective_trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-9 * pair[0].abs());
            }
            assert!(rep.state.bs_power() <= cfg.p_max_bs * (1.0 + 1e-9));
        }
    }

    #[test]
    fn algorithm1_fixed_point_stops_after_one_iteration() {
        let cfg = cfg(3, 2, 2, 2);
        let (eff, _) = instance(&cfg, 10);
        let s0 = initial_state(&eff, &cfg).unwrap();
        let opts = Algorithm1Options {
            eps1: 1e-10,
            max_iter: 20_000,
            ..Default::default()
        };
        let converged = run_algorithm1(&s0, &eff, &cfg, &opts).unwrap();
        assert!(converged.converged);
        let again = run_algorithm1(
            &converged.state,
            &eff,
            &cfg,
            &Algorithm1Options { eps1: 1e-6, ..opts },
        )
        .unwrap();
        assert_eq!(again.iterations, 1);
        for (a, b) in again.state.w.iter().zip(&converged.state.w) {
            assert!((a - b).norm() < 1e-6 * b.norm().max(1.0));
        }
    }

    #[test]
    fn initial_state_uses_mrt_and_full_power() {
        let cfg = cfg(3, 2, 2, 2);
        let (eff, _) = instance(&cfg, 11);
        let s = initial_state(&eff, &cfg).unwrap();
        assert!((s.bs_power() - cfg.p_max_bs).abs() < 1e-12 * cfg.p_max_bs);
        for (w, h) in s.w.iter().zip(&eff.h_bar) {
            let cos = w.dotc(h).norm() / (w.norm() * h.norm());
            assert!((cos - 1.0).abs() < 1e-12);
        }
        assert!(s.p.iter().zip(&cfg.p_max_ul).all(|(p, m)| *p == m.sqrt()));
        assert!(s.mu_dl.iter().chain(&s.mu_ul).all(|&m| m == 1.0));
    }

    proptest! {
        #[test]
        fn j_is_decreasing(seed in any::<u64>()) {
            let cfg = cfg(3, 2, 2, 2);
            let (eff, s) = instance(&cfg, seed);
            let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
            let mut prev = j_of_lambda(&sub, 0.0);
            for i in 1..=100 {
                let j = j_of_lambda(&sub, 0.1 * i as f64);
                prop_assert!(j < prev);
                prev = j;
            }
        }

        #[test]
        fn updates_keep_feasibility(seed in any::<u64>(), p_bs in 0.01f64..100.0) {
            let mut cfg = cfg(3, 2, 2, 2);
            cfg.p_max_bs = p_bs;
            let (eff, s) = instance(&cfg, seed);
            let sub = build_beamformer_subproblem(&s, &eff, &cfg).unwrap();
            let sol = solve_beamformer(&sub, p_bs, 1e-10).unwrap();
            let power: f64 = sol.w.iter().map(|w| w.norm_squared()).sum();
            prop_assert!(power <= p_bs * (1.0 + 1e-9));
            for l in 0..2 {
                let p = update_power(l, &s, &eff, &cfg);
                prop_assert!((0.0..=cfg.p_max_ul[l].sqrt()).contains(&p));
            }
        }
    }
}
