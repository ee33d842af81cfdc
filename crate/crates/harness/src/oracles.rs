//! Independent numerical checks of the solver building blocks.
//!
//! Each check draws its own random instances from a seed and compares a
//! solver quantity against something computed a different way: finite
//! differences, brute-force grids, or Monte-Carlo simulation of the
//! signal model. The same checks back `fdirs selftest` (at reduced sizes)
//! and the acceptance suite.

use std::f64::consts::{PI, TAU};

use fdirs_core::channelgen::{complex_normal, RngSeed};
use fdirs_core::model::{
    compose_effective_channels, dl_distortion_variance, dl_sinr, rsi_power, ul_distortion_variance,
    ul_sinr, ChannelSet, EffectiveChannels, HardwareQuality, PhaseVector, SolverState,
    SystemConfig,
};
use fdirs_core::phaseopt::{build_cache, gradient, objective_f};
use fdirs_core::wmmse::{
    build_beamformer_subproblem, initial_state, j_of_lambda, lambda_upper_bound, mse_dl, mse_ul,
    run_algorithm1, solve_beamformer, update_u1k, update_ul, Algorithm1Options,
    BeamformerSubproblem,
};
use fdirs_core::{CVector, C64};
use rand::Rng;

/// Outcome of one check. `metric` is compared against `threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub metric: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    fn at_most(name: &str, metric: f64, threshold: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed: metric <= threshold,
            metric,
            threshold,
            detail,
        }
    }

    fn failed(name: &str, threshold: f64, detail: String) -> Self {
        CheckResult {
            name: name.into(),
            passed: false,
            metric: f64::NAN,
            threshold,
            detail,
        }
    }
}

/// A random small system: unit-scale channels, a feasible random state and
/// random phases.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cfg: SystemConfig,
    pub channels: ChannelSet,
    pub phases: PhaseVector,
    pub state: SolverState,
}

impl Instance {
    pub fn eff(&self) -> EffectiveChannels {
        compose_effective_channels(&self.channels, &self.phases)
            .expect("instance shapes are consistent")
    }
}

fn rng(seed: u64, stream: u64) -> impl Rng {
    RngSeed::new(seed, stream).rng()
}

fn random_vector(n: usize, scale: f64, rng: &mut impl Rng) -> CVector {
    CVector::from_fn(n, |_, _| complex_normal(rng) * scale)
}

/// Draws an instance. Noise, RSI and weights are fixed at moderate values
/// so every SINR term matters.
pub fn random_instance(
    n_tx: usize,
    k: usize,
    l: usize,
    irs_sizes: Vec<usize>,
    hw: HardwareQuality,
    rng: &mut impl Rng,
) -> Instance {
    let cfg = SystemConfig {
        n_tx,
        n_dl_users: k,
        n_ul_users: l,
        irs_sizes,
        p_max_bs: 4.0,
        p_max_ul: vec![1.0; l],
        noise_dl: 0.4,
        noise_ul: 0.2,
        rsi_variance: 0.02,
        hw,
        alpha_dl: 1.0,
        alpha_ul: 0.9,
        beta_dl: (0..k).map(|i| 1.0 + 0.25 * i as f64).collect(),
        beta_ul: (0..l).map(|i| 0.8 + 0.1 * i as f64).collect(),
    };
    let mut ch = ChannelSet::zeros(&cfg);
    ch.h_direct
        .iter_mut()
        .for_each(|v| *v = random_vector(n_tx, 1.0, rng));
    ch.g_direct
        .iter_mut()
        .for_each(|v| *v = random_vector(n_tx, 1.0, rng));
    ch.f_uu
        .iter_mut()
        .for_each(|x| *x = complex_normal(rng) * 0.5);
    for h in ch.h_bs_irs.iter_mut() {
        h.iter_mut().for_each(|x| *x = complex_normal(rng) * 0.5);
    }
    for v in ch
        .h_irs_dl
        .iter_mut()
        .chain(ch.g_irs_ul.iter_mut())
        .flatten()
    {
        *v = random_vector(v.len(), 0.5, rng);
    }
    let m = cfg.total_irs_elements();
    let phases = PhaseVector::new((0..m).map(|_| TAU * rng.random::<f64>()));
    let mut state = SolverState::zeros(&cfg);
    for w in state.w.iter_mut() {
        *w = random_vector(n_tx, 1.0, rng);
    }
    let scale = (0.8 * cfg.p_max_bs / state.bs_power().max(1e-300)).sqrt();
    state.w.iter_mut().for_each(|w| *w *= C64::from(scale));
    state
        .u
        .iter_mut()
        .for_each(|u| *u = random_vector(n_tx, 1.0, rng));
    state.u1.iter_mut().for_each(|u| *u = complex_normal(rng));
    for (p, pmax) in state.p.iter_mut().zip(&cfg.p_max_ul) {
        *p = (0.2 + 0.8 * rng.random::<f64>()) * pmax.sqrt();
    }
    state
        .mu_dl
        .iter_mut()
        .chain(state.mu_ul.iter_mut())
        .for_each(|mu| *mu = 0.5 + 1.5 * rng.random::<f64>());
    Instance {
        cfg,
        channels: ch,
        phases,
        state,
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Analytic phase gradient against central differences with step `1e-6`
/// over `instances` draws with `M ∈ {2, 4, 8}` and `ξ ∈ {1, 0.92}`.
/// Metric: worst `|∇F − ∇_fd F| / |∇_fd F|`. `corrupt` flips the analytic
/// gradient's sign (negative control).
pub fn gradient_check(seed: u64, instances: usize, corrupt: bool) -> CheckResult {
    const NAME: &str = "phase gradient vs finite differences";
    const H: f64 = 1e-6;
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = rng(seed, i as u64);
        let m = [2, 4, 8][i % 3];
        let xi = if (i / 3) % 2 == 0 { 1.0 } else { 0.92 };
        let irs = if m == 2 { vec![2] } else { vec![m / 2, m / 2] };
        let inst = random_instance(3, 2, 2, irs, HardwareQuality::uniform(xi), &mut rng);
        let outcome = (|| {
            let cache = build_cache(&inst.state, &inst.channels, &inst.cfg)?;
            let mut g = gradient(&cache, &inst.phases, &inst.cfg)?;
            if corrupt {
                g.iter_mut().for_each(|x| *x = -*x);
            }
            let angles = inst.phases.angles();
            let mut fd = vec![0.0; m];
            for n in 0..m {
                let at = |d: f64| {
                    let mut a = angles.to_vec();
                    a[n] += d;
                    objective_f(&cache, &PhaseVector::new(a), &inst.cfg)
                };
                fd[n] = (at(H)? - at(-H)?) / (2.0 * H);
            }
            let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
            Ok::<_, fdirs_core::Error>(norm2(&diff) / norm2(&fd).max(1e-300))
        })();
        match outcome {
            Ok(rel) => worst = worst.max(rel),
            Err(e) => return CheckResult::failed(NAME, 1e-5, format!("instance {i}: {e}")),
        }
    }
    CheckResult::at_most(
        NAME,
        worst,
        1e-5,
        format!("{instances} instances, max relative error {worst:.3e}"),
    )
}

/// After the MMSE receiver updates every MSE equals `1/(1 + SINR)`.
/// Metric: worst relative deviation over all users of all instances.
pub fn mmse_identity_check(seed: u64, instances: usize) -> CheckResult {
    const NAME: &str = "MMSE receivers give e = 1/(1+SINR)";
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = rng(seed, 1000 + i as u64);
        let xi = [1.0, 0.95, 0.9][i % 3];
        let mut inst = random_instance(3, 2, 3, vec![3, 2], HardwareQuality::uniform(xi), &mut rng);
        let eff = inst.eff();
        let outcome = (|| {
            for k in 0..inst.cfg.n_dl_users {
                inst.state.u1[k] = update_u1k(k, &inst.state, &eff, &inst.cfg);
            }
            for l in 0..inst.cfg.n_ul_users {
                inst.state.u[l] = update_ul(l, &inst.state, &eff, &inst.cfg)?;
            }
            let mut worst: f64 = 0.0;
            for k in 0..inst.cfg.n_dl_users {
                let want = 1.0 / (1.0 + dl_sinr(k, &inst.state, &eff, &inst.cfg)?);
                worst = worst.max((mse_dl(k, &inst.state, &eff, &inst.cfg) - want).abs() / want);
            }
            for l in 0..inst.cfg.n_ul_users {
                let want = 1.0 / (1.0 + ul_sinr(l, &inst.state, &eff, &inst.cfg)?);
                worst = worst.max((mse_ul(l, &inst.state, &eff, &inst.cfg) - want).abs() / want);
            }
            Ok::<_, fdirs_core::Error>(worst)
        })();
        match outcome {
            Ok(rel) => worst = worst.max(rel),
            Err(e) => return CheckResult::failed(NAME, 1e-8, format!("instance {i}: {e}")),
        }
    }
    CheckResult::at_most(
        NAME,
        worst,
        1e-8,
        format!("{instances} instances, max relative error {worst:.3e}"),
    )
}

/// Transmitted BS signal `√ξ Σ w_i s_i + z` with `z ~ CN(0, ξ̄ Σ|w|² I)`.
fn bs_transmit(state: &SolverState, hw: &HardwareQuality, rng: &mut impl Rng) -> CVector {
    let n = state.w.first().map_or(0, |w| w.len());
    let mut x = CVector::zeros(n);
    for w in &state.w {
        x.axpy(complex_normal(rng) * hw.xi_bs_dl.sqrt(), w, C64::from(1.0));
    }
    let sd = (hw.bs_dl_bar() * state.bs_power()).sqrt();
    x + random_vector(n, sd, rng)
}

/// Transmitted UL symbol `√ξ √ρ q + z` with `z ~ CN(0, ξ̄ ρ)`.
fn ue_transmit(rho: f64, hw: &HardwareQuality, rng: &mut impl Rng) -> C64 {
    complex_normal(rng) * (hw.xi_ue_ul * rho).sqrt()
        + complex_normal(rng) * (hw.ue_ul_bar() * rho).sqrt()
}

fn relative(estimate: f64, formula: f64) -> f64 {
    (estimate - formula).abs() / formula.abs().max(1e-300)
}

/// Closed-form distortion and RSI variances against Monte-Carlo simulation
/// of the impairment model (`x_d = √ξ x + z`, `z ~ CN(0, (1 − ξ) E|x|²)`),
/// each with `samples` draws. Regimes are chosen where the closed forms are
/// exact expectations: the BS receiver check uses one BS antenna, and the
/// RSI checks use an ideal BS receiver.
pub fn distortion_checks(seed: u64, samples: usize, tolerance: f64) -> Vec<CheckResult> {
    let hw = HardwareQuality {
        xi_ue_dl: 0.9,
        xi_ue_ul: 0.85,
        xi_bs_dl: 0.8,
        xi_bs_ul: 0.95,
    };
    let mut out = Vec::new();

    // DL user front end: distortion is ξ̄_UE^DL times the input power.
    let mut r = rng(seed, 2000);
    let inst = random_instance(3, 2, 2, vec![2, 2], hw, &mut r);
    let eff = inst.eff();
    let k_users = inst.cfg.n_dl_users;
    let mut acc = vec![0.0; k_users];
    for _ in 0..samples {
        let x = bs_transmit(&inst.state, &hw, &mut r);
        let xs: Vec<C64> = (0..inst.cfg.n_ul_users)
            .map(|l| ue_transmit(inst.state.rho(l), &hw, &mut r))
            .collect();
        for (k, a) in acc.iter_mut().enumerate() {
            let mut y = eff.h_bar[k].dotc(&x);
            for (l, xl) in xs.iter().enumerate() {
                y += eff.f_bar[(k, l)] * xl;
            }
            *a += y.norm_sqr();
        }
    }
    let worst = (0..k_users)
        .map(|k| {
            let mc = hw.ue_dl_bar() * acc[k] / samples as f64;
            relative(mc, dl_distortion_variance(k, &inst.state, &eff, &inst.cfg))
        })
        .fold(0.0, f64::max);
    out.push(CheckResult::at_most(
        "DL user distortion variance vs Monte Carlo",
        worst,
        tolerance,
        format!("{samples} samples, max relative error {worst:.3e}"),
    ));

    // BS receiver front end with a single antenna.
    let mut r = rng(seed, 2001);
    let inst = random_instance(1, 2, 2, vec![2, 2], hw, &mut r);
    let eff = inst.eff();
    let sigma = inst.cfg.rsi_variance.sqrt();
    let mut acc = 0.0;
    for _ in 0..samples {
        let x = bs_transmit(&inst.state, &hw, &mut r);
        let h_si = complex_normal(&mut r) * sigma;
        let mut y = h_si * x[0];
        for (l, g) in eff.g_bar.iter().enumerate() {
            y += g[0] * ue_transmit(inst.state.rho(l), &hw, &mut r);
        }
        acc += y.norm_sqr();
    }
    let mc = hw.bs_ul_bar() * acc / samples as f64;
    let rel = relative(mc, ul_distortion_variance(&inst.state, &eff, &inst.cfg));
    out.push(CheckResult::at_most(
        "BS receiver distortion variance vs Monte Carlo",
        rel,
        tolerance,
        format!("{samples} samples, relative error {rel:.3e}"),
    ));

    // RSI through a combiner: ideal hardware with four antennas, then an
    // impaired BS transmitter with one antenna.
    let rsi_cases = [
        (4, HardwareQuality::IDEAL),
        (
            1,
            HardwareQuality {
                xi_bs_ul: 1.0,
                ..hw
            },
        ),
    ];
    let mut worst: f64 = 0.0;
    for (case, (n_tx, case_hw)) in rsi_cases.into_iter().enumerate() {
        let mut r = rng(seed, 2002 + case as u64);
        let inst = random_instance(n_tx, 2, 1, vec![2], case_hw, &mut r);
        let sigma = inst.cfg.rsi_variance.sqrt();
        let u = &inst.state.u[0];
        let mut acc = 0.0;
        for _ in 0..samples {
            let x = bs_transmit(&inst.state, &case_hw, &mut r);
            let h_si =
                fdirs_core::CMatrix::from_fn(n_tx, n_tx, |_, _| complex_normal(&mut r) * sigma);
            acc += u.dotc(&(h_si * x)).norm_sqr();
        }
        let rel = relative(acc / samples as f64, rsi_power(u, &inst.state, &inst.cfg));
        worst = worst.max(rel);
    }
    out.push(CheckResult::at_most(
        "average RSI power vs Monte Carlo",
        worst,
        tolerance,
        format!("{samples} samples per case, max relative error {worst:.3e}"),
    ));
    out
}

fn subproblem_for(inst: &Instance) -> fdirs_core::Result<BeamformerSubproblem> {
    let eff = inst.eff();
    let state = initial_state(&eff, &inst.cfg)?;
    let state = SolverState {
        mu_dl: inst.state.mu_dl.clone(),
        mu_ul: inst.state.mu_ul.clone(),
        ..state
    };
    build_beamformer_subproblem(&state, &eff, &inst.cfg)
}

/// `J(λ)` is strictly decreasing on a log grid; a binding budget is met to
/// `1e-6` relative; and `J(λ_max) ≤ P` for the closed-form upper bound.
pub fn bisection_check(seed: u64, instances: usize) -> CheckResult {
    const NAME: &str = "power function and bisection";
    let mut worst_residual: f64 = 0.0;
    for i in 0..instances {
        let mut rng = rng(seed, 3000 + i as u64);
        let inst = random_instance(
            3,
            2,
            2,
            vec![2, 2],
            HardwareQuality::uniform(0.95),
            &mut rng,
        );
        let sub = match subproblem_for(&inst) {
            Ok(s) => s,
            Err(e) => return CheckResult::failed(NAME, 1e-6, format!("instance {i}: {e}")),
        };
        let lam_ref = lambda_upper_bound(&sub, inst.cfg.p_max_bs);
        let grid: Vec<f64> = (0..200)
            .map(|j| lam_ref * 10f64.powf(-6.0 + 7.0 * j as f64 / 199.0))
            .collect();
        let js: Vec<f64> = grid.iter().map(|&l| j_of_lambda(&sub, l)).collect();
        if let Some(j) = js.windows(2).position(|w| w[1] >= w[0]) {
            return CheckResult::failed(
                NAME,
                1e-6,
                format!("instance {i}: J not decreasing at λ = {:e}", grid[j]),
            );
        }
        for p in [inst.cfg.p_max_bs, 0.5 * j_of_lambda(&sub, 1e-3 * lam_ref)] {
            let lam_max = lambda_upper_bound(&sub, p);
            if j_of_lambda(&sub, lam_max) > p {
                return CheckResult::failed(
                    NAME,
                    1e-6,
                    format!("instance {i}: J(λ_max) exceeds P = {p}"),
                );
            }
            let sol = match solve_beamformer(&sub, p, 1e-14) {
                Ok(s) => s,
                Err(e) => return CheckResult::failed(NAME, 1e-6, format!("instance {i}: {e}")),
            };
            let power: f64 = sol.w.iter().map(|w| w.norm_squared()).sum();
            if sol.lambda > 0.0 {
                worst_residual = worst_residual.max((power - p).abs() / p);
            } else if power > p * (1.0 + 1e-12) {
                return CheckResult::failed(
                    NAME,
                    1e-6,
                    format!("instance {i}: unconstrained solution over budget"),
                );
            }
        }
    }
    CheckResult::at_most(
        NAME,
        worst_residual,
        1e-6,
        format!("{instances} instances, worst binding-power residual {worst_residual:.3e}"),
    )
}

/// Value of the beamformer quadratic `w^H A w − 2 Re(rhs^H w)`.
fn quadratic(sub: &BeamformerSubproblem, w: &CVector) -> f64 {
    (w.dotc(&(&sub.a_matrix * w)) - 2.0 * sub.rhs[0].dotc(w)).re
}

/// Exhaustive search for the single-user, two-antenna quadratic: the
/// direction `(cos θ, sin θ e^{jφ₁}) e^{jφ₀}` is gridded with `n` points
/// per angle and the radius solved exactly along each direction.
fn grid_minimum(sub: &BeamformerSubproblem, p_max: f64, n: usize) -> f64 {
    let a = &sub.a_matrix;
    let b = &sub.rhs[0];
    let r_max = p_max.sqrt();
    let mut best = 0.0f64;
    for it in 0..=n {
        let theta = 0.5 * PI * it as f64 / n as f64;
        let (c, s) = (theta.cos(), theta.sin());
        for i1 in 0..n {
            let e1 = C64::from_polar(s, TAU * i1 as f64 / n as f64);
            let base = CVector::from_vec(vec![C64::from(c), e1]);
            let curv = base.dotc(&(a * &base)).re;
            let lin0 = b.dotc(&base);
            for i0 in 0..n {
                let lin = (lin0 * C64::from_polar(1.0, TAU * i0 as f64 / n as f64)).re;
                let r = if curv > 0.0 {
                    (lin / curv).clamp(0.0, r_max)
                } else if lin > 0.0 {
                    r_max
                } else {
                    0.0
                };
                best = best.min(r * r * curv - 2.0 * r * lin);
            }
        }
    }
    best
}

/// Beamformer solution against exhaustive search on `N_t = 2, K = 1,
/// L = 1` instances, half with a binding budget. Metric: worst relative
/// objective excess of the solver over the grid.
pub fn beamformer_grid_check(seed: u64, instances: usize, resolution: usize) -> CheckResult {
    const NAME: &str = "beamformer vs grid search";
    let mut worst: f64 = f64::NEG_INFINITY;
    for i in 0..instances {
        let mut rng = rng(seed, 4000 + i as u64);
        let inst = random_instance(2, 1, 1, vec![2], HardwareQuality::uniform(0.9), &mut rng);
        let sub = match subproblem_for(&inst) {
            Ok(s) => s,
            Err(e) => return CheckResult::failed(NAME, 1e-3, format!("instance {i}: {e}")),
        };
        let free_power = j_of_lambda(&sub, 0.0);
        let p = if i % 2 == 0 {
            inst.cfg.p_max_bs
        } else {
            0.3 * free_power.min(inst.cfg.p_max_bs)
        };
        let sol = match solve_beamformer(&sub, p, 1e-14) {
            Ok(s) => s,
            Err(e) => return CheckResult::failed(NAME, 1e-3, format!("instance {i}: {e}")),
        };
        let solver = quadratic(&sub, &sol.w[0]);
        let grid = grid_minimum(&sub, p, resolution);
        worst = worst.max((solver - grid) / grid.abs().max(1e-300));
    }
    CheckResult::at_most(
        NAME,
        worst,
        1e-3,
        format!(
            "{instances} instances, {resolution}³ directions, worst relative excess {worst:.3e}"
        ),
    )
}

/// The weighted-MSE objective never increases, after any block update or
/// any full iteration, with slack `1e-9 · max(|objective|, 1)`.
pub fn algorithm1_monotonicity_check(seed: u64, instances: usize) -> CheckResult {
    const NAME: &str = "WMMSE objective monotone per block";
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut blocks = 0;
    for i in 0..instances {
        let mut rng = rng(seed, 5000 + i as u64);
        let xi = if i % 2 == 0 { 1.0 } else { 0.9 };
        let inst = random_instance(3, 2, 3, vec![2, 3], HardwareQuality::uniform(xi), &mut rng);
        let eff = inst.eff();
        let opts = Algorithm1Options {
            eps1: 1e-9,
            max_iter: 60,
            trace_blocks: true,
            ..Default::default()
        };
        let report = match run_algorithm1(&inst.state, &eff, &inst.cfg, &opts) {
            Ok(r) => r,
            Err(e) => return CheckResult::failed(NAME, 1e-9, format!("instance {i}: {e}")),
        };
        let series = report.block_trace.iter().map(|b| b.1).collect::<Vec<_>>();
        for trace in [&series, &report.objective_trace] {
            for w in trace.windows(2) {
                worst = worst.max((w[1] - w[0]) / w[0].abs().max(1.0));
            }
        }
        blocks += series.len();
    }
    CheckResult::at_most(
        NAME,
        worst.max(0.0),
        1e-9,
        format!(
            "{instances} instances, {blocks} block updates, worst relative increase {:.3e}",
            worst.max(0.0)
        ),
    )
}
