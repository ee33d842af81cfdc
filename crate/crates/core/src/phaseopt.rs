//! IRS phase optimization by gradient ascent.
//!
//! With the transceivers `{w, u, p}` held fixed, every squared magnitude in
//! the SINRs is a real quadratic form in the reflection vector `v = e^{jΦ}`:
//!
//! ```text
//! q(v) = Σ_{u,t} v_u G_{ut} conj(v_t) + 2 Re(Σ_u l_u v_u) + c
//! ∂q/∂φ_n = 2 Re( j v_n ( (G v̄)_n − G_nn conj(v_n) + l_n ) )
//! ```
//!
//! The five term families are
//!
//! * `B_{k,i} = |h̄_k^H w_i|²`
//! * `Q_k     = |h̄_k|²`
//! * `C_{l,k} = |f̄_{l,k}|² ρ_l`
//! * `B̃_{l,j} = |u_l^H ḡ_j|² ρ_j`
//! * `T_j     = |ḡ_j|² ρ_j`
//!
//! Their coefficients are cached once per transceiver update and reused by
//! every ascent step. Phases move freely on the real line and are wrapped
//! into `[0, 2π)`, so the unit-modulus constraint never binds.

use std::f64::consts::LN_2;

use crate::model::{ChannelSet, OpCounters, PhaseVector, SolverState, SystemConfig};
use crate::{CMatrix, CVector, Error, Result, C64};

const J: C64 = C64::new(0.0, 1.0);

/// A real quadratic form in the reflection vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    /// Hermitian M×M coefficient matrix.
    pub gram: CMatrix,
    pub lin: CVector,
    pub constant: f64,
}

impl QuadForm {
    /// `|c + Σ_n a_n v_n|²`.
    pub fn scalar(c: C64, a: &CVector) -> Self {
        QuadForm {
            gram: a * a.adjoint(),
            lin: a * c.conj(),
            constant: c.norm_sqr(),
        }
    }

    pub fn len(&self) -> usize {
        self.lin.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lin.is_empty()
    }

    pub fn value(&self, v: &CVector) -> f64 {
        let gv = &self.gram * v.map(|z| z.conj());
        let quad: C64 = v.iter().zip(gv.iter()).map(|(a, b)| a * b).sum();
        let lin: C64 = self.lin.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
        quad.re + 2.0 * lin.re + self.constant
    }

    /// Value and the partials with respect to every phase.
    pub fn value_and_gradient(&self, v: &CVector) -> (f64, Vec<f64>) {
        let vc = v.map(|z| z.conj());
        let gv = &self.gram * &vc;
        let mut quad = C64::new(0.0, 0.0);
        let mut lin = C64::new(0.0, 0.0);
        let mut grad = Vec::with_capacity(v.len());
        for n in 0..v.len() {
            quad += v[n] * gv[n];
            lin += self.lin[n] * v[n];
            let off_diag = gv[n] - self.gram[(n, n)] * vc[n];
            grad.push(2.0 * (J * v[n] * (off_diag + self.lin[n])).re);
        }
        (quad.re + 2.0 * lin.re + self.constant, grad)
    }

    /// Partial with respect to `φ_n` only.
    pub fn derivative(&self, v: &CVector, n: usize) -> f64 {
        let mut acc = self.lin[n];
        for t in 0..v.len() {
            if t != n {
                acc += self.gram[(n, t)] * v[t].conj();
            }
        }
        2.0 * (J * v[n] * acc).re
    }
}

/// Identifies one cached term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermRef {
    /// `B_{k,i}`
    B(usize, usize),
    /// `Q_k`
    Q(usize),
    /// `C_{l,k}`
    C(usize, usize),
    /// `B̃_{l,j}`
    BTilde(usize, usize),
    /// `T_j`
    T(usize),
}

/// Quadratic-form coefficients for fixed transceivers, plus the scalar
/// constants of the SINR expressions.
#[derive(Debug, Clone)]
pub struct QuadraticTermCache {
    /// `B_{k,i}`, indexed `[k][i]`.
    pub b: Vec<Vec<QuadForm>>,
    /// `Q_k`.
    pub q: Vec<QuadForm>,
    /// `C_{l,k}`, indexed `[l][k]`.
    pub c: Vec<Vec<QuadForm>>,
    /// `B̃_{l,j}`, indexed `[l][j]`, for the unit-norm combiner `u_l/|u_l|`.
    pub b_tilde: Vec<Vec<QuadForm>>,
    /// `T_j`.
    pub t: Vec<QuadForm>,
    /// `ξ_UE^DL ξ_BS^DL`
    pub f1: f64,
    /// `ξ̄_UE^DL ξ_BS^DL`
    pub f2: f64,
    /// `ξ̄_BS^DL Σ_i |w_i|²`
    pub f3: f64,
    /// `ξ_UE^UL ξ_BS^UL`
    pub e1: f64,
    /// `ξ̄_UE^UL ξ_BS^UL`
    pub e2: f64,
    /// `ξ̄_BS^UL |u_l|²` per UL user.
    pub e3: Vec<f64>,
    /// `RSI(u_l) + σ_UL² |u_l|²` per UL user.
    pub e4: Vec<f64>,
    pub xi_bs_dl: f64,
    pub xi_bs_ul: f64,
    pub noise_dl: f64,
    m: usize,
}

impl QuadraticTermCache {
    pub fn n_elements(&self) -> usize {
        self.m
    }

    pub fn term(&self, which: TermRef) -> &QuadForm {
        match which {
            TermRef::B(k, i) => &self.b[k][i],
            TermRef::Q(k) => &self.q[k],
            TermRef::C(l, k) => &self.c[l][k],
            TermRef::BTilde(l, j) => &self.b_tilde[l][j],
            TermRef::T(j) => &self.t[j],
        }
    }
}

/// Builds every coefficient from the raw channels and the transceivers.
pub fn build_cache(
    state: &SolverState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
) -> Result<QuadraticTermCache> {
    let (k_users, l_users) = (channels.n_dl_users(), channels.n_ul_users());
    if state.w.len() != k_users || state.u1.len() != k_users {
        return Err(Error::dimension("state.w", k_users, state.w.len()));
    }
    if state.u.len() != l_users || state.p.len() != l_users {
        return Err(Error::dimension("state.u", l_users, state.u.len()));
    }
    let n = channels.n_tx();
    for (name, v) in state
        .w
        .iter()
        .map(|w| ("state.w[]", w))
        .chain(state.u.iter().map(|u| ("state.u[]", u)))
    {
        if v.len() != n {
            return Err(Error::dimension(name, n, v.len()));
        }
    }
    // SINRs do not depend on the combiner scale; unit combiners keep the
    // cached magnitudes well inside floating-point range.
    let unit_u: Vec<CVector> = state
        .u
        .iter()
        .map(|u| {
            let n = u.norm();
            if n > 0.0 {
                u / C64::from(n)
            } else {
                u.clone()
            }
        })
        .collect();
    let big_h = channels.stacked_bs_irs();
    let m = big_h.nrows();
    let h_hat: Vec<CVector> = (0..k_users).map(|k| channels.stacked_irs_dl(k)).collect();
    let g_hat: Vec<CVector> = (0..l_users).map(|l| channels.stacked_irs_ul(l)).collect();
    if h_hat.iter().chain(&g_hat).any(|v| v.len() != m) {
        return Err(Error::dimension("IRS-user channels", m, "mismatched"));
    }
    // P = Ĥ Ĥ^H
    let p_mat = &big_h * big_h.adjoint();
    let hw = &cfg.hw;

    let hw_prods: Vec<CVector> = state.w.iter().map(|w| &big_h * w).collect();
    let b = (0..k_users)
        .map(|k| {
            (0..k_users)
                .map(|i| {
                    let a = h_hat[k].map(|z| z.conj()).component_mul(&hw_prods[i]);
                    QuadForm::scalar(channels.h_direct[k].dotc(&state.w[i]), &a)
                })
                .collect()
        })
        .collect();

    // Q_k: G_ut = conj(ĥ_u) ĥ_t P_ut, l_u = conj(ĥ_u) (Ĥ h_k)_u.
    let q = (0..k_users)
        .map(|k| {
            let hh = &h_hat[k];
            let gram = CMatrix::from_fn(m, m, |u, t| hh[u].conj() * hh[t] * p_mat[(u, t)]);
            let hk = &big_h * &channels.h_direct[k];
            let lin = CVector::from_fn(m, |u, _| hh[u].conj() * hk[u]);
            QuadForm {
                gram,
                lin,
                constant: channels.h_direct[k].norm_squared(),
            }
        })
        .collect();

    let c = (0..l_users)
        .map(|l| {
            let sqrt_rho = state.p[l];
            (0..k_users)
                .map(|k| {
                    let a =
                        h_hat[k].map(|z| z.conj()).component_mul(&g_hat[l]) * C64::from(sqrt_rho);
                    QuadForm::scalar(channels.f_uu[(k, l)] * sqrt_rho, &a)
                })
                .collect()
        })
        .collect();

    let hu_prods: Vec<CVector> = unit_u.iter().map(|u| &big_h * u).collect();
    let b_tilde = (0..l_users)
        .map(|l| {
            (0..l_users)
                .map(|j| {
                    let sqrt_rho = state.p[j];
                    let z = hu_prods[l].map(|x| x.conj()).component_mul(&g_hat[j])
                        * C64::from(sqrt_rho);
                    QuadForm::scalar(unit_u[l].dotc(&channels.g_direct[j]) * sqrt_rho, &z)
                })
                .collect()
        })
        .collect();

    // T_j: G_ut = ρ ĝ_u conj(ĝ_t) P_tu, l_u = ρ ĝ_u conj((Ĥ g_j)_u).
    let t = (0..l_users)
        .map(|j| {
            let rho = state.rho(j);
            let gh = &g_hat[j];
            let gram = CMatrix::from_fn(m, m, |u, t| gh[u] * gh[t].conj() * p_mat[(t, u)] * rho);
            let hg = &big_h * &channels.g_direct[j];
            let lin = CVector::from_fn(m, |u, _| gh[u] * hg[u].conj() * rho);
            QuadForm {
                gram,
                lin,
                constant: rho * channels.g_direct[j].norm_squared(),
            }
        })
        .collect();

    let bs_power = state.bs_power();
    let rsi_coeff = cfg.rsi_variance * bs_power * hw.rsi_factor(cfg.n_tx);
    Ok(QuadraticTermCache {
        b,
        q,
        c,
        b_tilde,
        t,
        f1: hw.xi_ue_dl * hw.xi_bs_dl,
        f2: hw.ue_dl_bar() * hw.xi_bs_dl,
        f3: hw.bs_dl_bar() * bs_power,
        e1: hw.xi_ue_ul * hw.xi_bs_ul,
        e2: hw.ue_ul_bar() * hw.xi_bs_ul,
        e3: unit_u
            .iter()
            .map(|u| hw.bs_ul_bar() * u.norm_squared())
            .collect(),
        e4: unit_u
            .iter()
            .map(|u| (rsi_coeff + cfg.noise_ul) * u.norm_squared())
            .collect(),
        xi_bs_dl: hw.xi_bs_dl,
        xi_bs_ul: hw.xi_bs_ul,
        noise_dl: cfg.noise_dl,
        m,
    })
}

/// Values of every term at one phase configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TermValues {
    pub b: Vec<Vec<f64>>,
    pub q: Vec<f64>,
    pub c: Vec<Vec<f64>>,
    pub b_tilde: Vec<Vec<f64>>,
    pub t: Vec<f64>,
}

fn check_len(cache: &QuadraticTermCache, phases: &PhaseVector) -> Result<()> {
    if phases.len() != cache.m {
        return Err(Error::dimension("phases", cache.m, phases.len()));
    }
    Ok(())
}

pub fn eval_terms(cache: &QuadraticTermCache, phases: &PhaseVector) -> Result<TermValues> {
    check_len(cache, phases)?;
    let v = phases.reflection();
    let row = |forms: &Vec<QuadForm>| forms.iter().map(|f| f.value(v)).collect::<Vec<_>>();
    Ok(TermValues {
        b: cache.b.iter().map(row).collect(),
        q: row(&cache.q),
        c: cache.c.iter().map(row).collect(),
        b_tilde: cache.b_tilde.iter().map(row).collect(),
        t: row(&cache.t),
    })
}

/// Analytic partial of one term with respect to `φ_n`.
pub fn term_derivative(
    cache: &QuadraticTermCache,
    phases: &PhaseVector,
    n: usize,
    which: TermRef,
) -> Result<f64> {
    check_len(cache, phases)?;
    if n >= cache.m {
        return Err(Error::InvalidArgument(format!(
            "element {n} out of range 0..{}",
            cache.m
        )));
    }
    Ok(cache.term(which).derivative(phases.reflection(), n))
}

/// Numerator and denominator of one SINR with their phase gradients.
struct Ratio {
    num: f64,
    den: f64,
    d_num: Vec<f64>,
    d_den: Vec<f64>,
}

impl Ratio {
    fn zero(m: usize) -> Self {
        Ratio {
            num: 0.0,
            den: 0.0,
            d_num: vec![0.0; m],
            d_den: vec![0.0; m],
        }
    }

    fn add_num(&mut self, scale: f64, (val, grad): &(f64, Vec<f64>)) {
        self.num += scale * val;
        self.d_num
            .iter_mut()
            .zip(grad)
            .for_each(|(d, g)| *d += scale * g);
    }

    fn add_den(&mut self, scale: f64, (val, grad): &(f64, Vec<f64>)) {
        self.den += scale * val;
        self.d_den
            .iter_mut()
            .zip(grad)
            .for_each(|(d, g)| *d += scale * g);
    }

    /// `log2(1 + N/D)`, or 0 when nothing is received.
    fn rate(&self) -> f64 {
        if self.den <= 0.0 {
            0.0
        } else {
            (self.num / self.den).ln_1p() / LN_2
        }
    }

    /// `∂ log2(1 + N/D) = ((N' + D')/(N + D) − D'/D) / ln 2`.
    fn rate_gradient(&self) -> Vec<f64> {
        if self.den <= 0.0 {
            return vec![0.0; self.d_num.len()];
        }
        let total = self.num + self.den;
        self.d_num
            .iter()
            .zip(&self.d_den)
            .map(|(dn, dd)| ((dn + dd) / total - dd / self.den) / LN_2)
            .collect()
    }
}

fn sinr_parts(
    cache: &QuadraticTermCache,
    v: &CVector,
    want_grad: bool,
) -> (Vec<Ratio>, Vec<Ratio>) {
    let m = cache.m;
    let eval = |f: &QuadForm| {
        if want_grad {
            f.value_and_gradient(v)
        } else {
            (f.value(v), Vec::new())
        }
    };
    let mut dl = Vec::with_capacity(cache.q.len());
    for k in 0..cache.q.len() {
        let mut r = Ratio::zero(if want_grad { m } else { 0 });
        for i in 0..cache.b[k].len() {
            let term = eval(&cache.b[k][i]);
            if i == k {
                r.add_num(cache.f1, &term);
                r.add_den(cache.f2, &term);
            } else {
                r.add_den(cache.xi_bs_dl, &term);
            }
        }
        r.add_den(cache.f3, &eval(&cache.q[k]));
        for l in 0..cache.c.len() {
            r.add_den(1.0, &eval(&cache.c[l][k]));
        }
        r.den += cache.noise_dl;
        dl.push(r);
    }
    let t_terms: Vec<_> = cache.t.iter().map(eval).collect();
    let mut ul = Vec::with_capacity(cache.t.len());
    for l in 0..cache.t.len() {
        let mut r = Ratio::zero(if want_grad { m } else { 0 });
        for j in 0..cache.b_tilde[l].len() {
            let term = eval(&cache.b_tilde[l][j]);
            if j == l {
                r.add_num(cache.e1, &term);
                r.add_den(cache.e2, &term);
            } else {
                r.add_den(cache.xi_bs_ul, &term);
            }
        }
        for t in &t_terms {
            r.add_den(cache.e3[l], t);
        }
        r.den += cache.e4[l];
        ul.push(r);
    }
    (dl, ul)
}

fn weighted(dl: &[f64], ul: &[f64], cfg: &SystemConfig) -> f64 {
    let d: f64 = dl.iter().zip(&cfg.beta_dl).map(|(r, b)| r * b).sum();
    let u: f64 = ul.iter().zip(&cfg.beta_ul).map(|(r, b)| r * b).sum();
    cfg.alpha_dl * d + cfg.alpha_ul * u
}

/// The SWSR as a function of the phases, for the cached transceivers.
pub fn objective_f(
    cache: &QuadraticTermCache,
    phases: &PhaseVector,
    cfg: &SystemConfig,
) -> Result<f64> {
    check_len(cache, phases)?;
    let (dl, ul) = sinr_parts(cache, phases.reflection(), false);
    let dl: Vec<f64> = dl.iter().map(Ratio::rate).collect();
    let ul: Vec<f64> = ul.iter().map(Ratio::rate).collect();
    Ok(weighted(&dl, &ul, cfg))
}

/// Per-user gradients, one row per user and one column per phase.
pub type RateGradients = (Vec<Vec<f64>>, Vec<Vec<f64>>);

/// Per-user rate gradients: `dl[k][n] = ∂R_k/∂φ_n`, `ul[l][n] = ∂R_l/∂φ_n`.
pub fn rate_gradients(cache: &QuadraticTermCache, phases: &PhaseVector) -> Result<RateGradients> {
    check_len(cache, phases)?;
    let (dl, ul) = sinr_parts(cache, phases.reflection(), true);
    Ok((
        dl.iter().map(Ratio::rate_gradient).collect(),
        ul.iter().map(Ratio::rate_gradient).collect(),
    ))
}

/// `(∂R_k/∂φ_n for every k, ∂R_l/∂φ_n for every l)`.
pub fn rate_partials(
    cache: &QuadraticTermCache,
    phases: &PhaseVector,
    n: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n >= cache.m {
        return Err(Error::InvalidArgument(format!(
            "element {n} out of range 0..{}",
            cache.m
        )));
    }
    let (dl, ul) = rate_gradients(cache, phases)?;
    Ok((
        dl.iter().map(|g| g[n]).collect(),
        ul.iter().map(|g| g[n]).collect(),
    ))
}

/// Objective value and `∇F`, evaluated together.
pub fn objective_and_gradient(
    cache: &QuadraticTermCache,
    phases: &PhaseVector,
    cfg: &SystemConfig,
) -> Result<(f64, Vec<f64>)> {
    check_len(cache, phases)?;
    let (dl, ul) = sinr_parts(cache, phases.reflection(), true);
    let value = weighted(
        &dl.iter().map(Ratio::rate).collect::<Vec<_>>(),
        &ul.iter().map(Ratio::rate).collect::<Vec<_>>(),
        cfg,
    );
    let mut grad = vec![0.0; cache.m];
    for (k, r) in dl.iter().enumerate() {
        let s = cfg.alpha_dl * cfg.beta_dl[k];
        grad.iter_mut()
            .zip(r.rate_gradient())
            .for_each(|(g, d)| *g += s * d);
    }
    for (l, r) in ul.iter().enumerate() {
        let s = cfg.alpha_ul * cfg.beta_ul[l];
        grad.iter_mut()
            .zip(r.rate_gradient())
            .for_each(|(g, d)| *g += s * d);
    }
    Ok((value, grad))
}

/// `∇F = α_1 Σ_k β_k ∇R_k + α_2 Σ_l β_l ∇R_l`.
pub fn gradient(
    cache: &QuadraticTermCache,
    phases: &PhaseVector,
    cfg: &SystemConfig,
) -> Result<Vec<f64>> {
    objective_and_gradient(cache, phases, cfg).map(|(_, g)| g)
}

/// Backtracking parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmijoParams {
    pub eta0: f64,
    pub shrink: f64,
    pub c: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        ArmijoParams {
            eta0: 1.0,
            shrink: 0.5,
            c: 1e-4,
            max_backtracks: 40,
        }
    }
}

/// Outcome of one line search.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearch {
    /// Accepted step, or 0 if none satisfied the condition.
    pub step: f64,
    /// Objective at the accepted point (the start value when `step == 0`).
    pub value: f64,
    pub evaluations: u64,
}

/// Largest `η = η0 · shrink^t` with `F(Φ + ηd) ≥ F(Φ) + c η |d|²` and a
/// strict increase in `F`.
pub fn armijo_line_search(
    f: impl Fn(&PhaseVector) -> Result<f64>,
    phases: &PhaseVector,
    f0: f64,
    direction: &[f64],
    params: &ArmijoParams,
) -> Result<LineSearch> {
    let slope: f64 = direction.iter().map(|d| d * d).sum();
    if slope == 0.0 {
        return Ok(LineSearch {
            step: params.eta0,
            value: f0,
            evaluations: 0,
        });
    }
    let mut eta = params.eta0;
    let mut evaluations = 0;
    for _ in 0..=params.max_backtracks {
        let trial = phases.stepped(direction, eta);
        let value = f(&trial)?;
        evaluations += 1;
        if value >= f0 + params.c * eta * slope && value > f0 {
            return Ok(LineSearch {
                step: eta,
                value,
                evaluations,
            });
        }
        eta *= params.shrink;
    }
    Ok(LineSearch {
        step: 0.0,
        value: f0,
        evaluations,
    })
}

/// Ascent knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    /// Stop once `|∇F| < eps2`.
    pub eps2: f64,
    pub max_iter: usize,
    pub armijo: ArmijoParams,
    /// Seed each line search with the Barzilai-Borwein step instead of `eta0`.
    pub barzilai_borwein: bool,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions {
            eps2: 1e-4,
            max_iter: 500,
            armijo: ArmijoParams::default(),
            barzilai_borwein: true,
        }
    }
}

/// Outcome of [`gradient_ascent`].
#[derive(Debug, Clone)]
pub struct AscentReport {
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub gradient_norm: f64,
    pub steps: Vec<f64>,
    pub phases: PhaseVector,
    /// True when the gradient norm fell below `eps2`.
    pub converged: bool,
    pub counters: OpCounters,
}

/// Steepest ascent with Armijo backtracking on a fixed cache.
pub fn gradient_ascent(
    cache: &QuadraticTermCache,
    phases0: &PhaseVector,
    cfg: &SystemConfig,
    opts: &AscentOptions,
) -> Result<AscentReport> {
    let mut counters = OpCounters::default();
    let mut phases = phases0.clone();
    let (mut value, mut grad) = objective_and_gradient(cache, &phases, cfg)?;
    counters.gradient_evals += 1;
    counters.objective_evals += 1;
    let mut trace = vec![value];
    let mut steps = Vec::new();
    let mut iterations = 0;
    let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut converged = norm(&grad) < opts.eps2;
    let mut armijo = opts.armijo;
    while !converged && iterations < opts.max_iter {
        let f = |p: &PhaseVector| objective_f(cache, p, cfg);
        let ls = armijo_line_search(f, &phases, value, &grad, &armijo)?;
        counters.objective_evals += ls.evaluations;
        if ls.step == 0.0 {
            break;
        }
        iterations += 1;
        phases = phases.stepped(&grad, ls.step);
        steps.push(ls.step);
        let prev_grad = std::mem::take(&mut grad);
        (value, grad) = objective_and_gradient(cache, &phases, cfg)?;
        counters.gradient_evals += 1;
        if opts.barzilai_borwein {
            armijo.eta0 = bb_step(&prev_grad, &grad, ls.step).unwrap_or(opts.armijo.eta0);
        }
        trace.push(value);
        converged = norm(&grad) < opts.eps2;
    }
    Ok(AscentReport {
        iterations,
        objective_trace: trace,
        gradient_norm: norm(&grad),
        steps,
        phases,
        converged,
        counters,
    })
}

/// Barzilai-Borwein step `|s|²/(-s·y)` for `s = η g_prev`, `y = g - g_prev`,
/// capped to `[1e-8, 1e8]`; `None` when the curvature estimate is not negative.
fn bb_step(prev: &[f64], grad: &[f64], eta: f64) -> Option<f64> {
    let (mut ss, mut sy) = (0.0, 0.0);
    for (gp, g) in prev.iter().zip(grad) {
        let s = eta * gp;
        ss += s * s;
        sy += s * (g - gp);
    }
    (sy < 0.0 && ss > 0.0).then(|| (ss / -sy).clamp(1e-8, 1e8))
}

/// Builds the cache for `state` and runs [`gradient_ascent`].
pub fn optimize_phases(
    channels: &ChannelSet,
    state: &SolverState,
    phases0: &PhaseVector,
    cfg: &SystemConfig,
    opts: &AscentOptions,
) -> Result<AscentReport> {
    let cache = build_cache(state, channels, cfg)?;
    gradient_ascent(&cache, phases0, cfg, opts)
}
