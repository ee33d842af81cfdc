//! Domain types and closed-form physical-layer expressions.
//!
//! Conventions: `h_k` is the BS→DL-user-k channel, `g_l` the UL-user-l→BS
//! channel, `f_{l,k}` the UL-user-l→DL-user-k channel. IRS `r` has `M_r`
//! elements; `H_r` (M_r×N_t) is the BS↔IRS channel, `h^s_{k,r}` and
//! `g^s_{l,r}` the IRS↔user channels. With `v = e^{jφ}` the reflection
//! vector, the phase-composed channels are
//!
//! ```text
//! h̄_k^H   = h_k^H + Σ_n conj(ĥ_k[n]) v_n Ĥ[n,:]
//! ḡ_l     = g_l   + Ĥ^H (v ⊙ ĝ_l)
//! f̄_{l,k} = f_{l,k} + Σ_n conj(ĥ_k[n]) v_n ĝ_l[n]
//! ```
//!
//! All powers are linear watts. Conjugation is always explicit.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Result, C64};

/// Smallest SINR denominator accepted before the configuration is
/// considered corrupted.
pub const DENOMINATOR_FLOOR: f64 = 1e-300;

/// Transceiver hardware quality factors. A factor `ξ` passes `ξ` of the
/// input power undistorted and turns `1 - ξ` into additive Gaussian
/// distortion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareQuality {
    pub xi_ue_dl: f64,
    pub xi_ue_ul: f64,
    pub xi_bs_dl: f64,
    pub xi_bs_ul: f64,
}

impl HardwareQuality {
    pub const IDEAL: HardwareQuality = HardwareQuality {
        xi_ue_dl: 1.0,
        xi_ue_ul: 1.0,
        xi_bs_dl: 1.0,
        xi_bs_ul: 1.0,
    };

    /// Same factor on every chain.
    pub fn uniform(xi: f64) -> Self {
        HardwareQuality {
            xi_ue_dl: xi,
            xi_ue_ul: xi,
            xi_bs_dl: xi,
            xi_bs_ul: xi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, xi) in [
            ("xi_ue_dl", self.xi_ue_dl),
            ("xi_ue_ul", self.xi_ue_ul),
            ("xi_bs_dl", self.xi_bs_dl),
            ("xi_bs_ul", self.xi_bs_ul),
        ] {
            if !(0.0..=1.0).contains(&xi) {
                return Err(Error::InvalidConfig(format!(
                    "{name} = {xi} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn ue_dl_bar(&self) -> f64 {
        1.0 - self.xi_ue_dl
    }

    pub fn ue_ul_bar(&self) -> f64 {
        1.0 - self.xi_ue_ul
    }

    pub fn bs_dl_bar(&self) -> f64 {
        1.0 - self.xi_bs_dl
    }

    pub fn bs_ul_bar(&self) -> f64 {
        1.0 - self.xi_bs_ul
    }

    /// Bracket multiplying `σ̂² |u|² Σ|w|²` in the average RSI power:
    /// `ξ_BS^UL + ξ_BS^DL − ξ_BS^UL ξ_BS^DL + ξ̄_BS^UL ξ̄_BS^DL N_t`.
    pub fn rsi_factor(&self, n_tx: usize) -> f64 {
        self.xi_bs_ul + self.xi_bs_dl - self.xi_bs_ul * self.xi_bs_dl
            + self.bs_ul_bar() * self.bs_dl_bar() * n_tx as f64
    }
}

impl Default for HardwareQuality {
    fn default() -> Self {
        Self::IDEAL
    }
}

/// Scalar system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_dl_users: usize,
    pub n_ul_users: usize,
    /// Element count of each IRS, in IRS order.
    pub irs_sizes: Vec<usize>,
    pub p_max_bs: f64,
    pub p_max_ul: Vec<f64>,
    pub noise_dl: f64,
    pub noise_ul: f64,
    /// Per-element variance of the residual self-interference channel.
    pub rsi_variance: f64,
    pub hw: HardwareQuality,
    pub alpha_dl: f64,
    pub alpha_ul: f64,
    pub beta_dl: Vec<f64>,
    pub beta_ul: Vec<f64>,
}

impl SystemConfig {
    /// The reference parameter set: 4 BS antennas, 2 DL and 3 UL users,
    /// 35 dBm BS budget, 11 dBm per UL user, −100/−110 dBm noise at the
    /// DL users/BS, −95 dBm RSI channel variance, unit weights, ideal
    /// hardware.
    pub fn table1(irs_sizes: Vec<usize>) -> Self {
        use crate::units::dbm_to_watts;
        let (k, l) = (2, 3);
        SystemConfig {
            n_tx: 4,
            n_dl_users: k,
            n_ul_users: l,
            irs_sizes,
            p_max_bs: dbm_to_watts(35.0),
            p_max_ul: vec![dbm_to_watts(11.0); l],
            noise_dl: dbm_to_watts(-100.0),
            noise_ul: dbm_to_watts(-110.0),
            rsi_variance: dbm_to_watts(-95.0),
            hw: HardwareQuality::IDEAL,
            alpha_dl: 1.0,
            alpha_ul: 1.0,
            beta_dl: vec![1.0; k],
            beta_ul: vec![1.0; l],
        }
    }

    pub fn n_irs(&self) -> usize {
        self.irs_sizes.len()
    }

    /// Total number of reflecting elements `M = Σ M_r`.
    pub fn total_irs_elements(&self) -> usize {
        self.irs_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n_tx == 0 {
            return bad("n_tx must be positive".into());
        }
        if self.irs_sizes.is_empty() {
            return bad("irs_sizes must not be empty".into());
        }
        if self.irs_sizes.contains(&0) {
            return bad("every IRS needs at least one element".into());
        }
        if self.p_max_ul.len() != self.n_ul_users {
            return bad(format!(
                "p_max_ul has {} entries for {} UL users",
                self.p_max_ul.len(),
                self.n_ul_users
            ));
        }
        if self.beta_dl.len() != self.n_dl_users || self.beta_ul.len() != self.n_ul_users {
            return bad("beta_dl/beta_ul lengths must match the user counts".into());
        }
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        if !finite_nonneg(self.p_max_bs) || !self.p_max_ul.iter().all(|&p| finite_nonneg(p)) {
            return bad("power budgets must be finite and nonnegative".into());
        }
        if !(self.noise_dl.is_finite() && self.noise_dl > 0.0)
            || !(self.noise_ul.is_finite() && self.noise_ul > 0.0)
        {
            return bad("noise powers must be finite and positive".into());
        }
        if !finite_nonneg(self.rsi_variance) {
            return bad("rsi_variance must be finite and nonnegative".into());
        }
        if !finite_nonneg(self.alpha_dl)
            || !finite_nonneg(self.alpha_ul)
            || !self
                .beta_dl
                .iter()
                .chain(&self.beta_ul)
                .all(|&b| finite_nonneg(b))
        {
            return bad("rate weights must be finite and nonnegative".into());
        }
        self.hw.validate()
    }

    /// Same system with the uplink removed (half-duplex downlink slot).
    pub fn downlink_only(&self) -> Self {
        SystemConfig {
            n_ul_users: 0,
            p_max_ul: Vec::new(),
            beta_ul: Vec::new(),
            ..self.clone()
        }
    }

    /// Same system with the downlink removed (half-duplex uplink slot).
    /// Without a downlink transmission there is no self-interference.
    pub fn uplink_only(&self) -> Self {
        SystemConfig {
            n_dl_users: 0,
            beta_dl: Vec::new(),
            rsi_variance: 0.0,
            ..self.clone()
        }
    }
}

/// One realization of every raw channel in the system.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// `h_k`, one length-N_t vector per DL user.
    pub h_direct: Vec<CVector>,
    /// `g_l`, one length-N_t vector per UL user.
    pub g_direct: Vec<CVector>,
    /// UL→DL user channels, K×L with entry `(k, l) = f_{l,k}`.
    pub f_uu: CMatrix,
    /// `H_r` (M_r×N_t) per IRS.
    pub h_bs_irs: Vec<CMatrix>,
    /// `h^s_{k,r}` indexed `[k][r]`.
    pub h_irs_dl: Vec<Vec<CVector>>,
    /// `g^s_{l,r}` indexed `[l][r]`.
    pub g_irs_ul: Vec<Vec<CVector>>,
}

impl ChannelSet {
    /// All-zero channels with the shapes implied by `cfg`.
    pub fn zeros(cfg: &SystemConfig) -> Self {
        let n = cfg.n_tx;
        ChannelSet {
            h_direct: vec![CVector::zeros(n); cfg.n_dl_users],
            g_direct: vec![CVector::zeros(n); cfg.n_ul_users],
            f_uu: CMatrix::zeros(cfg.n_dl_users, cfg.n_ul_users),
            h_bs_irs: cfg
                .irs_sizes
                .iter()
                .map(|&m| CMatrix::zeros(m, n))
                .collect(),
            h_irs_dl: vec![
                cfg.irs_sizes.iter().map(|&m| CVector::zeros(m)).collect();
                cfg.n_dl_users
            ],
            g_irs_ul: vec![
                cfg.irs_sizes.iter().map(|&m| CVector::zeros(m)).collect();
                cfg.n_ul_users
            ],
        }
    }

    pub fn n_tx(&self) -> usize {
        self.h_bs_irs.first().map_or(0, |h| h.ncols())
    }

    pub fn n_dl_users(&self) -> usize {
        self.h_direct.len()
    }

    pub fn n_ul_users(&self) -> usize {
        self.g_direct.len()
    }

    pub fn irs_sizes(&self) -> Vec<usize> {
        self.h_bs_irs.iter().map(|h| h.nrows()).collect()
    }

    pub fn total_irs_elements(&self) -> usize {
        self.h_bs_irs.iter().map(|h| h.nrows()).sum()
    }

    /// Checks every block against the shapes implied by `cfg` and that all
    /// entries are finite.
    pub fn check(&self, cfg: &SystemConfig) -> Result<()> {
        let n = cfg.n_tx;
        let (k, l) = (cfg.n_dl_users, cfg.n_ul_users);
        if self.h_bs_irs.len() != cfg.n_irs() {
            return Err(Error::dimension(
                "h_bs_irs",
                cfg.n_irs(),
                self.h_bs_irs.len(),
            ));
        }
        for (r, (h, &m)) in self.h_bs_irs.iter().zip(&cfg.irs_sizes).enumerate() {
            if h.shape() != (m, n) {
                return Err(Error::dimension(
                    format!("h_bs_irs[{r}]"),
                    format!("{m}x{n}"),
                    format!("{}x{}", h.nrows(), h.ncols()),
                ));
            }
        }
        let check_vecs = |name: &str, vs: &[CVector], count: usize, len: usize| -> Result<()> {
            if vs.len() != count {
                return Err(Error::dimension(name, count, vs.len()));
            }
            for (i, v) in vs.iter().enumerate() {
                if v.len() != len {
                    return Err(Error::dimension(format!("{name}[{i}]"), len, v.len()));
                }
            }
            Ok(())
        };
        check_vecs("h_direct", &self.h_direct, k, n)?;
        check_vecs("g_direct", &self.g_direct, l, n)?;
        if self.f_uu.shape() != (k, l) {
            return Err(Error::dimension(
                "f_uu",
                format!("{k}x{l}"),
                format!("{}x{}", self.f_uu.nrows(), self.f_uu.ncols()),
            ));
        }
        let check_irs = |name: &str, blocks: &[Vec<CVector>], count: usize| -> Result<()> {
            if blocks.len() != count {
                return Err(Error::dimension(name, count, blocks.len()));
            }
            for (i, per_irs) in blocks.iter().enumerate() {
                if per_irs.len() != cfg.n_irs() {
                    return Err(Error::dimension(
                        format!("{name}[{i}]"),
                        cfg.n_irs(),
                        per_irs.len(),
                    ));
                }
                for (r, (v, &m)) in per_irs.iter().zip(&cfg.irs_sizes).enumerate() {
                    if v.len() != m {
                        return Err(Error::dimension(format!("{name}[{i}][{r}]"), m, v.len()));
                    }
                }
            }
            Ok(())
        };
        check_irs("h_irs_dl", &self.h_irs_dl, k)?;
        check_irs("g_irs_ul", &self.g_irs_ul, l)?;

        let finite = |z: &C64| z.re.is_finite() && z.im.is_finite();
        let all_finite = self
            .h_direct
            .iter()
            .chain(&self.g_direct)
            .all(|v| v.iter().all(finite))
            && self.f_uu.iter().all(finite)
            && self.h_bs_irs.iter().all(|h| h.iter().all(finite))
            && self
                .h_irs_dl
                .iter()
                .chain(&self.g_irs_ul)
                .all(|b| b.iter().all(|v| v.iter().all(finite)));
        if !all_finite {
            return Err(Error::InvalidConfig(
                "channel set contains non-finite entries".into(),
            ));
        }
        Ok(())
    }

    /// `Ĥ`: the BS↔IRS matrices stacked vertically in IRS order (M×N_t).
    pub fn stacked_bs_irs(&self) -> CMatrix {
        let m = self.total_irs_elements();
        let n = self.n_tx();
        let mut out = CMatrix::zeros(m, n);
        let mut row = 0;
        for h in &self.h_bs_irs {
            out.view_mut((row, 0), h.shape()).copy_from(h);
            row += h.nrows();
        }
        out
    }

    /// `ĥ_k`: the IRS→DL-user-k vectors stacked in IRS order.
    pub fn stacked_irs_dl(&self, k: usize) -> CVector {
        stack(&self.h_irs_dl[k])
    }

    /// `ĝ_l`: the UL-user-l→IRS vectors stacked in IRS order.
    pub fn stacked_irs_ul(&self, l: usize) -> CVector {
        stack(&self.g_irs_ul[l])
    }

    /// Copy with every IRS link zeroed; composing it with any phases
    /// yields the direct channels only.
    pub fn without_irs(&self) -> Self {
        let zero_vecs = |b: &Vec<Vec<CVector>>| -> Vec<Vec<CVector>> {
            b.iter()
                .map(|per| per.iter().map(|v| CVector::zeros(v.len())).collect())
                .collect()
        };
        ChannelSet {
            h_bs_irs: self
                .h_bs_irs
                .iter()
                .map(|h| CMatrix::zeros(h.nrows(), h.ncols()))
                .collect(),
            h_irs_dl: zero_vecs(&self.h_irs_dl),
            g_irs_ul: zero_vecs(&self.g_irs_ul),
            ..self.clone()
        }
    }

    /// Copy with direct BS↔user links zeroed (blocked direct channels).
    pub fn with_blocked_direct(&self) -> Self {
        ChannelSet {
            h_direct: self
                .h_direct
                .iter()
                .map(|h| CVector::zeros(h.len()))
                .collect(),
            g_direct: self
                .g_direct
                .iter()
                .map(|g| CVector::zeros(g.len()))
                .collect(),
            ..self.clone()
        }
    }

    /// Drops every UL user.
    pub fn downlink_only(&self) -> Self {
        ChannelSet {
            g_direct: Vec::new(),
            f_uu: CMatrix::zeros(self.n_dl_users(), 0),
            g_irs_ul: Vec::new(),
            ..self.clone()
        }
    }

    /// Drops every DL user.
    pub fn uplink_only(&self) -> Self {
        ChannelSet {
            h_direct: Vec::new(),
            f_uu: CMatrix::zeros(0, self.n_ul_users()),
            h_irs_dl: Vec::new(),
            ..self.clone()
        }
    }
}

fn stack(blocks: &[CVector]) -> CVector {
    CVector::from_iterator(
        blocks.iter().map(|b| b.len()).sum(),
        blocks.iter().flat_map(|b| b.iter().copied()),
    )
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// IRS phase angles (all IRSs stacked) and the matching unit-modulus
/// reflection vector `v_n = e^{jφ_n}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    phi: Vec<f64>,
    v: CVector,
}

impl PhaseVector {
    /// Angles are wrapped into `[0, 2π)`.
    pub fn new(phi: impl IntoIterator<Item = f64>) -> Self {
        let phi: Vec<f64> = phi.into_iter().map(wrap_angle).collect();
        let v = CVector::from_iterator(phi.len(), phi.iter().map(|&p| C64::from_polar(1.0, p)));
        PhaseVector { phi, v }
    }

    pub fn zeros(m: usize) -> Self {
        Self::new(std::iter::repeat_n(0.0, m))
    }

    pub fn len(&self) -> usize {
        self.phi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.phi
    }

    pub fn reflection(&self) -> &CVector {
        &self.v
    }

    /// `Φ + step · direction`, wrapped.
    pub fn stepped(&self, direction: &[f64], step: f64) -> Self {
        Self::new(self.phi.iter().zip(direction).map(|(p, d)| p + step * d))
    }
}

/// Channels after composing the IRS reflections with the direct links.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannels {
    /// `h̄_k` (so that the DL gain is `h̄_k^H w`).
    pub h_bar: Vec<CVector>,
    /// `ḡ_l`.
    pub g_bar: Vec<CVector>,
    /// K×L with entry `(k, l) = f̄_{l,k}`.
    pub f_bar: CMatrix,
}

impl EffectiveChannels {
    pub fn n_dl_users(&self) -> usize {
        self.h_bar.len()
    }

    pub fn n_ul_users(&self) -> usize {
        self.g_bar.len()
    }
}

/// Composes raw channels with the IRS phases.
pub fn compose_effective_channels(
    channels: &ChannelSet,
    phases: &PhaseVector,
) -> Result<EffectiveChannels> {
    let m = channels.total_irs_elements();
    if phases.len() != m {
        return Err(Error::dimension("phases", m, phases.len()));
    }
    let n = channels.n_tx();
    for (i, h) in channels.h_direct.iter().enumerate() {
        if h.len() != n {
            return Err(Error::dimension(format!("h_direct[{i}]"), n, h.len()));
        }
    }
    for (i, g) in channels.g_direct.iter().enumerate() {
        if g.len() != n {
            return Err(Error::dimension(format!("g_direct[{i}]"), n, g.len()));
        }
    }
    if channels.f_uu.shape() != (channels.n_dl_users(), channels.n_ul_users()) {
        return Err(Error::dimension(
            "f_uu",
            format!("{}x{}", channels.n_dl_users(), channels.n_ul_users()),
            format!("{}x{}", channels.f_uu.nrows(), channels.f_uu.ncols()),
        ));
    }
    let stacked_len = |name: &str, blocks: &[Vec<CVector>]| -> Result<()> {
        for (i, per) in blocks.iter().enumerate() {
            let len: usize = per.iter().map(|b| b.len()).sum();
            if len != m || per.len() != channels.h_bs_irs.len() {
                return Err(Error::dimension(format!("{name}[{i}]"), m, len));
            }
        }
        Ok(())
    };
    stacked_len("h_irs_dl", &channels.h_irs_dl)?;
    stacked_len("g_irs_ul", &channels.g_irs_ul)?;

    let v = phases.reflection();
    let big_h = channels.stacked_bs_irs();
    let big_h_adj = big_h.adjoint();
    let h_hat: Vec<CVector> = (0..channels.n_dl_users())
        .map(|k| channels.stacked_irs_dl(k))
        .collect();
    let g_hat: Vec<CVector> = (0..channels.n_ul_users())
        .map(|l| channels.stacked_irs_ul(l))
        .collect();

    // h̄_k = h_k + Ĥ^H (conj(v) ⊙ ĥ_k)
    let h_bar = channels
        .h_direct
        .iter()
        .zip(&h_hat)
        .map(|(h, hh)| h + &big_h_adj * v.map(|x| x.conj()).component_mul(hh))
        .collect();
    // ḡ_l = g_l + Ĥ^H (v ⊙ ĝ_l)
    let g_bar = channels
        .g_direct
        .iter()
        .zip(&g_hat)
        .map(|(g, gh)| g + &big_h_adj * v.component_mul(gh))
        .collect();
    let f_bar = CMatrix::from_fn(channels.n_dl_users(), channels.n_ul_users(), |k, l| {
        let reflected: C64 = (0..m)
            .map(|n| h_hat[k][n].conj() * v[n] * g_hat[l][n])
            .sum();
        channels.f_uu[(k, l)] + reflected
    });
    Ok(EffectiveChannels {
        h_bar,
        g_bar,
        f_bar,
    })
}

/// Transceiver variables shared by the WMMSE solver and the phase
/// optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// DL beamformers `w_k`.
    pub w: Vec<CVector>,
    /// UL combiners `u_l`.
    pub u: Vec<CVector>,
    /// DL decoding scalars `u_{1,k}`.
    pub u1: Vec<C64>,
    /// UL amplitudes `p_l`, with transmit power `ρ_l = p_l²`.
    pub p: Vec<f64>,
    pub mu_dl: Vec<f64>,
    pub mu_ul: Vec<f64>,
}

impl SolverState {
    /// Zero transceivers, unit MSE weights.
    pub fn zeros(cfg: &SystemConfig) -> Self {
        SolverState {
            w: vec![CVector::zeros(cfg.n_tx); cfg.n_dl_users],
            u: vec![CVector::zeros(cfg.n_tx); cfg.n_ul_users],
            u1: vec![C64::new(0.0, 0.0); cfg.n_dl_users],
            p: vec![0.0; cfg.n_ul_users],
            mu_dl: vec![1.0; cfg.n_dl_users],
            mu_ul: vec![1.0; cfg.n_ul_users],
        }
    }

    pub fn rho(&self, l: usize) -> f64 {
        self.p[l] * self.p[l]
    }

    /// `Σ_k |w_k|²`.
    pub fn bs_power(&self) -> f64 {
        self.w.iter().map(|w| w.norm_squared()).sum()
    }

    /// Checks the power budgets and weight positivity.
    pub fn check_feasible(&self, cfg: &SystemConfig) -> Result<()> {
        if self.bs_power() > cfg.p_max_bs * (1.0 + 1e-9) {
            return Err(Error::InvalidArgument(format!(
                "BS power {} exceeds budget {}",
                self.bs_power(),
                cfg.p_max_bs
            )));
        }
        for (l, (&p, &pmax)) in self.p.iter().zip(&cfg.p_max_ul).enumerate() {
            if p < 0.0 || p > pmax.sqrt() * (1.0 + 1e-12) {
                return Err(Error::InvalidArgument(format!(
                    "UL amplitude p[{l}] = {p} is infeasible"
                )));
            }
        }
        if self
            .mu_dl
            .iter()
            .chain(&self.mu_ul)
            .any(|&m| m <= 0.0 || !m.is_finite())
        {
            return Err(Error::InvalidArgument(
                "MSE weights must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Operation counts accumulated by the solvers, for complexity reporting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// Linear solves (one per UL combiner update).
    pub linear_solves: u64,
    /// Hermitian eigendecompositions (one per beamformer update).
    pub eigendecompositions: u64,
    /// Evaluations of the bisection function `J(λ)`.
    pub bisection_steps: u64,
    /// Full phase-gradient evaluations.
    pub gradient_evals: u64,
    /// Phase-objective evaluations, including line-search trials.
    pub objective_evals: u64,
}

impl OpCounters {
    pub fn merge(&mut self, other: &OpCounters) {
        self.linear_solves += other.linear_solves;
        self.eigendecompositions += other.eigendecompositions;
        self.bisection_steps += other.bisection_steps;
        self.gradient_evals += other.gradient_evals;
        self.objective_evals += other.objective_evals;
    }
}

/// Received-power bookkeeping for DL user `k`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct DlTerms {
    /// `|h̄_k^H w_k|²`
    pub desired: f64,
    /// `Σ_{i≠k} |h̄_k^H w_i|²`
    pub other_beams: f64,
    /// `|h̄_k|² Σ_i |w_i|²`
    pub norm_times_power: f64,
    /// `Σ_l |f̄_{l,k}|² ρ_l`
    pub ul_interference: f64,
}

impl DlTerms {
    pub fn new(k: usize, state: &SolverState, eff: &EffectiveChannels) -> Self {
        let h = &eff.h_bar[k];
        let mut desired = 0.0;
        let mut other_beams = 0.0;
        for (i, w) in state.w.iter().enumerate() {
            let g = h.dotc(w).norm_sqr();
            if i == k {
                desired = g;
            } else {
                other_beams += g;
            }
        }
        let ul_interference = (0..eff.n_ul_users())
            .map(|l| eff.f_bar[(k, l)].norm_sqr() * state.rho(l))
            .sum();
        DlTerms {
            desired,
            other_beams,
            norm_times_power: h.norm_squared() * state.bs_power(),
            ul_interference,
        }
    }

    /// `E|input|²` at the DL user front end (before its own distortion).
    pub fn input_power(&self, hw: &HardwareQuality) -> f64 {
        hw.xi_bs_dl * (self.desired + self.other_beams)
            + hw.bs_dl_bar() * self.norm_times_power
            + self.ul_interference
    }
}

/// Received-power bookkeeping for UL user `l` under combiner `u_l`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct UlTerms {
    /// `|u_l^H ḡ_l|² ρ_l`
    pub desired: f64,
    /// `Σ_{j≠l} |u_l^H ḡ_j|² ρ_j`
    pub other_users: f64,
    /// `|u_l|²`
    pub combiner_norm: f64,
    /// `Σ_j |ḡ_j|² ρ_j`
    pub total_ul_power: f64,
}

impl UlTerms {
    pub fn new(l: usize, u: &CVector, state: &SolverState, eff: &EffectiveChannels) -> Self {
        let mut desired = 0.0;
        let mut other_users = 0.0;
        let mut total_ul_power = 0.0;
        for (j, g) in eff.g_bar.iter().enumerate() {
            let rho = state.rho(j);
            let gain = u.dotc(g).norm_sqr() * rho;
            if j == l {
                desired = gain;
            } else {
                other_users += gain;
            }
            total_ul_power += g.norm_squared() * rho;
        }
        UlTerms {
            desired,
            other_users,
            combiner_norm: u.norm_squared(),
            total_ul_power,
        }
    }
}

/// Distortion variance at DL user `k`:
/// `ξ̄_UE^DL (ξ_BS^DL Σ_i |h̄_k^H w_i|² + ξ̄_BS^DL |h̄_k|² Σ_i |w_i|² + Σ_l |f̄_{l,k}|² ρ_l)`.
pub fn dl_distortion_variance(
    k: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> f64 {
    cfg.hw.ue_dl_bar() * DlTerms::new(k, state, eff).input_power(&cfg.hw)
}

/// Per-antenna distortion variance of the BS receiver:
/// `ξ̄_BS^UL (Σ_j |ḡ_j|² ρ_j + σ̂² Σ_i |w_i|² (ξ_BS^DL + ξ̄_BS^DL N_t))`.
pub fn ul_distortion_variance(
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> f64 {
    let ul_power: f64 = eff
        .g_bar
        .iter()
        .enumerate()
        .map(|(j, g)| g.norm_squared() * state.rho(j))
        .sum();
    let hw = &cfg.hw;
    let rsi =
        cfg.rsi_variance * state.bs_power() * (hw.xi_bs_dl + hw.bs_dl_bar() * cfg.n_tx as f64);
    hw.bs_ul_bar() * (ul_power + rsi)
}

/// Average residual self-interference power seen through combiner `u_l`.
pub fn rsi_power(u_l: &CVector, state: &SolverState, cfg: &SystemConfig) -> f64 {
    cfg.rsi_variance * u_l.norm_squared() * state.bs_power() * cfg.hw.rsi_factor(cfg.n_tx)
}

fn guarded_ratio(num: f64, den: f64, what: &str) -> Result<f64> {
    if den.is_nan() || den < DENOMINATOR_FLOOR || !num.is_finite() {
        return Err(Error::Numerical(format!(
            "{what}: SINR denominator {den:e} is not positive"
        )));
    }
    Ok(num / den)
}

/// DL SINR `γ_k`.
pub fn dl_sinr(
    k: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> Result<f64> {
    let hw = &cfg.hw;
    let t = DlTerms::new(k, state, eff);
    let num = hw.xi_ue_dl * hw.xi_bs_dl * t.desired;
    let den = hw.xi_bs_dl * t.other_beams
        + hw.ue_dl_bar() * hw.xi_bs_dl * t.desired
        + hw.bs_dl_bar() * t.norm_times_power
        + t.ul_interference
        + cfg.noise_dl;
    guarded_ratio(num, den, &format!("DL user {k}"))
}

/// UL SINR `γ_l` under the combiner stored in `state`.
pub fn ul_sinr(
    l: usize,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> Result<f64> {
    ul_sinr_with(l, &state.u[l], state, eff, cfg)
}

/// UL SINR of user `l` for an arbitrary combiner.
pub fn ul_sinr_with(
    l: usize,
    u: &CVector,
    state: &SolverState,
    eff: &EffectiveChannels,
    cfg: &SystemConfig,
) -> Result<f64> {
    let hw = &cfg.hw;
    let norm = u.norm();
    if norm == 0.0 {
        // A zero combiner receives nothing.
        return Ok(0.0);
    }
    // The SINR is invariant to the combiner scale; normalizing keeps the
    // denominator away from underflow when a user is nearly switched off.
    let u = &(u / C64::from(norm));
    let t = UlTerms::new(l, u, state, eff);
    let num = hw.xi_ue_ul * hw.xi_bs_ul * t.desired;
    let den = hw.xi_bs_ul * t.other_users
        + hw.ue_ul_bar() * hw.xi_bs_ul * t.desired
        + t.combiner_norm * hw.bs_ul_bar() * t.total_ul_power
        + rsi_power(u, state, cfg)
        + cfg.noise_ul * t.combiner_norm;
    guarded_ratio(num, den, &format!("UL user {l}"))
}

/// Per-user achievable rates in bits per channel use.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub dl: Vec<f64>,
    pub ul: Vec<f64>,
}

impl Rates {
    pub fn dl_sum(&self) -> f64 {
        self.dl.iter().sum()
    }

    pub fn ul_sum(&self) -> f64 {
        self.ul.iter().sum()
    }

    /// `α_1 Σ_k β_k R_k + α_2 Σ_l β_l R_l`.
    pub fn weighted_sum(&self, cfg: &SystemConfig) -> f64 {
        let dl: f64 = self.dl.iter().zip(&cfg.beta_dl).map(|(r, b)| r * b).sum();
        let ul: f64 = self.ul.iter().zip(&cfg.beta_ul).map(|(r, b)| r * b).sum();
        cfg.alpha_dl * dl + cfg.alpha_ul * ul
    }
}

pub fn rates(state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> Result<Rates> {
    let dl = (0..eff.n_dl_users())
        .map(|k| dl_sinr(k, state, eff, cfg).map(|g| g.ln_1p() / std::f64::consts::LN_2))
        .collect::<Result<_>>()?;
    let ul = (0..eff.n_ul_users())
        .map(|l| ul_sinr(l, state, eff, cfg).map(|g| g.ln_1p() / std::f64::consts::LN_2))
        .collect::<Result<_>>()?;
    Ok(Rates { dl, ul })
}

/// System weighted sum-rate in bpcu.
pub fn swsr(state: &SolverState, eff: &EffectiveChannels, cfg: &SystemConfig) -> Result<f64> {
    Ok(rates(state, eff, cfg)?.weighted_sum(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn randc(rng: &mut impl Rng) -> C64 {
        c(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    }

    fn small_cfg(n_tx: usize, k: usize, l: usize, irs: Vec<usize>) -> SystemConfig {
        SystemConfig {
            n_tx,
            n_dl_users: k,
            n_ul_users: l,
            irs_sizes: irs,
            p_max_bs: 4.0,
            p_max_ul: vec![1.0; l],
            noise_dl: 1.0,
            noise_ul: 1.0,
            rsi_variance: 0.0,
            hw: HardwareQuality::IDEAL,
            alpha_dl: 1.0,
            alpha_ul: 1.0,
            beta_dl: vec![1.0; k],
            beta_ul: vec![1.0; l],
        }
    }

    fn random_channels(cfg: &SystemConfig, rng: &mut impl Rng) -> ChannelSet {
        let mut ch = ChannelSet::zeros(cfg);
        let fill_v =
            |v: &mut CVector, rng: &mut dyn FnMut() -> C64| v.iter_mut().for_each(|x| *x = rng());
        let mut draw = || randc(rng);
        ch.h_direct.iter_mut().for_each(|v| fill_v(v, &mut draw));
        ch.g_direct.iter_mut().for_each(|v| fill_v(v, &mut draw));
        ch.f_uu.iter_mut().for_each(|x| *x = draw());
        ch.h_bs_irs
            .iter_mut()
            .for_each(|h| h.iter_mut().for_each(|x| *x = draw()));
        ch.h_irs_dl
            .iter_mut()
            .flatten()
            .for_each(|v| fill_v(v, &mut draw));
        ch.g_irs_ul
            .iter_mut()
            .flatten()
            .for_each(|v| fill_v(v, &mut draw));
        ch
    }

    fn random_state(cfg: &SystemConfig, rng: &mut impl Rng) -> SolverState {
        let mut s = SolverState::zeros(cfg);
        s.w.iter_mut()
            .flat_map(|w| w.iter_mut())
            .for_each(|x| *x = randc(rng));
        s.u.iter_mut()
            .flat_map(|u| u.iter_mut())
            .for_each(|x| *x = randc(rng));
        s.p.iter_mut().for_each(|p| *p = rng.random::<f64>());
        s
    }

    #[test]
    fn zero_irs_gives_direct_channels() {
        let cfg = small_cfg(3, 2, 2, vec![2, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = random_channels(&cfg, &mut rng).without_irs();
        let phases = PhaseVector::new((0..5).map(|i| i as f64 * 0.7));
        let eff = compose_effective_channels(&ch, &phases).unwrap();
        assert_eq!(eff.h_bar, ch.h_direct);
        assert_eq!(eff.g_bar, ch.g_direct);
        assert_eq!(eff.f_bar, ch.f_uu);
    }

    #[test]
    fn identity_phases_sum_per_irs_products() {
        let cfg = small_cfg(2, 1, 1, vec![2, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = random_channels(&cfg, &mut rng);
        let eff = compose_effective_channels(&ch, &PhaseVector::zeros(3)).unwrap();
        // h̄^H = h^H + Σ_r h^s_{k,r}^H H_r
        let mut expect = ch.h_direct[0].adjoint();
        for r in 0..2 {
            expect += ch.h_irs_dl[0][r].adjoint() * &ch.h_bs_irs[r];
        }
        assert!((eff.h_bar[0].adjoint() - expect).norm() < 1e-14);
    }

    #[test]
    fn compose_matches_elementwise_loop() {
        // M = 2 (single IRS), N_t = 2, K = L = 1; independent per-element loop.
        let cfg = small_cfg(2, 1, 1, vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = random_channels(&cfg, &mut rng);
        let phi = [0.4, 2.9];
        let eff = compose_effective_channels(&ch, &PhaseVector::new(phi)).unwrap();
        let h = &ch.h_bs_irs[0];
        let hs = &ch.h_irs_dl[0][0];
        let gs = &ch.g_irs_ul[0][0];
        for a in 0..2 {
            // conj of (h̄^H)[a]
            let mut hbar_h = ch.h_direct[0][a].conj();
            let mut gbar = ch.g_direct[0][a];
            for m in 0..2 {
                let e = C64::from_polar(1.0, phi[m]);
                hbar_h += hs[m].conj() * e * h[(m, a)];
                gbar += h[(m, a)].conj() * e * gs[m];
            }
            assert!((eff.h_bar[0][a].conj() - hbar_h).norm() < 1e-14);
            assert!((eff.g_bar[0][a] - gbar).norm() < 1e-14);
        }
        let mut fbar = ch.f_uu[(0, 0)];
        for m in 0..2 {
            fbar += hs[m].conj() * C64::from_polar(1.0, phi[m]) * gs[m];
        }
        assert!((eff.f_bar[(0, 0)] - fbar).norm() < 1e-14);
    }

    #[test]
    fn compose_rejects_bad_shapes() {
        let cfg = small_cfg(2, 1, 1, vec![2]);
        let mut ch = ChannelSet::zeros(&cfg);
        let err = compose_effective_channels(&ch, &PhaseVector::zeros(3)).unwrap_err();
        assert!(err.to_string().contains("phases"));
        ch.g_irs_ul[0][0] = CVector::zeros(1);
        let err = compose_effective_channels(&ch, &PhaseVector::zeros(2)).unwrap_err();
        assert!(err.to_string().contains("g_irs_ul[0]"), "{err}");
        assert!(ch
            .check(&cfg)
            .unwrap_err()
            .to_string()
            .contains("g_irs_ul[0][0]"));
    }

    #[test]
    fn stacked_views_are_block_concatenations() {
        let cfg = small_cfg(2, 2, 1, vec![3, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = random_channels(&cfg, &mut rng);
        let big = ch.stacked_bs_irs();
        assert_eq!(big.rows(0, 3), ch.h_bs_irs[0]);
        assert_eq!(big.rows(3, 2), ch.h_bs_irs[1]);
        let hk = ch.stacked_irs_dl(1);
        assert_eq!(hk.rows(0, 3), ch.h_irs_dl[1][0]);
        assert_eq!(hk.rows(3, 2), ch.h_irs_dl[1][1]);
        let gl = ch.stacked_irs_ul(0);
        assert_eq!(gl.rows(3, 2), ch.g_irs_ul[0][1]);
        assert!(ch.check(&cfg).is_ok());
    }

    #[test]
    fn single_user_ideal_sinrs() {
        let cfg = small_cfg(2, 1, 0, vec![1]);
        let mut ch = ChannelSet::zeros(&cfg);
        ch.h_direct[0] = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let eff = compose_effective_channels(&ch, &PhaseVector::zeros(1)).unwrap();
        let mut s = SolverState::zeros(&cfg);
        s.w[0] = CVector::from_vec(vec![c(2.0, 0.0), c(0.0, 0.0)]);
        assert!((dl_sinr(0, &s, &eff, &cfg).unwrap() - 4.0).abs() < 1e-14);
        s.w[0].fill(c(0.0, 0.0));
        assert_eq!(dl_sinr(0, &s, &eff, &cfg).unwrap(), 0.0);

        let cfg = small_cfg(2, 0, 1, vec![1]);
        let mut ch = ChannelSet::zeros(&cfg);
        ch.g_direct[0] = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let eff = compose_effective_channels(&ch, &PhaseVector::zeros(1)).unwrap();
        let mut s = SolverState::zeros(&cfg);
        s.u[0] = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        s.p[0] = 2f64.sqrt();
        assert!((ul_sinr(0, &s, &eff, &cfg).unwrap() - 2.0).abs() < 1e-14);
        s.p[0] = 0.0;
        assert_eq!(ul_sinr(0, &s, &eff, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn rsi_examples() {
        let mut cfg = small_cfg(4, 1, 1, vec![1]);
        let mut s = SolverState::zeros(&cfg);
        s.w[0] = CVector::from_element(4, c(1.0, 0.0)); // Σ|w|² = 4
        let u = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(rsi_power(&u, &s, &cfg), 0.0);
        cfg.rsi_variance = 0.01;
        assert!((rsi_power(&u, &s, &cfg) - 0.04).abs() < 1e-15);
        cfg.hw = HardwareQuality::uniform(0.9);
        let bracket = 0.9 + 0.9 - 0.81 + 0.01 * 4.0;
        assert!((rsi_power(&u, &s, &cfg) - 0.04 * bracket).abs() < 1e-15);
    }

    #[test]
    fn ideal_hardware_has_no_distortion() {
        let cfg = small_cfg(3, 2, 2, vec![2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channels(&cfg, &mut rng);
        let eff = compose_effective_channels(&ch, &PhaseVector::new([1.0, 2.0])).unwrap();
        let s = random_state(&cfg, &mut rng);
        for k in 0..2 {
            assert_eq!(dl_distortion_variance(k, &s, &eff, &cfg), 0.0);
        }
        let mut cfg2 = cfg.clone();
        cfg2.rsi_variance = 0.3;
        assert_eq!(ul_distortion_variance(&s, &eff, &cfg2), 0.0);

        let mut cfg3 = cfg.clone();
        cfg3.hw = HardwareQuality::uniform(0.8);
        let z = SolverState::zeros(&cfg3);
        assert_eq!(dl_distortion_variance(0, &z, &eff, &cfg3), 0.0);
        assert_eq!(ul_distortion_variance(&z, &eff, &cfg3), 0.0);
    }

    #[test]
    fn dl_sinr_term_by_term() {
        // K = 2, L = 1, impaired hardware; each denominator term recomputed by hand.
        let mut cfg = small_cfg(2, 2, 1, vec![2]);
        cfg.hw = HardwareQuality {
            xi_ue_dl: 0.9,
            xi_ue_ul: 0.85,
            xi_bs_dl: 0.95,
            xi_bs_ul: 0.8,
        };
        cfg.noise_dl = 0.3;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = random_channels(&cfg, &mut rng);
        let eff = compose_effective_channels(&ch, &PhaseVector::new([0.3, 4.0])).unwrap();
        let s = random_state(&cfg, &mut rng);
        for k in 0..2 {
            let h = &eff.h_bar[k];
            let gain = |w: &CVector| {
                let mut acc = c(0.0, 0.0);
                for a in 0..2 {
                    acc += h[a].conj() * w[a];
                }
                acc.norm_sqr()
            };
            let desired = gain(&s.w[k]);
            let mui = gain(&s.w[1 - k]);
            let hnorm: f64 = h.iter().map(|x| x.norm_sqr()).sum();
            let wpow: f64 =
                s.w.iter()
                    .flat_map(|w| w.iter())
                    .map(|x| x.norm_sqr())
                    .sum();
            let t1 = 0.95 * mui;
            let t2 = 0.1 * 0.95 * desired;
            let t3 = 0.05 * hnorm * wpow;
            let t4 = eff.f_bar[(k, 0)].norm_sqr() * s.p[0] * s.p[0];
            let expect = 0.9 * 0.95 * desired / (t1 + t2 + t3 + t4 + 0.3);
            let got = dl_sinr(k, &s, &eff, &cfg).unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
        }
    }

    #[test]
    fn ul_sinr_term_by_term() {
        let mut cfg = small_cfg(3, 1, 2, vec![2]);
        cfg.hw = HardwareQuality {
            xi_ue_dl: 0.9,
            xi_ue_ul: 0.85,
            xi_bs_dl: 0.95,
            xi_bs_ul: 0.8,
        };
        cfg.rsi_variance = 0.2;
        cfg.noise_ul = 0.4;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ch = random_channels(&cfg, &mut rng);
        let eff = compose_effective_channels(&ch, &PhaseVector::new([1.3, 5.0])).unwrap();
        let s = random_state(&cfg, &mut rng);
        for l in 0..2 {
            let u = &s.u[l];
            let proj = |g: &CVector| {
                let mut acc = c(0.0, 0.0);
                for a in 0..3 {
                    acc += u[a].conj() * g[a];
                }
                acc.norm_sqr()
            };
            let rho = |j: usize| s.p[j] * s.p[j];
            let unorm: f64 = u.iter().map(|x| x.norm_sqr()).sum();
            let desired = proj(&eff.g_bar[l]) * rho(l);
            let t1 = 0.8 * proj(&eff.g_bar[1 - l]) * rho(1 - l);
            let t2 = 0.15 * 0.8 * desired;
            let gsum: f64 = (0..2)
                .map(|j| eff.g_bar[j].iter().map(|x| x.norm_sqr()).sum::<f64>() * rho(j))
                .sum();
            let t3 = unorm * 0.2 * gsum;
            let wpow: f64 = s.w[0].iter().map(|x| x.norm_sqr()).sum();
            let t4 = 0.2 * unorm * wpow * (0.8 + 0.95 - 0.8 * 0.95 + 0.2 * 0.05 * 3.0);
            let t5 = 0.4 * unorm;
            let expect = 0.85 * 0.8 * desired / (t1 + t2 + t3 + t4 + t5);
            let got = ul_sinr(l, &s, &eff, &cfg).unwrap();
            assert!((got - expect).abs() <= 1e-12 * expect, "{got} vs {expect}");
        }
    }

    #[test]
    fn swsr_examples() {
        let cfg = small_cfg(1, 1, 0, vec![1]);
        let mut ch = ChannelSet::zeros(&cfg);
        ch.h_direct[0] = CVector::from_element(1, c(1.0, 0.0));
        let eff = compose_effective_channels(&ch, &PhaseVector::zeros(1)).unwrap();
        let mut s = SolverState::zeros(&cfg);
        s.w[0] = CVector::from_element(1, c(3f64.sqrt(), 0.0)); // γ = 3
        assert!((swsr(&s, &eff, &cfg).unwrap() - 2.0).abs() < 1e-14);
        let mut zero = cfg.clone();
        zero.alpha_dl = 0.0;
        zero.alpha_ul = 0.0;
        assert_eq!(swsr(&s, &eff, &zero).unwrap(), 0.0);
    }

    #[test]
    fn swsr_is_weighted_sum_of_rates() {
        let mut cfg = small_cfg(2, 2, 3, vec![2, 2]);
        cfg.alpha_dl = 0.7;
        cfg.alpha_ul = 1.3;
        cfg.beta_dl = vec![0.5, 2.0];
        cfg.beta_ul = vec![1.0, 0.2, 3.0];
        cfg.rsi_variance = 0.05;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ch = random_channels(&cfg, &mut rng);
        let eff = compose_effective_channels(&ch, &PhaseVector::new([0.1, 0.2, 0.3, 0.4])).unwrap();
        let s = random_state(&cfg, &mut rng);
        let mut expect = 0.0;
        for k in 0..2 {
            expect += 0.7 * cfg.beta_dl[k] * (1.0 + dl_sinr(k, &s, &eff, &cfg).unwrap()).log2();
        }
        for l in 0..3 {
            expect += 1.3 * cfg.beta_ul[l] * (1.0 + ul_sinr(l, &s, &eff, &cfg).unwrap()).log2();
        }
        assert!((swsr(&s, &eff, &cfg).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn no_irs_swsr_uses_direct_channels_only() {
        let cfg = small_cfg(2, 2, 2, vec![3]);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ch = random_channels(&cfg, &mut rng);
        let s = random_state(&cfg, &mut rng);
        let eff = compose_effective_channels(&ch.without_irs(), &PhaseVector::new([1.0, 2.0, 3.0]))
            .unwrap();
        let direct = EffectiveChannels {
            h_bar: ch.h_direct.clone(),
            g_bar: ch.g_direct.clone(),
            f_bar: ch.f_uu.clone(),
        };
        assert_eq!(
            swsr(&s, &eff, &cfg).unwrap(),
            swsr(&s, &direct, &cfg).unwrap()
        );
    }

    #[test]
    fn sinr_denominator_guard() {
        let mut cfg = small_cfg(1, 1, 0, vec![1]);
        cfg.noise_dl = 0.0;
        let ch = ChannelSet::zeros(&cfg);
        let eff = compose_effective_channels(&ch, &PhaseVector::zeros(1)).unwrap();
        let s = SolverState::zeros(&cfg);
        assert!(matches!(
            dl_sinr(0, &s, &eff, &cfg),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = SystemConfig::table1(vec![10, 10]);
        assert!(cfg.validate().is_ok());
        assert_eq!(cfg.total_irs_elements(), 20);
        cfg.hw.xi_bs_ul = 1.2;
        assert!(cfg.validate().is_err());
        let mut cfg = SystemConfig::table1(vec![]);
        assert!(cfg.validate().is_err());
        cfg.irs_sizes = vec![4];
        cfg.p_max_ul.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(TAU), 0.0);
        assert_eq!(wrap_angle(-1e-18), 0.0);
        assert!((wrap_angle(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        let p = PhaseVector::new([7.0, -3.0]);
        assert!(p.angles().iter().all(|&a| (0.0..TAU).contains(&a)));
    }

    proptest! {
        #[test]
        fn complement_identity(xi in 0.0f64..=1.0) {
            let hw = HardwareQuality::uniform(xi);
            prop_assert_eq!(hw.xi_ue_dl + hw.ue_dl_bar(), 1.0);
            prop_assert_eq!(hw.xi_bs_ul + hw.bs_ul_bar(), 1.0);
        }

        #[test]
        fn reflection_is_unit_modulus(phi in proptest::collection::vec(-20.0f64..20.0, 1..16)) {
            let p = PhaseVector::new(phi);
            for (v, &a) in p.reflection().iter().zip(p.angles()) {
                prop_assert!((v.norm() - 1.0).abs() < 1e-12);
                prop_assert!((0.0..TAU).contains(&a));
            }
        }

        #[test]
        fn sinrs_finite_and_nonnegative(seed in any::<u64>(), xi in 0.5f64..=1.0) {
            let mut cfg = small_cfg(3, 2, 2, vec![2, 1]);
            cfg.hw = HardwareQuality::uniform(xi);
            cfg.rsi_variance = 0.1;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channels(&cfg, &mut rng);
            let phases = PhaseVector::new((0..3).map(|_| rng.random::<f64>() * TAU));
            let eff = compose_effective_channels(&ch, &phases).unwrap();
            let s = random_state(&cfg, &mut rng);
            for k in 0..2 {
                let g = dl_sinr(k, &s, &eff, &cfg).unwrap();
                prop_assert!(g.is_finite() && g >= 0.0);
                prop_assert!(dl_distortion_variance(k, &s, &eff, &cfg) >= 0.0);
            }
            for l in 0..2 {
                let g = ul_sinr(l, &s, &eff, &cfg).unwrap();
                prop_assert!(g.is_finite() && g >= 0.0);
            }
            prop_assert!(ul_distortion_variance(&s, &eff, &cfg) >= 0.0);
        }

        #[test]
        fn dl_sinr_increases_with_desired_gain(seed in any::<u64>(), scale in 1.01f64..5.0) {
            // Scaling w_k's component along h̄_k raises |h̄_k^H w_k|²; with the
            // other terms pinned the SINR must grow.
            let mut cfg = small_cfg(2, 1, 1, vec![1]);
            cfg.hw = HardwareQuality { xi_ue_dl: 0.9, ..HardwareQuality::IDEAL };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = random_channels(&cfg, &mut rng);
            let eff = compose_effective_channels(&ch, &PhaseVector::zeros(1)).unwrap();
            let mut s = random_state(&cfg, &mut rng);
            s.w[0] = eff.h_bar[0].clone();
            let g0 = dl_sinr(0, &s, &eff, &cfg).unwrap();
            s.w[0] *= C64::new(scale, 0.0);
            let g1 = dl_sinr(0, &s, &eff, &cfg).unwrap();
            prop_assert!(g1 > g0);
        }

        #[test]
        fn compose_is_linear_in_each_block(seed in any::<u64>()) {
            // The effective channel is affine in (direct, IRS-user) blocks for
            // fixed H_r: compose(a + b) − compose(a) − compose(b) + compose(0) = 0.
            let cfg = small_cfg(2, 1, 1, vec![2, 1]);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_channels(&cfg, &mut rng);
            let mut b = random_channels(&cfg, &mut rng);
            b.h_bs_irs = a.h_bs_irs.clone();
            let mut sum = a.clone();
            sum.h_direct[0] += &b.h_direct[0];
            sum.g_direct[0] += &b.g_direct[0];
            sum.f_uu += &b.f_uu;
            for r in 0..2 {
                sum.h_irs_dl[0][r] += &b.h_irs_dl[0][r];
                sum.g_irs_ul[0][r] += &b.g_irs_ul[0][r];
            }
            let mut zero = ChannelSet::zeros(&cfg);
            zero.h_bs_irs = a.h_bs_irs.clone();
            let phases = PhaseVector::new((0..3).map(|_| rng.random::<f64>() * TAU));
            let e = |ch: &ChannelSet| compose_effective_channels(ch, &phases).unwrap();
            let (es, ea, eb, ez) = (e(&sum), e(&a), e(&b), e(&zero));
            let dh = &es.h_bar[0] - &ea.h_bar[0] - &eb.h_bar[0] + &ez.h_bar[0];
            let dg = &es.g_bar[0] - &ea.g_bar[0] - &eb.g_bar[0] + &ez.g_bar[0];
            // f̄ is bilinear in (h^s, g^s), so it is checked per block instead.
            prop_assert!(dh.norm() < 1e-12);
            prop_assert!(dg.norm() < 1e-12);
        }
    }
}
