//! Random channel realizations from a planar scenario geometry.
//!
//! Links that involve an IRS are Rician (a steering-vector line-of-sight
//! component plus Rayleigh scattering); the direct BS↔user and user↔user
//! links are Rayleigh. Every link is scaled by the square root of its
//! large-scale gain `PL(d) = −35.6 − 10 α log10(d)` dB.

use std::f64::consts::TAU;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{ChannelSet, SystemConfig};
use crate::{CMatrix, CVector, Error, Result, C64};

/// A point in the plane, in meters.
pub type Point = [f64; 2];

/// Path-loss exponents per link class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossExponents {
    /// BS ↔ IRS.
    pub bs_irs: f64,
    /// IRS ↔ user.
    pub irs_user: f64,
    /// BS ↔ user.
    pub bs_user: f64,
    /// user ↔ user.
    pub user_user: f64,
}

impl Default for PathLossExponents {
    fn default() -> Self {
        PathLossExponents {
            bs_irs: 2.1,
            irs_user: 2.2,
            bs_user: 4.0,
            user_user: 3.1,
        }
    }
}

/// Where a group of users sits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UserPlacement {
    /// One fixed position per user.
    Fixed { positions: Vec<Point> },
    /// Every user drawn independently and uniformly (by area) in a disk.
    Disk { center: Point, radius: f64 },
}

impl UserPlacement {
    fn validate(&self, name: &str, count: usize) -> Result<()> {
        match self {
            UserPlacement::Fixed { positions } => {
                if positions.len() != count {
                    return Err(Error::dimension(name, count, positions.len()));
                }
                if !positions.iter().flatten().all(|x| x.is_finite()) {
                    return Err(Error::InvalidConfig(format!("{name}: non-finite position")));
                }
            }
            UserPlacement::Disk { center, radius } => {
                if !center.iter().all(|x| x.is_finite()) || !(radius.is_finite() && *radius >= 0.0)
                {
                    return Err(Error::InvalidConfig(format!("{name}: invalid disk")));
                }
            }
        }
        Ok(())
    }

    fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<Point> {
        match self {
            UserPlacement::Fixed { positions } => positions.clone(),
            UserPlacement::Disk { center, radius } => (0..count)
                .map(|_| {
                    let r = radius * rng.random::<f64>().sqrt();
                    let t = TAU * rng.random::<f64>();
                    [center[0] + r * t.cos(), center[1] + r * t.sin()]
                })
                .collect(),
        }
    }
}

/// Planar scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub bs_pos: Point,
    pub irs_pos: Vec<Point>,
    pub dl_users: UserPlacement,
    pub ul_users: UserPlacement,
    pub exponents: PathLossExponents,
    /// Linear Rician factor κ of the IRS links; `f64::INFINITY` gives pure
    /// line of sight.
    pub rician_k: f64,
    /// Element spacing over wavelength, `D/λ`.
    pub antenna_spacing_ratio: f64,
    /// Zero the direct BS↔user links.
    #[serde(default)]
    pub blocked_direct: bool,
}

impl ScenarioGeometry {
    /// Two IRSs at (±100, 0), UL users in a 10 m disk around (−100, 5), DL
    /// users in a 10 m disk around (100, 5), κ = 6 dB, half-wavelength
    /// spacing.
    pub fn reference() -> Self {
        ScenarioGeometry {
            bs_pos: [0.0, 0.0],
            irs_pos: vec![[-100.0, 0.0], [100.0, 0.0]],
            dl_users: UserPlacement::Disk {
                center: [100.0, 5.0],
                radius: 10.0,
            },
            ul_users: UserPlacement::Disk {
                center: [-100.0, 5.0],
                radius: 10.0,
            },
            exponents: PathLossExponents::default(),
            rician_k: crate::units::db_to_linear(6.0),
            antenna_spacing_ratio: 0.5,
            blocked_direct: false,
        }
    }

    pub fn validate(&self, cfg: &SystemConfig) -> Result<()> {
        if self.irs_pos.len() != cfg.n_irs() {
            return Err(Error::dimension("irs_pos", cfg.n_irs(), self.irs_pos.len()));
        }
        self.dl_users.validate("dl_users", cfg.n_dl_users)?;
        self.ul_users.validate("ul_users", cfg.n_ul_users)?;
        let e = &self.exponents;
        if ![e.bs_irs, e.irs_user, e.bs_user, e.user_user]
            .iter()
            .all(|&a| a.is_finite() && a > 0.0)
        {
            return Err(Error::InvalidConfig(
                "path-loss exponents must be positive".into(),
            ));
        }
        if self.rician_k.is_nan() || self.rician_k < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "rician_k = {} must be >= 0",
                self.rician_k
            )));
        }
        if !self.antenna_spacing_ratio.is_finite() {
            return Err(Error::InvalidConfig(
                "antenna_spacing_ratio must be finite".into(),
            ));
        }
        if !self
            .bs_pos
            .iter()
            .chain(self.irs_pos.iter().flatten())
            .all(|x| x.is_finite())
        {
            return Err(Error::InvalidConfig("non-finite BS/IRS position".into()));
        }
        Ok(())
    }
}

/// Identifies an independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed {
    pub seed: u64,
    pub stream: u64,
}

impl RngSeed {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngSeed { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Linear large-scale power gain at distance `d` meters with exponent
/// `alpha`.
pub fn path_loss_gain(d: f64, alpha: f64) -> Result<f64> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "link distance {d} must be positive"
        )));
    }
    let pl_db = -35.6 - 10.0 * alpha * d.log10();
    Ok(10f64.powf(pl_db / 10.0))
}

/// Uniform linear array response; entry `m` is `e^{j2π·ratio·m·sin θ}`.
pub fn steering_vector(n: usize, theta: f64, spacing_ratio: f64) -> CVector {
    let phase = TAU * spacing_ratio * theta.sin();
    CVector::from_fn(n, |m, _| C64::from_polar(1.0, phase * m as f64))
}

/// One circularly-symmetric complex Gaussian sample with unit variance.
pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn rician_weights(kappa: f64) -> (f64, f64) {
    if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    }
}

/// Rician matrix `√(κ/(1+κ)) a_rows(θ_AoA) a_cols(θ_AoD)^H + √(1/(1+κ)) G`
/// with `G` i.i.d. CN(0, 1), at half-wavelength spacing.
pub fn rician_matrix(
    rows: usize,
    cols: usize,
    theta_aoa: f64,
    theta_aod: f64,
    kappa: f64,
    rng: &mut impl Rng,
) -> CMatrix {
    rician_matrix_with_spacing(rows, cols, theta_aoa, theta_aod, kappa, 0.5, rng)
}

pub fn rician_matrix_with_spacing(
    rows: usize,
    cols: usize,
    theta_aoa: f64,
    theta_aod: f64,
    kappa: f64,
    spacing_ratio: f64,
    rng: &mut impl Rng,
) -> CMatrix {
    let (w_los, w_nlos) = rician_weights(kappa);
    let a = steering_vector(rows, theta_aoa, spacing_ratio);
    let b = steering_vector(cols, theta_aod, spacing_ratio);
    // Column-major fill keeps the draw order stable.
    CMatrix::from_fn(rows, cols, |r, c| {
        let nlos = if w_nlos > 0.0 {
            complex_normal(rng)
        } else {
            C64::new(0.0, 0.0)
        };
        a[r] * b[c].conj() * w_los + nlos * w_nlos
    })
}

/// Rician vector `√(κ/(1+κ)) a_len(θ_AoA) + √(1/(1+κ)) g`.
pub fn rician_vector(len: usize, theta_aoa: f64, kappa: f64, rng: &mut impl Rng) -> CVector {
    rician_vector_with_spacing(len, theta_aoa, kappa, 0.5, rng)
}

pub fn rician_vector_with_spacing(
    len: usize,
    theta_aoa: f64,
    kappa: f64,
    spacing_ratio: f64,
    rng: &mut impl Rng,
) -> CVector {
    let (w_los, w_nlos) = rician_weights(kappa);
    let a = steering_vector(len, theta_aoa, spacing_ratio);
    CVector::from_fn(len, |m, _| {
        let nlos = if w_nlos > 0.0 {
            complex_normal(rng)
        } else {
            C64::new(0.0, 0.0)
        };
        a[m] * w_los + nlos * w_nlos
    })
}

fn rayleigh_vector(len: usize, rng: &mut impl Rng) -> CVector {
    CVector::from_fn(len, |_, _| complex_normal(rng))
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

fn amplitude(a: Point, b: Point, alpha: f64, what: &str) -> Result<f64> {
    path_loss_gain(distance(a, b), alpha)
        .map(f64::sqrt)
        .map_err(|e| e.context(what.to_string()))
}

/// Resolved user positions of one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub dl: Vec<Point>,
    pub ul: Vec<Point>,
}

/// Draws one channel realization.
///
/// Draw order: user positions (DL then UL), `H_r` per IRS, `h^s_{k,r}`,
/// `g^s_{l,r}`, `h_k`, `g_l`, then `f_{l,k}`. Angles of arrival and
/// departure are drawn uniformly in `[0, 2π)` per link.
pub fn generate_channels(
    geometry: &ScenarioGeometry,
    cfg: &SystemConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ChannelSet> {
    generate_channels_with_placement(geometry, cfg, rng).map(|(ch, _)| ch)
}

/// As [`generate_channels`], also returning the user positions drawn.
pub fn generate_channels_with_placement(
    geometry: &ScenarioGeometry,
    cfg: &SystemConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(ChannelSet, Placement)> {
    geometry.validate(cfg)?;
    let ex = geometry.exponents;
    let kappa = geometry.rician_k;
    let ratio = geometry.antenna_spacing_ratio;
    let placement = Placement {
        dl: geometry.dl_users.draw(cfg.n_dl_users, rng),
        ul: geometry.ul_users.draw(cfg.n_ul_users, rng),
    };
    let bs = geometry.bs_pos;
    let angle = |rng: &mut ChaCha8Rng| TAU * rng.random::<f64>();

    let mut h_bs_irs = Vec::with_capacity(cfg.n_irs());
    for (r, (&irs, &m)) in geometry.irs_pos.iter().zip(&cfg.irs_sizes).enumerate() {
        let amp = amplitude(bs, irs, ex.bs_irs, &format!("BS-IRS {r}"))?;
        let (aoa, aod) = (angle(rng), angle(rng));
        h_bs_irs.push(
            rician_matrix_with_spacing(m, cfg.n_tx, aoa, aod, kappa, ratio, rng) * C64::from(amp),
        );
    }
    let irs_links = |users: &[Point],
                     tag: &str,
                     rng: &mut ChaCha8Rng|
     -> Result<Vec<Vec<CVector>>> {
        users
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                geometry
                    .irs_pos
                    .iter()
                    .zip(&cfg.irs_sizes)
                    .enumerate()
                    .map(|(r, (&irs, &m))| {
                        let amp =
                            amplitude(irs, pos, ex.irs_user, &format!("IRS {r} - {tag} user {i}"))?;
                        let aoa = angle(rng);
                        Ok(rician_vector_with_spacing(m, aoa, kappa, ratio, rng) * C64::from(amp))
                    })
                    .collect()
            })
            .collect()
    };
    let h_irs_dl = irs_links(&placement.dl, "DL", rng)?;
    let g_irs_ul = irs_links(&placement.ul, "UL", rng)?;

    let direct = |users: &[Point], tag: &str, rng: &mut ChaCha8Rng| -> Result<Vec<CVector>> {
        users
            .iter()
            .enumerate()
            .map(|(i, &pos)| {
                let amp = amplitude(bs, pos, ex.bs_user, &format!("BS - {tag} user {i}"))?;
                Ok(rayleigh_vector(cfg.n_tx, rng) * C64::from(amp))
            })
            .collect()
    };
    let h_direct = direct(&placement.dl, "DL", rng)?;
    let g_direct = direct(&placement.ul, "UL", rng)?;

    let mut f_uu = CMatrix::zeros(cfg.n_dl_users, cfg.n_ul_users);
    for l in 0..cfg.n_ul_users {
        for k in 0..cfg.n_dl_users {
            let amp = amplitude(
                placement.ul[l],
                placement.dl[k],
                ex.user_user,
                &format!("UL user {l} - DL user {k}"),
            )?;
            f_uu[(k, l)] = complex_normal(rng) * amp;
        }
    }

    let channels = ChannelSet {
        h_direct,
        g_direct,
        f_uu,
        h_bs_irs,
        h_irs_dl,
        g_irs_ul,
    };
    let channels = if geometry.blocked_direct {
        channels.with_blocked_direct()
    } else {
        channels
    };
    Ok((channels, placement))
}
