//! Experiment files.
//!
//! An experiment is a TOML document. Powers and noise levels are given in
//! dBm and converted to watts here; nothing downstream sees dBm. Every
//! section is optional and falls back to the `table1` preset (4 BS
//! antennas, 2 DL users, 3 UL users, two 10-element IRSs at (±100, 0)).
//!
//! ```toml
//! kind = "swsr_vs_bs_power"
//! tag = "bs-power"
//! seed = 7
//! trials = 50
//! values = [25.0, 30.0, 35.0, 40.0]
//! schemes = ["1-fd", "2-fd", "3-fd", "1-hd"]
//!
//! [system]
//! irs_sizes = [7, 7]
//! p_max_ul_dbm = 11.0
//!
//! [geometry]
//! rician_k_db = 6.0
//!
//! [solver]
//! eps3 = 1e-3
//!
//! [[variants]]
//! label = "hi"
//! system = { xi = 0.92 }
//! ```

use std::fmt;
use std::path::Path;

use fdirs_core::channelgen::{PathLossExponents, Point, ScenarioGeometry, UserPlacement};
use fdirs_core::model::{HardwareQuality, SystemConfig};
use fdirs_core::orchestrator::{Duplex, PhaseInit, RunOptions, Scheme, Tolerances};
use fdirs_core::units::{db_to_linear, dbm_to_watts};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Experiment family; decides what the `values` grid means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Outer-iteration SWSR traces; no grid.
    Convergence,
    /// Total IRS element count, split evenly over the IRSs.
    SwsrVsIrsSize,
    /// BS power budget in dBm.
    SwsrVsBsPower,
    /// Per-user UL power budget in dBm.
    SwsrVsUlPower,
    /// DL priority `α_DL`; `α_UL = 1 − α_DL`.
    RateRegion,
    /// Random placements, one record per trial; no grid.
    Cdf,
    /// x coordinate of the moving IRS in meters.
    IrsLocation,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::Convergence,
        ExperimentKind::SwsrVsIrsSize,
        ExperimentKind::SwsrVsBsPower,
        ExperimentKind::SwsrVsUlPower,
        ExperimentKind::RateRegion,
        ExperimentKind::Cdf,
        ExperimentKind::IrsLocation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::SwsrVsIrsSize => "swsr_vs_irs_size",
            ExperimentKind::SwsrVsBsPower => "swsr_vs_bs_power",
            ExperimentKind::SwsrVsUlPower => "swsr_vs_ul_power",
            ExperimentKind::RateRegion => "rate_region",
            ExperimentKind::Cdf => "cdf",
            ExperimentKind::IrsLocation => "irs_location",
        }
    }

    /// Header of the coordinate column in the output CSV.
    pub fn coordinate_name(self) -> &'static str {
        match self {
            ExperimentKind::Convergence => "iteration",
            ExperimentKind::SwsrVsIrsSize => "irs_elements",
            ExperimentKind::SwsrVsBsPower => "p_bs_dbm",
            ExperimentKind::SwsrVsUlPower => "p_ul_dbm",
            ExperimentKind::RateRegion => "alpha_dl",
            ExperimentKind::Cdf => "point",
            ExperimentKind::IrsLocation => "irs_x",
        }
    }

    /// Whether the kind sweeps `values`.
    pub fn has_grid(self) -> bool {
        !matches!(self, ExperimentKind::Convergence | ExperimentKind::Cdf)
    }

    pub fn default_trials(self) -> usize {
        match self {
            ExperimentKind::Cdf => 500,
            _ => 50,
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scheme in a duplex mode, written `"<1-4>-<fd|hd>"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SchemeSpec {
    pub scheme: Scheme,
    pub duplex: Duplex,
}

impl SchemeSpec {
    pub fn new(scheme: Scheme, duplex: Duplex) -> Self {
        SchemeSpec { scheme, duplex }
    }
}

impl TryFrom<String> for SchemeSpec {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

impl From<SchemeSpec> for String {
    fn from(s: SchemeSpec) -> String {
        s.to_string()
    }
}

impl std::str::FromStr for SchemeSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("scheme `{s}` is not of the form `<1-4>-<fd|hd>`");
        let (num, duplex) = s.split_once('-').ok_or_else(bad)?;
        let scheme = num
            .parse()
            .ok()
            .and_then(Scheme::from_number)
            .ok_or_else(bad)?;
        let duplex = match duplex.to_ascii_lowercase().as_str() {
            "fd" => Duplex::Full,
            "hd" => Duplex::Half,
            _ => return Err(bad()),
        };
        Ok(SchemeSpec { scheme, duplex })
    }
}

impl fmt::Display for SchemeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.duplex {
            Duplex::Full => "fd",
            Duplex::Half => "hd",
        };
        write!(f, "{}-{d}", self.scheme.number())
    }
}

/// `[system]`: scalar parameters. Unset fields take the `table1` value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub n_tx: Option<usize>,
    pub n_dl_users: Option<usize>,
    pub n_ul_users: Option<usize>,
    pub irs_sizes: Option<Vec<usize>>,
    pub p_max_bs_dbm: Option<f64>,
    /// Same budget for every UL user.
    pub p_max_ul_dbm: Option<f64>,
    pub noise_dl_dbm: Option<f64>,
    pub noise_ul_dbm: Option<f64>,
    pub rsi_variance_dbm: Option<f64>,
    /// Same quality factor on every chain; ignored when `hw` is set.
    pub xi: Option<f64>,
    pub hw: Option<HardwareQuality>,
    pub alpha_dl: Option<f64>,
    pub alpha_ul: Option<f64>,
    pub beta_dl: Option<Vec<f64>>,
    pub beta_ul: Option<Vec<f64>>,
}

impl SystemSection {
    /// Fields set in `over` replace those of `self`.
    fn overlay(&self, over: &SystemSection) -> SystemSection {
        SystemSection {
            n_tx: over.n_tx.or(self.n_tx),
            n_dl_users: over.n_dl_users.or(self.n_dl_users),
            n_ul_users: over.n_ul_users.or(self.n_ul_users),
            irs_sizes: over.irs_sizes.clone().or_else(|| self.irs_sizes.clone()),
            p_max_bs_dbm: over.p_max_bs_dbm.or(self.p_max_bs_dbm),
            p_max_ul_dbm: over.p_max_ul_dbm.or(self.p_max_ul_dbm),
            noise_dl_dbm: over.noise_dl_dbm.or(self.noise_dl_dbm),
            noise_ul_dbm: over.noise_ul_dbm.or(self.noise_ul_dbm),
            rsi_variance_dbm: over.rsi_variance_dbm.or(self.rsi_variance_dbm),
            xi: over.xi.or(self.xi),
            hw: over.hw.or(self.hw),
            alpha_dl: over.alpha_dl.or(self.alpha_dl),
            alpha_ul: over.alpha_ul.or(self.alpha_ul),
            beta_dl: over.beta_dl.clone().or_else(|| self.beta_dl.clone()),
            beta_ul: over.beta_ul.clone().or_else(|| self.beta_ul.clone()),
        }
    }

    pub fn to_config(&self) -> Result<SystemConfig> {
        let k = self.n_dl_users.unwrap_or(2);
        let l = self.n_ul_users.unwrap_or(3);
        let weights = |name: &str, given: &Option<Vec<f64>>, n: usize| match given {
            Some(b) if b.len() != n => Err(HarnessError::Config(format!(
                "{name} has {} entries, expected {n}",
                b.len()
            ))),
            Some(b) => Ok(b.clone()),
            None => Ok(vec![1.0; n]),
        };
        let hw = match (self.hw, self.xi) {
            (Some(hw), _) => hw,
            (None, Some(xi)) => HardwareQuality::uniform(xi),
            (None, None) => HardwareQuality::IDEAL,
        };
        let cfg = SystemConfig {
            n_tx: self.n_tx.unwrap_or(4),
            n_dl_users: k,
            n_ul_users: l,
            irs_sizes: self.irs_sizes.clone().unwrap_or_else(|| vec![10, 10]),
            p_max_bs: dbm_to_watts(self.p_max_bs_dbm.unwrap_or(35.0)),
            p_max_ul: vec![dbm_to_watts(self.p_max_ul_dbm.unwrap_or(11.0)); l],
            noise_dl: dbm_to_watts(self.noise_dl_dbm.unwrap_or(-100.0)),
            noise_ul: dbm_to_watts(self.noise_ul_dbm.unwrap_or(-110.0)),
            rsi_variance: dbm_to_watts(self.rsi_variance_dbm.unwrap_or(-95.0)),
            hw,
            alpha_dl: self.alpha_dl.unwrap_or(1.0),
            alpha_ul: self.alpha_ul.unwrap_or(1.0),
            beta_dl: weights("beta_dl", &self.beta_dl, k)?,
            beta_ul: weights("beta_ul", &self.beta_ul, l)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `[geometry]`: positions in meters. Unset fields take the reference
/// layout (BS at the origin, IRSs at (∓100, 0), UL and DL users in 10 m
/// disks around (−100, 5) and (100, 5), κ = 6 dB).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub bs: Option<Point>,
    pub irs: Option<Vec<Point>>,
    pub dl_users: Option<UserPlacement>,
    pub ul_users: Option<UserPlacement>,
    pub exponents: Option<PathLossExponents>,
    pub rician_k_db: Option<f64>,
    pub antenna_spacing_ratio: Option<f64>,
    pub blocked_direct: Option<bool>,
    /// IRS whose x coordinate `irs_location` sweeps (default 0).
    pub moving_irs: Option<usize>,
}

impl GeometrySection {
    fn overlay(&self, over: &GeometrySection) -> GeometrySection {
        GeometrySection {
            bs: over.bs.or(self.bs),
            irs: over.irs.clone().or_else(|| self.irs.clone()),
            dl_users: over.dl_users.clone().or_else(|| self.dl_users.clone()),
            ul_users: over.ul_users.clone().or_else(|| self.ul_users.clone()),
            exponents: over.exponents.or(self.exponents),
            rician_k_db: over.rician_k_db.or(self.rician_k_db),
            antenna_spacing_ratio: over.antenna_spacing_ratio.or(self.antenna_spacing_ratio),
            blocked_direct: over.blocked_direct.or(self.blocked_direct),
            moving_irs: over.moving_irs.or(self.moving_irs),
        }
    }

    pub fn to_geometry(&self) -> ScenarioGeometry {
        let mut g = ScenarioGeometry::reference();
        if let Some(bs) = self.bs {
            g.bs_pos = bs;
        }
        if let Some(irs) = &self.irs {
            g.irs_pos = irs.clone();
        }
        if let Some(p) = &self.dl_users {
            g.dl_users = p.clone();
        }
        if let Some(p) = &self.ul_users {
            g.ul_users = p.clone();
        }
        if let Some(e) = self.exponents {
            g.exponents = e;
        }
        if let Some(k) = self.rician_k_db {
            g.rician_k = db_to_linear(k);
        }
        if let Some(r) = self.antenna_spacing_ratio {
            g.antenna_spacing_ratio = r;
        }
        g.blocked_direct = self.blocked_direct.unwrap_or(false);
        g
    }
}

/// `[solver]`: convergence controls; unset fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub eps1: Option<f64>,
    pub eps2: Option<f64>,
    pub eps3: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
    pub max_ascent: Option<usize>,
    pub bisection_tol: Option<f64>,
    /// `"zero"` or `{ random = <seed> }`.
    pub phase_init: Option<PhaseInit>,
}

impl SolverSection {
    pub fn tolerances(&self) -> Result<Tolerances> {
        let d = Tolerances::default();
        let t = Tolerances {
            eps1: self.eps1.unwrap_or(d.eps1),
            eps2: self.eps2.unwrap_or(d.eps2),
            eps3: self.eps3.unwrap_or(d.eps3),
            max_outer: self.max_outer.unwrap_or(d.max_outer),
            max_inner: self.max_inner.unwrap_or(d.max_inner),
            max_ascent: self.max_ascent.unwrap_or(d.max_ascent),
            bisection_tol: self.bisection_tol.unwrap_or(d.bisection_tol),
        };
        for (name, v) in [
            ("eps1", t.eps1),
            ("eps2", t.eps2),
            ("eps3", t.eps3),
            ("bisection_tol", t.bisection_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "solver.{name} = {v} must be positive"
                )));
            }
        }
        for (name, v) in [
            ("max_outer", t.max_outer),
            ("max_inner", t.max_inner),
            ("max_ascent", t.max_ascent),
        ] {
            if v == 0 {
                return Err(HarnessError::Config(format!(
                    "solver.{name} must be at least 1"
                )));
            }
        }
        Ok(t)
    }

    pub fn run_options(&self, scheme: SchemeSpec) -> Result<RunOptions> {
        Ok(RunOptions {
            scheme: scheme.scheme,
            duplex: scheme.duplex,
            tolerances: self.tolerances()?,
            phase_init: self.phase_init.unwrap_or(PhaseInit::Zero),
        })
    }
}

/// One series of the experiment: overrides applied on top of the base
/// sections.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub geometry: GeometrySection,
}

fn default_tag() -> String {
    "run".into()
}

fn default_schemes() -> Vec<SchemeSpec> {
    vec![SchemeSpec::new(Scheme::Joint, Duplex::Full)]
}

/// A parsed experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    /// Output files are named `<kind>_<tag>.csv`.
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default)]
    pub seed: u64,
    /// Trials per grid point; defaults to 50, or 500 for `cdf`.
    pub trials: Option<usize>,
    /// Sweep grid; its meaning depends on `kind`. Empty for `convergence`
    /// and `cdf`.
    #[serde(default)]
    pub values: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<SchemeSpec>,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub solver: SolverSection,
    /// Series; a single unlabeled `base` series when empty.
    #[serde(default)]
    pub variants: Vec<Variant>,
}

/// Fully resolved parameters of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub series: String,
    pub coord: f64,
    pub cfg: SystemConfig,
    pub geometry: ScenarioGeometry,
}

impl ExperimentSpec {
    /// A spec with every section at its default.
    pub fn new(kind: ExperimentKind) -> Self {
        ExperimentSpec {
            kind,
            tag: default_tag(),
            seed: 0,
            trials: None,
            values: Vec::new(),
            schemes: default_schemes(),
            system: SystemSection::default(),
            geometry: GeometrySection::default(),
            solver: SolverSection::default(),
            variants: Vec::new(),
        }
    }

    /// Parses and validates an experiment.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let spec: ExperimentSpec =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_with(path.as_ref(), Self::from_toml_str)
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or_else(|| self.kind.default_trials())
    }

    /// File name of the record CSV.
    pub fn file_name(&self) -> String {
        format!("{}_{}.csv", self.kind, self.tag)
    }

    /// Checks everything that can fail before any solver runs.
    pub fn validate(&self) -> Result<()> {
        if self.trials() == 0 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(HarnessError::Config("schemes must not be empty".into()));
        }
        if self.tag.is_empty()
            || !self
                .tag
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(HarnessError::Config(format!(
                "tag `{}` must be nonempty [A-Za-z0-9._-]",
                self.tag
            )));
        }
        match (self.kind.has_grid(), self.values.is_empty()) {
            (true, true) => {
                return Err(HarnessError::Config(format!(
                    "values must not be empty for {}",
                    self.kind
                )))
            }
            (false, false) => {
                return Err(HarnessError::Config(format!(
                    "values is not used by {}",
                    self.kind
                )))
            }
            _ => {}
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(HarnessError::Config(format!("values contains {v}")));
        }
        let mut labels: Vec<&str> = self.variants.iter().map(|v| v.label.as_str()).collect();
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(HarnessError::Config("variant labels must be unique".into()));
        }
        if let Some(v) = self
            .variants
            .iter()
            .find(|v| v.label.is_empty() || v.label.contains([',', '"', '\n']))
        {
            return Err(HarnessError::Config(format!(
                "variant label `{}` is empty or has CSV metacharacters",
                v.label
            )));
        }
        self.solver.tolerances()?;
        self.grid().map(|_| ())
    }

    /// Grid points in output order: series-major, then `values`.
    pub fn grid(&self) -> Result<Vec<GridPoint>> {
        let base = [Variant {
            label: "base".into(),
            ..Variant::default()
        }];
        let variants = if self.variants.is_empty() {
            &base[..]
        } else {
            &self.variants[..]
        };
        let values = if self.kind.has_grid() {
            self.values.clone()
        } else {
            vec![0.0]
        };
        let mut points = Vec::with_capacity(variants.len() * values.len());
        for variant in variants {
            let system = self.system.overlay(&variant.system);
            let geometry = self.geometry.overlay(&variant.geometry);
            for &value in &values {
                let point = self.point(&system, &geometry, value).map_err(|e| {
                    HarnessError::Config(format!("series `{}`, value {value}: {e}", variant.label))
                })?;
                points.push(GridPoint {
                    series: variant.label.clone(),
                    coord: value,
                    cfg: point.0,
                    geometry: point.1,
                });
            }
        }
        Ok(points)
    }

    fn point(
        &self,
        system: &SystemSection,
        geometry: &GeometrySection,
        value: f64,
    ) -> Result<(SystemConfig, ScenarioGeometry)> {
        let mut system = system.clone();
        match self.kind {
            ExperimentKind::SwsrVsIrsSize => {
                let n_irs = system.irs_sizes.as_ref().map_or(2, Vec::len);
                if value.fract() != 0.0 || value < n_irs as f64 {
                    return Err(HarnessError::Config(format!(
                        "IRS element total {value} must be an integer of at least {n_irs}"
                    )));
                }
                system.irs_sizes = Some(split_evenly(value as usize, n_irs));
            }
            ExperimentKind::SwsrVsBsPower => system.p_max_bs_dbm = Some(value),
            ExperimentKind::SwsrVsUlPower => system.p_max_ul_dbm = Some(value),
            ExperimentKind::RateRegion => {
                if !(0.0..=1.0).contains(&value) {
                    return Err(HarnessError::Config(format!(
                        "alpha_dl {value} is outside [0, 1]"
                    )));
                }
                system.alpha_dl = Some(value);
                system.alpha_ul = Some(1.0 - value);
            }
            _ => {}
        }
        let cfg = system.to_config()?;
        let mut geo = geometry.to_geometry();
        if self.kind == ExperimentKind::IrsLocation {
            let i = geometry.moving_irs.unwrap_or(0);
            let n = geo.irs_pos.len();
            let pos = geo.irs_pos.get_mut(i).ok_or_else(|| {
                HarnessError::Config(format!("moving_irs = {i} but there are {n} IRSs"))
            })?;
            pos[0] = value;
        }
        geo.validate(&cfg)?;
        Ok((cfg, geo))
    }
}

/// A single-run configuration: the `[system]`, `[geometry]` and `[solver]`
/// sections of an experiment file on their own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub geometry: GeometrySection,
    #[serde(default)]
    pub solver: SolverSection,
}

impl Scenario {
    /// Parses and validates a scenario.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        scenario.resolve()?;
        scenario.solver.tolerances()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_with(path.as_ref(), Self::from_toml_str)
    }

    /// Resolved system parameters and geometry.
    pub fn resolve(&self) -> Result<(SystemConfig, ScenarioGeometry)> {
        let config_error = |e: HarnessError| match e {
            HarnessError::Solver(e) => HarnessError::Config(e.to_string()),
            other => other,
        };
        let cfg = self.system.to_config().map_err(config_error)?;
        let geo = self.geometry.to_geometry();
        geo.validate(&cfg)
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok((cfg, geo))
    }
}

/// Either kind of configuration file, told apart by the presence of `kind`.
#[derive(Debug, Clone, PartialEq)]
pub enum ConfigFile {
    Experiment(Box<ExperimentSpec>),
    Scenario(Box<Scenario>),
}

impl ConfigFile {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        if table.contains_key("kind") {
            ExperimentSpec::from_toml_str(text).map(|s| ConfigFile::Experiment(Box::new(s)))
        } else {
            Scenario::from_toml_str(text).map(|s| ConfigFile::Scenario(Box::new(s)))
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_with(path.as_ref(), Self::from_toml_str)
    }
}

fn load_with<T>(path: &Path, parse: impl FnOnce(&str) -> Result<T>) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    parse(&text).map_err(|e| match e {
        HarnessError::Config(message) => HarnessError::Parse {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// `total` split over `parts` with the remainder on the first entries.
pub fn split_evenly(total: usize, parts: usize) -> Vec<usize> {
    (0..parts)
        .map(|i| total / parts + usize::from(i < total % parts))
        .collect()
}
