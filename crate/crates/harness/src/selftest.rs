//! Fast oracle suite behind `fdirs selftest`.

use std::fmt::Write;

use crate::oracles::{
    algorithm1_monotonicity_check, beamformer_grid_check, bisection_check, distortion_checks,
    gradient_check, mmse_identity_check, CheckResult,
};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 0x5e1f;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SelftestOptions {
    pub seed: u64,
    /// Flip the sign of the analytic phase gradient to show that the
    /// gradient check can fail.
    pub corrupt_gradient: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            seed: DEFAULT_SEED,
            corrupt_gradient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelftestReport {
    pub checks: Vec<CheckResult>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = String::new();
        for c in &self.checks {
            let verdict = if c.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                out,
                "{verdict}  {:<width$}  {:>10.3e} <= {:<8.1e} {}",
                c.name, c.metric, c.threshold, c.detail
            );
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        let _ = writeln!(out, "{passed}/{} checks passed", self.checks.len());
        out
    }
}

/// Runs every check at reduced size.
pub fn run_selftest(opts: &SelftestOptions) -> SelftestReport {
    let seed = opts.seed;
    let mut checks = vec![
        gradient_check(seed, 12, opts.corrupt_gradient),
        mmse_identity_check(seed, 30),
        bisection_check(seed, 10),
    ];
    checks.extend(distortion_checks(seed, 200_000, 0.02));
    checks.push(beamformer_grid_check(seed, 4, 120));
    checks.push(algorithm1_monotonicity_check(seed, 6));
    SelftestReport { checks }
}
