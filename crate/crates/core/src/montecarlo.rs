//! Seeded Monte Carlo studies of the discontinuity estimator.
//!
//! Replications run in parallel; replication `r` draws from its own ChaCha
//! stream `r` under the study seed, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::month::{Month, MonthRange};
use crate::rdd::{rd_estimate_sample, select_bandwidth, Estimand, Kernel, RdSample, RddSpec};

/// Piecewise quintic regression function with a jump at zero, on `[-1, 1]`.
///
/// Coefficients are the common benchmark fitted to U.S. House election
/// margins; the level jump is 0.04 and the slope jump 0.84 - 1.27.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvedDesign {
    pub left: [f64; 6],
    pub right: [f64; 6],
    pub noise_sd: f64,
}

impl Default for CurvedDesign {
    fn default() -> Self {
        CurvedDesign {
            left: [0.48, 1.27, 7.18, 20.21, 21.54, 7.33],
            right: [0.52, 0.84, -3.00, 7.99, -9.01, 3.56],
            noise_sd: 0.1295,
        }
    }
}

impl CurvedDesign {
    pub fn mean(&self, x: f64) -> f64 {
        let c = if x >= 0.0 { &self.right } else { &self.left };
        c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
    }

    pub fn true_tau(&self, estimand: Estimand) -> f64 {
        match estimand {
            Estimand::Level => self.right[0] - self.left[0],
            Estimand::Slope => self.right[1] - self.left[1],
        }
    }

    /// Equally spaced design, `n_per_side` points on each side of zero
    /// (the right side includes zero).
    pub fn grid(n_per_side: usize) -> Vec<f64> {
        let n = n_per_side as f64;
        (0..n_per_side)
            .map(|i| -((i + 1) as f64) / n)
            .rev()
            .chain((0..n_per_side).map(|i| i as f64 / n))
            .collect()
    }

    pub fn draw(&self, x: &[f64], rng: &mut ChaCha8Rng) -> RdSample<f64> {
        let noise = Normal::new(0.0, self.noise_sd).expect("valid noise sd");
        let y = x.iter().map(|&v| self.mean(v) + noise.sample(rng)).collect();
        RdSample::new(x.to_vec(), y).expect("finite draw")
    }
}

pub fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub replications: usize,
    pub n_per_side: usize,
    pub estimand: Estimand,
    pub poly_order: usize,
    pub kernel: Kernel,
    pub seed: u64,
    pub design: CurvedDesign,
}

impl Default for CoverageConfig {
    fn default() -> Self {
        CoverageConfig {
            replications: 2000,
            n_per_side: 500,
            estimand: Estimand::Level,
            poly_order: 1,
            kernel: Kernel::Triangular,
            seed: 20170801,
            design: CurvedDesign::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub replications: usize,
    pub true_tau: f64,
    pub robust_coverage: f64,
    pub conventional_coverage: f64,
    pub mean_tau: f64,
    pub mean_tau_bc: f64,
    pub mean_h: f64,
    pub mean_ci_length: f64,
}

fn placeholder_spec(cfg: &CoverageConfig) -> RddSpec<f64> {
    // Month fields are unused by the sample-level estimator.
    let m = Month::new(2000, 1).expect("valid month");
    let mut spec = RddSpec::new(m, cfg.estimand, MonthRange { start: m, end: m });
    spec.poly_order = cfg.poly_order;
    spec.kernel = cfg.kernel;
    spec
}

/// Share of replications whose 95% intervals contain the true jump.
pub fn coverage_study(cfg: &CoverageConfig) -> Result<CoverageReport> {
    let x = CurvedDesign::grid(cfg.n_per_side);
    let spec = placeholder_spec(cfg);
    let tau = cfg.design.true_tau(cfg.estimand);
    let z = crate::ols::normal_quantile(0.975);

    let fits = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let sample = cfg.design.draw(&x, &mut replication_rng(cfg.seed, r));
            rd_estimate_sample(&sample, &spec)
        })
        .collect::<Result<Vec<_>>>()?;

    let n = fits.len() as f64;
    let share = |f: &dyn Fn(&crate::rdd::RddFit<f64>) -> bool| fits.iter().filter(|x| f(x)).count() as f64 / n;
    Ok(CoverageReport {
        replications: fits.len(),
        true_tau: tau,
        robust_coverage: share(&|f| f.ci_robust.0 <= tau && tau <= f.ci_robust.1),
        conventional_coverage: share(&|f| (f.tau - tau).abs() <= z * f.se_conventional),
        mean_tau: fits.iter().map(|f| f.tau).sum::<f64>() / n,
        mean_tau_bc: fits.iter().map(|f| f.tau_bc).sum::<f64>() / n,
        mean_h: fits.iter().map(|f| f.h_used).sum::<f64>() / n,
        mean_ci_length: fits.iter().map(|f| f.ci_robust.1 - f.ci_robust.0).sum::<f64>() / n,
    })
}

/// Mean selected bandwidth over replications of the curved design.
pub fn mean_bandwidth(
    design: &CurvedDesign,
    n_per_side: usize,
    poly_order: usize,
    estimand: Estimand,
    kernel: Kernel,
    replications: usize,
    seed: u64,
) -> Result<f64> {
    let x = CurvedDesign::grid(n_per_side);
    let hs = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let sample = design.draw(&x, &mut replication_rng(seed, r));
            select_bandwidth(&sample, poly_order, estimand, kernel).map(|c| c.h)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(hs.iter().sum::<f64>() / hs.len() as f64)
}
