//! Monte Carlo estimation of a crash probability with an adaptive stopping
//! rule.
//!
//! Runs are added in batches until the plug-in variance `p(1 - p) / n` drops
//! below `delta`, with a floor of `n_min` runs and a hard cap of `n_max`.
//! Two estimators share that loop: the plain crash fraction and the smoothed
//! estimator, which places a Gaussian kernel on each result `w` and
//! integrates it over the crash set `(-inf, 0]`.

use serde::{Deserialize, Serialize};

use crate::distributions::{std_normal_cdf, std_normal_quantile};
use crate::error::{invalid, Result};
use crate::rng::{RunSeeds, SimRng};
use crate::simulation::SimulationOutcome;

/// One Monte Carlo run for a fixed initial situation.
pub trait Runner: Sync {
    fn run(&self, rng: &mut SimRng) -> Result<SimulationOutcome>;
}

impl<F> Runner for F
where
    F: Fn(&mut SimRng) -> Result<SimulationOutcome> + Sync,
{
    fn run(&self, rng: &mut SimRng) -> Result<SimulationOutcome> {
        self(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Counting,
    Smoothed,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Counting => "counting",
            EstimatorKind::Smoothed => "smoothed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub delta: f64,
    pub n_min: usize,
    pub batch: usize,
    pub n_max: usize,
    /// Fixed bandwidth for the result KDE; self-tuned when absent.
    pub result_bandwidth: Option<f64>,
    pub kind: EstimatorKind,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            delta: 0.02,
            n_min: 10,
            batch: 10,
            n_max: 10_000,
            result_bandwidth: None,
            kind: EstimatorKind::Smoothed,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(invalid("delta must lie in (0, 0.25)"));
        }
        if self.n_min == 0 || self.batch == 0 || self.n_max < self.n_min {
            return Err(invalid("need n_min >= 1, batch >= 1 and n_max >= n_min"));
        }
        if let Some(h) = self.result_bandwidth {
            if !(h > 0.0) {
                return Err(invalid("result bandwidth must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityEstimate {
    pub p_hat: f64,
    pub n_sim: usize,
    pub variance_bound: f64,
    /// The stopping rule was still unmet when `n_max` was reached.
    pub cap_reached: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub results: Option<Vec<f64>>,
}

impl ProbabilityEstimate {
    fn new(p_hat: f64, n_sim: usize, cap_reached: bool, results: Option<Vec<f64>>) -> Self {
        Self {
            p_hat,
            n_sim,
            variance_bound: p_hat * (1.0 - p_hat) / n_sim as f64,
            cap_reached,
            results,
        }
    }
}

/// Strategy interface over the estimator variants.
pub trait ProbabilityEstimator: Send + Sync {
    fn name(&self) -> &'static str;
    fn config(&self) -> &EstimatorConfig;
    fn estimate(&self, runner: &dyn Runner, seeds: RunSeeds) -> Result<ProbabilityEstimate>;
}

pub struct CountingEstimator(pub EstimatorConfig);
pub struct SmoothedEstimator(pub EstimatorConfig);

impl ProbabilityEstimator for CountingEstimator {
    fn name(&self) -> &'static str {
        "counting"
    }
    fn config(&self) -> &EstimatorConfig {
        &self.0
    }
    fn estimate(&self, runner: &dyn Runner, seeds: RunSeeds) -> Result<ProbabilityEstimate> {
        estimate_prob_counting(runner, &self.0, seeds)
    }
}

impl ProbabilityEstimator for SmoothedEstimator {
    fn name(&self) -> &'static str {
        "smoothed"
    }
    fn config(&self) -> &EstimatorConfig {
        &self.0
    }
    fn estimate(&self, runner: &dyn Runner, seeds: RunSeeds) -> Result<ProbabilityEstimate> {
        estimate_prob_smoothed(runner, &self.0, seeds)
    }
}

fn adaptive_loop<F>(
    runner: &dyn Runner,
    config: &EstimatorConfig,
    seeds: RunSeeds,
    mut p_of: F,
) -> Result<ProbabilityEstimate>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    let mut results = Vec::with_capacity(config.n_min.max(config.batch));
    let mut target = config.n_min;
    loop {
        while results.len() < target {
            let mut rng = seeds.rng(results.len() as u64);
            results.push(runner.run(&mut rng)?.w);
        }
        let n = results.len();
        let p = p_of(&results);
        if p * (1.0 - p) / (n as f64) < config.delta {
            return Ok(ProbabilityEstimate::new(p, n, false, Some(results)));
        }
        if n >= config.n_max {
            return Ok(ProbabilityEstimate::new(p, n, true, Some(results)));
        }
        target = (n + config.batch).min(config.n_max);
    }
}

/// Crash fraction `N_C / N` with the adaptive stopping rule.
pub fn estimate_prob_counting(
    runner: &dyn Runner,
    config: &EstimatorConfig,
    seeds: RunSeeds,
) -> Result<ProbabilityEstimate> {
    adaptive_loop(runner, config, seeds, |ws| {
        ws.iter().filter(|&&w| w <= 0.0).count() as f64 / ws.len() as f64
    })
}

/// Smoothed crash mass with the adaptive stopping rule. The bandwidth is
/// either fixed by the config or re-tuned after every batch.
pub fn estimate_prob_smoothed(
    runner: &dyn Runner,
    config: &EstimatorConfig,
    seeds: RunSeeds,
) -> Result<ProbabilityEstimate> {
    adaptive_loop(runner, config, seeds, |ws| {
        let h = config
            .result_bandwidth
            .unwrap_or_else(|| result_bandwidth(ws));
        crash_mass_from_results(ws, h)
    })
}

pub const RESULT_BANDWIDTH_FLOOR: f64 = 0.05;

/// Silverman's 1-D rule over the finite results, floored at
/// [`RESULT_BANDWIDTH_FLOOR`].
pub fn result_bandwidth(results: &[f64]) -> f64 {
    let finite: Vec<f64> = results.iter().copied().filter(|w| w.is_finite()).collect();
    let n = finite.len();
    if n < 2 {
        return RESULT_BANDWIDTH_FLOOR;
    }
    let mean = finite.iter().sum::<f64>() / n as f64;
    let var = finite.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let mut sorted = finite;
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    // Results mix impact speeds and gaps and are often bimodal; the IQR
    // guard keeps the spread estimate from bridging the two modes.
    let spread = if iqr > 0.0 {
        var.sqrt().min(iqr / 1.34)
    } else {
        var.sqrt()
    };
    let h = 0.9 * spread * (n as f64).powf(-0.2);
    h.max(RESULT_BANDWIDTH_FLOOR)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(1/N) Σ Φ(-w_j / h)`: the mass of a Gaussian result KDE on `(-inf, 0]`.
pub fn crash_mass_from_results(results: &[f64], h: f64) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let total: f64 = results.iter().map(|&w| std_normal_cdf(-w / h)).sum();
    (total / results.len() as f64).clamp(0.0, 1.0)
}

/// Wilson score interval for a binomial proportion.
pub fn confidence_interval(p_hat: f64, n_sim: usize, level: f64) -> Result<(f64, f64)> {
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid("confidence level must lie in (0, 1)"));
    }
    if !(0.0..=1.0).contains(&p_hat) || n_sim == 0 {
        return Err(invalid("need 0 <= p_hat <= 1 and n_sim >= 1"));
    }
    let z = std_normal_quantile(0.5 + level / 2.0);
    let n = n_sim as f64;
    let z2n = z * z / n;
    let centre = (p_hat + z2n / 2.0) / (1.0 + z2n);
    let half = z * (p_hat * (1.0 - p_hat) / n + z2n / (4.0 * n)).sqrt() / (1.0 + z2n);
    Ok(((centre - half).max(0.0), (centre + half).min(1.0)))
}
