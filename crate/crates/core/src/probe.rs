//! Sampling harness shared by the ratio probes.
//!
//! A probe draws samples from the shell `r/2 ≤ ‖·‖ ≤ r` around the
//! reference for each radius `r`, each producing either a ratio, a
//! degenerate sample (denominator below `tol_den`) or a failure. Sampling is
//! parallel; every sample gets its own derived seed and results are reduced
//! in index order, so a fixed seed gives identical statistics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampling::{derived_rng, SampleRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    /// Strictly decreasing sampling radii.
    pub radii: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Samples with a denominator below this are excluded and counted.
    pub tol_den: f64,
    /// Max-ratio growth per radius decade at or above which a probe is
    /// classified as diverging.
    pub growth_threshold: f64,
    pub solver_max_iter: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            radii: vec![1e-2, 1e-3, 1e-4],
            samples: 10_000,
            seed: 0,
            tol_den: 1e-12,
            growth_threshold: 5.0,
            solver_max_iter: 200,
        }
    }
}

impl ProbeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.radii.is_empty() || self.radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config("radii must be positive and finite".into()));
        }
        if self.radii.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config("radii must be strictly decreasing".into()));
        }
        if self.samples < 100 {
            return Err(Error::Config(format!("need at least 100 samples per radius, got {}", self.samples)));
        }
        if !(self.tol_den > 0.0) || !(self.growth_threshold > 1.0) {
            return Err(Error::Config("tol_den must be positive and growth_threshold above 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        ProbeConfig { seed, ..self.clone() }
    }
}

/// Outcome of one sample.
#[derive(Clone, Debug)]
pub enum Sample {
    Ratio { value: f64, point: Vec<f64> },
    Degenerate,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadiusStats {
    pub radius: f64,
    pub samples: usize,
    pub used: usize,
    pub degenerate: usize,
    pub failed: usize,
    pub max: f64,
    pub p99: f64,
    pub p90: f64,
    /// Coordinates of the sample attaining `max`, as reported by the probe.
    pub argmax: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Bounded,
    Diverging,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    pub seed: u64,
    pub per_radius: Vec<RadiusStats>,
    pub max_ratio: f64,
    /// Geometric mean over consecutive radii of the max-ratio growth, per decade.
    pub growth_per_decade: f64,
    pub classification: Growth,
}

/// Ratios below this are treated as zero when computing growth.
const RATIO_FLOOR: f64 = 1e-12;

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let k = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[k - 1]
}

pub fn growth_per_decade(radii: &[f64], maxima: &[f64]) -> f64 {
    if radii.len() < 2 {
        return 1.0;
    }
    let mut log_sum = 0.0;
    let mut decades = 0.0;
    for k in 1..radii.len() {
        let a = maxima[k - 1].max(RATIO_FLOOR);
        let b = maxima[k].max(RATIO_FLOOR);
        log_sum += (b / a).log10();
        decades += (radii[k - 1] / radii[k]).log10();
    }
    10f64.powf(log_sum / decades)
}

/// Runs `sample(radius, rng)` for every radius and sample index.
pub fn run<F>(config: &ProbeConfig, sample: F) -> RatioStats
where
    F: Fn(f64, &mut SampleRng) -> Sample + Sync,
{
    let mut per_radius = Vec::with_capacity(config.radii.len());
    for (ri, &radius) in config.radii.iter().enumerate() {
        let outcomes: Vec<Sample> = (0..config.samples)
            .into_par_iter()
            .map(|i| {
                let mut rng = derived_rng(config.seed, ((ri as u64) << 32) | i as u64);
                sample(radius, &mut rng)
            })
            .collect();
        let mut values = Vec::new();
        let (mut degenerate, mut failed) = (0, 0);
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for o in &outcomes {
            match o {
                Sample::Ratio { value, point } => {
                    values.push(*value);
                    if best.is_none_or(|(b, _)| *value > b) {
                        best = Some((*value, point));
                    }
                }
                Sample::Degenerate => degenerate += 1,
                Sample::Failed => failed += 1,
            }
        }
        values.sort_by(f64::total_cmp);
        per_radius.push(RadiusStats {
            radius,
            samples: config.samples,
            used: values.len(),
            degenerate,
            failed,
            max: values.last().copied().unwrap_or(0.0),
            p99: percentile(&values, 0.99),
            p90: percentile(&values, 0.90),
            argmax: best.map(|(_, p)| p.clone()).unwrap_or_default(),
        });
    }
    let maxima: Vec<f64> = per_radius.iter().map(|r| r.max).collect();
    let growth = growth_per_decade(&config.radii, &maxima);
    RatioStats {
        seed: config.seed,
        max_ratio: maxima.iter().copied().fold(0.0, f64::max),
        growth_per_decade: growth,
        classification: if growth >= config.growth_threshold { Growth::Diverging } else { Growth::Bounded },
        per_radius,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn growth_of_inverse_radius_is_ten() {
        let g = growth_per_decade(&[1e-2, 1e-3, 1e-4], &[1e2, 1e3, 1e4]);
        assert!((g - 10.0).abs() < 1e-9);
        assert_eq!(growth_per_decade(&[1e-2, 1e-3], &[0.0, 0.0]), 1.0);
    }

    #[test]
    fn deterministic_and_monotone_percentiles() {
        let cfg = ProbeConfig { samples: 500, seed: 3, ..Default::default() };
        let f = |r: f64, rng: &mut SampleRng| Sample::Ratio { value: rng.gen::<f64>() / r, point: vec![] };
        let a = run(&cfg, f);
        let b = run(&cfg, f);
        assert_eq!(a, b);
        for r in &a.per_radius {
            assert!(r.p90 <= r.p99 && r.p99 <= r.max);
        }
        assert_eq!(a.classification, Growth::Diverging);
    }

    #[test]
    fn config_validation() {
        assert!(ProbeConfig::default().validate().is_ok());
        let bad = ProbeConfig { radii: vec![1e-3, 1e-2], ..Default::default() };
        assert!(bad.validate().is_err());
        let few = ProbeConfig { samples: 10, ..Default::default() };
        assert!(few.validate().is_err());
    }
}
