//! The `report.json` document: run provenance, per-phase timings,
//! per-cluster fit summaries, iteration history, kernel-evaluation
//! counters, and error metrics. Every metric recorded here is
//! recomputable from the CSVs emitted next to it.

use monoscat::fmm::OperationCounters;
use monoscat::layer::FitReport;
use num_complex::Complex64;
use serde::Serialize;
use std::path::Path;

use crate::CliResult;

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Timings {
    /// Interaction-matrix assembly (dense direct solves).
    pub assembly: f64,
    /// Linear solves: the all-rods system or the per-cluster sweeps.
    pub solve: f64,
    /// Boundary sampling plus least-squares density fitting.
    pub fit: f64,
    /// Foreign-layer evaluation during coupling sweeps.
    pub coupling: f64,
    /// Field-map and trace evaluation.
    pub evaluation: f64,
    pub total: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterReport {
    pub rods: usize,
    /// Boundary samples (the fit's M).
    pub curve_samples: usize,
    /// Monopole count actually used (the fit's P), when a layer exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monopoles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitReport>,
}

/// Relative disagreement between two field traces, in the max norm and
/// the L2 norm, both normalized by the reference trace.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ErrorMetrics {
    pub max_relative: f64,
    pub l2_relative: f64,
}

impl ErrorMetrics {
    pub fn between(reference: &[Complex64], other: &[Complex64]) -> ErrorMetrics {
        assert_eq!(reference.len(), other.len());
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        let mut diff_sq = 0.0f64;
        let mut ref_sq = 0.0f64;
        for (a, b) in reference.iter().zip(other) {
            let d = (b - a).norm();
            worst = worst.max(d);
            scale = scale.max(a.norm());
            diff_sq += d * d;
            ref_sq += a.norm_sqr();
        }
        ErrorMetrics {
            max_relative: if scale > 0.0 { worst / scale } else { worst },
            l2_relative: if ref_sq > 0.0 {
                (diff_sq / ref_sq).sqrt()
            } else {
                diff_sq.sqrt()
            },
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub mode: String,
    pub scenario_path: String,
    pub scenario_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed_override: Option<u64>,
    pub wavelength: f64,
    pub wavenumber: f64,
    pub total_rods: usize,
    pub clusters: Vec<ClusterReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub convergence_history: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counters: Option<OperationCounters>,
    pub timings: Timings,
    /// Disagreement between the two routes a mode compares (absent for
    /// plain `direct` runs, which are the reference).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error_metrics: Option<ErrorMetrics>,
    /// Direct wall time over fast wall time (`compare` mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timing_ratio: Option<f64>,
    /// Wall seconds of the reference pipeline (`compare` mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub direct_seconds: Option<f64>,
    /// Wall seconds of the layer-coupled pipeline (`compare` mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fast_seconds: Option<f64>,
    /// Benchmark mode: a warm-up pass ran first and is excluded.
    pub bench: bool,
    /// Files written, relative to the output directory.
    pub outputs: Vec<String>,
}

impl RunReport {
    pub fn new(mode: &str, scenario_path: &str, scenario_hash: &str) -> RunReport {
        RunReport {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            mode: mode.to_string(),
            scenario_path: scenario_path.to_string(),
            scenario_hash: scenario_hash.to_string(),
            seed_override: None,
            wavelength: f64::NAN,
            wavenumber: f64::NAN,
            total_rods: 0,
            clusters: Vec::new(),
            iterations: None,
            converged: None,
            convergence_history: Vec::new(),
            counters: None,
            timings: Timings::default(),
            error_metrics: None,
            timing_ratio: None,
            direct_seconds: None,
            fast_seconds: None,
            bench: false,
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| crate::CliError::Config(format!("report serialization: {e}")))?;
        Ok(std::fs::write(path, text)?)
    }
}
