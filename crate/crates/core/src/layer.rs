//! Single-layer monopole representation of a cluster's scattered field.
//!
//! The scattered field of a rod cluster, sampled on an enclosing curve, is
//! compressed onto P monopoles sitting at midpoints of the curve samples:
//!
//! ```text
//! u_s(x) ≈ sum_p sigma_p H1_0(k |x - y_p|),   x outside the curve,
//! ```
//!
//! with the weights fitted by least squares against M >> P boundary
//! samples. The discrete Fourier spectrum of the fitted weights tells
//! whether P was large enough: a smooth density has a decaying spectrum,
//! so the relative size of its top-frequency third is used as the
//! resolution test when choosing P automatically.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::foldy_lax::{scattered_field_direct, ClusterSolution};
use crate::geometry::{BoundaryCurve, Containment, Vec2};
use crate::linalg::QrLeastSquares;
use crate::special::{dft, h0, WaveNumber};

/// Largest acceptable high-frequency share of the weight spectrum when
/// choosing the monopole count automatically.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e-2;
/// Largest acceptable relative fit residual when choosing the monopole
/// count automatically.
pub const DEFAULT_RESIDUAL_CAP: f64 = 1e-2;
/// Candidate monopole counts for the automatic selection. Doubling keeps
/// the midpoint sets nested, which makes the fit residual monotone.
pub const DEFAULT_P_GRID: [usize; 6] = [7, 14, 28, 56, 112, 224];
/// Default ratio of boundary samples to monopoles (M = 10 P).
pub const DEFAULT_SAMPLES_PER_MONOPOLE: usize = 10;

// ---------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------

/// A fitted monopole layer: P points on (midpoints of) a boundary curve
/// and one complex weight per point. Each weight is the arc-averaged
/// density times the arc length it represents, so the field is the plain
/// sum of weighted monopoles. Immutable after fitting.
#[derive(Clone, Debug)]
pub struct MonopoleLayer {
    curve: BoundaryCurve,
    points: Vec<Vec2>,
    weights: Vec<Complex64>,
    k: WaveNumber,
}

impl MonopoleLayer {
    pub fn new(
        curve: BoundaryCurve,
        points: Vec<Vec2>,
        weights: Vec<Complex64>,
        k: WaveNumber,
    ) -> Result<MonopoleLayer> {
        if points.is_empty() || points.len() >= curve.sample_count() {
            return Err(Error::Config(format!(
                "layer needs 1 <= P < M, got P = {} with M = {}",
                points.len(),
                curve.sample_count()
            )));
        }
        if weights.len() != points.len() {
            return Err(Error::Config(format!(
                "{} weights for {} monopole points",
                weights.len(),
                points.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("layer data must be finite".into()));
        }
        Ok(MonopoleLayer {
            curve,
            points,
            weights,
            k,
        })
    }

    pub fn curve(&self) -> &BoundaryCurve {
        &self.curve
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn weights(&self) -> &[Complex64] {
        &self.weights
    }

    pub fn wavenumber(&self) -> WaveNumber {
        self.k
    }

    pub fn monopole_count(&self) -> usize {
        self.points.len()
    }
}

/// Diagnostics of one least-squares fit.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FitReport {
    /// Euclidean norm of the boundary misfit.
    pub residual_norm: f64,
    /// Misfit norm over boundary-data norm (0 when the data is zero).
    pub relative_residual: f64,
    /// Ratio of extreme diagonal magnitudes of the triangular factor.
    pub condition_estimate: f64,
    /// Max |DFT coefficient| in the top-frequency third of the weight
    /// spectrum over the max overall; small means P resolved the density.
    pub dft_tail_ratio: f64,
    /// Number of monopoles this report describes.
    pub chosen_p: usize,
    /// False only when automatic selection exhausted its grid without
    /// meeting the tail and residual thresholds.
    pub converged: bool,
}

/// Where an evaluation point sits relative to the layer's curve. The
/// layer is only a faithful copy of the scattered field outside; inside
/// it is a different (regular) field, and within about one sample
/// spacing of the curve the discrete sum degrades smoothly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalQuality {
    Exterior,
    NearBoundary,
    Interior,
}

// ---------------------------------------------------------------------
// Boundary sampling and monopole placement
// ---------------------------------------------------------------------

/// Scattered field of a solved cluster at every sample of an enclosing
/// curve. The curve must strictly enclose every rod disk.
pub fn boundary_values(
    solution: &ClusterSolution,
    curve: &BoundaryCurve,
) -> Result<Vec<Complex64>> {
    for rod in solution.scatterers() {
        let inside = curve.encloses_disk(rod.position, rod.radius);
        if !inside {
            return Err(Error::Geometry(format!(
                "curve does not strictly enclose the rod at ({}, {})",
                rod.position.x, rod.position.y
            )));
        }
    }
    curve
        .samples()
        .iter()
        .map(|&y| scattered_field_direct(solution, y))
        .collect()
}

/// P monopole positions chosen among the M midpoints of consecutive curve
/// samples by uniform index striding: index_j = round(j M / P).
pub fn select_monopole_points(curve: &BoundaryCurve, p: usize) -> Result<Vec<Vec2>> {
    let m = curve.sample_count();
    if p == 0 || p > m {
        return Err(Error::Config(format!(
            "monopole count must satisfy 1 <= P <= M, got P = {p}, M = {m}"
        )));
    }
    let samples = curve.samples();
    let midpoint = |i: usize| {
        let a = samples[i];
        let b = samples[(i + 1) % m];
        (a + b) * 0.5
    };
    let mut points = Vec::with_capacity(p);
    for j in 0..p {
        let idx = ((j * m) as f64 / p as f64).round() as usize;
        points.push(midpoint(idx.min(m - 1)));
    }
    Ok(points)
}

// ---------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------

/// A factored fit operator for one (curve, monopole set, wavenumber)
/// combination. Holds the orthogonal factorization of the M x P kernel
/// matrix so that many boundary data sets can be fitted without
/// re-assembly — the cluster-coupling iteration refits every sweep.
pub struct LayerFitter {
    curve: BoundaryCurve,
    points: Vec<Vec2>,
    k: WaveNumber,
    qr: QrLeastSquares,
    kernel_evaluations: u64,
}

impl LayerFitter {
    /// Builds the fitter from explicit monopole positions.
    pub fn from_points(
        curve: &BoundaryCurve,
        points: Vec<Vec2>,
        k: WaveNumber,
    ) -> Result<LayerFitter> {
        let m = curve.sample_count();
        let p = points.len();
        if p == 0 || p >= m {
            return Err(Error::Config(format!(
                "least-squares fit needs 1 <= P < M, got P = {p}, M = {m}"
            )));
        }
        let samples = curve.samples();
        let kv = k.value();
        let mut matrix = DMatrix::from_element(m, p, Complex64::new(0.0, 0.0));
        for (col, y) in points.iter().enumerate() {
            for (row, s) in samples.iter().enumerate() {
                let d = s.dist(*y);
                if d == 0.0 {
                    return Err(Error::Geometry(
                        "monopole point coincides with a curve sample".into(),
                    ));
                }
                matrix[(row, col)] = h0(kv * d);
            }
        }
        let qr = QrLeastSquares::factor(&matrix)?;
        if qr.condition_estimate() > 1e12 {
            log::warn!(
                "monopole fit is nearly rank-deficient (condition ~ {:.2e}); \
                 the enclosed area may be at an interior resonance of the curve",
                qr.condition_estimate()
            );
        }
        Ok(LayerFitter {
            curve: curve.clone(),
            points,
            k,
            qr,
            kernel_evaluations: (m as u64) * (p as u64),
        })
    }

    /// Builds the fitter with automatically strided monopole positions.
    pub fn with_count(curve: &BoundaryCurve, p: usize, k: WaveNumber) -> Result<LayerFitter> {
        let points = select_monopole_points(curve, p)?;
        LayerFitter::from_points(curve, points, k)
    }

    pub fn monopole_count(&self) -> usize {
        self.points.len()
    }

    /// Hankel evaluations spent assembling the kernel matrix.
    pub fn kernel_evaluations(&self) -> u64 {
        self.kernel_evaluations
    }

    /// Fits one set of boundary values (length M, same order as the curve
    /// samples), producing the layer and its diagnostics.
    pub fn fit(&self, boundary: &[Complex64]) -> Result<(MonopoleLayer, FitReport)> {
        let m = self.curve.sample_count();
        if boundary.len() != m {
            return Err(Error::Config(format!(
                "{} boundary values for {} curve samples",
                boundary.len(),
                m
            )));
        }
        let rhs = DVector::from_fn(m, |i, _| boundary[i]);
        let data_norm = rhs.norm();
        let (sigma, residual_norm) = self.qr.solve(&rhs)?;
        let weights: Vec<Complex64> = sigma.iter().copied().collect();
        let relative_residual = if data_norm > 0.0 {
            residual_norm / data_norm
        } else {
            0.0
        };
        let report = FitReport {
            residual_norm,
            relative_residual,
            condition_estimate: self.qr.condition_estimate(),
            dft_tail_ratio: dft_tail_ratio(&weights),
            chosen_p: self.points.len(),
            converged: true,
        };
        let layer = MonopoleLayer::new(self.curve.clone(), self.points.clone(), weights, self.k)?;
        Ok((layer, report))
    }
}

/// One-shot least-squares fit of a monopole density to boundary data.
pub fn fit_density(
    curve: &BoundaryCurve,
    monopole_points: &[Vec2],
    boundary_values: &[Complex64],
    k: WaveNumber,
) -> Result<(MonopoleLayer, FitReport)> {
    LayerFitter::from_points(curve, monopole_points.to_vec(), k)?.fit(boundary_values)
}

/// Share of the weight spectrum sitting in the top-frequency third:
/// max |c_f| over frequencies with min(f, P-f) > P/3, divided by the
/// overall max. Zero for spectra too short to have a tail or for zero
/// weights.
pub fn dft_tail_ratio(weights: &[Complex64]) -> f64 {
    let p = weights.len();
    if p < 2 {
        return 0.0;
    }
    let spectrum = dft(weights);
    let mut overall: f64 = 0.0;
    let mut tail: f64 = 0.0;
    for (f, c) in spectrum.iter().enumerate() {
        let magnitude = c.norm();
        overall = overall.max(magnitude);
        if 3 * f.min(p - f) > p {
            tail = tail.max(magnitude);
        }
    }
    if overall > 0.0 {
        tail / overall
    } else {
        0.0
    }
}

/// Walks an increasing grid of monopole counts and returns the first one
/// whose fit passes both the spectral-tail and the residual thresholds
/// (residual cap fixed at [`DEFAULT_RESIDUAL_CAP`]). If none passes, the
/// largest count is returned with `converged: false` in the report.
pub fn select_monopole_count(
    curve: &BoundaryCurve,
    boundary_values: &[Complex64],
    k: WaveNumber,
    tail_threshold: f64,
    p_grid: &[usize],
) -> Result<(usize, FitReport)> {
    select_monopole_count_with(
        curve,
        boundary_values,
        k,
        tail_threshold,
        DEFAULT_RESIDUAL_CAP,
        p_grid,
    )
}

/// [`select_monopole_count`] with an explicit residual cap. The on-curve
/// residual has a discretization floor of roughly (k * monopole spacing)^2,
/// so scenarios trade accuracy against monopole count through this cap.
pub fn select_monopole_count_with(
    curve: &BoundaryCurve,
    boundary_values: &[Complex64],
    k: WaveNumber,
    tail_threshold: f64,
    residual_cap: f64,
    p_grid: &[usize],
) -> Result<(usize, FitReport)> {
    let (fitter, report) =
        select_monopole_fitter_with(curve, boundary_values, k, tail_threshold, residual_cap, p_grid)?;
    Ok((fitter.monopole_count(), report))
}

/// The selection walk itself, returning the factored fitter of the chosen
/// count so callers that fit repeatedly (the cluster-coupling iteration)
/// can reuse its orthogonal factorization.
pub fn select_monopole_fitter_with(
    curve: &BoundaryCurve,
    boundary_values: &[Complex64],
    k: WaveNumber,
    tail_threshold: f64,
    residual_cap: f64,
    p_grid: &[usize],
) -> Result<(LayerFitter, FitReport)> {
    if !(tail_threshold > 0.0) || !tail_threshold.is_finite() {
        return Err(Error::Config(format!(
            "tail threshold must be positive and finite, got {tail_threshold}"
        )));
    }
    if !(residual_cap > 0.0) || !residual_cap.is_finite() {
        return Err(Error::Config(format!(
            "residual cap must be positive and finite, got {residual_cap}"
        )));
    }
    if p_grid.is_empty() {
        return Err(Error::Config("monopole count grid is empty".into()));
    }
    let m = curve.sample_count();
    for w in p_grid.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::Config(
                "monopole count grid must be strictly increasing".into(),
            ));
        }
    }
    if *p_grid.last().unwrap() >= m {
        return Err(Error::Config(format!(
            "monopole count grid reaches {} but the curve has only {} samples",
            p_grid.last().unwrap(),
            m
        )));
    }

    let mut last: Option<(LayerFitter, FitReport)> = None;
    for &p in p_grid {
        let fitter = LayerFitter::with_count(curve, p, k)?;
        let (_, report) = fitter.fit(boundary_values)?;
        if report.dft_tail_ratio <= tail_threshold && report.relative_residual <= residual_cap {
            return Ok((fitter, report));
        }
        last = Some((fitter, report));
    }
    let (fitter, mut report) = last.expect("grid is non-empty");
    report.converged = false;
    log::warn!(
        "no monopole count in {:?} met tail <= {tail_threshold:.1e} and residual <= \
         {residual_cap:.1e}; returning P = {} (tail {:.2e}, residual {:.2e})",
        p_grid,
        fitter.monopole_count(),
        report.dft_tail_ratio,
        report.relative_residual
    );
    Ok((fitter, report))
}

// ---------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------

/// Layer field sum_p sigma_p H1_0(k |x - y_p|). The caller is responsible
/// for x being outside the curve; use [`evaluate_layer_flagged`] when that
/// is not known in advance.
pub fn evaluate_layer(layer: &MonopoleLayer, x: Vec2) -> Result<Complex64> {
    let k = layer.k.value();
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, y) in layer.weights.iter().zip(&layer.points) {
        let d = x.dist(*y);
        if d == 0.0 {
            return Err(Error::SingularPoint(format!(
                "layer evaluated exactly at the monopole point ({}, {})",
                y.x, y.y
            )));
        }
        acc += w * h0(k * d);
    }
    Ok(acc)
}

/// Layer field plus a quality flag locating x relative to the curve:
/// `Exterior` values are faithful, `NearBoundary` (within about one sample
/// spacing) are degraded, `Interior` values do not represent the
/// scattered field at all.
pub fn evaluate_layer_flagged(layer: &MonopoleLayer, x: Vec2) -> Result<(Complex64, EvalQuality)> {
    let quality = match layer.curve.contains(x) {
        Containment::Outside => EvalQuality::Exterior,
        Containment::NearBoundary => EvalQuality::NearBoundary,
        Containment::Inside => EvalQuality::Interior,
    };
    Ok((evaluate_layer(layer, x)?, quality))
}

/// Far-field amplitude F(d) = sum_p sigma_p exp(-i k d . y_p), defined so
/// that u_s(x) ~ sqrt(2 / (pi k |x|)) e^{i (k|x| - pi/4)} F(x / |x|) as
/// k|x| grows; the constant is pinned by the large-radius oracle test.
pub fn far_field_amplitude(layer: &MonopoleLayer, direction: Vec2) -> Result<Complex64> {
    if !direction.is_finite() || direction.norm() == 0.0 {
        return Err(Error::Domain(
            "far-field direction must be a nonzero finite vector".into(),
        ));
    }
    let d = direction * (1.0 / direction.norm());
    let k = layer.k.value();
    let mut acc = Complex64::new(0.0, 0.0);
    for (w, y) in layer.weights.iter().zip(&layer.points) {
        acc += w * Complex64::from_polar(1.0, -k * d.dot(*y));
    }
    Ok(acc)
}
