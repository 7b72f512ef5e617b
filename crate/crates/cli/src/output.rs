//! Emitted artifacts: field-map, trace, layer, spectrum, and amplitude
//! CSVs. All files carry a header row, use `.` as the decimal separator,
//! and print floats with 17 significant digits so every value round-trips
//! to the exact f64 that produced it (reports stay recomputable from the
//! files alone).

use crate::scenario::{GridSpec, ObservationSpec};
use crate::{CliError, CliResult};
use monoscat::fmm::MultiClusterScenario;
use monoscat::geometry::{Containment, Vec2};
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// 17 significant digits: enough to reproduce any f64 bit pattern.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A rectangular evaluation grid, row-major from the lower-left corner.
pub struct Grid {
    pub x0: f64,
    pub y0: f64,
    pub step: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> Vec2 {
        let i = index % self.nx;
        let j = index / self.nx;
        Vec2::new(
            self.x0 + i as f64 * self.step,
            self.y0 + j as f64 * self.step,
        )
    }
}

/// Build the map grid: explicit ranges if given, otherwise the bounding
/// box of all enclosure curves padded by `padding_fraction` per side.
/// Resolution is `points_per_wavelength` towards the wavelength.
pub fn plan_grid(
    spec: &GridSpec,
    scenario: &MultiClusterScenario,
    wavelength: f64,
) -> CliResult<Grid> {
    if !(spec.points_per_wavelength.is_finite() && spec.points_per_wavelength > 0.0) {
        return Err(CliError::Config(
            "grid.points_per_wavelength must be positive".to_string(),
        ));
    }
    let (x_range, y_range) = match (spec.x_range, spec.y_range) {
        (Some(x), Some(y)) => (x, y),
        (None, None) => {
            let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
            let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
            for cluster in scenario.clusters() {
                for &s in cluster.enclosure().samples() {
                    lo = Vec2::new(lo.x.min(s.x), lo.y.min(s.y));
                    hi = Vec2::new(hi.x.max(s.x), hi.y.max(s.y));
                }
            }
            let pad = spec.padding_fraction * (hi.x - lo.x).max(hi.y - lo.y);
            ([lo.x - pad, hi.x + pad], [lo.y - pad, hi.y + pad])
        }
        _ => {
            return Err(CliError::Config(
                "grid.x_range and grid.y_range must be set together".to_string(),
            ))
        }
    };
    if x_range[1] <= x_range[0] || y_range[1] <= y_range[0] {
        return Err(CliError::Config("grid ranges must be increasing".to_string()));
    }
    let step = wavelength / spec.points_per_wavelength;
    let nx = ((x_range[1] - x_range[0]) / step).ceil() as usize + 1;
    let ny = ((y_range[1] - y_range[0]) / step).ceil() as usize + 1;
    if nx.saturating_mul(ny) > spec.max_points {
        return Err(CliError::Config(format!(
            "field map would hold {} points (> grid.max_points = {}); \
             lower points_per_wavelength or shrink the ranges",
            nx * ny,
            spec.max_points
        )));
    }
    Ok(Grid {
        x0: x_range[0],
        y0: y_range[0],
        step,
        nx,
        ny,
    })
}

/// Classify a point for the map's `inside_flag` column:
/// 0 exterior, 1 inside an enclosure curve, 2 inside a rod disk.
pub fn inside_flag(scenario: &MultiClusterScenario, x: Vec2) -> u8 {
    for cluster in scenario.clusters() {
        match cluster.enclosure().contains(x) {
            Containment::Outside => continue,
            _ => {
                for rod in cluster.scatterers() {
                    if rod.position.dist(x) <= rod.radius {
                        return 2;
                    }
                }
                return 1;
            }
        }
    }
    0
}

/// One evaluated map sample. `value` is `None` where the field is
/// undefined (exactly on a source point); the CSV carries NaN there.
pub struct MapSample {
    pub position: Vec2,
    pub value: Option<Complex64>,
    pub flag: u8,
}

pub fn write_field_map(path: &Path, samples: &[MapSample]) -> CliResult<()> {
    let max_abs = samples
        .iter()
        .filter_map(|s| s.value.map(|v| v.norm()))
        .fold(0.0f64, f64::max);
    let scale = if max_abs > 0.0 { max_abs } else { 1.0 };
    let mut text = String::from("x1,x2,re_u,im_u,abs_u_normalized,inside_flag\n");
    for s in samples {
        let (re, im, a) = match s.value {
            Some(v) => (v.re, v.im, v.norm() / scale),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        writeln!(
            text,
            "{},{},{},{},{},{}",
            fmt_f64(s.position.x),
            fmt_f64(s.position.y),
            fmt_f64(re),
            fmt_f64(im),
            fmt_f64(a),
            s.flag
        )
        .expect("string write");
    }
    Ok(std::fs::write(path, text)?)
}

/// Points of an observation circle, counter-clockwise from angle 0.
pub fn circle_points(spec: &ObservationSpec) -> Vec<Vec2> {
    let center = Vec2::new(spec.center[0], spec.center[1]);
    (0..spec.points)
        .map(|j| {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / spec.points as f64;
            center + Vec2::new(spec.radius * angle.cos(), spec.radius * angle.sin())
        })
        .collect()
}

pub fn write_circle_trace(path: &Path, points: &[Vec2], values: &[Complex64]) -> CliResult<()> {
    let mut text = String::from("angle,x1,x2,re_u,im_u,abs_u\n");
    let n = points.len();
    for (j, (p, v)) in points.iter().zip(values).enumerate() {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
        writeln!(
            text,
            "{},{},{},{},{},{}",
            fmt_f64(angle),
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(v.re),
            fmt_f64(v.im),
            fmt_f64(v.norm())
        )
        .expect("string write");
    }
    Ok(std::fs::write(path, text)?)
}

/// Monopole positions and weights of one cluster's fitted layer.
pub fn write_layer(
    path: &Path,
    cluster: usize,
    k: f64,
    points: &[Vec2],
    weights: &[Complex64],
) -> CliResult<()> {
    let mut text = String::from("cluster,k,y1,y2,re_sigma,im_sigma\n");
    for (p, w) in points.iter().zip(weights) {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            cluster,
            fmt_f64(k),
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(w.re),
            fmt_f64(w.im)
        )
        .expect("string write");
    }
    Ok(std::fs::write(path, text)?)
}

/// Discrete Fourier spectrum of a layer density (the smoothness record
/// behind automatic monopole-count selection).
pub fn write_spectrum(path: &Path, cluster: usize, coefficients: &[Complex64]) -> CliResult<()> {
    let mut text = String::from("cluster,bin,re_c,im_c,abs_c\n");
    for (bin, c) in coefficients.iter().enumerate() {
        writeln!(
            text,
            "{},{},{},{},{}",
            cluster,
            bin,
            fmt_f64(c.re),
            fmt_f64(c.im),
            fmt_f64(c.norm())
        )
        .expect("string write");
    }
    Ok(std::fs::write(path, text)?)
}

/// Rod responses: everything needed to re-evaluate the scattered field
/// away from the rods without re-running the solver.
pub struct AmplitudeRow {
    pub cluster: usize,
    pub index: usize,
    pub position: Vec2,
    pub radius: f64,
    pub permittivity: f64,
    pub amplitude: Complex64,
}

pub fn write_amplitudes(path: &Path, rows: &[AmplitudeRow]) -> CliResult<()> {
    let mut text = String::from("cluster,index,x1,x2,radius,permittivity,re_s,im_s\n");
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.cluster,
            r.index,
            fmt_f64(r.position.x),
            fmt_f64(r.position.y),
            fmt_f64(r.radius),
            fmt_f64(r.permittivity),
            fmt_f64(r.amplitude.re),
            fmt_f64(r.amplitude.im)
        )
        .expect("string write");
    }
    Ok(std::fs::write(path, text)?)
}

/// Direct-vs-layer comparison on a validation curve (homothety of the
/// enclosure): both routes are recorded so the error metric in the
/// report can be recomputed from this file alone.
pub fn write_comparison_trace(
    path: &Path,
    header_label: &str,
    clusters: &[usize],
    points: &[Vec2],
    reference: &[Complex64],
    reconstructed: &[Complex64],
) -> CliResult<()> {
    let mut text = format!("cluster,x1,x2,re_{header_label},im_{header_label},re_layer,im_layer\n");
    for (((c, p), a), b) in clusters
        .iter()
        .zip(points)
        .zip(reference)
        .zip(reconstructed)
    {
        writeln!(
            text,
            "{},{},{},{},{},{},{}",
            c,
            fmt_f64(p.x),
            fmt_f64(p.y),
            fmt_f64(a.re),
            fmt_f64(a.im),
            fmt_f64(b.re),
            fmt_f64(b.im)
        )
        .expect("string write");
    }
    Ok(std::fs::write(path, text)?)
}

/// Create (if needed) the output directory and return a path inside it.
pub fn prepare_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

pub fn out_file(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}
