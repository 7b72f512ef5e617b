//! Scenario files: a human-editable TOML document describing one
//! multi-cluster scattering problem, plus the translation into solver
//! types and a content hash for reproducibility tracking.

use crate::{CliError, CliResult};
use monoscat::fmm::{
    CouplingConfig, CouplingMode, FitConfig, MonopoleCountChoice, MultiClusterScenario,
};
use monoscat::foldy_lax::{IncidentField, SolverConfig};
use monoscat::geometry::{
    fill_with_rods, homothety, make_trefoil, BoundaryCurve, Cluster, Scatterer, Vec2,
};
use monoscat::layer::{DEFAULT_P_GRID, DEFAULT_RESIDUAL_CAP, DEFAULT_TAIL_THRESHOLD};
use monoscat::special::WaveNumber;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// Top-level scenario document. Unknown keys anywhere in the tree are
/// rejected so typos fail loudly instead of silently using defaults.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// Free-text note; ignored by the solver and excluded from the hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    /// Wavelength of the incident field; fixes the unit of length.
    pub wavelength: f64,
    pub incident: IncidentSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub coupling: CouplingSpec,
    /// Automatic monopole-count selection thresholds, used by every
    /// cluster whose `monopoles` key is `"auto"`.
    #[serde(default)]
    pub fit: FitSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<ObservationSpec>,
    pub clusters: Vec<ClusterSpec>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IncidentSpec {
    /// Propagation direction (normalized internally).
    pub direction: [f64; 2],
    /// Complex amplitude as (re, im).
    #[serde(default = "unit_amplitude")]
    pub amplitude: [f64; 2],
}

fn unit_amplitude() -> [f64; 2] {
    [1.0, 0.0]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSpec {
    /// Relative residual target for the per-cluster dense/iterative solve.
    pub rtol: f64,
    /// Largest system handled by dense factorization before the
    /// iterative fallback takes over.
    pub n_direct: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let d = SolverConfig::default();
        SolverSpec {
            rtol: d.rtol,
            n_direct: d.n_direct,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSpec {
    /// Relative change in layer weights at which the sweep stops.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// `"gauss-seidel"`, `"jacobi"`, or `"krylov"`.
    pub mode: String,
}

impl Default for CouplingSpec {
    fn default() -> Self {
        let d = CouplingConfig::default();
        CouplingSpec {
            tolerance: d.tolerance,
            max_iterations: d.max_iterations,
            mode: "gauss-seidel".to_string(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSpec {
    pub tail_threshold: f64,
    pub residual_cap: f64,
    pub p_grid: Vec<usize>,
}

impl Default for FitSpec {
    fn default() -> Self {
        FitSpec {
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            residual_cap: DEFAULT_RESIDUAL_CAP,
            p_grid: DEFAULT_P_GRID.to_vec(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Sampling density of the emitted field map.
    pub points_per_wavelength: f64,
    /// Fraction of the bounding-box span added on each side when the
    /// extent is derived from the cluster geometry.
    pub padding_fraction: f64,
    /// Explicit extent override, `[min, max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_range: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_range: Option<[f64; 2]>,
    /// Refusal threshold against accidentally huge maps.
    pub max_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points_per_wavelength: 4.0,
            padding_fraction: 0.15,
            x_range: None,
            y_range: None,
            max_points: 4_000_000,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationSpec {
    /// Radius of the circle on which traces are recorded.
    pub radius: f64,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default = "default_observation_points")]
    pub points: usize,
}

fn default_observation_points() -> usize {
    360
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub curve: CurveSpec,
    /// Rod lattice filling the (optionally shrunk) enclosure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill: Option<FillSpec>,
    /// Explicitly placed rods, appended after any lattice fill.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rods: Vec<RodSpec>,
    /// `"auto"` or a fixed monopole count.
    #[serde(default)]
    pub monopoles: MonopoleSpec,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub mean_radius: f64,
    #[serde(default)]
    pub lobe_amplitude: f64,
    #[serde(default = "one_lobe")]
    pub lobes: u32,
    #[serde(default)]
    pub center: [f64; 2],
    #[serde(default)]
    pub rotation: f64,
    /// Number of boundary samples (the fit's M).
    pub samples: usize,
}

fn one_lobe() -> u32 {
    1
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FillSpec {
    /// Homothety ratio applied to the enclosure before filling, keeping
    /// the rods clear of the curve the monopoles live on.
    #[serde(default = "unit_ratio")]
    pub shrink: f64,
    pub pitch: f64,
    pub rod_radius: f64,
    #[serde(default = "default_permittivity")]
    pub permittivity: f64,
    /// Fraction of lattice sites left empty (disorder).
    #[serde(default)]
    pub hole_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn unit_ratio() -> f64 {
    1.0
}

fn default_permittivity() -> f64 {
    12.0
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RodSpec {
    pub position: [f64; 2],
    pub radius: f64,
    #[serde(default = "default_permittivity")]
    pub permittivity: f64,
}

/// Per-cluster monopole policy: `monopoles = "auto"` or `monopoles = 56`.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(untagged)]
pub enum MonopoleSpec {
    Count(usize),
    Mode(String),
}

impl Default for MonopoleSpec {
    fn default() -> Self {
        MonopoleSpec::Mode("auto".to_string())
    }
}

impl MonopoleSpec {
    fn fixed_count(&self) -> CliResult<Option<usize>> {
        match self {
            MonopoleSpec::Count(p) => Ok(Some(*p)),
            MonopoleSpec::Mode(s) if s == "auto" => Ok(None),
            MonopoleSpec::Mode(s) => Err(CliError::Config(format!(
                "monopoles must be \"auto\" or a count, got \"{s}\""
            ))),
        }
    }
}

/// A parsed scenario together with everything derived from it that the
/// runner needs: solver input, hash, and bookkeeping for reports.
#[derive(Debug)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub scenario: MultiClusterScenario,
    pub hash: String,
    pub seed_override: Option<u64>,
}

pub fn load(path: &Path, seed_override: Option<u64>) -> CliResult<LoadedScenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    from_str(&text, seed_override)
}

pub fn from_str(text: &str, seed_override: Option<u64>) -> CliResult<LoadedScenario> {
    let mut file: ScenarioFile =
        toml::from_str(text).map_err(|e| CliError::Config(format!("scenario parse: {e}")))?;
    if let Some(seed) = seed_override {
        for (j, cluster) in file.clusters.iter_mut().enumerate() {
            if let Some(fill) = cluster.fill.as_mut() {
                fill.seed = seed.wrapping_add(j as u64);
            }
        }
    }
    let scenario = build(&file)?;
    let hash = content_hash(&file)?;
    Ok(LoadedScenario {
        file,
        scenario,
        hash,
        seed_override,
    })
}

/// SHA-256 of the canonical JSON form of the parsed document (sorted
/// keys, defaults filled, comments and formatting gone), so the hash
/// moves exactly when a field that reaches the solver moves.
pub fn content_hash(file: &ScenarioFile) -> CliResult<String> {
    let mut semantic = serde_json::to_value(file)
        .map_err(|e| CliError::Config(format!("scenario canonicalization: {e}")))?;
    if let Some(map) = semantic.as_object_mut() {
        map.remove("description");
    }
    let canonical = serde_json::to_string(&semantic)
        .map_err(|e| CliError::Config(format!("scenario canonicalization: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(canonical.as_bytes());
    Ok(format!("{:x}", hasher.finalize()))
}

fn build_curve(spec: &CurveSpec) -> CliResult<BoundaryCurve> {
    Ok(make_trefoil(
        spec.mean_radius,
        spec.lobe_amplitude,
        spec.lobes,
        Vec2::new(spec.center[0], spec.center[1]),
        spec.rotation,
        spec.samples,
    )?)
}

fn build_cluster(spec: &ClusterSpec) -> CliResult<Cluster> {
    let curve = build_curve(&spec.curve)?;
    let mut rods: Vec<Scatterer> = Vec::new();
    if let Some(fill) = &spec.fill {
        let region = if fill.shrink == 1.0 {
            curve.clone()
        } else {
            homothety(&curve, fill.shrink)?
        };
        rods.extend(fill_with_rods(
            &region,
            fill.pitch,
            fill.rod_radius,
            fill.permittivity,
            fill.hole_fraction,
            fill.seed,
        )?);
    }
    for rod in &spec.rods {
        rods.push(Scatterer::new(
            Vec2::new(rod.position[0], rod.position[1]),
            rod.radius,
            rod.permittivity,
        )?);
    }
    Ok(Cluster::new(rods, curve)?)
}

fn coupling_mode(name: &str) -> CliResult<CouplingMode> {
    match name {
        "gauss-seidel" => Ok(CouplingMode::GaussSeidel),
        "jacobi" => Ok(CouplingMode::Jacobi),
        "krylov" => Ok(CouplingMode::Krylov),
        other => Err(CliError::Config(format!(
            "coupling mode must be gauss-seidel, jacobi, or krylov, got \"{other}\""
        ))),
    }
}

/// Translate the document into a validated solver scenario.
pub fn build(file: &ScenarioFile) -> CliResult<MultiClusterScenario> {
    let k = WaveNumber::from_wavelength(file.wavelength)?;
    let incident = IncidentField::plane_wave(
        Vec2::new(file.incident.direction[0], file.incident.direction[1]),
        Complex64::new(file.incident.amplitude[0], file.incident.amplitude[1]),
    )?;

    let clusters: Vec<Cluster> = file
        .clusters
        .iter()
        .map(build_cluster)
        .collect::<CliResult<_>>()?;

    let fixed: Vec<Option<usize>> = file
        .clusters
        .iter()
        .map(|c| c.monopoles.fixed_count())
        .collect::<CliResult<_>>()?;
    let monopoles = if fixed.iter().all(Option::is_none) {
        MonopoleCountChoice::Auto(FitConfig {
            tail_threshold: file.fit.tail_threshold,
            residual_cap: file.fit.residual_cap,
            p_grid: file.fit.p_grid.clone(),
        })
    } else if fixed.iter().all(Option::is_some) {
        MonopoleCountChoice::Fixed(fixed.into_iter().map(Option::unwrap).collect())
    } else {
        return Err(CliError::Config(
            "clusters must either all use \"auto\" monopole selection or all fix a count"
                .to_string(),
        ));
    };

    let coupling = CouplingConfig {
        tolerance: file.coupling.tolerance,
        max_iterations: file.coupling.max_iterations,
        mode: coupling_mode(&file.coupling.mode)?,
        monopoles,
    };
    let solver = SolverConfig {
        rtol: file.solver.rtol,
        n_direct: file.solver.n_direct,
        ..SolverConfig::default()
    };

    Ok(MultiClusterScenario::new(
        clusters, incident, k, coupling, solver,
    )?)
}
