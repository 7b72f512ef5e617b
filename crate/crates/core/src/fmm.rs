//! Inter-cluster coupling through single-layer densities.
//!
//! Each cluster is solved locally against its incident-plus-foreign-layer
//! driving field, its scattered field is compressed onto its enclosing
//! curve, and the compressed layers are the only information clusters ever
//! exchange. For J clusters of N_j rods with P_l monopoles this replaces
//! the N^2 pairwise rod coupling by sum over j of N_j * sum over l != j of
//! P_l kernel evaluations per sweep.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::foldy_lax::{
    scattered_field_direct, ClusterSolution, FoldyOperator, IncidentField, SolverConfig,
};
use crate::geometry::{Cluster, Containment, Vec2};
use crate::layer::{
    boundary_values, evaluate_layer, select_monopole_fitter_with, FitReport, LayerFitter,
    MonopoleLayer, DEFAULT_P_GRID, DEFAULT_RESIDUAL_CAP, DEFAULT_TAIL_THRESHOLD,
};
use crate::linalg::{gmres, GmresConfig};
use crate::special::WaveNumber;

#[cfg(not(target_arch = "wasm32"))]
mod clock {
    use std::time::Instant;

    pub struct Stopwatch(Instant);

    impl Stopwatch {
        pub fn start() -> Stopwatch {
            Stopwatch(Instant::now())
        }

        pub fn seconds(&self) -> f64 {
            self.0.elapsed().as_secs_f64()
        }
    }
}

#[cfg(target_arch = "wasm32")]
mod clock {
    /// No monotonic clock on bare wasm; phases report zero and the
    /// deterministic payload never includes timings.
    pub struct Stopwatch;

    impl Stopwatch {
        pub fn start() -> Stopwatch {
            Stopwatch
        }

        pub fn seconds(&self) -> f64 {
            0.0
        }
    }
}

// ---------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------

/// Thresholds and candidate counts for the automatic monopole-count
/// selection, applied independently per cluster at the first iteration.
#[derive(Clone, Debug)]
pub struct FitConfig {
    /// Largest acceptable high-frequency share of the weight spectrum.
    pub tail_threshold: f64,
    /// Largest acceptable relative fit residual on the curve samples.
    pub residual_cap: f64,
    /// Candidate monopole counts, strictly increasing. Entries at or above
    /// a cluster's sample count are skipped for that cluster (clusters may
    /// have different curve resolutions).
    pub p_grid: Vec<usize>,
}

impl Default for FitConfig {
    fn default() -> FitConfig {
        FitConfig {
            tail_threshold: DEFAULT_TAIL_THRESHOLD,
            residual_cap: DEFAULT_RESIDUAL_CAP,
            p_grid: DEFAULT_P_GRID.to_vec(),
        }
    }
}

/// How many monopoles each cluster's layer carries.
#[derive(Clone, Debug)]
pub enum MonopoleCountChoice {
    /// Walk the fit grid per cluster after the first local solve; the
    /// count then stays fixed for the rest of the iteration.
    Auto(FitConfig),
    /// One explicit count per cluster.
    Fixed(Vec<usize>),
}

/// Iteration scheme for the inter-cluster fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CouplingMode {
    /// Each cluster sees the freshest available foreign layers within a
    /// sweep. Default: fastest contraction for one-CPU runs.
    GaussSeidel,
    /// All clusters update from the previous sweep's layers; sweeps are
    /// embarrassingly parallel across clusters.
    Jacobi,
    /// GMRES on the affine sweep map: solves the same fixed point, for
    /// configurations where the plain iteration contracts slowly.
    Krylov,
}

/// Stopping rule and scheme for [`solve_coupled`].
#[derive(Clone, Debug)]
pub struct CouplingConfig {
    /// Convergence threshold: max over clusters of the relative change in
    /// layer weights between sweeps.
    pub tolerance: f64,
    /// Sweep budget (matrix applications for the Krylov mode).
    pub max_iterations: usize,
    pub mode: CouplingMode,
    pub monopoles: MonopoleCountChoice,
}

impl Default for CouplingConfig {
    fn default() -> CouplingConfig {
        CouplingConfig {
            tolerance: 1e-8,
            max_iterations: 64,
            mode: CouplingMode::GaussSeidel,
            monopoles: MonopoleCountChoice::Auto(FitConfig::default()),
        }
    }
}

// ---------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------

/// A validated multi-cluster problem: rod clusters with pairwise-disjoint
/// enclosing curves, one incident field, one wavenumber, and the coupling
/// and local-solver settings.
#[derive(Clone, Debug)]
pub struct MultiClusterScenario {
    clusters: Vec<Cluster>,
    incident: IncidentField,
    k: WaveNumber,
    coupling: CouplingConfig,
    solver: SolverConfig,
}

impl MultiClusterScenario {
    pub fn new(
        clusters: Vec<Cluster>,
        incident: IncidentField,
        k: WaveNumber,
        coupling: CouplingConfig,
        solver: SolverConfig,
    ) -> Result<MultiClusterScenario> {
        if clusters.is_empty() {
            return Err(Error::Degenerate("scenario has no clusters".into()));
        }
        if !(coupling.tolerance > 0.0) || !coupling.tolerance.is_finite() {
            return Err(Error::Config(format!(
                "coupling tolerance must be positive and finite, got {}",
                coupling.tolerance
            )));
        }
        if coupling.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if let MonopoleCountChoice::Fixed(counts) = &coupling.monopoles {
            if counts.len() != clusters.len() {
                return Err(Error::Config(format!(
                    "{} fixed monopole counts for {} clusters",
                    counts.len(),
                    clusters.len()
                )));
            }
            for (j, (&p, cluster)) in counts.iter().zip(&clusters).enumerate() {
                let m = cluster.enclosure().sample_count();
                if p == 0 || p >= m {
                    return Err(Error::Config(format!(
                        "cluster {j}: fixed monopole count {p} must be in 1..{m}"
                    )));
                }
            }
        }

        // Pairwise disjointness of enclosures. Every sample of each curve
        // must lie strictly outside every other curve; a near-boundary
        // verdict counts as contact. Together with the per-cluster
        // containment invariant this guarantees no rod sits inside a
        // foreign enclosure.
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let a = clusters[i].enclosure();
                let b = clusters[j].enclosure();
                let crossing = a
                    .samples()
                    .iter()
                    .any(|&s| b.contains(s) != Containment::Outside)
                    || b.samples()
                        .iter()
                        .any(|&s| a.contains(s) != Containment::Outside);
                if crossing {
                    return Err(Error::Geometry(format!(
                        "enclosures of clusters {i} and {j} touch or overlap"
                    )));
                }
            }
        }

        Ok(MultiClusterScenario {
            clusters,
            incident,
            k,
            coupling,
            solver,
        })
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    pub fn incident(&self) -> &IncidentField {
        &self.incident
    }

    pub fn wavenumber(&self) -> WaveNumber {
        self.k
    }

    pub fn coupling(&self) -> &CouplingConfig {
        &self.coupling
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn total_rods(&self) -> usize {
        self.clusters.iter().map(|c| c.scatterers().len()).sum()
    }
}

// ---------------------------------------------------------------------
// Counters, timings, solution
// ---------------------------------------------------------------------

/// Analytic kernel-evaluation counts. These are computed from the problem
/// sizes (not instrumented), so they are exact, deterministic, and
/// independent of short-circuit optimizations in the field evaluators:
/// `local_assembly` counts N_j (N_j - 1) / 2 per cluster matrix,
/// `boundary_sampling` N_j * M_j per boundary sweep, `fit_assembly`
/// M_j * P per factored fit matrix (including rejected trial counts during
/// automatic selection), and `coupling` N_j * P_l each time cluster j
/// samples the layer of cluster l.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OperationCounters {
    pub local_assembly: u64,
    pub boundary_sampling: u64,
    pub fit_assembly: u64,
    pub coupling: u64,
}

/// Wall-clock seconds per phase (zero on wasm32, which has no monotonic
/// clock; excluded from determinism comparisons).
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PhaseTimings {
    pub local_solve: f64,
    pub boundary_sampling: f64,
    pub fitting: f64,
    pub coupling_eval: f64,
    pub total: f64,
}

/// Converged (or flagged) state of the coupled iteration: per-cluster rod
/// amplitudes, per-cluster layers, and the iteration diagnostics.
#[derive(Clone, Debug)]
pub struct CoupledSolution {
    k: WaveNumber,
    incident: IncidentField,
    solutions: Vec<ClusterSolution>,
    layers: Vec<MonopoleLayer>,
    fit_reports: Vec<FitReport>,
    iteration_count: usize,
    convergence_history: Vec<f64>,
    converged: bool,
    counters: OperationCounters,
    timings: PhaseTimings,
}

impl CoupledSolution {
    pub fn wavenumber(&self) -> WaveNumber {
        self.k
    }

    pub fn incident(&self) -> &IncidentField {
        &self.incident
    }

    pub fn cluster_count(&self) -> usize {
        self.solutions.len()
    }

    pub fn solutions(&self) -> &[ClusterSolution] {
        &self.solutions
    }

    pub fn layers(&self) -> &[MonopoleLayer] {
        &self.layers
    }

    pub fn fit_reports(&self) -> &[FitReport] {
        &self.fit_reports
    }

    pub fn iteration_count(&self) -> usize {
        self.iteration_count
    }

    pub fn convergence_history(&self) -> &[f64] {
        &self.convergence_history
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn counters(&self) -> OperationCounters {
        self.counters
    }

    pub fn timings(&self) -> PhaseTimings {
        self.timings
    }
}

// ---------------------------------------------------------------------
// Local operations
// ---------------------------------------------------------------------

/// Driving field for cluster `j`: the incident field at each rod center
/// plus every *foreign* cluster's layer field there. Layers not yet
/// computed (first sweep) contribute nothing.
pub fn local_incident_values(
    scenario: &MultiClusterScenario,
    j: usize,
    layers: &[Option<MonopoleLayer>],
) -> Result<Vec<Complex64>> {
    if j >= scenario.clusters.len() {
        return Err(Error::Config(format!(
            "cluster index {j} out of range for {} clusters",
            scenario.clusters.len()
        )));
    }
    if layers.len() != scenario.clusters.len() {
        return Err(Error::Config(format!(
            "{} layers for {} clusters",
            layers.len(),
            scenario.clusters.len()
        )));
    }
    driving_values(
        &scenario.clusters[j],
        Some(&scenario.incident),
        scenario.k,
        j,
        layers,
    )
}

/// Shared driving-field kernel: optional incident term plus foreign
/// layers, evaluated at the rod centers of one cluster.
fn driving_values(
    cluster: &Cluster,
    incident: Option<&IncidentField>,
    k: WaveNumber,
    own_index: usize,
    layers: &[Option<MonopoleLayer>],
) -> Result<Vec<Complex64>> {
    let foreign: Vec<&MonopoleLayer> = layers
        .iter()
        .enumerate()
        .filter(|(l, _)| *l != own_index)
        .filter_map(|(_, layer)| layer.as_ref())
        .collect();
    let one = |position: Vec2| -> Result<Complex64> {
        let mut u = match incident {
            Some(field) => field.evaluate(k, position),
            None => Complex64::new(0.0, 0.0),
        };
        for layer in &foreign {
            u += evaluate_layer(layer, position)?;
        }
        Ok(u)
    };

    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        cluster
            .scatterers()
            .par_iter()
            .map(|rod| one(rod.position))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        cluster
            .scatterers()
            .iter()
            .map(|rod| one(rod.position))
            .collect()
    }
}

/// One isolated local solve: rod amplitudes for the given driving values,
/// boundary sampling on the cluster's enclosure, and a `p`-monopole fit.
pub fn local_solve(
    cluster: &Cluster,
    driving: &[Complex64],
    k: WaveNumber,
    p: usize,
    solver: &SolverConfig,
) -> Result<(ClusterSolution, MonopoleLayer, FitReport)> {
    let operator = FoldyOperator::new(cluster.scatterers(), k, *solver)?;
    let (amplitudes, _) = operator.solve(driving)?;
    let solution = ClusterSolution::new(amplitudes, k, cluster.scatterers().to_vec())?;
    let data = boundary_values(&solution, cluster.enclosure())?;
    let fitter = LayerFitter::with_count(cluster.enclosure(), p, k)?;
    let (layer, report) = fitter.fit(&data)?;
    Ok((solution, layer, report))
}

// ---------------------------------------------------------------------
// The coupled iteration
// ---------------------------------------------------------------------

/// Per-cluster cached state across sweeps: the factored local operator and
/// (once the count is chosen) the factored fit matrix.
struct ClusterWorkspace {
    operator: FoldyOperator,
    fitter: Option<LayerFitter>,
    fit_cfg: Option<FitConfig>,
    fixed_p: Option<usize>,
}

/// Relative 2-norm change between weight vectors; `1` when appearing from
/// nothing, `0` when both are empty or zero.
fn relative_change(new: &[Complex64], old: Option<&[Complex64]>) -> f64 {
    let new_norm = new.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
    match old {
        None => {
            if new_norm == 0.0 {
                0.0
            } else {
                1.0
            }
        }
        Some(old) => {
            debug_assert_eq!(new.len(), old.len());
            let diff = new
                .iter()
                .zip(old)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            if new_norm == 0.0 {
                if diff == 0.0 {
                    0.0
                } else {
                    1.0
                }
            } else {
                diff / new_norm
            }
        }
    }
}

/// Kernel evaluations a fit-grid walk spent before settling on
/// `chosen_p`: every rejected trial plus the accepted one, M each.
fn selection_assembly_count(m: usize, grid: &[usize], chosen_p: usize) -> u64 {
    let mut total = 0u64;
    for &p in grid {
        total += (m * p) as u64;
        if p >= chosen_p {
            break;
        }
    }
    total
}

struct SweepOutcome {
    solution: ClusterSolution,
    layer: MonopoleLayer,
    report: FitReport,
    delta: f64,
}

/// Updates one cluster from the given layer set: local solve, boundary
/// sampling, fit (choosing the monopole count on first touch). Counter and
/// timing accumulation happens here so every mode shares one accounting.
fn update_cluster(
    scenario: &MultiClusterScenario,
    j: usize,
    layers: &[Option<MonopoleLayer>],
    previous: Option<&MonopoleLayer>,
    with_incident: bool,
    workspace: &mut ClusterWorkspace,
    counters: &mut OperationCounters,
    timings: &mut PhaseTimings,
) -> Result<SweepOutcome> {
    let cluster = &scenario.clusters[j];
    let n_j = cluster.scatterers().len() as u64;
    let m_j = cluster.enclosure().sample_count() as u64;

    let watch = clock::Stopwatch::start();
    let incident = with_incident.then_some(&scenario.incident);
    let driving = driving_values(cluster, incident, scenario.k, j, layers)?;
    for (l, layer) in layers.iter().enumerate() {
        if l != j {
            if let Some(layer) = layer {
                counters.coupling += n_j * layer.monopole_count() as u64;
            }
        }
    }
    timings.coupling_eval += watch.seconds();

    let watch = clock::Stopwatch::start();
    let (amplitudes, _) = workspace.operator.solve(&driving)?;
    let solution = ClusterSolution::new(amplitudes, scenario.k, cluster.scatterers().to_vec())?;
    timings.local_solve += watch.seconds();

    let watch = clock::Stopwatch::start();
    let data = boundary_values(&solution, cluster.enclosure())?;
    counters.boundary_sampling += n_j * m_j;
    timings.boundary_sampling += watch.seconds();

    let watch = clock::Stopwatch::start();
    if workspace.fitter.is_none() {
        match (&workspace.fit_cfg, workspace.fixed_p) {
            (_, Some(p)) => {
                workspace.fitter = Some(LayerFitter::with_count(cluster.enclosure(), p, scenario.k)?);
                counters.fit_assembly += m_j * p as u64;
            }
            (Some(cfg), None) => {
                // Clusters have individual sample counts; keep only the
                // candidates this enclosure can support.
                let grid: Vec<usize> = cfg
                    .p_grid
                    .iter()
                    .copied()
                    .filter(|&p| p < m_j as usize)
                    .collect();
                if grid.is_empty() {
                    return Err(Error::Config(format!(
                        "cluster {j}: no candidate monopole count below the \
                         enclosure's {m_j} samples (grid {:?})",
                        cfg.p_grid
                    )));
                }
                let (fitter, report) = select_monopole_fitter_with(
                    cluster.enclosure(),
                    &data,
                    scenario.k,
                    cfg.tail_threshold,
                    cfg.residual_cap,
                    &grid,
                )?;
                if !report.converged {
                    log::warn!(
                        "cluster {j}: monopole-count selection exhausted the grid \
                         (residual {:.2e}, tail {:.2e})",
                        report.relative_residual,
                        report.dft_tail_ratio
                    );
                }
                counters.fit_assembly +=
                    selection_assembly_count(m_j as usize, &grid, fitter.monopole_count());
                workspace.fitter = Some(fitter);
            }
            (None, None) => {
                return Err(Error::Config(
                    "cluster workspace has neither a fit config nor a fixed count".into(),
                ))
            }
        }
    }
    let fitter = workspace.fitter.as_ref().expect("fitter just ensured");
    let (layer, report) = fitter.fit(&data)?;
    timings.fitting += watch.seconds();

    let delta = relative_change(layer.weights(), previous.map(|l| l.weights()));
    Ok(SweepOutcome {
        solution,
        layer,
        report,
        delta,
    })
}

/// Solves the multi-cluster problem by the configured scheme. Reaching the
/// sweep budget without meeting the tolerance is *flagged* in the result;
/// a residual growing over three consecutive sweeps aborts with
/// [`Error::Divergence`].
pub fn solve_coupled(scenario: &MultiClusterScenario) -> Result<CoupledSolution> {
    let total_watch = clock::Stopwatch::start();
    let cluster_count = scenario.clusters.len();
    let mut counters = OperationCounters::default();
    let mut timings = PhaseTimings::default();

    let mut workspaces = Vec::with_capacity(cluster_count);
    let assembly_watch = clock::Stopwatch::start();
    for (j, cluster) in scenario.clusters.iter().enumerate() {
        let operator = FoldyOperator::new(cluster.scatterers(), scenario.k, scenario.solver)?;
        let n_j = cluster.scatterers().len() as u64;
        counters.local_assembly += n_j * (n_j - 1) / 2;
        let (fit_cfg, fixed_p) = match &scenario.coupling.monopoles {
            MonopoleCountChoice::Auto(cfg) => (Some(cfg.clone()), None),
            MonopoleCountChoice::Fixed(counts) => (None, Some(counts[j])),
        };
        workspaces.push(ClusterWorkspace {
            operator,
            fitter: None,
            fit_cfg,
            fixed_p,
        });
    }
    timings.local_solve += assembly_watch.seconds();

    let mut layers: Vec<Option<MonopoleLayer>> = vec![None; cluster_count];
    let mut solutions: Vec<Option<ClusterSolution>> = vec![None; cluster_count];
    let mut reports: Vec<Option<FitReport>> = vec![None; cluster_count];
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iteration_count = 0usize;

    match scenario.coupling.mode {
        CouplingMode::GaussSeidel | CouplingMode::Jacobi => {
            let jacobi = scenario.coupling.mode == CouplingMode::Jacobi;
            for sweep in 0..scenario.coupling.max_iterations {
                iteration_count = sweep + 1;
                let snapshot = if jacobi { Some(layers.clone()) } else { None };
                let mut worst = 0.0f64;
                for j in 0..cluster_count {
                    let source = snapshot.as_ref().unwrap_or(&layers);
                    let outcome = update_cluster(
                        scenario,
                        j,
                        source,
                        layers[j].as_ref(),
                        true,
                        &mut workspaces[j],
                        &mut counters,
                        &mut timings,
                    )?;
                    worst = worst.max(outcome.delta);
                    layers[j] = Some(outcome.layer);
                    solutions[j] = Some(outcome.solution);
                    reports[j] = Some(outcome.report);
                }
                history.push(worst);

                // A single cluster has nothing to exchange: its first sweep
                // is exact and the recorded residual is zero by convention.
                if cluster_count == 1 {
                    history[0] = 0.0;
                    converged = true;
                    break;
                }
                if worst <= scenario.coupling.tolerance {
                    converged = true;
                    break;
                }
                let n = history.len();
                if n >= 4
                    && history[n - 1] > history[n - 2]
                    && history[n - 2] > history[n - 3]
                    && history[n - 3] > history[n - 4]
                {
                    return Err(Error::Divergence {
                        history: history[n.saturating_sub(6)..].to_vec(),
                    });
                }
            }
        }
        CouplingMode::Krylov => {
            // Sweep 0 with the incident field only: chooses the per-cluster
            // monopole counts and yields c = G(0) of the affine sweep map
            // G(w) = A w + c over concatenated layer weights.
            iteration_count = 1;
            for j in 0..cluster_count {
                let outcome = update_cluster(
                    scenario,
                    j,
                    &vec![None; cluster_count],
                    None,
                    true,
                    &mut workspaces[j],
                    &mut counters,
                    &mut timings,
                )?;
                layers[j] = Some(outcome.layer);
                solutions[j] = Some(outcome.solution);
                reports[j] = Some(outcome.report);
            }

            if cluster_count == 1 {
                history.push(0.0);
                converged = true;
            } else {
                let template: Vec<MonopoleLayer> = layers
                    .iter()
                    .map(|l| l.as_ref().expect("sweep 0 filled every layer").clone())
                    .collect();
                let offsets: Vec<usize> = template
                    .iter()
                    .scan(0usize, |acc, l| {
                        let start = *acc;
                        *acc += l.monopole_count();
                        Some(start)
                    })
                    .collect();
                let dim: usize = template.iter().map(|l| l.monopole_count()).sum();

                let pack = |layers: &[Option<MonopoleLayer>]| {
                    let mut v = nalgebra::DVector::from_element(dim, Complex64::new(0.0, 0.0));
                    for (layer, &start) in layers.iter().zip(&offsets) {
                        let layer = layer.as_ref().expect("packed layer set is complete");
                        for (i, w) in layer.weights().iter().enumerate() {
                            v[start + i] = *w;
                        }
                    }
                    v
                };
                let unpack = |v: &nalgebra::DVector<Complex64>| -> Vec<Option<MonopoleLayer>> {
                    template
                        .iter()
                        .zip(&offsets)
                        .map(|(layer, &start)| {
                            let weights: Vec<Complex64> = (0..layer.monopole_count())
                                .map(|i| v[start + i])
                                .collect();
                            Some(
                                MonopoleLayer::new(
                                    layer.curve().clone(),
                                    layer.points().to_vec(),
                                    weights,
                                    scenario.k,
                                )
                                .expect("weights stay finite"),
                            )
                        })
                        .collect()
                };

                let c = pack(&layers);
                // One (I - A) application = one incident-free Jacobi
                // sweep. The closure must be Fn, so the mutable sweep
                // state lives behind a RefCell; a sweep failure is parked
                // in the error slot (the map then degrades to the
                // identity, which GMRES tolerates until we bail below).
                struct KrylovState<'a> {
                    workspaces: &'a mut Vec<ClusterWorkspace>,
                    counters: &'a mut OperationCounters,
                    timings: &'a mut PhaseTimings,
                    sweeps: usize,
                    error: Option<Error>,
                }
                let state = std::cell::RefCell::new(KrylovState {
                    workspaces: &mut workspaces,
                    counters: &mut counters,
                    timings: &mut timings,
                    sweeps: 0,
                    error: None,
                });
                let apply = |v: &nalgebra::DVector<Complex64>| {
                    let mut state = state.borrow_mut();
                    if state.error.is_some() {
                        return v.clone();
                    }
                    state.sweeps += 1;
                    let current = unpack(v);
                    let mut out = v.clone();
                    for j in 0..cluster_count {
                        let KrylovState {
                            workspaces,
                            counters,
                            timings,
                            ..
                        } = &mut *state;
                        match update_cluster(
                            scenario,
                            j,
                            &current,
                            None,
                            false,
                            &mut workspaces[j],
                            counters,
                            timings,
                        ) {
                            Ok(outcome) => {
                                for (i, w) in outcome.layer.weights().iter().enumerate() {
                                    out[offsets[j] + i] = v[offsets[j] + i] - w;
                                }
                            }
                            Err(err) => {
                                state.error = Some(err);
                                return v.clone();
                            }
                        }
                    }
                    out
                };
                let gmres_cfg = GmresConfig {
                    restart: dim.min(40),
                    max_iterations: scenario.coupling.max_iterations,
                    rtol: scenario.coupling.tolerance,
                };
                let result = gmres(apply, &c, Some(&c), &gmres_cfg);
                let state = state.into_inner();
                if let Some(err) = state.error {
                    return Err(err);
                }
                iteration_count += state.sweeps;
                history.push(result.residual);
                converged = result.converged;

                // Final self-consistent state: one incident-plus-layers
                // sweep at the solution (Jacobi so every cluster sees the
                // same converged weights).
                let final_layers = unpack(&result.x);
                let mut worst = 0.0f64;
                for j in 0..cluster_count {
                    let outcome = update_cluster(
                        scenario,
                        j,
                        &final_layers,
                        final_layers[j].as_ref(),
                        true,
                        &mut workspaces[j],
                        &mut counters,
                        &mut timings,
                    )?;
                    worst = worst.max(outcome.delta);
                    layers[j] = Some(outcome.layer);
                    solutions[j] = Some(outcome.solution);
                    reports[j] = Some(outcome.report);
                }
                iteration_count += 1;
                history.push(worst);
            }
        }
    }

    if !converged {
        log::warn!(
            "coupling stopped at the sweep budget ({}) with residual {:.3e} > {:.1e}",
            scenario.coupling.max_iterations,
            history.last().copied().unwrap_or(f64::NAN),
            scenario.coupling.tolerance
        );
    }

    timings.total = total_watch.seconds();
    Ok(CoupledSolution {
        k: scenario.k,
        incident: scenario.incident,
        solutions: solutions.into_iter().map(|s| s.expect("filled")).collect(),
        layers: layers.into_iter().map(|l| l.expect("filled")).collect(),
        fit_reports: reports.into_iter().map(|r| r.expect("filled")).collect(),
        iteration_count,
        convergence_history: history,
        converged,
        counters,
        timings,
    })
}

// ---------------------------------------------------------------------
// Global evaluation
// ---------------------------------------------------------------------

/// Scattered field of the coupled system at `x`: each cluster contributes
/// through its layer, except the cluster whose enclosure contains `x` (or
/// nearly does), which falls back to its exact per-rod sum — the layer
/// representation is only valid outside the curve.
pub fn global_scattered_field(solution: &CoupledSolution, x: Vec2) -> Result<Complex64> {
    let mut total = Complex64::new(0.0, 0.0);
    for (cluster_solution, layer) in solution.solutions.iter().zip(&solution.layers) {
        match layer.curve().contains(x) {
            Containment::Outside => total += evaluate_layer(layer, x)?,
            Containment::Inside | Containment::NearBoundary => {
                total += scattered_field_direct(cluster_solution, x)?
            }
        }
    }
    Ok(total)
}

/// Incident plus scattered field of the coupled system.
pub fn global_total_field(solution: &CoupledSolution, x: Vec2) -> Result<Complex64> {
    Ok(solution.incident.evaluate(solution.k, x) + global_scattered_field(solution, x)?)
}

// ---------------------------------------------------------------------
// Reporting
// ---------------------------------------------------------------------

/// Cost summary comparing the layer-mediated coupling against the
/// hypothetical all-rods direct coupling (N^2 kernel evaluations).
#[derive(Clone, Debug, Serialize)]
pub struct OperationCountReport {
    pub total_rods: usize,
    pub cluster_rods: Vec<usize>,
    pub chosen_monopoles: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
    pub counters: OperationCounters,
    /// N^2: what one dense all-rods assembly of the same problem costs.
    pub direct_pairwise_evaluations: u64,
    /// counters.coupling / N^2.
    pub coupling_fraction_of_direct: f64,
    pub timings: PhaseTimings,
}

pub fn operation_count_report(
    scenario: &MultiClusterScenario,
    solution: &CoupledSolution,
) -> OperationCountReport {
    let total_rods = scenario.total_rods();
    let direct = (total_rods as u64) * (total_rods as u64);
    OperationCountReport {
        total_rods,
        cluster_rods: scenario
            .clusters
            .iter()
            .map(|c| c.scatterers().len())
            .collect(),
        chosen_monopoles: solution.layers.iter().map(|l| l.monopole_count()).collect(),
        iterations: solution.iteration_count,
        converged: solution.converged,
        counters: solution.counters,
        direct_pairwise_evaluations: direct,
        coupling_fraction_of_direct: if direct == 0 {
            0.0
        } else {
            solution.counters.coupling as f64 / direct as f64
        },
        timings: solution.timings,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_trefoil, BoundaryCurve, Scatterer};
    use crate::special::hankel1;

    fn circle(radius: f64, center: Vec2, m: usize) -> BoundaryCurve {
        make_trefoil(radius, 0.0, 1, center, 0.0, m).unwrap()
    }

    /// Tiny 3-rod cluster inside a circle at `center`.
    fn small_cluster(center: Vec2) -> Cluster {
        let rods = vec![
            Scatterer::new(center + Vec2::new(-0.2, 0.0), 0.02, 12.0).unwrap(),
            Scatterer::new(center + Vec2::new(0.2, 0.1), 0.02, 12.0).unwrap(),
            Scatterer::new(center + Vec2::new(0.0, -0.25), 0.02, 12.0).unwrap(),
        ];
        Cluster::new(rods, circle(0.8, center, 64)).unwrap()
    }

    fn k1() -> WaveNumber {
        WaveNumber::from_wavelength(4.0).unwrap()
    }

    fn plane_wave() -> IncidentField {
        IncidentField::plane_wave(Vec2::new(0.0, -1.0), Complex64::new(1.0, 0.0)).unwrap()
    }

    fn two_cluster_scenario(coupling: CouplingConfig) -> MultiClusterScenario {
        MultiClusterScenario::new(
            vec![
                small_cluster(Vec2::new(-2.0, 0.0)),
                small_cluster(Vec2::new(2.0, 0.0)),
            ],
            plane_wave(),
            k1(),
            coupling,
            SolverConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn scenario_validation_rejects_bad_configs() {
        let err = MultiClusterScenario::new(
            vec![],
            plane_wave(),
            k1(),
            CouplingConfig::default(),
            SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::Degenerate(_))));

        // Overlapping enclosures.
        let err = MultiClusterScenario::new(
            vec![
                small_cluster(Vec2::new(0.0, 0.0)),
                small_cluster(Vec2::new(1.0, 0.0)),
            ],
            plane_wave(),
            k1(),
            CouplingConfig::default(),
            SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::Geometry(_))));

        // Fixed counts with the wrong arity.
        let coupling = CouplingConfig {
            monopoles: MonopoleCountChoice::Fixed(vec![8]),
            ..CouplingConfig::default()
        };
        let err = MultiClusterScenario::new(
            vec![
                small_cluster(Vec2::new(-2.0, 0.0)),
                small_cluster(Vec2::new(2.0, 0.0)),
            ],
            plane_wave(),
            k1(),
            coupling,
            SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));

        // Nonsense tolerance.
        let coupling = CouplingConfig {
            tolerance: 0.0,
            ..CouplingConfig::default()
        };
        let err = MultiClusterScenario::new(
            vec![small_cluster(Vec2::new(0.0, 0.0))],
            plane_wave(),
            k1(),
            coupling,
            SolverConfig::default(),
        );
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn driving_field_trivials() {
        let scenario = two_cluster_scenario(CouplingConfig::default());
        let incident = scenario.incident();
        let k = scenario.wavenumber();

        // No layers yet: plain incident field at the rod centers.
        let none: Vec<Option<MonopoleLayer>> = vec![None, None];
        let values = local_incident_values(&scenario, 0, &none).unwrap();
        for (rod, v) in scenario.clusters()[0].scatterers().iter().zip(&values) {
            assert_eq!(*v, incident.evaluate(k, rod.position));
        }

        // A zero-weight foreign layer changes nothing.
        let curve = scenario.clusters()[1].enclosure().clone();
        let points = crate::layer::select_monopole_points(&curve, 4).unwrap();
        let zero = MonopoleLayer::new(
            curve.clone(),
            points.clone(),
            vec![Complex64::new(0.0, 0.0); 4],
            k,
        )
        .unwrap();
        let with_zero = vec![None, Some(zero)];
        let same = local_incident_values(&scenario, 0, &with_zero).unwrap();
        assert_eq!(values, same);

        // One unit monopole adds exactly its kernel.
        let unit = MonopoleLayer::new(
            curve,
            vec![points[0]],
            vec![Complex64::new(1.0, 0.0)],
            k,
        )
        .unwrap();
        let with_unit = vec![None, Some(unit)];
        let shifted = local_incident_values(&scenario, 0, &with_unit).unwrap();
        for ((rod, base), v) in scenario.clusters()[0]
            .scatterers()
            .iter()
            .zip(&values)
            .zip(&shifted)
        {
            let expected =
                base + hankel1(0, k.value() * rod.position.dist(points[0])).unwrap();
            assert!((v - expected).norm() < 1e-15);
        }

        // Own layer never feeds back into the driving field.
        let values_own = local_incident_values(&scenario, 1, &with_unit).unwrap();
        for (rod, v) in scenario.clusters()[1].scatterers().iter().zip(&values_own) {
            assert_eq!(*v, incident.evaluate(k, rod.position));
        }
    }

    #[test]
    fn relative_change_conventions() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let zero = [Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(relative_change(&a, None), 1.0);
        assert_eq!(relative_change(&zero, None), 0.0);
        assert_eq!(relative_change(&zero, Some(&zero)), 0.0);
        assert_eq!(relative_change(&a, Some(&a)), 0.0);
        assert_eq!(relative_change(&zero, Some(&a)), 1.0);
        let b = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert!((relative_change(&a, Some(&b)) - 1.0 / 2.0_f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn selection_walk_cost_arithmetic() {
        // Walk [7, 14, 28]: choosing 14 costs M*(7 + 14).
        assert_eq!(selection_assembly_count(100, &[7, 14, 28], 14), 2100);
        assert_eq!(selection_assembly_count(100, &[7, 14, 28], 7), 700);
        assert_eq!(selection_assembly_count(100, &[7, 14, 28], 28), 4900);
    }

    #[test]
    fn single_cluster_converges_immediately_and_reports_no_coupling() {
        let scenario = MultiClusterScenario::new(
            vec![small_cluster(Vec2::new(0.0, 0.0))],
            plane_wave(),
            k1(),
            CouplingConfig::default(),
            SolverConfig::default(),
        )
        .unwrap();
        let solution = solve_coupled(&scenario).unwrap();
        assert!(solution.converged());
        assert_eq!(solution.iteration_count(), 1);
        assert_eq!(solution.convergence_history(), &[0.0]);

        let report = operation_count_report(&scenario, &solution);
        assert_eq!(report.counters.coupling, 0);
        assert_eq!(report.total_rods, 3);
        assert_eq!(report.counters.local_assembly, 3);

        // Identical code path as the isolated direct solve: bitwise equal.
        let direct = crate::foldy_lax::solve_direct(
            scenario.clusters()[0].scatterers(),
            scenario.incident(),
            scenario.wavenumber(),
            *scenario.solver(),
        )
        .unwrap();
        assert_eq!(solution.solutions()[0].amplitudes(), direct.amplitudes());
    }

    #[test]
    fn coupling_counter_matches_sweep_arithmetic() {
        // Fixed P = 6 on both clusters, Gauss-Seidel. Sweep 0 costs one
        // direction only (the first cluster sees no layer yet); every
        // further sweep costs both directions: N P (2 I - 1) in total.
        let coupling = CouplingConfig {
            tolerance: 1e-30, // unreachable: run the full budget
            max_iterations: 4,
            mode: CouplingMode::GaussSeidel,
            monopoles: MonopoleCountChoice::Fixed(vec![6, 6]),
        };
        let scenario = two_cluster_scenario(coupling);
        let solution = solve_coupled(&scenario).unwrap();
        assert_eq!(solution.iteration_count(), 4);
        let n = 3u64;
        let p = 6u64;
        let sweeps = 4u64;
        assert_eq!(solution.counters().coupling, n * p * (2 * sweeps - 1));
        // The layer route must beat half the direct pairwise count
        // whenever I * P < N / 2 (here trivially since rod counts are tiny
        // only the arithmetic is under test).
        let report = operation_count_report(&scenario, &solution);
        assert_eq!(report.direct_pairwise_evaluations, 36);

        // Jacobi: sweep 0 is free (no layers exist), later sweeps cost
        // both directions.
        let coupling = CouplingConfig {
            tolerance: 1e-30,
            max_iterations: 4,
            mode: CouplingMode::Jacobi,
            monopoles: MonopoleCountChoice::Fixed(vec![6, 6]),
        };
        let scenario = two_cluster_scenario(coupling);
        let solution = solve_coupled(&scenario).unwrap();
        assert_eq!(solution.counters().coupling, n * p * 2 * (sweeps - 1));
    }

    #[test]
    fn zero_incident_gives_zero_layers_and_zero_field() {
        let coupling = CouplingConfig::default();
        let scenario = MultiClusterScenario::new(
            vec![
                small_cluster(Vec2::new(-2.0, 0.0)),
                small_cluster(Vec2::new(2.0, 0.0)),
            ],
            IncidentField::plane_wave(Vec2::new(0.0, -1.0), Complex64::new(0.0, 0.0)).unwrap(),
            k1(),
            coupling,
            SolverConfig::default(),
        )
        .unwrap();
        let solution = solve_coupled(&scenario).unwrap();
        assert!(solution.converged());
        assert_eq!(solution.iteration_count(), 1);
        for layer in solution.layers() {
            assert!(layer.weights().iter().all(|w| w.norm() == 0.0));
        }
        let field = global_scattered_field(&solution, Vec2::new(10.0, 3.0)).unwrap();
        assert_eq!(field, Complex64::new(0.0, 0.0));
    }
}
