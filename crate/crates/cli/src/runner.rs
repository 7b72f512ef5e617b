//! The five verbs: `direct`, `fit`, `fmm`, `compare`, `validate`.
//!
//! Each run loads one scenario file, computes, writes CSV artifacts plus
//! `report.json` into the output directory, and returns the report. The
//! `direct` solve treats all rods as one dense system and is the
//! reference everything else is judged against.

use crate::output::{
    self, circle_points, inside_flag, out_file, plan_grid, prepare_out_dir, AmplitudeRow, Grid,
    MapSample,
};
use crate::report::{ClusterReport, ErrorMetrics, RunReport, Timings};
use crate::scenario::{self, LoadedScenario, MonopoleSpec};
use crate::{CliError, CliResult};
use monoscat::fmm::{global_total_field, solve_coupled, CoupledSolution, MultiClusterScenario};
use monoscat::foldy_lax::{scattered_field_direct, ClusterSolution, FoldyOperator};
use monoscat::geometry::{homothety, Containment, Vec2};
use monoscat::layer::{
    boundary_values, evaluate_layer, select_monopole_fitter_with, FitReport, LayerFitter,
    MonopoleLayer,
};
use monoscat::special::dft;
use num_complex::Complex64;
use rayon::prelude::*;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Ratio of the validation curve to the enclosure: fields reconstructed
/// from a layer are checked on this enlarged copy of each curve.
pub const VALIDATION_HOMOTHETY: f64 = 1.3;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub scenario_path: PathBuf,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub bench: bool,
}

impl RunOptions {
    pub fn new(scenario: impl Into<PathBuf>, out: impl Into<PathBuf>) -> RunOptions {
        RunOptions {
            scenario_path: scenario.into(),
            out_dir: Some(out.into()),
            workers: None,
            seed: None,
            bench: false,
        }
    }

    fn out_dir(&self) -> CliResult<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| CliError::Config("--out <dir> is required for this mode".to_string()))
    }
}

/// Run a closure inside a dedicated worker pool when `--workers` is set;
/// otherwise inherit the process-global pool.
fn with_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> CliResult<T> + Send,
) -> CliResult<T> {
    match workers {
        None => f(),
        Some(n) => {
            if n == 0 {
                return Err(CliError::Config("--workers must be at least 1".to_string()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("worker pool: {e}")))?
                .install(f)
        }
    }
}

/// Evaluate a field over many points in parallel. Points sitting exactly
/// on a source (where the kernel is singular) yield `None`.
fn eval_samples<F>(
    points: &[Vec2],
    scenario: &MultiClusterScenario,
    field: F,
) -> CliResult<Vec<MapSample>>
where
    F: Fn(Vec2) -> monoscat::Result<Complex64> + Sync,
{
    points
        .par_iter()
        .map(|&x| {
            let value = match field(x) {
                Ok(v) => Some(v),
                Err(monoscat::Error::SingularPoint(_)) => None,
                Err(e) => return Err(CliError::from(e)),
            };
            Ok(MapSample {
                position: x,
                value,
                flag: inside_flag(scenario, x),
            })
        })
        .collect()
}

/// Evaluate a trace where every point must be regular (observation
/// circles are away from all sources by construction of a sane scenario).
fn eval_trace<F>(points: &[Vec2], field: F) -> CliResult<Vec<Complex64>>
where
    F: Fn(Vec2) -> monoscat::Result<Complex64> + Sync,
{
    points
        .par_iter()
        .map(|&x| field(x).map_err(CliError::from))
        .collect()
}

fn grid_points(grid: &Grid) -> Vec<Vec2> {
    (0..grid.len()).map(|i| grid.point(i)).collect()
}

/// All-rods dense reference solve, with assembly and solve timed apart.
struct DirectSolve {
    solution: ClusterSolution,
    /// Rod index ranges per cluster, for per-cluster bookkeeping.
    offsets: Vec<usize>,
    assembly_seconds: f64,
    solve_seconds: f64,
}

fn direct_solve(loaded: &LoadedScenario) -> CliResult<DirectSolve> {
    let scenario = &loaded.scenario;
    let k = scenario.wavenumber();
    let mut rods = Vec::with_capacity(scenario.total_rods());
    let mut offsets = Vec::with_capacity(scenario.clusters().len() + 1);
    offsets.push(0);
    for cluster in scenario.clusters() {
        rods.extend_from_slice(cluster.scatterers());
        offsets.push(rods.len());
    }

    let clock = Instant::now();
    let operator = FoldyOperator::new(&rods, k, *scenario.solver())?;
    let assembly_seconds = clock.elapsed().as_secs_f64();

    let driving: Vec<Complex64> = rods
        .iter()
        .map(|r| scenario.incident().evaluate(k, r.position))
        .collect();
    let clock = Instant::now();
    let (amplitudes, _residual) = operator.solve(&driving)?;
    let solve_seconds = clock.elapsed().as_secs_f64();

    Ok(DirectSolve {
        solution: ClusterSolution::new(amplitudes, k, rods)?,
        offsets,
        assembly_seconds,
        solve_seconds,
    })
}

/// Split an all-rods solution back into per-cluster solutions.
fn restrict_per_cluster(direct: &DirectSolve) -> CliResult<Vec<ClusterSolution>> {
    let k = direct.solution.wavenumber();
    direct
        .offsets
        .windows(2)
        .map(|w| {
            Ok(ClusterSolution::new(
                direct.solution.amplitudes()[w[0]..w[1]].to_vec(),
                k,
                direct.solution.scatterers()[w[0]..w[1]].to_vec(),
            )?)
        })
        .collect()
}

fn amplitude_rows(solutions: &[ClusterSolution]) -> Vec<AmplitudeRow> {
    let mut rows = Vec::new();
    for (c, solution) in solutions.iter().enumerate() {
        for (i, (rod, &s)) in solution
            .scatterers()
            .iter()
            .zip(solution.amplitudes())
            .enumerate()
        {
            rows.push(AmplitudeRow {
                cluster: c,
                index: i,
                position: rod.position,
                radius: rod.radius,
                permittivity: rod.permittivity,
                amplitude: s,
            });
        }
    }
    rows
}

fn cluster_reports(
    scenario: &MultiClusterScenario,
    fits: Option<&[FitReport]>,
) -> Vec<ClusterReport> {
    scenario
        .clusters()
        .iter()
        .enumerate()
        .map(|(j, cluster)| ClusterReport {
            rods: cluster.scatterers().len(),
            curve_samples: cluster.enclosure().sample_count(),
            monopoles: fits.map(|f| f[j].chosen_p),
            fit: fits.map(|f| f[j]),
        })
        .collect()
}

fn base_report(mode: &str, loaded: &LoadedScenario, opts: &RunOptions) -> RunReport {
    let mut report = RunReport::new(
        mode,
        &opts.scenario_path.display().to_string(),
        &loaded.hash,
    );
    report.seed_override = loaded.seed_override;
    report.wavelength = loaded.scenario.wavenumber().wavelength();
    report.wavenumber = loaded.scenario.wavenumber().value();
    report.total_rods = loaded.scenario.total_rods();
    report.bench = opts.bench;
    report
}

/// `direct`: one dense system over every rod; emits the field map, the
/// observation trace, and the rod amplitudes.
pub fn run_direct(opts: &RunOptions) -> CliResult<RunReport> {
    let out = opts.out_dir()?.to_path_buf();
    let loaded = scenario::load(&opts.scenario_path, opts.seed)?;
    with_pool(opts.workers, move || {
        if opts.bench {
            let _ = direct_solve(&loaded)?;
        }
        let wall = Instant::now();
        let direct = direct_solve(&loaded)?;
        let scenario = &loaded.scenario;
        let incident = scenario.incident();

        let grid = plan_grid(&loaded.file.grid, scenario, loaded.file.wavelength)?;
        let clock = Instant::now();
        let points = grid_points(&grid);
        let samples = eval_samples(&points, scenario, |x| {
            Ok(incident.evaluate(scenario.wavenumber(), x)
                + scattered_field_direct(&direct.solution, x)?)
        })?;
        let trace = match &loaded.file.observation {
            Some(obs) => {
                let pts = circle_points(obs);
                let values = eval_trace(&pts, |x| {
                    Ok(incident.evaluate(scenario.wavenumber(), x)
                        + scattered_field_direct(&direct.solution, x)?)
                })?;
                Some((pts, values))
            }
            None => None,
        };
        let evaluation = clock.elapsed().as_secs_f64();
        let total = wall.elapsed().as_secs_f64();

        prepare_out_dir(&out)?;
        let mut report = base_report("direct", &loaded, opts);
        output::write_field_map(&out_file(&out, "field_map.csv"), &samples)?;
        report.outputs.push("field_map.csv".to_string());
        if let Some((pts, values)) = &trace {
            output::write_circle_trace(&out_file(&out, "circle_trace.csv"), pts, values)?;
            report.outputs.push("circle_trace.csv".to_string());
        }
        let per_cluster = restrict_per_cluster(&direct)?;
        output::write_amplitudes(&out_file(&out, "amplitudes.csv"), &amplitude_rows(&per_cluster))?;
        report.outputs.push("amplitudes.csv".to_string());

        report.clusters = cluster_reports(scenario, None);
        report.timings = Timings {
            assembly: direct.assembly_seconds,
            solve: direct.solve_seconds,
            fit: 0.0,
            coupling: 0.0,
            evaluation,
            total,
        };
        report.write(&out_file(&out, "report.json"))?;
        report.outputs.push("report.json".to_string());
        Ok(report)
    })
}

/// Per-cluster layers fitted against the all-rods reference solution.
struct FittedLayers {
    solutions: Vec<ClusterSolution>,
    layers: Vec<MonopoleLayer>,
    reports: Vec<FitReport>,
    fit_seconds: f64,
}

fn fit_layers(loaded: &LoadedScenario, direct: &DirectSolve) -> CliResult<FittedLayers> {
    let scenario = &loaded.scenario;
    let k = scenario.wavenumber();
    let solutions = restrict_per_cluster(direct)?;
    let clock = Instant::now();
    let mut layers = Vec::new();
    let mut reports = Vec::new();
    for (spec, (cluster, solution)) in loaded
        .file
        .clusters
        .iter()
        .zip(scenario.clusters().iter().zip(&solutions))
    {
        let curve = cluster.enclosure();
        let data = boundary_values(solution, curve)?;
        let fitter = match spec.monopoles {
            MonopoleSpec::Count(p) => LayerFitter::with_count(curve, p, k)?,
            _ => {
                let cfg = &loaded.file.fit;
                let grid: Vec<usize> = cfg
                    .p_grid
                    .iter()
                    .copied()
                    .filter(|&p| p < curve.sample_count())
                    .collect();
                if grid.is_empty() {
                    return Err(CliError::Config(format!(
                        "no monopole-count candidate below the curve's {} samples",
                        curve.sample_count()
                    )));
                }
                let (fitter, report) = select_monopole_fitter_with(
                    curve,
                    &data,
                    k,
                    cfg.tail_threshold,
                    cfg.residual_cap,
                    &grid,
                )?;
                if !report.converged {
                    log::warn!(
                        "monopole-count selection exhausted the grid (best P = {}, \
                         residual {:.3e})",
                        report.chosen_p,
                        report.relative_residual
                    );
                }
                fitter
            }
        };
        let (layer, report) = fitter.fit(&data)?;
        layers.push(layer);
        reports.push(report);
    }
    Ok(FittedLayers {
        solutions,
        layers,
        reports,
        fit_seconds: clock.elapsed().as_secs_f64(),
    })
}

/// Field reconstructed from the fitted layers: the layer of the cluster
/// that owns the region is swapped for the direct rod sum inside it,
/// mirroring how the coupled solver evaluates its own global field.
fn reconstructed_total(
    fitted: &FittedLayers,
    scenario: &MultiClusterScenario,
    x: Vec2,
) -> monoscat::Result<Complex64> {
    let k = scenario.wavenumber();
    let mut acc = scenario.incident().evaluate(k, x);
    for (cluster, (layer, solution)) in scenario
        .clusters()
        .iter()
        .zip(fitted.layers.iter().zip(&fitted.solutions))
    {
        acc += match cluster.enclosure().contains(x) {
            Containment::Outside => evaluate_layer(layer, x)?,
            _ => scattered_field_direct(solution, x)?,
        };
    }
    Ok(acc)
}

/// `fit`: reference solve, per-cluster layer fits, reconstruction map,
/// density spectra, and the direct-vs-layer trace on the enlarged curve.
pub fn run_fit(opts: &RunOptions) -> CliResult<RunReport> {
    let out = opts.out_dir()?.to_path_buf();
    let loaded = scenario::load(&opts.scenario_path, opts.seed)?;
    with_pool(opts.workers, move || {
        if opts.bench {
            let direct = direct_solve(&loaded)?;
            let _ = fit_layers(&loaded, &direct)?;
        }
        let wall = Instant::now();
        let direct = direct_solve(&loaded)?;
        let fitted = fit_layers(&loaded, &direct)?;
        let scenario = &loaded.scenario;
        let k = scenario.wavenumber();

        // Validation trace: both field routes on the enlarged curves.
        let clock = Instant::now();
        let mut trace_clusters = Vec::new();
        let mut trace_points = Vec::new();
        for (j, cluster) in scenario.clusters().iter().enumerate() {
            let ring = homothety(cluster.enclosure(), VALIDATION_HOMOTHETY)?;
            trace_clusters.extend(std::iter::repeat(j).take(ring.sample_count()));
            trace_points.extend_from_slice(ring.samples());
        }
        let reference = eval_trace(&trace_points, |x| {
            Ok(scenario.incident().evaluate(k, x) + scattered_field_direct(&direct.solution, x)?)
        })?;
        let reconstructed = eval_trace(&trace_points, |x| reconstructed_total(&fitted, scenario, x))?;

        let grid = plan_grid(&loaded.file.grid, scenario, loaded.file.wavelength)?;
        let points = grid_points(&grid);
        let samples = eval_samples(&points, scenario, |x| {
            reconstructed_total(&fitted, scenario, x)
        })?;
        let evaluation = clock.elapsed().as_secs_f64();
        let total = wall.elapsed().as_secs_f64();

        prepare_out_dir(&out)?;
        let mut report = base_report("fit", &loaded, opts);
        output::write_field_map(&out_file(&out, "field_map.csv"), &samples)?;
        report.outputs.push("field_map.csv".to_string());
        output::write_comparison_trace(
            &out_file(&out, "homothety_trace.csv"),
            "direct",
            &trace_clusters,
            &trace_points,
            &reference,
            &reconstructed,
        )?;
        report.outputs.push("homothety_trace.csv".to_string());
        for (j, layer) in fitted.layers.iter().enumerate() {
            let name = format!("layer_{j}.csv");
            output::write_layer(
                &out_file(&out, &name),
                j,
                k.value(),
                layer.points(),
                layer.weights(),
            )?;
            report.outputs.push(name);
            let spectrum = dft(layer.weights());
            let name = format!("spectrum_{j}.csv");
            output::write_spectrum(&out_file(&out, &name), j, &spectrum)?;
            report.outputs.push(name);
        }
        output::write_amplitudes(
            &out_file(&out, "amplitudes.csv"),
            &amplitude_rows(&fitted.solutions),
        )?;
        report.outputs.push("amplitudes.csv".to_string());

        report.clusters = cluster_reports(scenario, Some(&fitted.reports));
        report.error_metrics = Some(ErrorMetrics::between(&reference, &reconstructed));
        report.timings = Timings {
            assembly: direct.assembly_seconds,
            solve: direct.solve_seconds,
            fit: fitted.fit_seconds,
            coupling: 0.0,
            evaluation,
            total,
        };
        report.write(&out_file(&out, "report.json"))?;
        report.outputs.push("report.json".to_string());
        Ok(report)
    })
}

fn coupled_timings(solution: &CoupledSolution, evaluation: f64, total: f64) -> Timings {
    let t = solution.timings();
    Timings {
        assembly: 0.0, // operator assembly is folded into the local solves
        solve: t.local_solve,
        fit: t.boundary_sampling + t.fitting,
        coupling: t.coupling_eval,
        evaluation,
        total,
    }
}

/// `fmm`: coupled cluster solve; emits the map and trace evaluated
/// through the layers, per-cluster layer files, and the counters that
/// substantiate the claimed cost.
pub fn run_fmm(opts: &RunOptions) -> CliResult<RunReport> {
    let out = opts.out_dir()?.to_path_buf();
    let loaded = scenario::load(&opts.scenario_path, opts.seed)?;
    with_pool(opts.workers, move || {
        let scenario = &loaded.scenario;
        if opts.bench {
            let _ = solve_coupled(scenario)?;
        }
        let wall = Instant::now();
        let coupled = solve_coupled(scenario)?;

        let clock = Instant::now();
        let grid = plan_grid(&loaded.file.grid, scenario, loaded.file.wavelength)?;
        let points = grid_points(&grid);
        let samples = eval_samples(&points, scenario, |x| global_total_field(&coupled, x))?;
        let trace = match &loaded.file.observation {
            Some(obs) => {
                let pts = circle_points(obs);
                let values = eval_trace(&pts, |x| global_total_field(&coupled, x))?;
                Some((pts, values))
            }
            None => None,
        };
        let evaluation = clock.elapsed().as_secs_f64();
        let total = wall.elapsed().as_secs_f64();

        prepare_out_dir(&out)?;
        let mut report = base_report("fmm", &loaded, opts);
        output::write_field_map(&out_file(&out, "field_map.csv"), &samples)?;
        report.outputs.push("field_map.csv".to_string());
        if let Some((pts, values)) = &trace {
            output::write_circle_trace(&out_file(&out, "circle_trace.csv"), pts, values)?;
            report.outputs.push("circle_trace.csv".to_string());
        }
        for (j, layer) in coupled.layers().iter().enumerate() {
            let name = format!("layer_{j}.csv");
            output::write_layer(
                &out_file(&out, &name),
                j,
                scenario.wavenumber().value(),
                layer.points(),
                layer.weights(),
            )?;
            report.outputs.push(name);
            let spectrum = dft(layer.weights());
            let name = format!("spectrum_{j}.csv");
            output::write_spectrum(&out_file(&out, &name), j, &spectrum)?;
            report.outputs.push(name);
        }
        output::write_amplitudes(
            &out_file(&out, "amplitudes.csv"),
            &amplitude_rows(coupled.solutions()),
        )?;
        report.outputs.push("amplitudes.csv".to_string());

        report.clusters = cluster_reports(scenario, Some(coupled.fit_reports()));
        report.iterations = Some(coupled.iteration_count());
        report.converged = Some(coupled.converged());
        report.convergence_history = coupled.convergence_history().to_vec();
        report.counters = Some(coupled.counters());
        report.timings = coupled_timings(&coupled, evaluation, total);
        report.write(&out_file(&out, "report.json"))?;
        report.outputs.push("report.json".to_string());
        Ok(report)
    })
}

/// `compare`: both solves on the same scenario, two traces on the
/// observation circle, their disagreement, and the wall-time ratio.
pub fn run_compare(opts: &RunOptions) -> CliResult<RunReport> {
    let out = opts.out_dir()?.to_path_buf();
    let loaded = scenario::load(&opts.scenario_path, opts.seed)?;
    let obs = loaded.file.observation.clone().ok_or_else(|| {
        CliError::Config("compare mode needs an [observation] circle in the scenario".to_string())
    })?;
    with_pool(opts.workers, move || {
        let scenario = &loaded.scenario;
        let k = scenario.wavenumber();
        let pts = circle_points(&obs);

        if opts.bench {
            let direct = direct_solve(&loaded)?;
            let _ = eval_trace(&pts, |x| {
                Ok(scenario.incident().evaluate(k, x)
                    + scattered_field_direct(&direct.solution, x)?)
            })?;
            let coupled = solve_coupled(scenario)?;
            let _ = eval_trace(&pts, |x| global_total_field(&coupled, x))?;
        }

        let clock = Instant::now();
        let direct = direct_solve(&loaded)?;
        let direct_values = eval_trace(&pts, |x| {
            Ok(scenario.incident().evaluate(k, x) + scattered_field_direct(&direct.solution, x)?)
        })?;
        let direct_seconds = clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let coupled = solve_coupled(scenario)?;
        let fast_values = eval_trace(&pts, |x| global_total_field(&coupled, x))?;
        let fast_seconds = clock.elapsed().as_secs_f64();

        prepare_out_dir(&out)?;
        let mut report = base_report("compare", &loaded, opts);
        output::write_circle_trace(&out_file(&out, "circle_trace_direct.csv"), &pts, &direct_values)?;
        report.outputs.push("circle_trace_direct.csv".to_string());
        output::write_circle_trace(&out_file(&out, "circle_trace_fmm.csv"), &pts, &fast_values)?;
        report.outputs.push("circle_trace_fmm.csv".to_string());

        report.clusters = cluster_reports(scenario, Some(coupled.fit_reports()));
        report.iterations = Some(coupled.iteration_count());
        report.converged = Some(coupled.converged());
        report.convergence_history = coupled.convergence_history().to_vec();
        report.counters = Some(coupled.counters());
        report.error_metrics = Some(ErrorMetrics::between(&direct_values, &fast_values));
        report.timing_ratio = Some(direct_seconds / fast_seconds);
        report.direct_seconds = Some(direct_seconds);
        report.fast_seconds = Some(fast_seconds);
        report.timings = coupled_timings(&coupled, 0.0, direct_seconds + fast_seconds);
        report.write(&out_file(&out, "report.json"))?;
        report.outputs.push("report.json".to_string());
        Ok(report)
    })
}

/// `validate`: parse, build, and summarize without computing anything.
pub fn run_validate(opts: &RunOptions) -> CliResult<serde_json::Value> {
    let loaded = scenario::load(&opts.scenario_path, opts.seed)?;
    let scenario = &loaded.scenario;
    let grid = plan_grid(&loaded.file.grid, scenario, loaded.file.wavelength)?;
    let clusters: Vec<serde_json::Value> = scenario
        .clusters()
        .iter()
        .zip(&loaded.file.clusters)
        .map(|(cluster, spec)| {
            serde_json::json!({
                "rods": cluster.scatterers().len(),
                "curve_samples": cluster.enclosure().sample_count(),
                "perimeter": cluster.enclosure().perimeter(),
                "monopoles": match spec.monopoles {
                    MonopoleSpec::Count(p) => serde_json::json!(p),
                    _ => serde_json::json!("auto"),
                },
            })
        })
        .collect();
    Ok(serde_json::json!({
        "valid": true,
        "scenario_hash": loaded.hash,
        "wavelength": loaded.file.wavelength,
        "total_rods": scenario.total_rods(),
        "clusters": clusters,
        "grid": { "nx": grid.nx, "ny": grid.ny, "step": grid.step },
        "observation": loaded.file.observation,
        "coupling_mode": loaded.file.coupling.mode,
    }))
}
