//! Demo engine: builds randomized ring-of-clusters scenarios, runs the
//! coupled solve, and serves render-ready views of the result. Plain
//! Rust so the logic is testable natively; the wasm bindings in `lib.rs`
//! are a thin shell over this.

use monoscat::fmm::{
    global_total_field, solve_coupled, CoupledSolution, CouplingConfig, FitConfig,
    MonopoleCountChoice, MultiClusterScenario,
};
use monoscat::foldy_lax::{scattered_field_direct, solve_direct, IncidentField, SolverConfig};
use monoscat::geometry::{make_trefoil, Cluster, Scatterer, Vec2};
use monoscat::special::WaveNumber;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PI: f64 = std::f64::consts::PI;
const ENCLOSURE_RADIUS: f64 = 0.9;
const ROD_RADIUS: f64 = 0.02;
const PERMITTIVITY: f64 = 12.0;

/// UI-facing knobs, already clamped to ranges the solver handles well.
#[derive(Clone, Copy, Debug)]
pub struct DemoParams {
    pub wavelength: f64,
    pub cluster_count: usize,
    pub rods_per_cluster: usize,
    pub seed: u64,
    pub incident_angle_deg: f64,
}

impl DemoParams {
    fn clamped(self) -> DemoParams {
        DemoParams {
            wavelength: self.wavelength.clamp(2.0, 40.0),
            cluster_count: self.cluster_count.clamp(1, 6),
            rods_per_cluster: self.rods_per_cluster.clamp(1, 80),
            seed: self.seed,
            incident_angle_deg: self.incident_angle_deg,
        }
    }
}

pub struct Engine {
    scenario: MultiClusterScenario,
    solution: CoupledSolution,
}

impl Engine {
    pub fn build(params: DemoParams) -> Result<Engine, String> {
        let params = params.clamped();
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let n = params.cluster_count;
        // Ring large enough that neighbouring enclosures keep clear of
        // each other: chord between adjacent centers > 2 radii + margin.
        let ring = if n == 1 {
            0.0
        } else {
            (2.0 * ENCLOSURE_RADIUS + 0.8) / (2.0 * (PI / n as f64).sin())
        };
        let clusters: Result<Vec<Cluster>, String> = (0..n)
            .map(|j| {
                let theta = 2.0 * PI * j as f64 / n as f64;
                let center = Vec2::new(ring * theta.cos(), ring * theta.sin());
                random_cluster(&mut rng, center, params.rods_per_cluster)
            })
            .collect();
        let direction = Vec2::unit_from_angle(params.incident_angle_deg * PI / 180.0);
        let scenario = MultiClusterScenario::new(
            clusters?,
            IncidentField::plane_wave(direction, Complex64::new(1.0, 0.0))
                .map_err(|e| e.to_string())?,
            WaveNumber::from_wavelength(params.wavelength).map_err(|e| e.to_string())?,
            CouplingConfig {
                monopoles: MonopoleCountChoice::Auto(FitConfig::default()),
                ..CouplingConfig::default()
            },
            SolverConfig::default(),
        )
        .map_err(|e| e.to_string())?;
        let solution = solve_coupled(&scenario).map_err(|e| e.to_string())?;
        Ok(Engine { scenario, solution })
    }

    pub fn total_rods(&self) -> usize {
        self.scenario.total_rods()
    }

    pub fn cluster_count(&self) -> usize {
        self.scenario.clusters().len()
    }

    pub fn iterations(&self) -> usize {
        self.solution.iteration_count()
    }

    pub fn converged(&self) -> bool {
        self.solution.converged()
    }

    pub fn convergence_history(&self) -> Vec<f64> {
        self.solution.convergence_history().to_vec()
    }

    pub fn monopole_counts(&self) -> Vec<usize> {
        self.solution
            .layers()
            .iter()
            .map(|l| l.points().len())
            .collect()
    }

    /// Radius of a view square that comfortably contains the scene.
    pub fn suggested_view_radius(&self) -> f64 {
        self.scenario
            .clusters()
            .iter()
            .map(|c| c.enclosure().center().norm())
            .fold(0.0f64, f64::max)
            + 2.0 * ENCLOSURE_RADIUS
    }

    /// |u_total| on a row-major nx-by-ny grid over [x0,x1] x [y0,y1];
    /// y runs top-down so the buffer maps directly onto canvas pixels.
    /// Points inside a rod disk come back as -1 (mask).
    pub fn field_magnitude(
        &self,
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        nx: usize,
        ny: usize,
    ) -> Vec<f32> {
        let mut out = Vec::with_capacity(nx * ny);
        for row in 0..ny {
            let t = if ny > 1 { row as f64 / (ny - 1) as f64 } else { 0.5 };
            let y = y1 + (y0 - y1) * t;
            for col in 0..nx {
                let s = if nx > 1 { col as f64 / (nx - 1) as f64 } else { 0.5 };
                let x = Vec2::new(x0 + (x1 - x0) * s, y);
                out.push(self.magnitude_at(x));
            }
        }
        out
    }

    fn magnitude_at(&self, x: Vec2) -> f32 {
        let in_rod = self
            .scenario
            .clusters()
            .iter()
            .flat_map(|c| c.scatterers())
            .any(|r| x.dist(r.position) <= r.radius);
        if in_rod {
            return -1.0;
        }
        match global_total_field(&self.solution, x) {
            Ok(u) => u.norm() as f32,
            Err(_) => -1.0,
        }
    }

    /// Total field at one point: [re, im, abs], or empty when the point
    /// is not evaluable (rod center).
    pub fn probe(&self, x: f64, y: f64) -> Vec<f64> {
        match global_total_field(&self.solution, Vec2::new(x, y)) {
            Ok(u) => vec![u.re, u.im, u.norm()],
            Err(_) => Vec::new(),
        }
    }

    /// Rod centers, interleaved x,y.
    pub fn rod_positions(&self) -> Vec<f32> {
        self.scenario
            .clusters()
            .iter()
            .flat_map(|c| c.scatterers())
            .flat_map(|r| [r.position.x as f32, r.position.y as f32])
            .collect()
    }

    /// Fitted monopole points of every layer, interleaved x,y.
    pub fn monopole_positions(&self) -> Vec<f32> {
        self.solution
            .layers()
            .iter()
            .flat_map(|l| l.points())
            .flat_map(|p| [p.x as f32, p.y as f32])
            .collect()
    }

    /// Closed polyline of one enclosure curve, interleaved x,y.
    pub fn enclosure_polyline(&self, j: usize) -> Vec<f32> {
        let Some(cluster) = self.scenario.clusters().get(j) else {
            return Vec::new();
        };
        cluster
            .enclosure()
            .samples()
            .iter()
            .flat_map(|p| [p.x as f32, p.y as f32])
            .collect()
    }

    /// Re-solves the full rod system without layer compression and
    /// reports the worst relative disagreement of the two scattered
    /// fields on a circle surrounding the whole scene.
    pub fn direct_check(&self, sample_count: usize) -> Result<f64, String> {
        let rods: Vec<Scatterer> = self
            .scenario
            .clusters()
            .iter()
            .flat_map(|c| c.scatterers().iter().copied())
            .collect();
        let reference = solve_direct(
            &rods,
            self.scenario.incident(),
            self.scenario.wavenumber(),
            *self.scenario.solver(),
        )
        .map_err(|e| e.to_string())?;

        let radius = 1.6 * self.suggested_view_radius();
        let samples = sample_count.clamp(8, 1024);
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for i in 0..samples {
            let angle = 2.0 * PI * i as f64 / samples as f64;
            let x = Vec2::new(radius * angle.cos(), radius * angle.sin());
            let exact = scattered_field_direct(&reference, x).map_err(|e| e.to_string())?;
            let fast = global_total_field(&self.solution, x).map_err(|e| e.to_string())?
                - self
                    .scenario
                    .incident()
                    .evaluate(self.scenario.wavenumber(), x);
            worst = worst.max((fast - exact).norm());
            scale = scale.max(exact.norm());
        }
        if scale == 0.0 {
            return Ok(0.0);
        }
        Ok(worst / scale)
    }
}

fn random_cluster(rng: &mut ChaCha8Rng, center: Vec2, rod_count: usize) -> Result<Cluster, String> {
    let curve = make_trefoil(ENCLOSURE_RADIUS, 0.0, 1, center, 0.0, 280)
        .map_err(|e| e.to_string())?;
    let fill_radius = ENCLOSURE_RADIUS - 4.0 * ROD_RADIUS - 0.25;
    let mut rods: Vec<Scatterer> = Vec::new();
    let mut attempts = 0;
    while rods.len() < rod_count && attempts < 200_000 {
        attempts += 1;
        let x = center
            + Vec2::new(
                rng.gen_range(-fill_radius..fill_radius),
                rng.gen_range(-fill_radius..fill_radius),
            );
        if x.dist(center) > fill_radius {
            continue;
        }
        if rods.iter().all(|r| r.position.dist(x) > 4.0 * ROD_RADIUS) {
            rods.push(Scatterer::new(x, ROD_RADIUS, PERMITTIVITY).map_err(|e| e.to_string())?);
        }
    }
    if rods.len() < rod_count {
        return Err(format!(
            "could only place {} of {rod_count} rods without overlap",
            rods.len()
        ));
    }
    Cluster::new(rods, curve).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Engine {
        Engine::build(DemoParams {
            wavelength: 6.0,
            cluster_count: 2,
            rods_per_cluster: 12,
            seed: 3,
            incident_angle_deg: -90.0,
        })
        .unwrap()
    }

    #[test]
    fn builds_and_converges() {
        let engine = small();
        assert_eq!(engine.total_rods(), 24);
        assert_eq!(engine.cluster_count(), 2);
        assert!(engine.converged());
        assert_eq!(engine.monopole_counts().len(), 2);
    }

    #[test]
    fn field_grid_has_expected_shape_and_masks_rods() {
        let engine = small();
        let r = engine.suggested_view_radius();
        let grid = engine.field_magnitude(-r, -r, r, r, 40, 30);
        assert_eq!(grid.len(), 1200);
        assert!(grid.iter().all(|v| v.is_finite()));
        assert!(grid.iter().any(|&v| v > 0.0), "field nowhere positive");

        let rods = engine.rod_positions();
        let masked = engine.field_magnitude(
            rods[0] as f64,
            rods[1] as f64,
            rods[0] as f64,
            rods[1] as f64,
            1,
            1,
        );
        assert_eq!(masked, vec![-1.0], "rod center must be masked");
    }

    #[test]
    fn probe_matches_grid_sampling() {
        let engine = small();
        let r = engine.suggested_view_radius();
        let probed = engine.probe(r, r);
        assert_eq!(probed.len(), 3);
        let grid = engine.field_magnitude(r, r, r, r, 1, 1);
        assert!((grid[0] as f64 - probed[2]).abs() < 1e-6);
    }

    #[test]
    fn fast_solution_agrees_with_the_dense_check() {
        let engine = small();
        let gap = engine.direct_check(90).unwrap();
        assert!(gap < 5e-2, "disagreement vs dense solve: {gap:.3e}");
    }

    #[test]
    fn parameters_are_clamped_not_rejected() {
        let engine = Engine::build(DemoParams {
            wavelength: 0.1,
            cluster_count: 40,
            rods_per_cluster: 1,
            seed: 1,
            incident_angle_deg: 0.0,
        })
        .unwrap();
        assert_eq!(engine.cluster_count(), 6);
        assert_eq!(engine.total_rods(), 6);
    }

    #[test]
    fn geometry_views_are_consistent() {
        let engine = small();
        assert_eq!(engine.rod_positions().len(), 2 * 24);
        assert_eq!(
            engine.monopole_positions().len() / 2,
            engine.monopole_counts().iter().sum::<usize>()
        );
        assert_eq!(engine.enclosure_polyline(0).len(), 2 * 280);
        assert!(engine.enclosure_polyline(9).is_empty());
    }
}
