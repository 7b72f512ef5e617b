//! Integration oracles for the cluster-coupling solver. The reference is
//! always the all-rods dense solve: clusters exchange exact rod-level
//! fields there, so any disagreement beyond the layer-compression floor is
//! a coupling bug.

use monoscat::fmm::{
    global_scattered_field, local_incident_values, local_solve, operation_count_report,
    solve_coupled, CouplingConfig, CouplingMode, MonopoleCountChoice, MultiClusterScenario,
};
use monoscat::foldy_lax::{
    scattered_field_direct, solve_direct, ClusterSolution, FoldyOperator, IncidentField,
    SolverConfig,
};
use monoscat::geometry::{make_trefoil, BoundaryCurve, Cluster, Scatterer, Vec2};
use monoscat::layer::{boundary_values, LayerFitter};
use monoscat::special::WaveNumber;
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn circle(radius: f64, center: Vec2, m: usize) -> BoundaryCurve {
    make_trefoil(radius, 0.0, 1, center, 0.0, m).unwrap()
}

fn plane_wave() -> IncidentField {
    IncidentField::plane_wave(Vec2::new(0.0, -1.0), Complex64::new(1.0, 0.0)).unwrap()
}

/// Deterministic cluster of `n` rods scattered in a disk of radius 0.55
/// around `center`, enclosed by a circle of radius 0.9.
fn random_cluster(center: Vec2, n: usize, m: usize, seed: u64) -> Cluster {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rods: Vec<Scatterer> = Vec::new();
    while rods.len() < n {
        let x = center
            + Vec2::new(rng.gen_range(-0.55..0.55), rng.gen_range(-0.55..0.55));
        if x.dist(center) > 0.55 {
            continue;
        }
        if rods.iter().all(|r| r.position.dist(x) > 0.1) {
            rods.push(Scatterer::new(x, 0.02, 12.0).unwrap());
        }
    }
    Cluster::new(rods, circle(0.9, center, m)).unwrap()
}

fn all_rods(scenario: &MultiClusterScenario) -> Vec<Scatterer> {
    scenario
        .clusters()
        .iter()
        .flat_map(|c| c.scatterers().iter().copied())
        .collect()
}

/// Max relative difference between coupled and direct scattered fields on
/// a probe circle, normalized by the direct field's maximum there.
fn field_disagreement(
    scenario: &MultiClusterScenario,
    coupled: &monoscat::fmm::CoupledSolution,
    center: Vec2,
    radius: f64,
    points: usize,
) -> f64 {
    let rods = all_rods(scenario);
    let direct = solve_direct(&rods, scenario.incident(), scenario.wavenumber(), *scenario.solver())
        .unwrap();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for j in 0..points {
        let angle = 2.0 * std::f64::consts::PI * j as f64 / points as f64;
        let x = center + Vec2::new(radius * angle.cos(), radius * angle.sin());
        let reference = scattered_field_direct(&direct, x).unwrap();
        let fast = global_scattered_field(coupled, x).unwrap();
        worst = worst.max((fast - reference).norm());
        scale = scale.max(reference.norm());
    }
    worst / scale
}

#[test]
fn single_cluster_coupled_solution_equals_direct_solve() {
    let scenario = MultiClusterScenario::new(
        vec![random_cluster(Vec2::new(0.0, 0.0), 20, 160, 5)],
        plane_wave(),
        WaveNumber::from_wavelength(4.0).unwrap(),
        CouplingConfig::default(),
        SolverConfig::default(),
    )
    .unwrap();
    let coupled = solve_coupled(&scenario).unwrap();
    assert!(coupled.converged());
    assert_eq!(coupled.iteration_count(), 1);

    let direct = solve_direct(
        scenario.clusters()[0].scatterers(),
        scenario.incident(),
        scenario.wavenumber(),
        *scenario.solver(),
    )
    .unwrap();
    for (a, b) in coupled.solutions()[0]
        .amplitudes()
        .iter()
        .zip(direct.amplitudes())
    {
        assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-30));
    }
}

#[test]
fn distant_clusters_converge_in_three_sweeps_and_match_direct() {
    // 100-wavelength separation: coupling is a tiny correction, so the
    // fixed point settles almost immediately, and the comparison against
    // the all-rods solve is dominated by layer compression quality. The
    // 0.1% far-field target needs dense curve sampling (the least-squares
    // bias decays with the sample count, not the monopole count).
    let lambda = 8.0;
    let k = WaveNumber::from_wavelength(lambda).unwrap();
    let separation = 100.0 * lambda;
    let coupling = CouplingConfig {
        monopoles: MonopoleCountChoice::Fixed(vec![112, 112]),
        ..CouplingConfig::default()
    };
    let scenario = MultiClusterScenario::new(
        vec![
            random_cluster(Vec2::new(-separation / 2.0, 0.0), 14, 2240, 7),
            random_cluster(Vec2::new(separation / 2.0, 0.0), 14, 2240, 8),
        ],
        plane_wave(),
        k,
        coupling,
        SolverConfig::default(),
    )
    .unwrap();
    let coupled = solve_coupled(&scenario).unwrap();
    assert!(coupled.converged());
    assert!(
        coupled.iteration_count() <= 3,
        "took {} sweeps",
        coupled.iteration_count()
    );

    let disagreement =
        field_disagreement(&scenario, &coupled, Vec2::new(0.0, 0.0), separation, 48);
    assert!(disagreement < 1e-3, "field mismatch {disagreement:.3e}");
}

#[test]
fn local_solve_composes_its_constituents_exactly() {
    let cluster = random_cluster(Vec2::new(0.0, 0.0), 20, 160, 11);
    let k = WaveNumber::from_wavelength(4.0).unwrap();
    let incident = plane_wave();
    let driving: Vec<Complex64> = cluster
        .scatterers()
        .iter()
        .map(|r| incident.evaluate(k, r.position))
        .collect();
    let cfg = SolverConfig::default();

    let (solution, layer, report) = local_solve(&cluster, &driving, k, 12, &cfg).unwrap();

    let operator = FoldyOperator::new(cluster.scatterers(), k, cfg).unwrap();
    let (amplitudes, _) = operator.solve(&driving).unwrap();
    let reference =
        ClusterSolution::new(amplitudes, k, cluster.scatterers().to_vec()).unwrap();
    let data = boundary_values(&reference, cluster.enclosure()).unwrap();
    let fitter = LayerFitter::with_count(cluster.enclosure(), 12, k).unwrap();
    let (ref_layer, ref_report) = fitter.fit(&data).unwrap();

    assert_eq!(solution.amplitudes(), reference.amplitudes());
    assert_eq!(layer.weights(), ref_layer.weights());
    assert_eq!(report.relative_residual, ref_report.relative_residual);
}

#[test]
fn nearby_clusters_match_direct_solve_within_layer_floor() {
    // Clusters two diameters apart: genuine multiple scattering between
    // them. The layer floor (percent scale at these monopole counts)
    // bounds the disagreement; the coupling itself must not add to it.
    let k = WaveNumber::from_wavelength(4.0).unwrap();
    let coupling = CouplingConfig {
        monopoles: MonopoleCountChoice::Fixed(vec![40, 40]),
        ..CouplingConfig::default()
    };
    let scenario = MultiClusterScenario::new(
        vec![
            random_cluster(Vec2::new(-1.8, 0.0), 16, 400, 21),
            random_cluster(Vec2::new(1.8, 0.3), 16, 400, 22),
        ],
        plane_wave(),
        k,
        coupling,
        SolverConfig::default(),
    )
    .unwrap();
    let coupled = solve_coupled(&scenario).unwrap();
    assert!(coupled.converged());

    let disagreement =
        field_disagreement(&scenario, &coupled, Vec2::new(0.0, 0.15), 8.0, 64);
    assert!(disagreement < 1.5e-2, "field mismatch {disagreement:.3e}");
}

#[test]
fn convergence_history_is_monotone_for_contracting_runs() {
    let k = WaveNumber::from_wavelength(4.0).unwrap();
    let scenario = MultiClusterScenario::new(
        vec![
            random_cluster(Vec2::new(-1.8, 0.0), 10, 160, 31),
            random_cluster(Vec2::new(1.8, 0.0), 10, 160, 32),
        ],
        plane_wave(),
        k,
        CouplingConfig {
            monopoles: MonopoleCountChoice::Fixed(vec![24, 24]),
            ..CouplingConfig::default()
        },
        SolverConfig::default(),
    )
    .unwrap();
    let coupled = solve_coupled(&scenario).unwrap();
    assert!(coupled.converged());
    let history = coupled.convergence_history();
    for w in history.windows(2).skip(1) {
        assert!(
            w[1] <= w[0] * 1.000001,
            "history not monotone: {history:?}"
        );
    }
}

#[test]
fn widening_the_gap_never_slows_convergence() {
    let k = WaveNumber::from_wavelength(4.0).unwrap();
    let mut iterations = Vec::new();
    for &gap in &[3.6f64, 14.4] {
        let scenario = MultiClusterScenario::new(
            vec![
                random_cluster(Vec2::new(-gap / 2.0, 0.0), 12, 160, 41),
                random_cluster(Vec2::new(gap / 2.0, 0.0), 12, 160, 42),
            ],
            plane_wave(),
            k,
            CouplingConfig {
                monopoles: MonopoleCountChoice::Fixed(vec![24, 24]),
                ..CouplingConfig::default()
            },
            SolverConfig::default(),
        )
        .unwrap();
        let coupled = solve_coupled(&scenario).unwrap();
        assert!(coupled.converged());
        iterations.push(coupled.iteration_count());
    }
    assert!(
        iterations[1] <= iterations[0],
        "4x separation took {} sweeps vs {}",
        iterations[1],
        iterations[0]
    );
}

#[test]
fn jacobi_and_krylov_agree_with_gauss_seidel() {
    let k = WaveNumber::from_wavelength(4.0).unwrap();
    let clusters = || {
        vec![
            random_cluster(Vec2::new(-2.0, 0.0), 10, 160, 51),
            random_cluster(Vec2::new(2.0, 0.4), 10, 160, 52),
            random_cluster(Vec2::new(0.2, 2.4), 10, 160, 53),
        ]
    };
    let solve = |mode: CouplingMode| {
        let scenario = MultiClusterScenario::new(
            clusters(),
            plane_wave(),
            k,
            CouplingConfig {
                mode,
                monopoles: MonopoleCountChoice::Fixed(vec![24, 24, 24]),
                ..CouplingConfig::default()
            },
            SolverConfig::default(),
        )
        .unwrap();
        let coupled = solve_coupled(&scenario).unwrap();
        assert!(coupled.converged(), "{mode:?} did not converge");
        coupled
    };
    let gs = solve(CouplingMode::GaussSeidel);
    let jacobi = solve(CouplingMode::Jacobi);
    let krylov = solve(CouplingMode::Krylov);

    let compare = |a: &monoscat::fmm::CoupledSolution, b: &monoscat::fmm::CoupledSolution| {
        for (la, lb) in a.layers().iter().zip(b.layers()) {
            let scale = la
                .weights()
                .iter()
                .map(|w| w.norm())
                .fold(0.0f64, f64::max)
                .max(1e-30);
            for (wa, wb) in la.weights().iter().zip(lb.weights()) {
                assert!(
                    (wa - wb).norm() <= 1e-6 * scale,
                    "weights differ: {wa} vs {wb}"
                );
            }
        }
    };
    compare(&gs, &jacobi);
    compare(&gs, &krylov);
}

#[test]
fn field_is_continuous_across_the_enclosure_representation_switch() {
    // Inside an enclosure the owning cluster is summed rod by rod; outside
    // it is carried by the layer. Walking a homothety ring just outside
    // the curve, the two routes must agree within the fit floor.
    let k = WaveNumber::from_wavelength(4.0).unwrap();
    let scenario = MultiClusterScenario::new(
        vec![
            random_cluster(Vec2::new(-1.8, 0.0), 12, 400, 61),
            random_cluster(Vec2::new(1.8, 0.0), 12, 400, 62),
        ],
        plane_wave(),
        k,
        CouplingConfig {
            monopoles: MonopoleCountChoice::Fixed(vec![40, 40]),
            ..CouplingConfig::default()
        },
        SolverConfig::default(),
    )
    .unwrap();
    let coupled = solve_coupled(&scenario).unwrap();

    let ring = make_trefoil(0.9 * 1.2, 0.0, 1, Vec2::new(-1.8, 0.0), 0.0, 64).unwrap();
    let mut worst = 0.0f64;
    let mut scale = 0.0f64;
    for &x in ring.samples() {
        let via_layer = global_scattered_field(&coupled, x).unwrap();
        // Force the owning cluster's direct route, keep layers for others.
        let direct_own = scattered_field_direct(&coupled.solutions()[0], x).unwrap();
        let other = monoscat::layer::evaluate_layer(&coupled.layers()[1], x).unwrap();
        let via_direct = direct_own + other;
        worst = worst.max((via_layer - via_direct).norm());
        scale = scale.max(via_direct.norm());
    }
    assert!(worst <= 2e-2 * scale, "representation jump {:.3e}", worst / scale);
}

#[test]
fn reports_are_deterministic_across_reruns() {
    let build = || {
        MultiClusterScenario::new(
            vec![
                random_cluster(Vec2::new(-1.8, 0.0), 10, 160, 71),
                random_cluster(Vec2::new(1.8, 0.0), 10, 160, 72),
            ],
            plane_wave(),
            WaveNumber::from_wavelength(4.0).unwrap(),
            CouplingConfig::default(),
            SolverConfig::default(),
        )
        .unwrap()
    };
    let a = solve_coupled(&build()).unwrap();
    let b = solve_coupled(&build()).unwrap();
    assert_eq!(a.convergence_history(), b.convergence_history());
    assert_eq!(a.counters(), b.counters());
    for (sa, sb) in a.solutions().iter().zip(b.solutions()) {
        assert_eq!(sa.amplitudes(), sb.amplitudes());
    }
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        assert_eq!(la.weights(), lb.weights());
    }

    let report = operation_count_report(&build(), &a);
    assert_eq!(report.total_rods, 20);
    assert_eq!(report.cluster_rods, vec![10, 10]);
    assert!(report.coupling_fraction_of_direct > 0.0);
}

#[test]
fn driving_values_reject_mismatched_layer_sets() {
    let scenario = MultiClusterScenario::new(
        vec![
            random_cluster(Vec2::new(-1.8, 0.0), 4, 64, 81),
            random_cluster(Vec2::new(1.8, 0.0), 4, 64, 82),
        ],
        plane_wave(),
        WaveNumber::from_wavelength(4.0).unwrap(),
        CouplingConfig::default(),
        SolverConfig::default(),
    )
    .unwrap();
    assert!(local_incident_values(&scenario, 0, &[None]).is_err());
    assert!(local_incident_values(&scenario, 5, &[None, None]).is_err());
}
