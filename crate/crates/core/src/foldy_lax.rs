//! Direct multiple-scattering solver.
//!
//! Every rod is reduced to a single isotropic scattering coefficient t0:
//! its monopole response amplitude per unit of local driving field. The
//! coupled amplitudes s_q solve the dense linear system
//!
//! ```text
//! (T^{-1} - h) s = u_inc,   h_qj = H1_0(k |x_q - x_j|), h_qq = 0,
//! ```
//!
//! where T is the diagonal of t coefficients and u_inc holds the driving
//! field at the rod centers. The scattered field is then the direct sum
//! of one outgoing monopole per rod.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{validate_non_overlap, Scatterer, Vec2};
use crate::linalg::{gmres, DenseLu, GmresConfig, GmresResult};
use crate::special::{h0, jy, WaveNumber};

/// Rods whose scattering coefficient is smaller than this respond
/// trivially (epsilon = 1 gives exactly zero) and are excluded from the
/// linear system rather than inverted.
const T_DROP_THRESHOLD: f64 = 1e-300;

// ---------------------------------------------------------------------
// Incident field
// ---------------------------------------------------------------------

/// A plane wave u_inc(x) = amplitude * exp(i k direction . x).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IncidentField {
    direction: Vec2,
    amplitude: Complex64,
}

impl IncidentField {
    /// Builds a plane wave, normalizing the propagation direction.
    pub fn plane_wave(direction: Vec2, amplitude: Complex64) -> Result<IncidentField> {
        if !direction.is_finite() || !amplitude.is_finite() {
            return Err(Error::Domain(
                "incident field parameters must be finite".into(),
            ));
        }
        let norm = direction.norm();
        if norm == 0.0 {
            return Err(Error::Domain(
                "incident direction must be a nonzero vector".into(),
            ));
        }
        Ok(IncidentField {
            direction: direction * (1.0 / norm),
            amplitude,
        })
    }

    pub fn direction(&self) -> Vec2 {
        self.direction
    }

    pub fn amplitude(&self) -> Complex64 {
        self.amplitude
    }

    pub fn evaluate(&self, k: WaveNumber, x: Vec2) -> Complex64 {
        let phase = k.value() * self.direction.dot(x);
        self.amplitude * Complex64::from_polar(1.0, phase)
    }
}

// ---------------------------------------------------------------------
// Scattering coefficient
// ---------------------------------------------------------------------

/// Monopole scattering coefficient of a single dielectric rod:
///
/// ```text
/// t0 = - (J1(kr) J0(k nu r) - nu J0(kr) J1(k nu r))
///      / (H1_1(kr) J0(k nu r) - nu H1_0(kr) J1(k nu r)),  nu = sqrt(eps).
/// ```
///
/// This is the zeroth angular channel of the exact transmission problem
/// for a penetrable disk; for lossless rods it satisfies |1 + 2 t0| = 1.
pub fn t_coeff(k: WaveNumber, radius: f64, permittivity: f64) -> Result<Complex64> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(Error::Domain(format!(
            "rod radius must be positive, got {radius}"
        )));
    }
    if !permittivity.is_finite() || permittivity < 1.0 {
        return Err(Error::Domain(format!(
            "relative permittivity must be >= 1, got {permittivity}"
        )));
    }
    let nu = permittivity.sqrt();
    let x = k.value() * radius;
    let xn = nu * x;

    let (j0x, y0x) = jy(0, x);
    let (j1x, y1x) = jy(1, x);
    let (j0n, _) = jy(0, xn);
    let (j1n, _) = jy(1, xn);
    let h0x = Complex64::new(j0x, y0x);
    let h1x = Complex64::new(j1x, y1x);

    let numerator = j1x * j0n - nu * j0x * j1n;
    let denominator = h1x * Complex64::from(j0n) - Complex64::from(nu) * h0x * j1n;
    let scale = h1x.norm() * j0n.abs() + nu * h0x.norm() * j1n.abs();
    if denominator.norm() < 1e-14 * scale {
        return Err(Error::Singular(format!(
            "t coefficient denominator vanishes at k r = {x:.6e}, eps = {permittivity} \
             (internal resonance of the rod)"
        )));
    }
    Ok(-Complex64::from(numerator) / denominator)
}

// ---------------------------------------------------------------------
// Interaction matrix and solve
// ---------------------------------------------------------------------

/// Dense interaction matrix h with h_qj = H1_0(k |x_q - x_j|) off the
/// diagonal and zeros on it. Symmetric because the kernel depends only on
/// the distance.
pub fn assemble_interaction(
    scatterers: &[Scatterer],
    k: WaveNumber,
) -> Result<DMatrix<Complex64>> {
    validate_non_overlap(scatterers)?;
    let n = scatterers.len();
    let mut h = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for i in 0..n {
        for j in (i + 1)..n {
            let d = scatterers[i].position.dist(scatterers[j].position);
            let val = h0(k.value() * d);
            h[(i, j)] = val;
            h[(j, i)] = val;
        }
    }
    Ok(h)
}

/// Solver configuration: dense factorization up to `n_direct` unknowns,
/// restarted GMRES with diagonal preconditioning above.
#[derive(Clone, Copy, Debug)]
pub struct SolverConfig {
    /// Target on ||A s - b|| / ||b||.
    pub rtol: f64,
    /// Largest system solved by dense factorization.
    pub n_direct: usize,
    /// Settings for the iterative fallback.
    pub gmres: GmresConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rtol: 1e-10,
            n_direct: 2000,
            gmres: GmresConfig::default(),
        }
    }
}

/// Amplitudes of the coupled monopole responses of one cluster of rods.
#[derive(Clone, Debug)]
pub struct ClusterSolution {
    amplitudes: Vec<Complex64>,
    k: WaveNumber,
    scatterers: Vec<Scatterer>,
}

impl ClusterSolution {
    pub fn new(
        amplitudes: Vec<Complex64>,
        k: WaveNumber,
        scatterers: Vec<Scatterer>,
    ) -> Result<ClusterSolution> {
        if amplitudes.len() != scatterers.len() {
            return Err(Error::Config(format!(
                "{} amplitudes for {} scatterers",
                amplitudes.len(),
                scatterers.len()
            )));
        }
        if amplitudes.iter().any(|a| !a.is_finite()) {
            return Err(Error::Config("non-finite amplitude".into()));
        }
        Ok(ClusterSolution {
            amplitudes,
            k,
            scatterers,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn wavenumber(&self) -> WaveNumber {
        self.k
    }

    pub fn scatterers(&self) -> &[Scatterer] {
        &self.scatterers
    }
}

enum FoldyBackend {
    Dense(DenseLu),
    Iterative,
}

/// The factored local scattering operator of a fixed rod set: maps any
/// driving field sampled at the rod centers to response amplitudes.
/// Factoring once and solving many right-hand sides is what makes the
/// cluster-coupling iteration cheap.
pub struct FoldyOperator {
    k: WaveNumber,
    n_total: usize,
    /// Indices of rods that actually scatter (|t0| above threshold).
    active: Vec<usize>,
    t_active: Vec<Complex64>,
    /// System matrix (T^{-1} - h) over active rods; kept for residual
    /// verification, iterative refinement, and the GMRES operator.
    matrix: DMatrix<Complex64>,
    backend: FoldyBackend,
    cfg: SolverConfig,
    /// Hankel kernel evaluations spent assembling the matrix.
    kernel_evaluations: u64,
}

impl FoldyOperator {
    pub fn new(scatterers: &[Scatterer], k: WaveNumber, cfg: SolverConfig) -> Result<Self> {
        validate_non_overlap(scatterers)?;
        let mut active = Vec::with_capacity(scatterers.len());
        let mut t_active = Vec::with_capacity(scatterers.len());
        for (q, rod) in scatterers.iter().enumerate() {
            let t = t_coeff(k, rod.radius, rod.permittivity)?;
            if t.norm() >= T_DROP_THRESHOLD {
                active.push(q);
                t_active.push(t);
            }
        }
        let dropped = scatterers.len() - active.len();
        if dropped > 0 {
            log::warn!(
                "{dropped} rod(s) with negligible scattering coefficient \
                 (permittivity 1) excluded from the system"
            );
        }

        let n = active.len();
        let mut matrix = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
        for a in 0..n {
            matrix[(a, a)] = Complex64::new(1.0, 0.0) / t_active[a];
            for b in (a + 1)..n {
                let d = scatterers[active[a]]
                    .position
                    .dist(scatterers[active[b]].position);
                let val = h0(k.value() * d);
                matrix[(a, b)] -= val;
                matrix[(b, a)] -= val;
            }
        }
        let kernel_evaluations = (n as u64) * (n as u64).saturating_sub(1) / 2;

        let backend = if n <= cfg.n_direct {
            FoldyBackend::Dense(DenseLu::factor(matrix.clone())?)
        } else {
            FoldyBackend::Iterative
        };
        Ok(FoldyOperator {
            k,
            n_total: scatterers.len(),
            active,
            t_active,
            matrix,
            backend,
            cfg,
            kernel_evaluations,
        })
    }

    pub fn kernel_evaluations(&self) -> u64 {
        self.kernel_evaluations
    }

    pub fn wavenumber(&self) -> WaveNumber {
        self.k
    }

    /// Solves for the response amplitudes given the driving field at all
    /// rod centers (one value per rod, dropped rods included). Returns
    /// the amplitudes (zero for dropped rods) and the achieved relative
    /// residual.
    pub fn solve(&self, driving: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
        if driving.len() != self.n_total {
            return Err(Error::Config(format!(
                "driving field has {} entries for {} rods",
                driving.len(),
                self.n_total
            )));
        }
        let n = self.active.len();
        let b = DVector::from_fn(n, |i, _| driving[self.active[i]]);
        let b_norm = b.norm();
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); self.n_total];
        if n == 0 || b_norm == 0.0 {
            return Ok((amplitudes, 0.0));
        }

        let (x, residual) = match &self.backend {
            FoldyBackend::Dense(lu) => {
                let mut x = lu.solve(&b)?;
                let mut r = &b - &self.matrix * &x;
                let mut rel = r.norm() / b_norm;
                if rel > self.cfg.rtol {
                    // One step of iterative refinement usually recovers
                    // anything lost to a mildly ill-conditioned factor.
                    let dx = lu.solve(&r)?;
                    x += dx;
                    r = &b - &self.matrix * &x;
                    rel = r.norm() / b_norm;
                }
                if rel > self.cfg.rtol {
                    return Err(Error::NonConvergence {
                        iterations: 1,
                        residual: rel,
                        target: self.cfg.rtol,
                    });
                }
                (x, rel)
            }
            FoldyBackend::Iterative => {
                // Right diagonal preconditioning with T: the operator
                // becomes v -> v - h (t .* v), and x = t .* y. The
                // residual is unchanged by right preconditioning.
                let t = &self.t_active;
                let apply = |v: &DVector<Complex64>| {
                    let scaled = DVector::from_fn(n, |i, _| t[i] * v[i]);
                    &self.matrix * &scaled
                };
                let mut gmres_cfg = self.cfg.gmres;
                gmres_cfg.rtol = self.cfg.rtol;
                let GmresResult {
                    x: y,
                    iterations,
                    residual,
                    converged,
                } = gmres(apply, &b, None, &gmres_cfg);
                if !converged {
                    return Err(Error::NonConvergence {
                        iterations,
                        residual,
                        target: self.cfg.rtol,
                    });
                }
                let x = DVector::from_fn(n, |i, _| t[i] * y[i]);
                (x, residual)
            }
        };

        for (slot, value) in self.active.iter().zip(x.iter()) {
            amplitudes[*slot] = *value;
        }
        Ok((amplitudes, residual))
    }
}

/// Solves the full multiple-scattering system for one set of rods under
/// the given incident field.
pub fn solve_direct(
    scatterers: &[Scatterer],
    incident: &IncidentField,
    k: WaveNumber,
    cfg: SolverConfig,
) -> Result<ClusterSolution> {
    let operator = FoldyOperator::new(scatterers, k, cfg)?;
    let driving: Vec<Complex64> = scatterers
        .iter()
        .map(|rod| incident.evaluate(k, rod.position))
        .collect();
    let (amplitudes, _residual) = operator.solve(&driving)?;
    ClusterSolution::new(amplitudes, k, scatterers.to_vec())
}

/// Scattered field u_s(x) = sum_q s_q H1_0(k |x - x_q|).
pub fn scattered_field_direct(solution: &ClusterSolution, x: Vec2) -> Result<Complex64> {
    let k = solution.k.value();
    let mut acc = Complex64::new(0.0, 0.0);
    for (amplitude, rod) in solution.amplitudes.iter().zip(&solution.scatterers) {
        let d = x.dist(rod.position);
        if d == 0.0 {
            return Err(Error::SingularPoint(format!(
                "scattered field requested exactly at the rod center ({}, {})",
                x.x, x.y
            )));
        }
        if amplitude.norm_sqr() > 0.0 {
            acc += amplitude * h0(k * d);
        }
    }
    Ok(acc)
}

/// Total field u = u_inc + u_s.
pub fn total_field(
    solution: &ClusterSolution,
    incident: &IncidentField,
    x: Vec2,
) -> Result<Complex64> {
    Ok(incident.evaluate(solution.k, x) + scattered_field_direct(solution, x)?)
}
