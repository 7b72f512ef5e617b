//! Dense linear algebra used by the solvers: an LU wrapper for square
//! systems, a column-pivoted Householder least-squares factorization for
//! the overdetermined density fits, and a restarted GMRES for large
//! systems and for the cluster-coupling fixed point.
//!
//! The LU factorization is delegated to nalgebra. The least-squares and
//! GMRES routines are written out here because they carry solver-specific
//! contracts (condition diagnostics from the triangular factor, true
//! residual reporting, reusable factorizations across right-hand sides)
//! that are awkward to extract from generic wrappers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

// ---------------------------------------------------------------------
// Square dense solve (LU)
// ---------------------------------------------------------------------

/// LU factorization of a square complex matrix, reusable across
/// right-hand sides.
pub struct DenseLu {
    lu: nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
    dim: usize,
}

impl DenseLu {
    pub fn factor(a: DMatrix<Complex64>) -> Result<DenseLu> {
        if a.nrows() != a.ncols() {
            return Err(Error::Config(format!(
                "LU needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let dim = a.nrows();
        let lu = nalgebra::linalg::LU::new(a);
        // Reject exactly singular factors early with a diagnostic.
        let u_diag_min = (0..dim)
            .map(|i| lu.u()[(i, i)].norm())
            .fold(f64::INFINITY, f64::min);
        if dim > 0 && u_diag_min == 0.0 {
            return Err(Error::Singular(
                "LU factor has a zero pivot; the system matrix is singular".into(),
            ));
        }
        Ok(DenseLu { lu, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        if b.len() != self.dim {
            return Err(Error::Config(format!(
                "right-hand side length {} does not match system size {}",
                b.len(),
                self.dim
            )));
        }
        self.lu.solve(b).ok_or_else(|| {
            Error::Singular("LU back-substitution failed (singular pivot)".into())
        })
    }
}

// ---------------------------------------------------------------------
// Overdetermined least squares (Householder QR with column pivoting)
// ---------------------------------------------------------------------

/// Least-squares factorization min_x ||A x - b||_2 for a full-height
/// matrix (rows >= cols), reusable across right-hand sides.
///
/// Columns are first equilibrated to unit 2-norm (recorded and undone at
/// solve time), then reduced by Householder reflections with greedy
/// column pivoting. The condition estimate is the ratio of extreme
/// |R_jj| of the equilibrated, pivoted factor — a cheap but reliable
/// witness of near rank deficiency (e.g. interior resonances of a fitted
/// curve).
pub struct QrLeastSquares {
    rows: usize,
    cols: usize,
    /// Packed factorization: R strictly above the diagonal; Householder
    /// vectors u_j stored in column j from the diagonal down.
    packed: DMatrix<Complex64>,
    /// gamma_j = 2 / (u_j^H u_j); zero marks a skipped (rank-deficient)
    /// step.
    gammas: Vec<f64>,
    /// Diagonal of R (the reflector target), |r_diag| non-increasing.
    r_diag: Vec<Complex64>,
    /// perm[j] = original column index now in pivot position j.
    perm: Vec<usize>,
    /// Equilibration scale per original column.
    col_scale: Vec<f64>,
    condition_estimate: f64,
}

impl QrLeastSquares {
    pub fn factor(a: &DMatrix<Complex64>) -> Result<QrLeastSquares> {
        let (rows, cols) = (a.nrows(), a.ncols());
        if rows < cols || cols == 0 {
            return Err(Error::Config(format!(
                "least squares needs rows >= cols >= 1, got {rows}x{cols}"
            )));
        }

        let mut packed = a.clone();
        let mut col_scale = vec![1.0f64; cols];
        for j in 0..cols {
            let norm = packed.column(j).norm();
            if norm > 0.0 && norm.is_finite() {
                col_scale[j] = norm;
                for i in 0..rows {
                    packed[(i, j)] /= Complex64::from(norm);
                }
            }
        }

        let mut perm: Vec<usize> = (0..cols).collect();
        let mut gammas = vec![0.0f64; cols];
        let mut r_diag = vec![Complex64::new(0.0, 0.0); cols];

        for j in 0..cols {
            // Greedy pivot: bring the trailing column with the largest
            // remaining norm into position j.
            let mut best = j;
            let mut best_norm = trailing_norm(&packed, j, j);
            for l in (j + 1)..cols {
                let n = trailing_norm(&packed, j, l);
                if n > best_norm {
                    best = l;
                    best_norm = n;
                }
            }
            if best != j {
                packed.swap_columns(j, best);
                perm.swap(j, best);
            }

            if best_norm < 1e-300 {
                // Remaining block is numerically zero: rank deficient.
                continue;
            }

            // Householder reflector mapping the trailing column onto
            // beta e1, with beta = -phase(x0) * ||x||.
            let x0 = packed[(j, j)];
            let phase = if x0.norm() > 0.0 {
                x0 / Complex64::from(x0.norm())
            } else {
                Complex64::new(1.0, 0.0)
            };
            let beta = -phase * Complex64::from(best_norm);
            r_diag[j] = beta;
            packed[(j, j)] = x0 - beta;
            let gamma = 1.0 / (best_norm * (best_norm + x0.norm()));
            gammas[j] = gamma;

            for l in (j + 1)..cols {
                let mut dot = Complex64::new(0.0, 0.0);
                for i in j..rows {
                    dot += packed[(i, j)].conj() * packed[(i, l)];
                }
                let factor = Complex64::from(gamma) * dot;
                for i in j..rows {
                    let u = packed[(i, j)];
                    packed[(i, l)] -= factor * u;
                }
            }
        }

        let diag_max = r_diag.iter().map(|d| d.norm()).fold(0.0f64, f64::max);
        let diag_min = r_diag
            .iter()
            .map(|d| d.norm())
            .fold(f64::INFINITY, f64::min);
        let condition_estimate = if diag_min > 0.0 {
            diag_max / diag_min
        } else {
            f64::INFINITY
        };

        Ok(QrLeastSquares {
            rows,
            cols,
            packed,
            gammas,
            r_diag,
            perm,
            col_scale,
            condition_estimate,
        })
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition_estimate
    }

    /// Minimizes ||A x - b||_2; returns (x, residual_norm). The residual
    /// norm is exact (the projection of b onto the orthogonal complement
    /// of the column space), not an estimate. Rank-deficient directions
    /// receive zero coefficients.
    pub fn solve(&self, b: &DVector<Complex64>) -> Result<(DVector<Complex64>, f64)> {
        if b.len() != self.rows {
            return Err(Error::Config(format!(
                "right-hand side length {} does not match row count {}",
                b.len(),
                self.rows
            )));
        }
        let (rows, cols) = (self.rows, self.cols);

        // Apply the reflectors: qtb = Q^H b.
        let mut qtb: Vec<Complex64> = b.iter().copied().collect();
        for j in 0..cols {
            let gamma = self.gammas[j];
            if gamma == 0.0 {
                continue;
            }
            let mut dot = Complex64::new(0.0, 0.0);
            for i in j..rows {
                dot += self.packed[(i, j)].conj() * qtb[i];
            }
            let factor = Complex64::from(gamma) * dot;
            for i in j..rows {
                qtb[i] -= factor * self.packed[(i, j)];
            }
        }

        // Directions with a negligible pivot (relative to the leading
        // one) are truncated: including them would divide by a roundoff
        // residue and blow the solution up without lowering the residual.
        let diag_max = self.r_diag.iter().map(|d| d.norm()).fold(0.0f64, f64::max);
        let alive =
            |j: usize| self.gammas[j] != 0.0 && self.r_diag[j].norm() > 1e-13 * diag_max;

        let mut residual_sqr = qtb[cols..rows].iter().map(|v| v.norm_sqr()).sum::<f64>();
        for j in 0..cols {
            if !alive(j) {
                // The component of b along a dead direction stays
                // unmatched and belongs to the residual.
                residual_sqr += qtb[j].norm_sqr();
            }
        }
        let residual_norm = residual_sqr.sqrt();

        // Back-substitute R y = qtb[..cols] on the surviving directions.
        let mut y = vec![Complex64::new(0.0, 0.0); cols];
        for j in (0..cols).rev() {
            if !alive(j) {
                continue;
            }
            let mut acc = qtb[j];
            for l in (j + 1)..cols {
                acc -= self.packed[(j, l)] * y[l];
            }
            y[j] = acc / self.r_diag[j];
        }

        // Undo pivoting and equilibration.
        let mut x = DVector::from_element(cols, Complex64::new(0.0, 0.0));
        for j in 0..cols {
            let orig = self.perm[j];
            x[orig] = y[j] / Complex64::from(self.col_scale[orig]);
        }
        Ok((x, residual_norm))
    }
}

/// 2-norm of rows `from..` of column `col`.
fn trailing_norm(m: &DMatrix<Complex64>, from: usize, col: usize) -> f64 {
    (from..m.nrows())
        .map(|i| m[(i, col)].norm_sqr())
        .sum::<f64>()
        .sqrt()
}

// ---------------------------------------------------------------------
// Restarted GMRES
// ---------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct GmresConfig {
    /// Krylov subspace dimension before a restart.
    pub restart: usize,
    /// Total matrix-application budget across restarts.
    pub max_iterations: usize,
    /// Convergence threshold on ||b - A x|| / ||b||.
    pub rtol: f64,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig {
            restart: 50,
            max_iterations: 500,
            rtol: 1e-10,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmresResult {
    pub x: DVector<Complex64>,
    pub iterations: usize,
    /// True relative residual ||b - A x|| / ||b|| at exit.
    pub residual: f64,
    pub converged: bool,
}

/// Restarted GMRES on an operator given as a closure (matrix-free).
/// Modified Gram-Schmidt Arnoldi with Givens rotations; the recurrence
/// residual is cross-checked by a true residual at each restart, so the
/// reported residual is never an optimistic estimate.
pub fn gmres<F>(
    apply: F,
    b: &DVector<Complex64>,
    x0: Option<&DVector<Complex64>>,
    cfg: &GmresConfig,
) -> GmresResult
where
    F: Fn(&DVector<Complex64>) -> DVector<Complex64>,
{
    let n = b.len();
    let b_norm = b.norm();
    let mut x = match x0 {
        Some(v) => v.clone(),
        None => DVector::from_element(n, Complex64::new(0.0, 0.0)),
    };
    if b_norm == 0.0 {
        return GmresResult {
            x: DVector::from_element(n, Complex64::new(0.0, 0.0)),
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }

    let restart = cfg.restart.max(1).min(n.max(1));
    let mut total_iterations = 0usize;

    loop {
        let r = b - apply(&x);
        let beta = r.norm();
        if beta / b_norm <= cfg.rtol {
            return GmresResult {
                x,
                iterations: total_iterations,
                residual: beta / b_norm,
                converged: true,
            };
        }
        if total_iterations >= cfg.max_iterations {
            return GmresResult {
                x,
                iterations: total_iterations,
                residual: beta / b_norm,
                converged: false,
            };
        }

        let mut basis: Vec<DVector<Complex64>> = vec![&r / Complex64::from(beta)];
        // Column-major upper Hessenberg, h[j] holds column j (j+2 entries).
        let mut h_cols: Vec<Vec<Complex64>> = Vec::new();
        let mut givens: Vec<(f64, Complex64)> = Vec::new();
        let mut g = vec![Complex64::new(0.0, 0.0); restart + 1];
        g[0] = Complex64::from(beta);
        let mut inner = 0usize;

        for j in 0..restart {
            let mut w = apply(&basis[j]);
            total_iterations += 1;
            inner = j + 1;

            let mut col = vec![Complex64::new(0.0, 0.0); j + 2];
            for (i, v) in basis.iter().enumerate() {
                let hij = v.dotc(&w);
                col[i] = hij;
                w.axpy(-hij, v, Complex64::new(1.0, 0.0));
            }
            let w_norm = w.norm();
            col[j + 1] = Complex64::from(w_norm);

            // Previous rotations on the new column.
            for (i, (c, s)) in givens.iter().enumerate() {
                let hi = col[i];
                let hj = col[i + 1];
                col[i] = Complex64::from(*c) * hi + s * hj;
                col[i + 1] = -s.conj() * hi + Complex64::from(*c) * hj;
            }
            // New rotation zeroing the subdiagonal entry.
            let (c, s, r_entry) = make_givens(col[j], col[j + 1]);
            col[j] = r_entry;
            col[j + 1] = Complex64::new(0.0, 0.0);
            let gj = g[j];
            g[j] = Complex64::from(c) * gj;
            g[j + 1] = -s.conj() * gj;
            givens.push((c, s));
            h_cols.push(col);

            let est = g[j + 1].norm() / b_norm;
            let happy = w_norm < 1e-300;
            if !happy {
                basis.push(&w / Complex64::from(w_norm));
            }
            if est <= cfg.rtol || happy || total_iterations >= cfg.max_iterations {
                break;
            }
        }

        // y solves the triangularized least squares; update x.
        let mut y = vec![Complex64::new(0.0, 0.0); inner];
        for j in (0..inner).rev() {
            let mut acc = g[j];
            for l in (j + 1)..inner {
                acc -= h_cols[l][j] * y[l];
            }
            y[j] = acc / h_cols[j][j];
        }
        for (j, yj) in y.iter().enumerate() {
            x.axpy(*yj, &basis[j], Complex64::new(1.0, 0.0));
        }
        // Loop continues: the restart head recomputes the true residual
        // and decides convergence from it.
    }
}

/// Complex Givens rotation: returns (c, s, r) with c real such that
/// [c s; -conj(s) c] [a; b] = [r; 0].
fn make_givens(a: Complex64, b: Complex64) -> (f64, Complex64, Complex64) {
    let an = a.norm();
    let bn = b.norm();
    if bn == 0.0 {
        return (1.0, Complex64::new(0.0, 0.0), a);
    }
    if an == 0.0 {
        // r = |b|, s = conj(b)/|b| maps (0, b) -> (|b|, 0).
        return (0.0, (b / Complex64::from(bn)).conj(), Complex64::from(bn));
    }
    let t = (an * an + bn * bn).sqrt();
    let c = an / t;
    let phase = a / Complex64::from(an);
    let s = phase * b.conj() / Complex64::from(t);
    (c, s, phase * Complex64::from(t))
}
