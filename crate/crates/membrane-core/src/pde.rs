//! The discrete state equation and its energy.
//!
//! The operator is the standard 5-point stencil for -Δ with Dirichlet ghost
//! cells, plus the diagonal density term: `(A + diag(g)) u = f`. The system
//! is symmetric positive definite and is solved either by Jacobi-
//! preconditioned conjugate gradients or, for small systems, by a dense
//! Cholesky factorization used as the exact reference path in oracle and
//! identity tests.
//!
//! All quadrature is cell sums times h², so the energy identity
//! `∫ f·u = ∫ |∇u|² + ∫ g·u²` holds exactly in matrix form.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::Domain;
use crate::error::{Error, Result};
use crate::field::{inner, ScalarField};

/// Largest system the dense direct path accepts.
pub const DENSE_LIMIT: usize = 400;

/// CG iteration cap, as a multiple of the unknown count.
const MAX_ITER_FACTOR: usize = 20;

/// How to solve the SPD system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolverChoice {
    /// Jacobi-preconditioned conjugate gradients to the given relative
    /// residual, with a fixed sequential reduction order.
    Cg { tol: f64 },
    /// Dense Cholesky; only for domains with at most [`DENSE_LIMIT`] cells.
    Dense,
}

impl Default for SolverChoice {
    fn default() -> Self {
        SolverChoice::Cg { tol: 1e-10 }
    }
}

/// Solution of the state equation together with solver diagnostics.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: ScalarField,
    pub iterations: usize,
    /// Relative residual ‖f − (A+g)u‖ / ‖f‖ actually achieved.
    pub residual_norm: f64,
    /// Φ = ∫ f·u.
    pub energy: f64,
}

/// y = (A + diag(g)) x with A the 5-point -Δ stencil, Dirichlet ghosts.
fn apply_operator(domain: &Domain, g: &[f64], x: &[f64], y: &mut [f64]) {
    let inv_h2 = 1.0 / domain.cell_measure();
    for k in 0..x.len() {
        let mut acc = 4.0 * x[k];
        for nb in domain.neighbors(k).into_iter().flatten() {
            acc -= x[nb];
        }
        y[k] = acc * inv_h2 + g[k] * x[k];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

fn cg_solve(
    domain: &Domain,
    g: &[f64],
    rhs: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = rhs.len();
    let inv_h2 = 1.0 / domain.cell_measure();
    let rhs_norm = norm(rhs);
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    // Jacobi preconditioner: the diagonal 4/h² + g is strictly positive.
    let precond: Vec<f64> = g.iter().map(|&gk| 1.0 / (4.0 * inv_h2 + gk)).collect();

    for (zk, (rk, mk)) in z.iter_mut().zip(r.iter().zip(&precond)) {
        *zk = rk * mk;
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = MAX_ITER_FACTOR * n;
    let mut res = norm(&r) / rhs_norm;
    if res <= tol {
        return Ok((x, 0, res));
    }
    for iter in 1..=max_iter {
        apply_operator(domain, g, &p, &mut q);
        let pq = dot(&p, &q);
        if pq <= 0.0 {
            return Err(Error::NotPositiveDefinite(iter));
        }
        let alpha = rz / pq;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * q[k];
        }
        res = norm(&r) / rhs_norm;
        if res <= tol {
            return Ok((x, iter, res));
        }
        for (zk, (rk, mk)) in z.iter_mut().zip(r.iter().zip(&precond)) {
            *zk = rk * mk;
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: res,
    })
}

fn dense_solve(domain: &Domain, g: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    if n > DENSE_LIMIT {
        return Err(Error::TooLargeForDense {
            limit: DENSE_LIMIT,
            got: n,
        });
    }
    let inv_h2 = 1.0 / domain.cell_measure();
    let mut a = vec![0.0; n * n];
    for k in 0..n {
        a[k * n + k] = 4.0 * inv_h2 + g[k];
        for nb in domain.neighbors(k).into_iter().flatten() {
            a[k * n + nb] = -inv_h2;
        }
    }
    // In-place Cholesky, lower triangle.
    for j in 0..n {
        let mut diag = a[j * n + j];
        for k in 0..j {
            diag -= a[j * n + k] * a[j * n + k];
        }
        if diag <= 0.0 {
            return Err(Error::NotPositiveDefinite(j));
        }
        let pivot = libm::sqrt(diag);
        a[j * n + j] = pivot;
        for i in j + 1..n {
            let mut v = a[i * n + j];
            for k in 0..j {
                v -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = v / pivot;
        }
    }
    let mut x = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            x[i] -= a[i * n + k] * x[k];
        }
        x[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            x[i] -= a[k * n + i] * x[k];
        }
        x[i] /= a[i * n + i];
    }
    Ok(x)
}

fn require_density(g: &ScalarField) -> Result<()> {
    if let Some(k) = g.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Negative {
            cell: k,
            value: g.values()[k],
        });
    }
    Ok(())
}

fn require_force(f: &ScalarField) -> Result<()> {
    if let Some(k) = f.values().iter().position(|&v| v < 0.0) {
        return Err(Error::Negative {
            cell: k,
            value: f.values()[k],
        });
    }
    if f.values().iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidForce);
    }
    Ok(())
}

fn check_pair(g: &ScalarField, f: &ScalarField) -> Result<()> {
    if !g.domain().compatible_with(f.domain()) {
        return Err(Error::DomainMismatch);
    }
    require_density(g)?;
    require_force(f)
}

/// Solve `(A + diag(g)) u = f` by preconditioned CG to relative residual
/// `tol`. Requires `g ≥ 0` and `f ≥ 0` not identically zero.
pub fn solve_state(g: &ScalarField, f: &ScalarField, tol: f64) -> Result<SolveResult> {
    solve_state_with(g, f, SolverChoice::Cg { tol })
}

/// As [`solve_state`], with an explicit solver choice.
pub fn solve_state_with(
    g: &ScalarField,
    f: &ScalarField,
    choice: SolverChoice,
) -> Result<SolveResult> {
    check_pair(g, f)?;
    let domain = f.domain();
    let (values, iterations) = match choice {
        SolverChoice::Cg { tol } => {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::InvalidTolerance);
            }
            let (x, iters, _) = cg_solve(domain, g.values(), f.values(), tol)?;
            (x, iters)
        }
        SolverChoice::Dense => (dense_solve(domain, g.values(), f.values())?, 1),
    };
    let mut residual = vec![0.0; values.len()];
    apply_operator(domain, g.values(), &values, &mut residual);
    for (rk, fk) in residual.iter_mut().zip(f.values()) {
        *rk = fk - *rk;
    }
    let residual_norm = norm(&residual) / norm(f.values());
    let u = ScalarField::new(Arc::clone(domain), values)?;
    let energy = inner(f, &u)?;
    Ok(SolveResult {
        u,
        iterations,
        residual_norm,
        energy,
    })
}

/// Solve the Poisson problem `-Δ v = f`, i.e. the state equation with g ≡ 0.
pub fn solve_poisson(f: &ScalarField, tol: f64) -> Result<SolveResult> {
    let zero = ScalarField::constant(Arc::clone(f.domain()), 0.0)?;
    solve_state(&zero, f, tol)
}

/// Φ(g) = ∫ f·u_g by cell-sum quadrature.
pub fn energy(g: &ScalarField, f: &ScalarField, tol: f64) -> Result<f64> {
    Ok(solve_state(g, f, tol)?.energy)
}

/// uᵀ(A + diag(g))u · h², the discrete Dirichlet-plus-mass quadratic form.
pub fn quadratic_form(g: &ScalarField, v: &ScalarField) -> Result<f64> {
    if !g.domain().compatible_with(v.domain()) {
        return Err(Error::DomainMismatch);
    }
    let mut av = vec![0.0; v.len()];
    apply_operator(v.domain(), g.values(), v.values(), &mut av);
    Ok(dot(v.values(), &av) * v.domain().cell_measure())
}

/// Relative defect of the energy identity: |∫f·u − uᵀ(A+g)u·h²| / |∫f·u|.
pub fn energy_identity_residual(
    g: &ScalarField,
    f: &ScalarField,
    u: &ScalarField,
) -> Result<f64> {
    if !u.domain().compatible_with(f.domain()) {
        return Err(Error::DomainMismatch);
    }
    let work = inner(f, u)?;
    let form = quadratic_form(g, u)?;
    Ok((work - form).abs() / work.abs())
}

/// The value whose supremum over test fields is Φ(g):
/// `2∫f·v − vᵀ(A+g)v·h²`. Any `v` gives a lower bound for the energy.
pub fn variational_value(g: &ScalarField, f: &ScalarField, v: &ScalarField) -> Result<f64> {
    Ok(2.0 * inner(f, v)? - quadratic_form(g, v)?)
}

/// One-sided derivative of t ↦ Φ(g + t(h−g)) at t = 0⁺, evaluated through
/// its closed form `−∫ (h−g) u_g²`.
pub fn gateaux_derivative(
    g: &ScalarField,
    h: &ScalarField,
    f: &ScalarField,
    tol: f64,
) -> Result<f64> {
    if !g.domain().compatible_with(h.domain()) {
        return Err(Error::DomainMismatch);
    }
    require_density(h)?;
    let u = solve_state(g, f, tol)?.u;
    let cell = g.domain().cell_measure();
    Ok(-g
        .values()
        .iter()
        .zip(h.values())
        .zip(u.values())
        .map(|((gk, hk), uk)| (hk - gk) * uk * uk)
        .sum::<f64>()
        * cell)
}
