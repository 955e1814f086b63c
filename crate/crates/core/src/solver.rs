//! Newton solver for the phase equation `arg det[𝒲(u) | 𝒵] = θ₀` with
//! `Y = ∇f`, on a parameter grid with Dirichlet data for `f`.
//!
//! Unknowns are the interior values of `f`. Derivatives of `f` come from
//! compact central differences, and `Y` is assembled through
//! [`TangentFieldY::from_potential_derivatives`], the same path used for
//! expression-defined gradient fields.
//!
//! `Y` and `∂Y/∂u` are linear in the node-local derivatives `(∇f, Hess f)`,
//! which are themselves linear in the grid values. The Jacobian is therefore
//! assembled by the chain rule, `∂ arg det M = Im tr(M⁻¹ ∂M)`, with `∂M`
//! obtained exactly by pushing unit grid vectors through the same assembly.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle;
use crate::field::{FieldError, TangentFieldY};
use crate::lift;
use crate::locus::BaseLocusPatch;
use crate::potential::{EvalError, Expression};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("phases are spread uniformly; no mean phase exists")]
    ZeroResultant,
    #[error("the solver needs k >= 1 and at least 3 nodes per axis")]
    Grid,
    #[error("boundary expression has {got} variables, expected {expected}")]
    BoundaryArity { expected: usize, got: usize },
    #[error("boundary evaluation failed at node {node}: {source}")]
    Boundary {
        node: usize,
        #[source]
        source: EvalError,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("det[W|Z] vanishes at node {0}")]
    Degenerate(usize),
    #[error("Jacobian is singular at iteration {0}")]
    SingularJacobian(usize),
    #[error("no admissible step at iteration {iteration} (residual {residual:e}); branch guard or damping exhausted")]
    StepRejected { iteration: usize, residual: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Circular mean of the node phases.
pub fn estimate_theta(phases: &[f64]) -> Result<f64, SolverError> {
    angle::circular_mean(phases).ok_or(SolverError::ZeroResultant)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Largest accepted change of any node phase in one step.
    pub branch_guard: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 30,
            branch_guard: FRAC_PI_2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseProblem<'a> {
    pub patch: &'a BaseLocusPatch,
    pub theta0: f64,
    /// Dirichlet values; only boundary nodes are read.
    pub boundary: Vec<f64>,
    pub options: SolverOptions,
}

impl<'a> PhaseProblem<'a> {
    /// Boundary data from an expression in `u`.
    pub fn from_expression(
        patch: &'a BaseLocusPatch,
        theta0: f64,
        boundary: &Expression,
        options: SolverOptions,
    ) -> Result<Self, SolverError> {
        if boundary.dim() != patch.k() {
            return Err(SolverError::BoundaryArity {
                expected: patch.k(),
                got: boundary.dim(),
            });
        }
        let values = (0..patch.len())
            .map(|n| {
                if patch.grid.is_boundary(n) {
                    boundary
                        .eval(patch.grid.u(n).as_slice())
                        .map_err(|source| SolverError::Boundary { node: n, source })
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PhaseProblem {
            patch,
            theta0,
            boundary: values,
            options,
        })
    }
}

#[derive(Debug, Clone)]
pub struct PhaseSolution {
    pub f: Vec<f64>,
    pub field: TangentFieldY,
    pub iterations: usize,
    /// Max interior `|wrap(phase − θ₀)|` after each iteration, starting with the initial guess.
    pub residual_history: Vec<f64>,
    pub residual: f64,
    pub interior: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub theta0: f64,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub unknowns: usize,
}

impl PhaseSolution {
    pub fn report(&self, theta0: f64) -> SolveReport {
        SolveReport {
            theta0,
            iterations: self.iterations,
            residual: self.residual,
            residual_history: self.residual_history.clone(),
            unknowns: self.interior.len(),
        }
    }
}

/// Linear (`k = 1`) or transfinite Coons (`k = 2`) interpolation of the
/// boundary values; the boundary mean for `k ≥ 3`.
pub fn initial_guess(patch: &BaseLocusPatch, boundary: &[f64]) -> Vec<f64> {
    let g = &patch.grid;
    let shape = g.shape();
    let mut f: Vec<f64> = boundary.to_vec();
    match g.k() {
        1 => {
            let n = shape[0];
            let (a, b) = (boundary[0], boundary[n - 1]);
            for (i, v) in f.iter_mut().enumerate().take(n - 1).skip(1) {
                let t = i as f64 / (n - 1) as f64;
                *v = a + t * (b - a);
            }
        }
        2 => {
            let (n0, n1) = (shape[0], shape[1]);
            let at = |i: usize, j: usize| boundary[g.flat_index(&[i, j])];
            for i in 1..n0 - 1 {
                for j in 1..n1 - 1 {
                    let s = i as f64 / (n0 - 1) as f64;
                    let t = j as f64 / (n1 - 1) as f64;
                    let v = (1.0 - s) * at(0, j) + s * at(n0 - 1, j) + (1.0 - t) * at(i, 0) + t * at(i, n1 - 1)
                        - (1.0 - s) * (1.0 - t) * at(0, 0)
                        - (1.0 - s) * t * at(0, n1 - 1)
                        - s * (1.0 - t) * at(n0 - 1, 0)
                        - s * t * at(n0 - 1, n1 - 1);
                    f[g.flat_index(&[i, j])] = v;
                }
            }
        }
        _ => {
            let bnd: Vec<f64> = (0..g.len()).filter(|&n| g.is_boundary(n)).map(|n| boundary[n]).collect();
            let mean = bnd.iter().sum::<f64>() / bnd.len().max(1) as f64;
            for (n, v) in f.iter_mut().enumerate() {
                if !g.is_boundary(n) {
                    *v = mean;
                }
            }
        }
    }
    f
}

/// Gradient and Hessian of the grid function `f` at `node`: compact
/// central differences at interior nodes, second-order one-sided
/// differences (nested for mixed terms) on the boundary.
pub fn grid_derivatives(patch: &BaseLocusPatch, f: &[f64], node: usize) -> (DVector<f64>, DMatrix<f64>) {
    let g = &patch.grid;
    let k = g.k();
    if !g.is_boundary(node) {
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        for a in 0..k {
            let h = g.spacing(a);
            let p = g.neighbor(node, a, 1).expect("interior");
            let q = g.neighbor(node, a, -1).expect("interior");
            grad[a] = (f[p] - f[q]) / (2.0 * h);
            hess[(a, a)] = (f[p] - 2.0 * f[node] + f[q]) / (h * h);
            for b in a + 1..k {
                let hb = g.spacing(b);
                let pp = g.neighbor(p, b, 1).expect("interior");
                let pq = g.neighbor(p, b, -1).expect("interior");
                let qp = g.neighbor(q, b, 1).expect("interior");
                let qq = g.neighbor(q, b, -1).expect("interior");
                let v = (f[pp] - f[pq] - f[qp] + f[qq]) / (4.0 * h * hb);
                hess[(a, b)] = v;
                hess[(b, a)] = v;
            }
        }
        return (grad, hess);
    }
    let grad = DVector::from_fn(k, |a, _| first_derivative(patch, |n| f[n], node, a));
    let mut hess = DMatrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            hess[(a, b)] = first_derivative(patch, |n| first_derivative(patch, |m| f[m], n, b), node, a);
        }
    }
    let hess = (&hess + hess.transpose()) * 0.5;
    (grad, hess)
}

fn first_derivative(patch: &BaseLocusPatch, f: impl Fn(usize) -> f64, node: usize, axis: usize) -> f64 {
    let g = &patch.grid;
    let h = g.spacing(axis);
    match (g.neighbor(node, axis, -1), g.neighbor(node, axis, 1)) {
        (Some(q), Some(p)) => (f(p) - f(q)) / (2.0 * h),
        (None, Some(p)) => {
            let p2 = g.neighbor(p, axis, 1).expect("at least 3 nodes per axis");
            (-3.0 * f(node) + 4.0 * f(p) - f(p2)) / (2.0 * h)
        }
        (Some(q), None) => {
            let q2 = g.neighbor(q, axis, -1).expect("at least 3 nodes per axis");
            (3.0 * f(node) - 4.0 * f(q) + f(q2)) / (2.0 * h)
        }
        (None, None) => unreachable!("axes have at least 3 nodes"),
    }
}

/// `Y` and `∂Y/∂u` at every node for the grid function `f`.
pub fn field_from_grid(patch: &BaseLocusPatch, f: &[f64]) -> Result<TangentFieldY, SolverError> {
    let mut field = TangentFieldY::zero(patch);
    for node in 0..patch.len() {
        let (g, h) = grid_derivatives(patch, f, node);
        let (y, dy) = TangentFieldY::from_potential_derivatives(patch, node, &g, &h)?;
        field.y[node] = y;
        field.dy_du[node] = dy;
    }
    Ok(field)
}

fn node_dy(patch: &BaseLocusPatch, f: &[f64], node: usize) -> Result<DMatrix<f64>, SolverError> {
    let (g, h) = grid_derivatives(patch, f, node);
    Ok(TangentFieldY::from_potential_derivatives(patch, node, &g, &h)?.1)
}

fn node_phase(patch: &BaseLocusPatch, f: &[f64], node: usize) -> Result<f64, SolverError> {
    let dy = node_dy(patch, f, node)?;
    let det = lift::augmented_det(&lift::complex_w(&patch.dx_du[node], &dy), &patch.z_f64());
    if det.norm() < lift::DEGENERATE_DET {
        return Err(SolverError::Degenerate(node));
    }
    Ok(det.arg())
}

/// Dense Jacobian of the interior phases with respect to the interior values.
pub fn phase_jacobian(patch: &BaseLocusPatch, f: &[f64], interior: &[usize]) -> Result<DMatrix<f64>, SolverError> {
    let g = &patch.grid;
    let k = patch.k();
    let z = patch.z_f64();
    let mut slot = vec![usize::MAX; g.len()];
    for (i, &n) in interior.iter().enumerate() {
        slot[n] = i;
    }
    // rows k.. of M⁻¹ never meet ∂M, whose Z block is zero
    let mut inv_w = Vec::with_capacity(interior.len());
    for &n in interior {
        let dy = node_dy(patch, f, n)?;
        let m = lift::augmented_matrix(&lift::complex_w(&patch.dx_du[n], &dy), &z);
        let inv = m.try_inverse().ok_or(SolverError::Degenerate(n))?;
        inv_w.push(inv.rows(0, k).into_owned());
    }
    let nu = interior.len();
    let mut jac = DMatrix::zeros(nu, nu);
    let mut unit = vec![0.0; g.len()];
    for (col, &p) in interior.iter().enumerate() {
        unit[p] = 1.0;
        for n in stencil(patch, p) {
            let row = slot[n];
            let ddy = node_dy(patch, &unit, n)?;
            // Im tr(M⁻¹ · i ∂𝒲) = Re tr(M⁻¹[..k] ∂𝒲) with ∂𝒲 = ∂Y/∂u real
            let mut tr = 0.0;
            for i in 0..k {
                for r in 0..ddy.nrows() {
                    tr += inv_w[row][(i, r)].re * ddy[(r, i)];
                }
            }
            jac[(row, col)] = tr;
        }
        unit[p] = 0.0;
    }
    Ok(jac)
}

struct State {
    phases: Vec<f64>,
    residual: DVector<f64>,
}

fn evaluate(patch: &BaseLocusPatch, f: &[f64], interior: &[usize], theta0: f64) -> Result<State, SolverError> {
    let phases = interior
        .iter()
        .map(|&n| node_phase(patch, f, n))
        .collect::<Result<Vec<_>, _>>()?;
    let residual = DVector::from_iterator(interior.len(), phases.iter().map(|p| angle::wrap(p - theta0)));
    Ok(State { phases, residual })
}

/// Interior nodes within one grid step (in every axis) of `node`.
fn stencil(patch: &BaseLocusPatch, node: usize) -> Vec<usize> {
    let g = &patch.grid;
    let mut out = vec![node];
    for axis in 0..g.k() {
        let mut next = Vec::with_capacity(out.len() * 3);
        for &n in &out {
            next.push(n);
            next.extend(g.neighbor(n, axis, -1));
            next.extend(g.neighbor(n, axis, 1));
        }
        out = next;
    }
    out.retain(|&n| !g.is_boundary(n));
    out
}

pub fn solve_phase(problem: &PhaseProblem) -> Result<PhaseSolution, SolverError> {
    let patch = problem.patch;
    let g = &patch.grid;
    if g.k() == 0 || g.shape().iter().any(|&n| n < 3) {
        return Err(SolverError::Grid);
    }
    let opts = problem.options;
    let interior: Vec<usize> = (0..g.len()).filter(|&n| !g.is_boundary(n)).collect();
    let mut f = initial_guess(patch, &problem.boundary);
    let mut state = evaluate(patch, &f, &interior, problem.theta0)?;
    let mut history = vec![state.residual.amax()];
    let mut iterations = 0;

    while state.residual.amax() > opts.tol {
        if iterations == opts.max_iter {
            return Err(SolverError::NoConvergence {
                iterations,
                residual: state.residual.amax(),
            });
        }
        iterations += 1;
        let jac = phase_jacobian(patch, &f, &interior)?;
        let step = jac
            .lu()
            .solve(&(-&state.residual))
            .ok_or(SolverError::SingularJacobian(iterations))?;
        let norm0 = state.residual.norm();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = f.clone();
            for (i, &n) in interior.iter().enumerate() {
                trial[n] += t * step[i];
            }
            if let Ok(s) = evaluate(patch, &trial, &interior, problem.theta0) {
                let jump = s
                    .phases
                    .iter()
                    .zip(&state.phases)
                    .map(|(a, b)| angle::circular_distance(*a, *b))
                    .fold(0.0, f64::max);
                if jump <= opts.branch_guard && s.residual.norm() < norm0 {
                    accepted = Some((trial, s));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, s)) = accepted else {
            return Err(SolverError::StepRejected {
                iteration: iterations,
                residual: state.residual.amax(),
            });
        };
        f = trial;
        state = s;
        history.push(state.residual.amax());
    }

    let field = field_from_grid(patch, &f)?;
    Ok(PhaseSolution {
        f,
        field,
        iterations,
        residual: state.residual.amax(),
        residual_history: history,
        interior,
    })
}
