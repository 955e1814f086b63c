//! Fields `Y` on the base locus, given as components of `∂/∂x_i` along a
//! patch together with their `u`-derivatives.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::intmat;
use crate::locus::BaseLocusPatch;
use crate::potential::{EvalError, Expression};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("field expects {expected} component expressions, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("field expression is defined over {got} variables, the patch has k = {expected}")]
    Arity { expected: usize, got: usize },
    #[error("field evaluation failed at node {node}: {source}")]
    Eval {
        node: usize,
        #[source]
        source: EvalError,
    },
    #[error("restricted metric is singular at node {0}")]
    SingularMetric(usize),
}

/// How `Y` is specified, all expressions in `u1..uk`.
#[derive(Debug, Clone)]
pub enum FieldSpec {
    Zero,
    /// `Y = ∇f` for the induced metric on `B(V)`.
    Gradient(Expression),
    /// `m` components `Y^i(u)`.
    Explicit(Vec<Expression>),
    /// `Y = Σ s_j(u) ζ^j`, one coefficient per normal direction.
    Normal(Vec<Expression>),
}

impl FieldSpec {
    pub fn mode(&self) -> &'static str {
        match self {
            FieldSpec::Zero => "zero",
            FieldSpec::Gradient(_) => "gradient",
            FieldSpec::Explicit(_) => "explicit",
            FieldSpec::Normal(_) => "normal",
        }
    }

    pub fn is_gradient(&self) -> bool {
        matches!(self, FieldSpec::Gradient(_) | FieldSpec::Zero)
    }
}

/// `Y` and `∂Y/∂u` at every patch node.
#[derive(Debug, Clone)]
pub struct TangentFieldY {
    pub y: Vec<DVector<f64>>,
    /// `m × k`, column `i` is `∂Y/∂u^i`.
    pub dy_du: Vec<DMatrix<f64>>,
}

impl TangentFieldY {
    pub fn zero(patch: &BaseLocusPatch) -> Self {
        TangentFieldY {
            y: vec![DVector::zeros(patch.m()); patch.len()],
            dy_du: vec![DMatrix::zeros(patch.m(), patch.k()); patch.len()],
        }
    }

    pub fn evaluate(spec: &FieldSpec, patch: &BaseLocusPatch) -> Result<Self, FieldError> {
        let (m, k) = (patch.m(), patch.k());
        let check_arity = |e: &Expression| {
            if e.dim() != k {
                Err(FieldError::Arity {
                    expected: k,
                    got: e.dim(),
                })
            } else {
                Ok(())
            }
        };
        let mut out = TangentFieldY {
            y: Vec::with_capacity(patch.len()),
            dy_du: Vec::with_capacity(patch.len()),
        };
        match spec {
            FieldSpec::Zero => return Ok(Self::zero(patch)),
            FieldSpec::Gradient(f) => {
                check_arity(f)?;
                for node in 0..patch.len() {
                    let (_, g, h) = f
                        .eval_jet2(patch.grid.u(node).as_slice())
                        .map_err(|source| FieldError::Eval { node, source })?;
                    let (y, dy) = Self::from_potential_derivatives(patch, node, &g, &h)?;
                    out.y.push(y);
                    out.dy_du.push(dy);
                }
            }
            FieldSpec::Explicit(comps) => {
                if comps.len() != m {
                    return Err(FieldError::ComponentCount {
                        expected: m,
                        got: comps.len(),
                    });
                }
                comps.iter().try_for_each(check_arity)?;
                for node in 0..patch.len() {
                    let u = patch.grid.u(node);
                    let mut y = DVector::zeros(m);
                    let mut dy = DMatrix::zeros(m, k);
                    for (i, e) in comps.iter().enumerate() {
                        let (val, g) = e
                            .eval_grad(u.as_slice())
                            .map_err(|source| FieldError::Eval { node, source })?;
                        y[i] = val;
                        dy.row_mut(i).copy_from(&g.transpose());
                    }
                    out.y.push(y);
                    out.dy_du.push(dy);
                }
            }
            FieldSpec::Normal(coeffs) => {
                if coeffs.len() != m - k {
                    return Err(FieldError::ComponentCount {
                        expected: m - k,
                        got: coeffs.len(),
                    });
                }
                coeffs.iter().try_for_each(check_arity)?;
                let z = patch.z_f64();
                for node in 0..patch.len() {
                    let u = patch.grid.u(node);
                    let mut s = DVector::zeros(m - k);
                    let mut ds = DMatrix::zeros(m - k, k);
                    for (j, e) in coeffs.iter().enumerate() {
                        let (val, g) = e
                            .eval_grad(u.as_slice())
                            .map_err(|source| FieldError::Eval { node, source })?;
                        s[j] = val;
                        ds.row_mut(j).copy_from(&g.transpose());
                    }
                    out.y.push(&z * s);
                    out.dy_du.push(&z * ds);
                }
            }
        }
        Ok(out)
    }

    /// `Y = ∇f` on `B(V)` from `∇_u f` and `Hess_u f` at a node.
    ///
    /// With `D = ∂x/∂u` and `G = Xiᵀ D` (the induced metric in `u`),
    /// `Y = D G⁻¹ ∇_u f`, so that `⟨ξ_j, Y⟩ = ∂f/∂u^j`.
    pub fn from_potential_derivatives(
        patch: &BaseLocusPatch,
        node: usize,
        grad: &DVector<f64>,
        hess: &DMatrix<f64>,
    ) -> Result<(DVector<f64>, DMatrix<f64>), FieldError> {
        let (m, k) = (patch.m(), patch.k());
        let xi = patch.xi_f64();
        let d = &patch.dx_du[node];
        let g_mat = xi.transpose() * d;
        let g_mat = (&g_mat + g_mat.transpose()) * 0.5;
        let lu = g_mat.lu();
        let c = lu.solve(grad).ok_or(FieldError::SingularMetric(node))?;
        let y = d * &c;
        let mut dy = DMatrix::zeros(m, k);
        for i in 0..k {
            let d_i = &patch.d2x[node][i];
            let dg_i = xi.transpose() * d_i;
            let rhs = hess.column(i) - &dg_i * &c;
            let dc = lu.solve(&rhs).ok_or(FieldError::SingularMetric(node))?;
            dy.set_column(i, &(d_i * &c + d * dc));
        }
        Ok((y, dy))
    }

    /// Max `|g(Y, ζ^j)| = |⟨ζ^j, Hess K · Y⟩|`; zero iff `Y` is tangent to `B(V)`.
    pub fn tangency_residual(&self, patch: &BaseLocusPatch) -> f64 {
        let zd = intmat::to_f64(&patch.dual.zeta_dual);
        (0..patch.len())
            .map(|n| {
                if zd.nrows() == 0 {
                    0.0
                } else {
                    (&zd * &patch.hess[n] * &self.y[n]).amax()
                }
            })
            .fold(0.0, f64::max)
    }

    /// `⟨ξ_ℓ, Y⟩` at a node, the connection coefficients on `dv^ℓ`.
    pub fn xi_pairing(&self, patch: &BaseLocusPatch, node: usize) -> DVector<f64> {
        patch.xi_f64().transpose() * &self.y[node]
    }
}
