//! The `X(B)` side: frames of `L(V, Y)`, the symplectic form
//! `ω = Σ K_ij dx_i ∧ dy_j`, the one-form `η`, and the special Lagrangian
//! phase `arg det[𝒲 | 𝒵]`.
//!
//! Tangent vectors are pairs `(v_x, v_y)` of base and fibre components, and
//! `ω(v, w) = v_xᵀ H w_y − w_xᵀ H v_y` with `H = Hess K`.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle;
use crate::exterior::{wedge_top, Form, C64};
use crate::field::TangentFieldY;
use crate::intmat::{self, IntMatrix};
use crate::locus::BaseLocusPatch;

/// Below this modulus `det[𝒲 | 𝒵]` is treated as a degenerate immersion.
pub const DEGENERATE_DET: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LiftError {
    #[error("det[W|Z] vanishes at node {0}")]
    DegenerateImmersion(usize),
    #[error("node {0} has no neighbours on both sides for finite differences")]
    BoundaryNode(usize),
}

/// `ω(v, w)` for `v = (vx, vy)`, `w = (wx, wy)`.
pub fn omega(h: &DMatrix<f64>, vx: &DVector<f64>, vy: &DVector<f64>, wx: &DVector<f64>, wy: &DVector<f64>) -> f64 {
    vx.dot(&(h * wy)) - wx.dot(&(h * vy))
}

/// Almost complex structure `J(vx, vy) = (−vy, vx)`.
pub fn complex_structure(vx: &DVector<f64>, vy: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    (-vy, vx.clone())
}

/// Frame of `L(V, Y)` at one node.
#[derive(Debug, Clone)]
pub struct LagrangianFrame {
    pub u: DVector<f64>,
    /// Base parts of `W_j`: `∂x/∂u^j`.
    pub w_x: DMatrix<f64>,
    /// Fibre parts of `W_j`: `∂Y/∂u^j`.
    pub w_y: DMatrix<f64>,
    /// Fibre parts of `Z_i`: `ζ^i`.
    pub z_y: DMatrix<f64>,
    /// Gram matrix of `ω` on `(W_1..W_k, Z_{k+1}..Z_m)`.
    pub omega_matrix: DMatrix<f64>,
    pub eta: DVector<f64>,
    pub deta: DMatrix<f64>,
}

impl LagrangianFrame {
    pub fn k(&self) -> usize {
        self.w_x.ncols()
    }

    /// `W_j` and `Z_i` as `(x, y)` pairs, in that order.
    pub fn vectors(&self) -> Vec<(DVector<f64>, DVector<f64>)> {
        let m = self.w_x.nrows();
        let mut out: Vec<_> = (0..self.k())
            .map(|j| (self.w_x.column(j).into_owned(), self.w_y.column(j).into_owned()))
            .collect();
        out.extend((0..self.z_y.ncols()).map(|i| (DVector::zeros(m), self.z_y.column(i).into_owned())));
        out
    }

    /// Max `|ω(W_j, W_j')|`.
    pub fn ww_block(&self) -> f64 {
        let k = self.k();
        self.omega_matrix.view((0, 0), (k, k)).amax()
    }

    /// Max over the `W–Z` and `Z–Z` blocks.
    pub fn structural_block(&self) -> f64 {
        let k = self.k();
        let n = self.omega_matrix.nrows();
        let mut r = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i >= k || j >= k {
                    r = r.max(self.omega_matrix[(i, j)].abs());
                }
            }
        }
        r
    }
}

/// `η_j = −Σ K_iℓ Y^i ∂x^ℓ/∂u^j` and its exact exterior derivative
/// `dη_{jj'} = ∂_j η_{j'} − ∂_{j'} η_j` from third derivatives of `K`.
pub fn eta_and_deta(patch: &BaseLocusPatch, field: &TangentFieldY, node: usize) -> (DVector<f64>, DMatrix<f64>) {
    let k = patch.k();
    let h = &patch.hess[node];
    let d = &patch.dx_du[node];
    let y = &field.y[node];
    let hy = h * y;
    let eta = -(d.transpose() * &hy);
    // deta_du[(j, jp)] = ∂η_j/∂u^{jp}
    let mut deta_du = DMatrix::zeros(k, k);
    for jp in 0..k {
        let x_jp = d.column(jp).into_owned();
        let hy_jp = h * field.dy_du[node].column(jp);
        for j in 0..k {
            let x_j = d.column(j).into_owned();
            let x_jjp = patch.d2x[node][jp].column(j).into_owned();
            deta_du[(j, jp)] = -(patch.third[node].contract3(&x_jp, y, &x_j) + hy_jp.dot(&x_j) + hy.dot(&x_jjp));
        }
    }
    let deta = deta_du.transpose() - &deta_du;
    (eta, deta)
}

/// `dη` at an interior node by central differences of `η` over neighbours.
pub fn deta_finite_difference(
    patch: &BaseLocusPatch,
    field: &TangentFieldY,
    node: usize,
) -> Result<DMatrix<f64>, LiftError> {
    let k = patch.k();
    let mut deta_du = DMatrix::zeros(k, k);
    for jp in 0..k {
        let (Some(p), Some(q)) = (patch.grid.neighbor(node, jp, 1), patch.grid.neighbor(node, jp, -1)) else {
            return Err(LiftError::BoundaryNode(node));
        };
        let diff = (eta_and_deta(patch, field, p).0 - eta_and_deta(patch, field, q).0) / (2.0 * patch.grid.spacing(jp));
        deta_du.set_column(jp, &diff);
    }
    Ok(deta_du.transpose() - &deta_du)
}

pub fn build_frame(patch: &BaseLocusPatch, field: &TangentFieldY, node: usize) -> LagrangianFrame {
    let (m, k) = (patch.m(), patch.k());
    let z_y = patch.z_f64();
    let (eta, deta) = eta_and_deta(patch, field, node);
    let mut frame = LagrangianFrame {
        u: patch.grid.u(node),
        w_x: patch.dx_du[node].clone(),
        w_y: field.dy_du[node].clone(),
        z_y,
        omega_matrix: DMatrix::zeros(m, m),
        eta,
        deta,
    };
    let vecs = frame.vectors();
    let h = &patch.hess[node];
    for i in 0..m {
        for j in 0..m {
            frame.omega_matrix[(i, j)] = omega(h, &vecs[i].0, &vecs[i].1, &vecs[j].0, &vecs[j].1);
        }
    }
    debug_assert_eq!(frame.k(), k);
    frame
}

pub fn build_frames(patch: &BaseLocusPatch, field: &TangentFieldY) -> Vec<LagrangianFrame> {
    (0..patch.len()).map(|n| build_frame(patch, field, n)).collect()
}

/// Max `|ω(W_j, W_j')|` over the patch.
pub fn lagrangian_residual(frames: &[LagrangianFrame]) -> f64 {
    frames.iter().map(LagrangianFrame::ww_block).fold(0.0, f64::max)
}

/// Max over the `W–Z` and `Z–Z` blocks of `ω` over the patch.
pub fn structural_zero_residual(frames: &[LagrangianFrame]) -> f64 {
    frames.iter().map(LagrangianFrame::structural_block).fold(0.0, f64::max)
}

/// Max `|ω(W_j, W_j') − dη_{jj'}|`.
pub fn cross_identity_residual(frames: &[LagrangianFrame]) -> f64 {
    frames
        .iter()
        .map(|f| {
            let k = f.k();
            (f.omega_matrix.view((0, 0), (k, k)) - &f.deta).amax()
        })
        .fold(0.0, f64::max)
}

/// Max `|η_j + ⟨ξ_j, Y⟩|`.
pub fn eta_identity_residual(patch: &BaseLocusPatch, field: &TangentFieldY, frames: &[LagrangianFrame]) -> f64 {
    frames
        .iter()
        .enumerate()
        .map(|(n, f)| (&f.eta + field.xi_pairing(patch, n)).amax())
        .fold(0.0, f64::max)
}

/// Max `|ω(v, Jw) − g(v, w)|` over the coordinate basis at every node, with
/// `g` the Sasaki-type metric `H ⊕ H` on `T_x B ⊕ fibre`.
pub fn kahler_compatibility_residual(patch: &BaseLocusPatch) -> f64 {
    let m = patch.m();
    let mut r = 0.0f64;
    for h in &patch.hess {
        let basis: Vec<(DVector<f64>, DVector<f64>)> = (0..2 * m)
            .map(|i| {
                let mut vx = DVector::zeros(m);
                let mut vy = DVector::zeros(m);
                if i < m {
                    vx[i] = 1.0;
                } else {
                    vy[i - m] = 1.0;
                }
                (vx, vy)
            })
            .collect();
        for (vx, vy) in &basis {
            for (wx, wy) in &basis {
                let (jx, jy) = complex_structure(wx, wy);
                let lhs = omega(h, vx, vy, &jx, &jy);
                let g = vx.dot(&(h * wx)) + vy.dot(&(h * wy));
                r = r.max((lhs - g).abs());
            }
        }
    }
    r
}

/// `𝒲`, `𝒵`, `𝒳` and `det[𝒲 | 𝒵]` at one node.
#[derive(Debug, Clone)]
pub struct PhaseMatrices {
    /// `c^i_j = ∂x^i/∂u^j + i ∂Y^i/∂u^j`.
    pub w: DMatrix<C64>,
    pub z: IntMatrix,
    pub x: IntMatrix,
    pub det_wz: C64,
    /// Principal value of `arg det[𝒲 | 𝒵]`.
    pub phase: f64,
}

pub fn phase_matrices(patch: &BaseLocusPatch, field: &TangentFieldY, node: usize) -> PhaseMatrices {
    let w = complex_w(&patch.dx_du[node], &field.dy_du[node]);
    let z = patch.dual.z_matrix();
    let det_wz = augmented_det(&w, &intmat::to_f64(&z));
    PhaseMatrices {
        w,
        z,
        x: patch.subspace.xi.clone(),
        det_wz,
        phase: det_wz.arg(),
    }
}

pub fn complex_w(dx: &DMatrix<f64>, dy: &DMatrix<f64>) -> DMatrix<C64> {
    DMatrix::from_fn(dx.nrows(), dx.ncols(), |i, j| C64::new(dx[(i, j)], dy[(i, j)]))
}

/// `det[W | Z]` by complex LU.
pub fn augmented_det(w: &DMatrix<C64>, z: &DMatrix<f64>) -> C64 {
    augmented_matrix(w, z).determinant()
}

/// `[W | Z]` as a complex `m × m` matrix.
pub fn augmented_matrix(w: &DMatrix<C64>, z: &DMatrix<f64>) -> DMatrix<C64> {
    let (m, k) = (w.nrows(), w.ncols());
    DMatrix::from_fn(m, m, |i, j| {
        if j < k {
            w[(i, j)]
        } else {
            C64::new(z[(i, j - k)], 0.0)
        }
    })
}

/// Coefficient of `du^1 ∧ … ∧ du^k ∧ dt^{k+1} ∧ … ∧ dt^m` in the pull-back of
/// `Ω = dz^1 ∧ … ∧ dz^m`, `dz^i = Σ c^i_j du^j + i Σ ⟨e_i, ζ^j⟩ dt^j`,
/// expanded in the exterior algebra.
pub fn omega_pullback(pm: &PhaseMatrices) -> C64 {
    let (m, k) = (pm.w.nrows(), pm.w.ncols());
    let forms: Vec<Form> = (0..m)
        .map(|i| {
            let coeffs: Vec<C64> = (0..m)
                .map(|j| {
                    if j < k {
                        pm.w[(i, j)]
                    } else {
                        C64::new(0.0, pm.z[(i, j - k)] as f64)
                    }
                })
                .collect();
            Form::one_form(&coeffs)
        })
        .collect();
    wedge_top(&forms)
}

/// Phase field of `L(V, Y)` over a patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseField {
    pub principal: Vec<f64>,
    /// Nearest-branch unwrapping along the continuation order.
    pub unwrapped: Vec<f64>,
    pub det_wz: Vec<[f64; 2]>,
    /// Max circular jump between grid neighbours.
    pub max_jump: f64,
}

impl PhaseField {
    pub fn continuous(&self) -> bool {
        self.max_jump < FRAC_PI_2
    }
}

pub fn slag_phase(patch: &BaseLocusPatch, field: &TangentFieldY) -> Result<PhaseField, LiftError> {
    let (phases, degenerate) = phase_field(patch, field);
    match degenerate.first() {
        Some(&node) => Err(LiftError::DegenerateImmersion(node)),
        None => Ok(phases),
    }
}

/// Phase field together with the nodes where `det[𝒲 | 𝒵]` vanishes; the
/// principal phase recorded there is `arg 0 = 0`.
pub fn phase_field(patch: &BaseLocusPatch, field: &TangentFieldY) -> (PhaseField, Vec<usize>) {
    let n = patch.len();
    let mut principal = Vec::with_capacity(n);
    let mut dets = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for node in 0..n {
        let pm = phase_matrices(patch, field, node);
        if pm.det_wz.norm() < DEGENERATE_DET {
            degenerate.push(node);
        }
        principal.push(pm.phase);
        dets.push([pm.det_wz.re, pm.det_wz.im]);
    }
    (unwrap_phases(patch, principal, dets), degenerate)
}

pub(crate) fn unwrap_phases(patch: &BaseLocusPatch, principal: Vec<f64>, det_wz: Vec<[f64; 2]>) -> PhaseField {
    let n = principal.len();
    let mut unwrapped = principal.clone();
    for node in 0..n {
        if let Some(s) = patch.seeds[node] {
            unwrapped[node] = angle::nearest_branch(principal[node], unwrapped[s]);
        }
    }
    let mut max_jump = 0.0f64;
    for node in 0..n {
        for axis in 0..patch.k() {
            if let Some(nb) = patch.grid.neighbor(node, axis, 1) {
                max_jump = max_jump.max(angle::circular_distance(principal[node], principal[nb]));
            }
        }
    }
    PhaseField {
        principal,
        unwrapped,
        det_wz,
        max_jump,
    }
}

/// Per-node `|wrap(phase − θ₀)|`.
pub fn slag_node_residuals(phases: &PhaseField, theta0: f64) -> Vec<f64> {
    phases
        .principal
        .iter()
        .map(|p| angle::circular_distance(*p, theta0))
        .collect()
}

pub fn slag_residual(phases: &PhaseField, theta0: f64) -> f64 {
    slag_node_residuals(phases, theta0).into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atlas::{BoxDomain, Chart};
    use crate::field::FieldSpec;
    use crate::locus::{build_patch, NewtonOptions, ParamGrid};
    use crate::potential::Expression;
    use crate::section::RationalAffineSubspace;
    use std::f64::consts::FRAC_PI_4;

    fn line_patch() -> BaseLocusPatch {
        let c = Chart::new(
            "U",
            BoxDomain::from_bounds(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            Expression::in_x("(x1^2 + x2^2)/2", 2).unwrap(),
        )
        .unwrap();
        let s = RationalAffineSubspace::new(
            IntMatrix::from_column_slice(2, 1, &[1, 0]),
            IntMatrix::from_column_slice(2, 1, &[0, 1]),
            DVector::from_vec(vec![0.0, 0.5]),
        )
        .unwrap();
        let g = ParamGrid::uniform(&[[0.1, 0.9]], 9).unwrap();
        build_patch(&c, &s, &g, &DVector::from_vec(vec![0.5, 0.5]), &c.domain, NewtonOptions::default()).unwrap()
    }

    #[test]
    fn gradient_field_frame_on_line() {
        let p = line_patch();
        let y = TangentFieldY::evaluate(&FieldSpec::Gradient(Expression::in_u("u1^2/2", 1).unwrap()), &p).unwrap();
        let f = build_frame(&p, &y, 3);
        assert_eq!(f.w_x.as_slice(), &[1.0, 0.0]);
        assert_eq!(f.w_y.as_slice(), &[1.0, 0.0]);
        assert_eq!(f.z_y.as_slice(), &[0.0, 1.0]);
        assert!((f.eta[0] + p.grid.u(3)[0]).abs() < 1e-15);
        let phases = slag_phase(&p, &y).unwrap();
        assert!(slag_residual(&phases, FRAC_PI_4) < 1e-15);
    }

    #[test]
    fn zero_field_has_real_determinant() {
        let p = line_patch();
        let y = TangentFieldY::zero(&p);
        let frames = build_frames(&p, &y);
        assert_eq!(lagrangian_residual(&frames), 0.0);
        assert!(frames.iter().all(|f| f.omega_matrix.amax() == 0.0));
        let phases = slag_phase(&p, &y).unwrap();
        assert!(phases.principal.iter().all(|ph| *ph == 0.0 || *ph == std::f64::consts::PI));
    }

    #[test]
    fn pullback_carries_power_of_i() {
        let p = line_patch();
        let y = TangentFieldY::evaluate(&FieldSpec::Gradient(Expression::in_u("u1^3", 1).unwrap()), &p).unwrap();
        for n in 0..p.len() {
            let pm = phase_matrices(&p, &y, n);
            assert!((omega_pullback(&pm) - pm.det_wz * C64::new(0.0, 1.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn kahler_compatibility_on_line() {
        assert!(kahler_compatibility_residual(&line_patch()) < 1e-15);
    }
}
