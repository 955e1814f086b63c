//! The `W(B)` side: holomorphic coordinates `w = u + iv` on `C(V)`, the
//! connection `D^Y = d + i Σ Y_j dỹ_j`, its curvature, the restricted Kähler
//! form `ω̃`, and the deformed Hermitian Yang–Mills phase of `B(u) = ω̃ + iF`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angle;
use crate::atlas::{min_eigenvalue, TransitionMap};
use crate::exterior::{Form, C64};
use crate::field::TangentFieldY;
use crate::intmat;
use crate::lift;
use crate::locus::BaseLocusPatch;

/// Fixed fibre points for the `v`-independence spot check.
pub const V_SPOT_SEEDS: [u64; 3] = [1, 2, 3];

/// Coordinates and curvature data on `C(V)` at `(u, v)`.
#[derive(Debug, Clone)]
pub struct MirrorFrame {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    /// `x̃(u) = Σ u^i ξ_i + a`.
    pub xtilde: DVector<f64>,
    /// `ỹ(v) = Σ v^i ξ_i`.
    pub ytilde: DVector<f64>,
    /// `∂ỹ/∂v`, columns `ξ_ℓ`.
    pub ytilde_jac: DMatrix<f64>,
    /// Max entry of `Hess K · ∂x/∂u − Xi`: the patch-side `∂x̃/∂u` against `Xi`.
    pub cr_residual: f64,
    /// `F = i Σ F_iℓ du^i ∧ dv^ℓ`, `F_iℓ = ∂⟨ξ_ℓ, Y⟩/∂u^i`.
    pub f_coeffs: DMatrix<f64>,
    /// `(F_iℓ − F_ℓi)/2`, zero iff `D^Y` is integrable.
    pub f02: DMatrix<f64>,
    /// `ω̃|_{C(V)}` on `du^i ∧ dv^ℓ` from the canonical form `Σ dx_i ∧ dỹ_i`.
    pub omega_tilde: DMatrix<f64>,
    /// Same from the Kähler expression `Σ K^{ij} dx̃_i ∧ dỹ_j`.
    pub omega_tilde_kahler: DMatrix<f64>,
    /// `b_ij = Σ_ℓ ⟨ξ_j, e^ℓ⟩ c^ℓ_i`.
    pub bu: DMatrix<C64>,
    pub det_bu: C64,
}

pub fn mirror_frame(patch: &BaseLocusPatch, field: &TangentFieldY, node: usize, v: &DVector<f64>) -> MirrorFrame {
    let xi = patch.xi_f64();
    let u = patch.grid.u(node);
    let d = &patch.dx_du[node];
    let h = &patch.hess[node];
    let f_coeffs = field.dy_du[node].transpose() * &xi;
    let f02 = (&f_coeffs - f_coeffs.transpose()) * 0.5;
    let omega_tilde = d.transpose() * &xi;
    let h_inv = h.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(h.nrows(), h.ncols(), f64::NAN));
    let omega_tilde_kahler = xi.transpose() * h_inv * &xi;
    let w = lift::complex_w(d, &field.dy_du[node]);
    let xi_c = xi.map(|v| C64::new(v, 0.0));
    let bu = w.transpose() * xi_c;
    let det_bu = bu.determinant();
    MirrorFrame {
        xtilde: patch.subspace.point(&u),
        ytilde: &xi * v,
        ytilde_jac: xi.clone(),
        cr_residual: (h * d - &xi).amax(),
        u,
        v: v.clone(),
        f_coeffs,
        f02,
        omega_tilde,
        omega_tilde_kahler,
        bu,
        det_bu,
    }
}

/// Deterministic fibre sample in `[0, 1)^k` (additive recurrence).
pub fn fibre_point(k: usize, seed: u64) -> DVector<f64> {
    let golden = 0.618_033_988_749_894_9_f64;
    DVector::from_fn(k, |i, _| ((seed as f64) * golden * (i as f64 + 1.0) + 0.5 * i as f64).fract())
}

/// `‖F^{(0,2)}‖` per node: max `|F02_iℓ|`.
pub fn f02_node_norms(frames: &[MirrorFrame]) -> Vec<f64> {
    frames.iter().map(|f| f.f02.amax()).collect()
}

/// Max `|(F − Fᵀ) + dη|`: the antisymmetrised curvature equals `−dη`.
pub fn mirror_cross_residual(mirror: &[MirrorFrame], lag: &[lift::LagrangianFrame]) -> f64 {
    mirror
        .iter()
        .zip(lag)
        .map(|(mf, lf)| ((&mf.f_coeffs - mf.f_coeffs.transpose()) + &lf.deta).amax())
        .fold(0.0, f64::max)
}

/// Max `|ω̃_canonical − ω̃_Kähler|` and the min eigenvalue of `ω̃` over frames.
pub fn omega_tilde_checks(frames: &[MirrorFrame]) -> (f64, f64) {
    let mut gap = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for f in frames {
        gap = gap.max((&f.omega_tilde - &f.omega_tilde_kahler).amax());
        let sym = (&f.omega_tilde + f.omega_tilde.transpose()) * 0.5;
        min_eig = min_eig.min(min_eigenvalue(&sym));
    }
    (gap, min_eig)
}

/// Max difference of curvature and `B(u)` between `v = 0` and three fibre
/// samples.
pub fn v_independence_residual(patch: &BaseLocusPatch, field: &TangentFieldY) -> f64 {
    let k = patch.k();
    let mut r = 0.0f64;
    for node in 0..patch.len() {
        let base = mirror_frame(patch, field, node, &DVector::zeros(k));
        for seed in V_SPOT_SEEDS {
            let f = mirror_frame(patch, field, node, &fibre_point(k, seed));
            r = r
                .max((&f.f_coeffs - &base.f_coeffs).amax())
                .max((&f.bu - &base.bu).map(|c| c.norm()).max())
                .max((&f.xtilde - &base.xtilde).amax());
        }
    }
    r
}

/// `det[𝒳 | 𝒵] / det(𝒵ᵀ𝒵)`, exact integers converted once.
pub fn detbij_constant(patch: &BaseLocusPatch) -> f64 {
    let z = patch.dual.z_matrix();
    let xz = intmat::hstack(&patch.subspace.xi, &z);
    let ztz = z.transpose() * &z;
    let num = intmat::det(&xz).expect("square integer frame") as f64;
    let den = intmat::det(&ztz).expect("square Gram matrix") as f64;
    num / den
}

/// Top coefficient of `(Σ M_iℓ du^i ∧ dv^ℓ)^k` divided by `k!`, with
/// generators ordered `(du^1, dv^1, …, du^k, dv^k)`.
pub fn exterior_power_top(m: &DMatrix<C64>) -> C64 {
    let k = m.nrows();
    let mut two = Form::zero(2 * k);
    for i in 0..k {
        for l in 0..k {
            two.add_wedge2(2 * i, 2 * l + 1, m[(i, l)]);
        }
    }
    let mut acc = Form::scalar(2 * k, C64::new(1.0, 0.0));
    for _ in 0..k {
        acc = acc.wedge(&two);
    }
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    acc.top() / fact
}

/// Largest `k` for which the exterior-power oracle is evaluated.
pub const EXTERIOR_ORACLE_MAX_K: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DhymReport {
    /// Max circular distance of `arg(det B / c)` from `θ₀`, `c` the real
    /// constant of the factorisation.
    pub residual: f64,
    pub node_residuals: Vec<f64>,
    /// Max `|det B − c · det[𝒲 | 𝒵]|`.
    pub factorization_gap: f64,
    /// Max circular distance between `arg det B` and `arg det[𝒲 | 𝒵]` modulo `π`.
    pub phase_gap_mod_pi: f64,
    /// Max `|(ω̃ + F)^k / k! − det B|` from the exterior expansion.
    pub oracle_gap: Option<f64>,
    /// Max `|Im(e^{−iθ₀} (ω̃ + F)^k)| / |(ω̃ + F)^k|`.
    pub im_residual: f64,
    pub constant: f64,
}

pub fn dhym_residual(patch: &BaseLocusPatch, frames: &[MirrorFrame], field: &TangentFieldY, theta0: f64) -> DhymReport {
    let c = detbij_constant(patch);
    let z = patch.z_f64();
    let rot = C64::from_polar(1.0, -theta0);
    let mut rep = DhymReport {
        residual: 0.0,
        node_residuals: Vec::with_capacity(frames.len()),
        factorization_gap: 0.0,
        phase_gap_mod_pi: 0.0,
        oracle_gap: (patch.k() <= EXTERIOR_ORACLE_MAX_K).then_some(0.0),
        im_residual: 0.0,
        constant: c,
    };
    for (node, f) in frames.iter().enumerate() {
        let det_wz = lift::augmented_det(&lift::complex_w(&patch.dx_du[node], &field.dy_du[node]), &z);
        let phase = (f.det_bu * c.signum()).arg();
        let r = angle::circular_distance(phase, theta0);
        rep.node_residuals.push(r);
        rep.residual = rep.residual.max(r);
        rep.factorization_gap = rep.factorization_gap.max((f.det_bu - det_wz * c).norm());
        let d = angle::wrap(f.det_bu.arg() - det_wz.arg()).abs();
        rep.phase_gap_mod_pi = rep.phase_gap_mod_pi.max(d.min(std::f64::consts::PI - d));
        if let Some(gap) = rep.oracle_gap.as_mut() {
            let top = exterior_power_top(&f.bu);
            *gap = gap.max((top - f.det_bu).norm());
        }
        let signed = f.det_bu * c.signum();
        if signed.norm() > 0.0 {
            rep.im_residual = rep.im_residual.max((rot * signed).im.abs() / signed.norm());
        }
    }
    rep
}

/// Evidence for `D^Y = d` on `C(V)` and for `Y` normal to `B(V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialityReport {
    /// Max `|⟨ξ_ℓ, Y⟩|`: the connection form on `C(V)` test vectors.
    pub connection: f64,
    /// Max `|g(∂x/∂u^j, Y)|`.
    pub orthogonality: f64,
    /// Max distance of `⟨ξ_ℓ, Y⟩` from `ℤ`: zero iff the fibre of `L(V, Y)`
    /// coincides with that of `L(V, 0)` modulo the lattice.
    pub lift_coset_gap: f64,
    pub trivial: bool,
    pub normal: bool,
}

pub fn triviality_check(patch: &BaseLocusPatch, field: &TangentFieldY, tol: f64) -> TrivialityReport {
    let mut connection = 0.0f64;
    let mut orthogonality = 0.0f64;
    let mut coset = 0.0f64;
    for node in 0..patch.len() {
        let pairing = field.xi_pairing(patch, node);
        connection = connection.max(pairing.amax());
        coset = coset.max(pairing.iter().map(|p| (p - p.round()).abs()).fold(0.0, f64::max));
        let g = patch.dx_du[node].transpose() * &patch.hess[node] * &field.y[node];
        orthogonality = orthogonality.max(g.amax());
    }
    TrivialityReport {
        connection,
        orthogonality,
        lift_coset_gap: coset,
        trivial: connection <= tol,
        normal: orthogonality <= tol,
    }
}

/// Max `|Σ Y^λ_j δỹ^λ_j − Σ Y^ν_j δỹ^ν_j|` over samples and unit test
/// covectors, with `δỹ^ν = A⁻ᵀ δỹ^λ`. `y_to` defaults to `A Y^λ`.
pub fn connection_transport_check(
    t: &TransitionMap,
    y_from: &[DVector<f64>],
    y_to: Option<&[DVector<f64>]>,
) -> Result<f64, intmat::IntMatrixError> {
    let a = intmat::to_f64(&t.a);
    let a_inv_t = intmat::to_f64(&intmat::inverse_unimodular(&t.a)?).transpose();
    let m = a.nrows();
    let mut r = 0.0f64;
    for (s, y) in y_from.iter().enumerate() {
        let y_nu = match y_to {
            Some(v) => v[s].clone(),
            None => &a * y,
        };
        for i in 0..m {
            let mut dy = DVector::zeros(m);
            dy[i] = 1.0;
            let lhs = y.dot(&dy);
            let rhs = y_nu.dot(&(&a_inv_t * &dy));
            r = r.max((lhs - rhs).abs());
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intmat::IntMatrix;

    #[test]
    fn exterior_power_matches_det_3x3() {
        let m = DMatrix::from_fn(3, 3, |i, j| C64::new((i * 3 + j) as f64 * 0.3 - 1.0, (i as f64) - (j as f64) * 0.5));
        let m = &m + DMatrix::from_diagonal_element(3, 3, C64::new(2.0, 0.0));
        assert!((exterior_power_top(&m) - m.determinant()).norm() < 1e-12);
    }

    #[test]
    fn fibre_points_lie_in_unit_cube() {
        for s in V_SPOT_SEEDS {
            let p = fibre_point(3, s);
            assert!(p.iter().all(|v| (0.0..1.0).contains(v)));
        }
        assert_ne!(fibre_point(2, 1), fibre_point(2, 2));
    }

    #[test]
    fn untransformed_field_mismatch() {
        let t = TransitionMap {
            from: "a".into(),
            to: "b".into(),
            a: IntMatrix::from_row_slice(2, 2, &[1, 1, 0, 1]),
            c: DVector::zeros(2),
            b: DVector::zeros(2),
            overlap: crate::atlas::BoxDomain::from_bounds(&[[0.0, 1.0], [0.0, 1.0]]).unwrap(),
            b_computed: false,
        };
        let y = vec![DVector::from_vec(vec![0.3, -0.7])];
        assert!(connection_transport_check(&t, &y, None).unwrap() < 1e-15);
        // A⁻ᵀ e_1 = (1, −1), so the un-transported pairing is off by |y_2|
        let bad = connection_transport_check(&t, &y, Some(&y)).unwrap();
        assert!((bad - 0.7).abs() < 1e-15);
    }
}
