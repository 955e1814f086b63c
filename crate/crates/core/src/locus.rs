//! The base locus `B(V)`: level residuals, Newton inversion of the moment
//! map, natural parametrizations sampled on parameter grids, and overlap
//! gluing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, BoxDomain, Chart};
use crate::intmat;
use crate::potential::ThirdTensor;
use crate::section::{DualFrame, RationalAffineSubspace, SectionError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LocusError {
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error("Newton did not converge after {iterations} iterations (residual {residual:e}, last iterate {last:?})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },
    #[error("Newton iterate left the chart box at {last:?}")]
    LeftDomain { last: Vec<f64> },
    #[error("singular Hessian during Newton inversion")]
    SingularHessian,
    #[error("node {node}: {source}")]
    Node {
        node: usize,
        #[source]
        source: Box<LocusError>,
    },
    #[error("grid: {0}")]
    Grid(String),
    #[error("sample {point:?} lies outside the overlap")]
    OutsideOverlap { point: Vec<f64> },
}

/// Damped Newton parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-12,
            max_iter: 50,
            max_halvings: 30,
        }
    }
}

/// `f_j = ⟨μ(x) − a, ζ^j⟩`.
pub fn level_residuals(
    chart: &Chart,
    s: &RationalAffineSubspace,
    dual: &DualFrame,
    x: &DVector<f64>,
) -> Result<DVector<f64>, LocusError> {
    let mu = chart.legendre_coords(x)?;
    Ok(intmat::to_f64(&dual.zeta_dual) * (mu - &s.offset))
}

/// Solve `∇K(x) = target` by damped Newton inside `domain`.
pub fn invert_gradient(
    chart: &Chart,
    target: &DVector<f64>,
    x0: &DVector<f64>,
    domain: &BoxDomain,
    opts: NewtonOptions,
) -> Result<DVector<f64>, LocusError> {
    if !domain.contains(x0.as_slice()) {
        return Err(LocusError::LeftDomain {
            last: x0.iter().copied().collect(),
        });
    }
    let mut x = x0.clone();
    let (g, mut h) = chart.grad_hess(&x)?;
    let mut r = &g - target;
    let mut rn = r.norm();
    for it in 0..opts.max_iter {
        if rn <= opts.tol {
            return Ok(x);
        }
        let step = h.clone().lu().solve(&r).ok_or(LocusError::SingularHessian)?;
        let mut t = 1.0;
        let mut accepted = false;
        let mut last_inside = None;
        for _ in 0..=opts.max_halvings {
            let trial = &x - &step * t;
            if domain.contains(trial.as_slice()) {
                last_inside = Some(trial.clone());
                let (g_t, h_t) = chart.grad_hess(&trial)?;
                let r_t = &g_t - target;
                let rn_t = r_t.norm();
                if rn_t < rn {
                    x = trial;
                    (h, r, rn) = (h_t, r_t, rn_t);
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if last_inside.is_none() {
                return Err(LocusError::LeftDomain {
                    last: (&x - &step).iter().copied().collect(),
                });
            }
            return Err(LocusError::NoConvergence {
                iterations: it + 1,
                residual: rn,
                last: x.iter().copied().collect(),
            });
        }
    }
    if rn <= opts.tol {
        return Ok(x);
    }
    Err(LocusError::NoConvergence {
        iterations: opts.max_iter,
        residual: rn,
        last: x.iter().copied().collect(),
    })
}

/// `x(u) = μ⁻¹(Σ u^i ξ_i + a)`.
pub fn natural_param(
    chart: &Chart,
    s: &RationalAffineSubspace,
    u: &DVector<f64>,
    x0: &DVector<f64>,
    domain: &BoxDomain,
    opts: NewtonOptions,
) -> Result<DVector<f64>, LocusError> {
    invert_gradient(chart, &s.point(u), x0, domain, opts)
}

/// Rectangular parameter grid, nodes in lexicographic order with the first
/// axis slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    lo: Vec<f64>,
    hi: Vec<f64>,
    n: Vec<usize>,
}

impl ParamGrid {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, n: Vec<usize>) -> Result<Self, LocusError> {
        if lo.len() != hi.len() || lo.len() != n.len() {
            return Err(LocusError::Grid("bounds and resolution have different lengths".into()));
        }
        for i in 0..lo.len() {
            if n[i] < 2 {
                return Err(LocusError::Grid(format!("axis {i} needs at least 2 nodes")));
            }
            if !(hi[i] > lo[i]) {
                return Err(LocusError::Grid(format!("axis {i} has empty range")));
            }
        }
        Ok(ParamGrid { lo, hi, n })
    }

    /// Same resolution on every axis.
    pub fn uniform(bounds: &[[f64; 2]], per_axis: usize) -> Result<Self, LocusError> {
        Self::new(
            bounds.iter().map(|b| b[0]).collect(),
            bounds.iter().map(|b| b[1]).collect(),
            vec![per_axis; bounds.len()],
        )
    }

    pub fn k(&self) -> usize {
        self.n.len()
    }

    pub fn len(&self) -> usize {
        self.n.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.n
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.hi[axis] - self.lo[axis]) / (self.n[axis] - 1) as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.k()];
        for axis in (0..self.k()).rev() {
            idx[axis] = flat % self.n[axis];
            flat /= self.n[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.n).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn u(&self, flat: usize) -> DVector<f64> {
        let idx = self.multi_index(flat);
        DVector::from_fn(self.k(), |a, _| self.lo[a] + idx[a] as f64 * self.spacing(a))
    }

    pub fn is_boundary(&self, flat: usize) -> bool {
        self.multi_index(flat)
            .iter()
            .zip(&self.n)
            .any(|(&i, &n)| i == 0 || i + 1 == n)
    }

    /// Neighbour one step along `axis` in direction `dir` (±1).
    pub fn neighbor(&self, flat: usize, axis: usize, dir: isize) -> Option<usize> {
        let mut idx = self.multi_index(flat);
        let moved = idx[axis] as isize + dir;
        if moved < 0 || moved >= self.n[axis] as isize {
            return None;
        }
        idx[axis] = moved as usize;
        Some(self.flat_index(&idx))
    }

    /// Already-visited neighbour used to seed continuation: the last axis
    /// with a nonzero index, decremented.
    pub fn seed_neighbor(&self, flat: usize) -> Option<usize> {
        let idx = self.multi_index(flat);
        let axis = (0..self.k()).rev().find(|&a| idx[a] > 0)?;
        self.neighbor(flat, axis, -1)
    }
}

/// Natural parametrization of `B(V)` sampled on a grid in one chart.
#[derive(Debug, Clone)]
pub struct BaseLocusPatch {
    pub chart_id: String,
    pub subspace: RationalAffineSubspace,
    pub dual: DualFrame,
    pub grid: ParamGrid,
    pub x: Vec<DVector<f64>>,
    /// `∂x/∂u`, `m × k`.
    pub dx_du: Vec<DMatrix<f64>>,
    /// `d2x[node][i]` is `∂(∂x/∂u)/∂u^i`, so column `j` holds `∂²x/∂u^i∂u^j`.
    pub d2x: Vec<Vec<DMatrix<f64>>>,
    pub hess: Vec<DMatrix<f64>>,
    pub third: Vec<ThirdTensor>,
    /// Seed node used by continuation (`None` for the first node).
    pub seeds: Vec<Option<usize>>,
    pub diagnostics: PatchDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchDiagnostics {
    /// Max `|⟨μ(x(u)) − a, ζ^j⟩|`.
    pub level_residual: f64,
    /// Max entry of `Hess K · ∂x/∂u − Xi`.
    pub implicit_residual: f64,
    /// Max `‖∇K(x(u)) − (Xi u + a)‖`.
    pub roundtrip_residual: f64,
}

impl BaseLocusPatch {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn m(&self) -> usize {
        self.subspace.m()
    }

    pub fn k(&self) -> usize {
        self.subspace.k()
    }

    pub fn xi_f64(&self) -> DMatrix<f64> {
        intmat::to_f64(&self.subspace.xi)
    }

    /// `𝒵` as reals: columns `ζ^j`.
    pub fn z_f64(&self) -> DMatrix<f64> {
        intmat::to_f64(&self.dual.z_matrix())
    }
}

/// Sample `B(V)` on `grid` by continuation from `x0`, keeping iterates in `domain`.
pub fn build_patch(
    chart: &Chart,
    s: &RationalAffineSubspace,
    grid: &ParamGrid,
    x0: &DVector<f64>,
    domain: &BoxDomain,
    opts: NewtonOptions,
) -> Result<BaseLocusPatch, LocusError> {
    let dual = s.dual_basis()?;
    if grid.k() != s.k() {
        return Err(LocusError::Grid(format!(
            "grid has {} axes but the subspace has dimension {}",
            grid.k(),
            s.k()
        )));
    }
    if x0.len() != s.m() {
        return Err(LocusError::Grid("initial guess has the wrong dimension".into()));
    }
    let xi = intmat::to_f64(&s.xi);
    let (m, k) = (s.m(), s.k());
    let n = grid.len();
    let mut patch = BaseLocusPatch {
        chart_id: chart.id.clone(),
        subspace: s.clone(),
        dual,
        grid: grid.clone(),
        x: Vec::with_capacity(n),
        dx_du: Vec::with_capacity(n),
        d2x: Vec::with_capacity(n),
        hess: Vec::with_capacity(n),
        third: Vec::with_capacity(n),
        seeds: Vec::with_capacity(n),
        diagnostics: PatchDiagnostics {
            level_residual: 0.0,
            implicit_residual: 0.0,
            roundtrip_residual: 0.0,
        },
    };
    let zeta_dual = intmat::to_f64(&patch.dual.zeta_dual);
    for node in 0..n {
        let wrap = |e: LocusError| LocusError::Node {
            node,
            source: Box::new(e),
        };
        let u = grid.u(node);
        let seed = grid.seed_neighbor(node);
        let guess = match seed {
            None => x0.clone(),
            Some(nb) => {
                let predicted = &patch.x[nb] + &patch.dx_du[nb] * (&u - grid.u(nb));
                if domain.contains(predicted.as_slice()) {
                    predicted
                } else {
                    patch.x[nb].clone()
                }
            }
        };
        let x = natural_param(chart, s, &u, &guess, domain, opts).map_err(wrap)?;
        let jet = chart.jet3(&x).map_err(|e| wrap(e.into()))?;
        let chol = jet.hessian.clone().cholesky().ok_or_else(|| {
            wrap(LocusError::Atlas(AtlasError::DegenerateMetric {
                chart: chart.id.clone(),
                min_eigenvalue: crate::atlas::min_eigenvalue(&jet.hessian),
            }))
        })?;
        let dx = chol.solve(&xi);
        let d2: Vec<DMatrix<f64>> = (0..k)
            .map(|i| {
                let mut rhs = DMatrix::zeros(m, k);
                for j in 0..k {
                    rhs.set_column(j, &jet.third.contract2(&dx.column(j).into_owned(), &dx.column(i).into_owned()));
                }
                -chol.solve(&rhs)
            })
            .collect();
        let target = s.point(&u);
        let d = &mut patch.diagnostics;
        d.roundtrip_residual = d.roundtrip_residual.max((&jet.gradient - &target).norm());
        d.level_residual = d
            .level_residual
            .max((&zeta_dual * (&jet.gradient - &s.offset)).amax());
        d.implicit_residual = d.implicit_residual.max((&jet.hessian * &dx - &xi).amax());
        patch.x.push(x);
        patch.dx_du.push(dx);
        patch.d2x.push(d2);
        patch.hess.push(jet.hessian);
        patch.third.push(jet.third);
        patch.seeds.push(seed);
    }
    Ok(patch)
}

/// Residual of the Legendre involution at `x`: `∇K̃(∇K(x)) = x` and
/// `K̃̃ = K`, with `∇K̃` from Richardson-extrapolated central differences of
/// `K̃(y) = ⟨y, x(y)⟩ − K(x(y))` and `x(y)` from Newton inversion.
pub fn legendre_involution_residual(
    chart: &Chart,
    x: &DVector<f64>,
    domain: &BoxDomain,
    h: f64,
) -> Result<f64, LocusError> {
    let y = chart.legendre_coords(x)?;
    let opts = NewtonOptions::default();
    let dual_at = |yy: &DVector<f64>| -> Result<f64, LocusError> {
        let xx = invert_gradient(chart, yy, x, domain, opts)?;
        Ok(yy.dot(&xx) - chart.value(&xx)?)
    };
    let kt = dual_at(&y)?;
    let m = x.len();
    let mut grad = DVector::zeros(m);
    for i in 0..m {
        let central = |step: f64| -> Result<f64, LocusError> {
            let mut p = y.clone();
            let mut q = y.clone();
            p[i] += step;
            q[i] -= step;
            Ok((dual_at(&p)? - dual_at(&q)?) / (2.0 * step))
        };
        let (d1, d2) = (central(h)?, central(h / 2.0)?);
        grad[i] = (4.0 * d2 - d1) / 3.0;
    }
    let double_dual = y.dot(&grad) - kt;
    let k = chart.value(x)?;
    Ok((grad - x).amax().max((double_dual - k).abs()))
}

/// Overlap gluing of `U_from(V)` and `U_to(V)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlueReport {
    pub from: String,
    pub to: String,
    /// Max level residual in `to` at transported points of `U_from(V)`.
    pub forward: f64,
    /// Max level residual in `from` at transported points of `U_to(V)`.
    pub backward: f64,
    /// Max `‖x^to(u^to) − (A x^from(u^from) + c)‖` for matching parameters.
    pub transport: f64,
    pub samples: usize,
}

impl GlueReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.forward <= tol && self.backward <= tol && self.transport <= tol.max(1e-9)
    }
}

/// Check both directions of `U_from(V) = U_to(V)` on the overlap of
/// `transition` (an index into the atlas transitions), sampling `U_from(V)`
/// on `u_from` and `U_to(V)` on `u_to`.
pub fn glue_check(
    atlas: &Atlas,
    transition: usize,
    s_from: &RationalAffineSubspace,
    s_to: &RationalAffineSubspace,
    u_from: &ParamGrid,
    u_to: &ParamGrid,
    margin: f64,
) -> Result<GlueReport, LocusError> {
    let t = atlas
        .transitions()
        .get(transition)
        .ok_or_else(|| LocusError::Grid(format!("no transition with index {transition}")))?;
    let from = atlas.chart(&t.from)?;
    let to = atlas.chart(&t.to)?;
    let from_box = from.domain.shrink(margin)?;
    let to_box = to.domain.shrink(margin)?;
    let opts = NewtonOptions::default();
    let d_from = s_from.dual_basis()?;
    let d_to = s_to.dual_basis()?;

    let mut forward = 0.0f64;
    let mut transport = 0.0f64;
    let xi_to_dual = intmat::to_f64(&d_to.xi_dual);
    let a_dual_inv = intmat::to_f64(&intmat::inverse_unimodular(&t.a).map_err(SectionError::from)?).transpose();
    for p in 0..u_from.len() {
        let u = u_from.u(p);
        let x = natural_param(from, s_from, &u, &from_box.center(), &from_box, opts)?;
        if !t.overlap.contains(x.as_slice()) {
            return Err(LocusError::OutsideOverlap {
                point: x.iter().copied().collect(),
            });
        }
        let y = t.apply(&x);
        forward = forward.max(level_residuals(to, s_to, &d_to, &y)?.amax());
        // matching parameter in `to`: μ_to = A⁻ᵀ(μ_from − b)
        let mu_to = &a_dual_inv * (s_from.point(&u) - &t.b);
        let u_t = &xi_to_dual * (&mu_to - &s_to.offset);
        let x_t = natural_param(to, s_to, &u_t, &y, &to_box, opts)?;
        transport = transport.max((x_t - &y).amax());
    }

    let mut backward = 0.0f64;
    for p in 0..u_to.len() {
        let u = u_to.u(p);
        let y = natural_param(to, s_to, &u, &to_box.center(), &to_box, opts)?;
        let x = t.apply_inverse(&y)?;
        if !t.overlap.contains(x.as_slice()) {
            return Err(LocusError::OutsideOverlap {
                point: x.iter().copied().collect(),
            });
        }
        backward = backward.max(level_residuals(from, s_from, &d_from, &x)?.amax());
    }

    Ok(GlueReport {
        from: t.from.clone(),
        to: t.to.clone(),
        forward,
        backward,
        transport,
        samples: u_from.len() + u_to.len(),
    })
}
