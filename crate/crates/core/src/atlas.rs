//! Tropical manifolds `(B, 𝒟, K)`: box charts carrying convex potentials,
//! integer-affine transitions, and the derived Hessian/Legendre data.
//!
//! Transition convention: a [`TransitionMap`] from chart `λ` to chart `ν`
//! stores the coordinate change `x^ν = A x^λ + c` with `A ∈ GL(ℤ^m)`, and
//! `b = ∇_{x^λ}(K_λ − K_ν ∘ ψ)`. The Legendre coordinates then transform by
//! the transpose, `μ_λ = Aᵀ μ_ν + b`; [`TransitionMap::dual_linear`] is the
//! matrix acting on `F(k, m)`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intmat::{self, IntMatrix};
use crate::potential::{EvalError, Expression, Jet3};

/// Smallest Hessian eigenvalue accepted as positive definite.
pub const SPD_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AtlasError {
    #[error("box has non-positive extent on axis {axis}")]
    EmptyBox { axis: usize },
    #[error("box dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("point {point:?} lies outside chart `{chart}`")]
    OutsideDomain { chart: String, point: Vec<f64> },
    #[error("unknown chart id `{0}`")]
    UnknownChart(String),
    #[error("duplicate chart id `{0}`")]
    DuplicateChart(String),
    #[error("potential of chart `{chart}` is defined over {got} variables, chart has dimension {expected}")]
    PotentialArity {
        chart: String,
        expected: usize,
        got: usize,
    },
    #[error("degenerate metric in chart `{chart}`: min eigenvalue {min_eigenvalue:e}")]
    DegenerateMetric { chart: String, min_eigenvalue: f64 },
    #[error("transition {from} -> {to}: {msg}")]
    Transition {
        from: String,
        to: String,
        msg: String,
    },
    #[error("potential evaluation failed in chart `{chart}`: {source}")]
    Eval {
        chart: String,
        #[source]
        source: EvalError,
    },
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, AtlasError> {
        if lo.len() != hi.len() {
            return Err(AtlasError::Dimension {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        if let Some(axis) = (0..lo.len()).find(|&i| hi[i] <= lo[i] || !(hi[i] - lo[i]).is_finite()) {
            return Err(AtlasError::EmptyBox { axis });
        }
        Ok(BoxDomain { lo, hi })
    }

    pub fn from_bounds(bounds: &[[f64; 2]]) -> Result<Self, AtlasError> {
        Self::new(
            bounds.iter().map(|b| b[0]).collect(),
            bounds.iter().map(|b| b[1]).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(i, v)| *v >= self.lo[i] && *v <= self.hi[i])
    }

    pub fn center(&self) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| 0.5 * (self.lo[i] + self.hi[i]))
    }

    /// Shrink every face inward by `margin`.
    pub fn shrink(&self, margin: f64) -> Result<Self, AtlasError> {
        Self::new(
            self.lo.iter().map(|v| v + margin).collect(),
            self.hi.iter().map(|v| v - margin).collect(),
        )
    }

    /// Tensor grid with `per_axis` points per axis (endpoints included).
    pub fn grid(&self, per_axis: usize) -> Vec<DVector<f64>> {
        let per_axis = per_axis.max(2);
        let m = self.dim();
        let total = per_axis.pow(m as u32);
        (0..total)
            .map(|mut idx| {
                let mut p = DVector::zeros(m);
                for axis in (0..m).rev() {
                    let i = idx % per_axis;
                    idx /= per_axis;
                    let t = i as f64 / (per_axis - 1) as f64;
                    p[axis] = self.lo[axis] + t * (self.hi[axis] - self.lo[axis]);
                }
                p
            })
            .collect()
    }
}

/// A tropical chart `(U_λ, ψ_λ)` with its potential `K_λ`.
#[derive(Debug, Clone)]
pub struct Chart {
    pub id: String,
    pub domain: BoxDomain,
    pub potential: Expression,
}

impl Chart {
    pub fn new(id: impl Into<String>, domain: BoxDomain, potential: Expression) -> Result<Self, AtlasError> {
        let id = id.into();
        if potential.dim() != domain.dim() {
            return Err(AtlasError::PotentialArity {
                chart: id,
                expected: domain.dim(),
                got: potential.dim(),
            });
        }
        Ok(Chart {
            id,
            domain,
            potential,
        })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    fn check_inside(&self, x: &DVector<f64>) -> Result<(), AtlasError> {
        if !self.domain.contains(x.as_slice()) {
            return Err(AtlasError::OutsideDomain {
                chart: self.id.clone(),
                point: x.iter().copied().collect(),
            });
        }
        Ok(())
    }

    fn eval_err(&self) -> impl Fn(EvalError) -> AtlasError + '_ {
        move |source| AtlasError::Eval {
            chart: self.id.clone(),
            source,
        }
    }

    /// Full jet of `K_λ`; no domain check.
    pub fn jet3(&self, x: &DVector<f64>) -> Result<Jet3, AtlasError> {
        self.potential.eval_jet3(x.as_slice()).map_err(self.eval_err())
    }

    /// Gradient and Hessian of `K_λ`; no domain check.
    pub fn grad_hess(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>), AtlasError> {
        let (_, g, h) = self.potential.eval_jet2(x.as_slice()).map_err(self.eval_err())?;
        Ok((g, h))
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64, AtlasError> {
        self.potential.eval(x.as_slice()).map_err(self.eval_err())
    }

    /// Legendre coordinates `x̃ = ∇K_λ(x)`; this is also the local moment map `μ_λ`.
    pub fn legendre_coords(&self, x: &DVector<f64>) -> Result<DVector<f64>, AtlasError> {
        self.check_inside(x)?;
        let (_, g) = self.potential.eval_grad(x.as_slice()).map_err(self.eval_err())?;
        Ok(g)
    }

    /// Hessian metric `g_ij = ∂²K_λ/∂x_i∂x_j`, rejected when not positive definite.
    pub fn hessian_metric(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, AtlasError> {
        self.check_inside(x)?;
        let (_, h) = self.grad_hess(x)?;
        let min_eigenvalue = min_eigenvalue(&h);
        if min_eigenvalue < SPD_THRESHOLD {
            return Err(AtlasError::DegenerateMetric {
                chart: self.id.clone(),
                min_eigenvalue,
            });
        }
        Ok(h)
    }

    /// `K̃_λ(x̃) = ⟨x̃, x⟩ − K_λ(x)` evaluated at `x̃ = ∇K_λ(x)`.
    pub fn dual_potential(&self, x: &DVector<f64>) -> Result<f64, AtlasError> {
        self.check_inside(x)?;
        let (k, g) = self.potential.eval_grad(x.as_slice()).map_err(self.eval_err())?;
        Ok(g.dot(x) - k)
    }

    /// Max deviation `|det Hess K − mean|` over the samples: zero iff the
    /// real Monge–Ampère (Ricci-flat) condition holds there.
    pub fn ricci_flat_residual(&self, grid: &[DVector<f64>]) -> Result<f64, AtlasError> {
        let dets = grid
            .iter()
            .map(|x| {
                self.check_inside(x)?;
                Ok(self.grad_hess(x)?.1.determinant())
            })
            .collect::<Result<Vec<f64>, AtlasError>>()?;
        if dets.is_empty() {
            return Ok(0.0);
        }
        let mean = dets.iter().sum::<f64>() / dets.len() as f64;
        Ok(dets.iter().map(|d| (d - mean).abs()).fold(0.0, f64::max))
    }
}

pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    if h.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(h.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Integer-affine change of tropical coordinates between two charts.
#[derive(Debug, Clone)]
pub struct TransitionMap {
    pub from: String,
    pub to: String,
    /// `A = ∂x^to/∂x^from`.
    pub a: IntMatrix,
    pub c: DVector<f64>,
    /// `∇_{x^from}(K_from − K_to ∘ ψ)`.
    pub b: DVector<f64>,
    /// Sample box of the overlap, in `from` coordinates.
    pub overlap: BoxDomain,
    /// Whether `b` was derived from the potentials instead of supplied.
    pub b_computed: bool,
}

impl TransitionMap {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        intmat::mul_vec(&self.a, x) + &self.c
    }

    /// Inverse coordinate change `x^from = A⁻¹ (x^to − c)`.
    pub fn apply_inverse(&self, y: &DVector<f64>) -> Result<DVector<f64>, AtlasError> {
        let inv = intmat::inverse_unimodular(&self.a).map_err(|e| self.err(e.to_string()))?;
        Ok(intmat::mul_vec(&inv, &(y - &self.c)))
    }

    /// `Aᵀ`, the linear part of the action on Legendre coordinates and on `F(k, m)`.
    pub fn dual_linear(&self) -> IntMatrix {
        self.a.transpose()
    }

    /// Gradient of `K_from − K_to ∘ ψ` at `x` (from-coordinates).
    pub fn potential_difference_gradient(
        &self,
        from: &Chart,
        to: &Chart,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>, AtlasError> {
        let (g_from, _) = from.grad_hess(x)?;
        let (g_to, _) = to.grad_hess(&self.apply(x))?;
        Ok(g_from - intmat::to_f64(&self.a).transpose() * g_to)
    }

    /// Hessian of `K_from − K_to ∘ ψ` at `x`.
    pub fn potential_difference_hessian(
        &self,
        from: &Chart,
        to: &Chart,
        x: &DVector<f64>,
    ) -> Result<DMatrix<f64>, AtlasError> {
        let (_, h_from) = from.grad_hess(x)?;
        let (_, h_to) = to.grad_hess(&self.apply(x))?;
        let a = intmat::to_f64(&self.a);
        Ok(h_from - a.transpose() * h_to * a)
    }

    fn err(&self, msg: String) -> AtlasError {
        AtlasError::Transition {
            from: self.from.clone(),
            to: self.to.clone(),
            msg,
        }
    }
}

/// Input description of a transition, before `b` is resolved.
#[derive(Debug, Clone)]
pub struct TransitionSpec {
    pub from: String,
    pub to: String,
    pub a: IntMatrix,
    pub c: DVector<f64>,
    pub b: Option<DVector<f64>>,
    pub overlap: BoxDomain,
}

/// Charts plus transitions.
#[derive(Debug, Clone)]
pub struct Atlas {
    charts: Vec<Chart>,
    transitions: Vec<TransitionMap>,
}

impl Atlas {
    /// Assemble an atlas, resolving omitted `b` from the potentials at the
    /// overlap centre.
    pub fn new(charts: Vec<Chart>, specs: Vec<TransitionSpec>) -> Result<Self, AtlasError> {
        for (i, c) in charts.iter().enumerate() {
            if charts[..i].iter().any(|o| o.id == c.id) {
                return Err(AtlasError::DuplicateChart(c.id.clone()));
            }
        }
        let mut atlas = Atlas {
            charts,
            transitions: Vec::new(),
        };
        for spec in specs {
            let from = atlas.chart(&spec.from)?;
            let to = atlas.chart(&spec.to)?;
            let m = from.dim();
            let bad = |msg: String| AtlasError::Transition {
                from: spec.from.clone(),
                to: spec.to.clone(),
                msg,
            };
            if to.dim() != m {
                return Err(bad(format!("chart dimensions differ ({m} vs {})", to.dim())));
            }
            if spec.a.nrows() != m || spec.a.ncols() != m {
                return Err(bad(format!("A is {}x{}, expected {m}x{m}", spec.a.nrows(), spec.a.ncols())));
            }
            if spec.c.len() != m || spec.overlap.dim() != m {
                return Err(bad("shift or overlap box has wrong dimension".into()));
            }
            if spec.b.as_ref().is_some_and(|b| b.len() != m) {
                return Err(bad("b has wrong dimension".into()));
            }
            let mut t = TransitionMap {
                from: spec.from.clone(),
                to: spec.to.clone(),
                a: spec.a,
                c: spec.c,
                b: DVector::zeros(m),
                overlap: spec.overlap,
                b_computed: spec.b.is_none(),
            };
            t.b = match spec.b {
                Some(b) => b,
                None => t.potential_difference_gradient(from, to, &t.overlap.center())?,
            };
            atlas.transitions.push(t);
        }
        Ok(atlas)
    }

    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn transitions(&self) -> &[TransitionMap] {
        &self.transitions
    }

    pub fn dim(&self) -> usize {
        self.charts.first().map_or(0, Chart::dim)
    }

    pub fn chart(&self, id: &str) -> Result<&Chart, AtlasError> {
        self.charts
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| AtlasError::UnknownChart(id.to_string()))
    }

    /// `(A, c, b)` for the map `from → to`, using an explicit transition or
    /// the inverse of one in the opposite direction.
    pub fn affine_data(&self, from: &str, to: &str) -> Option<(IntMatrix, DVector<f64>, DVector<f64>)> {
        if let Some(t) = self.transitions.iter().find(|t| t.from == from && t.to == to) {
            return Some((t.a.clone(), t.c.clone(), t.b.clone()));
        }
        let t = self.transitions.iter().find(|t| t.from == to && t.to == from)?;
        let inv = intmat::inverse_unimodular(&t.a).ok()?;
        let inv_f = intmat::to_f64(&inv);
        let c = -(&inv_f * &t.c);
        // b(ν,λ) = −(A⁻¹)ᵀ b(λ,ν)
        let b = -(inv_f.transpose() * &t.b);
        Some((inv, c, b))
    }

    /// Check unimodularity, affine-linearity of potential differences, the
    /// cocycle identity on chart triples and convexity on sample grids.
    pub fn validate(&self, samples_per_axis: usize) -> Result<AtlasReport, AtlasError> {
        let mut charts = Vec::new();
        for chart in &self.charts {
            let mut min_eig = f64::INFINITY;
            for x in chart.domain.grid(samples_per_axis) {
                let (_, h) = chart.grad_hess(&x)?;
                min_eig = min_eig.min(min_eigenvalue(&h));
            }
            charts.push(ChartCheck {
                id: chart.id.clone(),
                min_eigenvalue: min_eig,
                convex: min_eig >= SPD_THRESHOLD,
            });
        }

        let mut transitions = Vec::new();
        for t in &self.transitions {
            let from = self.chart(&t.from)?;
            let to = self.chart(&t.to)?;
            let det = intmat::det(&t.a).map_err(|e| t.err(e.to_string()))?;
            let mut affine = 0.0f64;
            let mut gradient = 0.0f64;
            let mut inside = true;
            for x in t.overlap.grid(samples_per_axis) {
                if !from.domain.contains(x.as_slice()) || !to.domain.contains(t.apply(&x).as_slice()) {
                    inside = false;
                }
                let h = t.potential_difference_hessian(from, to, &x)?;
                affine = affine.max(h.abs().max());
                let g = t.potential_difference_gradient(from, to, &x)?;
                gradient = gradient.max((g - &t.b).amax());
            }
            transitions.push(TransitionCheck {
                from: t.from.clone(),
                to: t.to.clone(),
                det,
                unimodular: det == 1 || det == -1,
                affine_residual: affine,
                gradient_residual: gradient,
                overlap_inside_charts: inside,
                b_computed: t.b_computed,
            });
        }

        let mut cocycles = Vec::new();
        for t1 in &self.transitions {
            for t2 in self.transitions.iter().filter(|t| t.from == t1.to) {
                if t2.to == t1.from {
                    continue;
                }
                let Some((a13, c13, b13)) = self.affine_data(&t1.from, &t2.to) else {
                    continue;
                };
                // x^μ = A2 (A1 x + c1) + c2
                let composed_a = &t2.a * &t1.a;
                let a_res = (&a13 - &composed_a).abs().max();
                let c_res = (&c13 - (intmat::mul_vec(&t2.a, &t1.c) + &t2.c)).amax();
                // b(λ,μ) = b(λ,ν) + Aᵀ(λ→ν) b(ν,μ)
                let b_res = (&b13 - (&t1.b + intmat::mul_vec(&t1.dual_linear(), &t2.b))).amax();
                cocycles.push(CocycleCheck {
                    charts: [t1.from.clone(), t1.to.clone(), t2.to.clone()],
                    a_residual: a_res,
                    c_residual: c_res,
                    b_residual: b_res,
                });
            }
        }

        Ok(AtlasReport {
            charts,
            transitions,
            cocycles,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartCheck {
    pub id: String,
    pub min_eigenvalue: f64,
    pub convex: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionCheck {
    pub from: String,
    pub to: String,
    pub det: i128,
    pub unimodular: bool,
    /// Max entry of `Hess(K_from − K_to ∘ ψ)` over the overlap samples.
    pub affine_residual: f64,
    /// Max deviation of `∇(K_from − K_to ∘ ψ)` from `b`; equals the
    /// moment-map equivariance residual `μ_λ − Aᵀμ_ν − b`.
    pub gradient_residual: f64,
    pub overlap_inside_charts: bool,
    pub b_computed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocycleCheck {
    pub charts: [String; 3],
    pub a_residual: i64,
    pub c_residual: f64,
    pub b_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtlasReport {
    pub charts: Vec<ChartCheck>,
    pub transitions: Vec<TransitionCheck>,
    pub cocycles: Vec<CocycleCheck>,
}

impl AtlasReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.charts.iter().all(|c| c.convex)
            && self.transitions.iter().all(|t| {
                t.unimodular && t.overlap_inside_charts && t.affine_residual <= tol && t.gradient_residual <= tol
            })
            && self
                .cocycles
                .iter()
                .all(|c| c.a_residual == 0 && c.c_residual <= tol && c.b_residual <= tol)
    }
}
