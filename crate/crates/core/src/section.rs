//! Rational affine subspaces with unimodular frames, the `F(k, m)` action,
//! dual frames, and validation of constant sections over an atlas.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::Atlas;
use crate::intmat::{self, IntMatrix, IntMatrixError};

/// Residual threshold for the least-squares offset test.
pub const OFFSET_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SectionError {
    #[error("frame shape mismatch: {0}")]
    Shape(String),
    #[error("frame is not unimodular (det = {0})")]
    NotUnimodular(i128),
    #[error("transition matrix is not unimodular (det = {0})")]
    TransitionNotUnimodular(i128),
    #[error("section has no entry for chart `{0}`")]
    MissingChart(String),
    #[error("section entry for unknown chart `{0}`")]
    UnknownChart(String),
    #[error(transparent)]
    Integer(#[from] IntMatrixError),
}

/// `V = ℝξ_1 + ... + ℝξ_k + a` with integer frame `(ξ, ζ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationalAffineSubspace {
    /// `m × k`, columns `ξ_1..ξ_k`.
    pub xi: IntMatrix,
    /// `m × (m−k)`, columns `ζ_{k+1}..ζ_m`.
    pub zeta: IntMatrix,
    pub offset: DVector<f64>,
}

/// Rows of `[Xi | Zeta]⁻¹`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualFrame {
    /// `k × m`, rows `ξ^1..ξ^k`.
    pub xi_dual: IntMatrix,
    /// `(m−k) × m`, rows `ζ^{k+1}..ζ^m`.
    pub zeta_dual: IntMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceCheck {
    pub det: i128,
    pub valid: bool,
}

impl RationalAffineSubspace {
    pub fn new(xi: IntMatrix, zeta: IntMatrix, offset: DVector<f64>) -> Result<Self, SectionError> {
        let m = offset.len();
        if xi.nrows() != m || zeta.nrows() != m {
            return Err(SectionError::Shape(format!(
                "Xi has {} rows, Zeta has {} rows, offset has length {m}",
                xi.nrows(),
                zeta.nrows()
            )));
        }
        if xi.ncols() + zeta.ncols() != m {
            return Err(SectionError::Shape(format!(
                "Xi has {} columns and Zeta {} columns, expected {m} in total",
                xi.ncols(),
                zeta.ncols()
            )));
        }
        Ok(RationalAffineSubspace { xi, zeta, offset })
    }

    pub fn m(&self) -> usize {
        self.offset.len()
    }

    pub fn k(&self) -> usize {
        self.xi.ncols()
    }

    /// `[Xi | Zeta]`.
    pub fn frame(&self) -> IntMatrix {
        intmat::hstack(&self.xi, &self.zeta)
    }

    /// Exact unimodularity test of the frame.
    pub fn validate(&self) -> Result<SubspaceCheck, SectionError> {
        let det = intmat::det(&self.frame())?;
        Ok(SubspaceCheck {
            det,
            valid: det == 1 || det == -1,
        })
    }

    pub fn dual_basis(&self) -> Result<DualFrame, SectionError> {
        let inv = match intmat::inverse_unimodular(&self.frame()) {
            Ok(inv) => inv,
            Err(IntMatrixError::NotUnimodular(d)) => return Err(SectionError::NotUnimodular(d)),
            Err(e) => return Err(e.into()),
        };
        let k = self.k();
        Ok(DualFrame {
            xi_dual: inv.rows(0, k).into_owned(),
            zeta_dual: inv.rows(k, self.m() - k).into_owned(),
        })
    }

    /// `(A Xi, A Zeta, A a + b)`.
    pub fn act(&self, a: &IntMatrix, b: &DVector<f64>) -> Result<Self, SectionError> {
        let det = intmat::det(a)?;
        if det != 1 && det != -1 {
            return Err(SectionError::TransitionNotUnimodular(det));
        }
        if a.nrows() != self.m() || b.len() != self.m() {
            return Err(SectionError::Shape("transition does not match subspace dimension".into()));
        }
        Ok(RationalAffineSubspace {
            xi: a * &self.xi,
            zeta: a * &self.zeta,
            offset: intmat::mul_vec(a, &self.offset) + b,
        })
    }

    /// Points of `V` at parameter `u`: `Xi u + a`.
    pub fn point(&self, u: &DVector<f64>) -> DVector<f64> {
        intmat::to_f64(&self.xi) * u + &self.offset
    }
}

impl DualFrame {
    /// `[Xi|Zeta]⁻¹` stacked back together.
    pub fn stacked(&self) -> IntMatrix {
        let (k, m) = (self.xi_dual.nrows(), self.xi_dual.ncols());
        IntMatrix::from_fn(m, m, |i, j| {
            if i < k {
                self.xi_dual[(i, j)]
            } else {
                self.zeta_dual[(i - k, j)]
            }
        })
    }

    /// `𝒵`: columns `ζ^j` (entries `⟨e_i, ζ^j⟩`).
    pub fn z_matrix(&self) -> IntMatrix {
        self.zeta_dual.transpose()
    }
}

/// `act_transition` as a free function.
pub fn act_transition(
    a: &IntMatrix,
    b: &DVector<f64>,
    s: &RationalAffineSubspace,
) -> Result<RationalAffineSubspace, SectionError> {
    s.act(a, b)
}

/// Comparison of two affine subspaces as subsets of `ℝ^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspaceGap {
    pub same_linear_part: bool,
    /// Euclidean distance of `a_1 − a_2` from the common linear span.
    pub offset_residual: f64,
}

impl SubspaceGap {
    pub fn equal(&self, tol: f64) -> bool {
        self.same_linear_part && self.offset_residual <= tol
    }
}

pub fn subspace_gap(s1: &RationalAffineSubspace, s2: &RationalAffineSubspace) -> Result<SubspaceGap, SectionError> {
    if s1.m() != s2.m() {
        return Err(SectionError::Shape("subspaces live in different dimensions".into()));
    }
    let r1 = intmat::rank(&s1.xi)?;
    let r2 = intmat::rank(&s2.xi)?;
    let r12 = intmat::rank(&intmat::hstack(&s1.xi, &s2.xi))?;
    let same_linear_part = r1 == r2 && r12 == r1;
    let d = &s1.offset - &s2.offset;
    Ok(SubspaceGap {
        same_linear_part,
        offset_residual: distance_from_span(&intmat::to_f64(&s1.xi), &d),
    })
}

/// `‖d − P d‖` for the orthogonal projector `P` onto the column span.
pub fn distance_from_span(basis: &DMatrix<f64>, d: &DVector<f64>) -> f64 {
    if basis.ncols() == 0 {
        return d.norm();
    }
    let svd = basis.clone().svd(true, true);
    let coeffs = svd.solve(d, 1e-12).expect("svd computed with both factors");
    (d - basis * coeffs).norm()
}

/// Per-chart subspaces of a constant section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSection {
    pub k: usize,
    pub per_chart: BTreeMap<String, RationalAffineSubspace>,
}

impl ConstantSection {
    pub fn get(&self, chart: &str) -> Result<&RationalAffineSubspace, SectionError> {
        self.per_chart
            .get(chart)
            .ok_or_else(|| SectionError::MissingChart(chart.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionTransitionCheck {
    pub from: String,
    pub to: String,
    pub gap: SubspaceGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionReport {
    pub frames: BTreeMap<String, SubspaceCheck>,
    pub transitions: Vec<SectionTransitionCheck>,
}

impl SectionReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.frames.values().all(|f| f.valid) && self.transitions.iter().all(|t| t.gap.equal(tol))
    }
}

/// For every transition `from → to`, compare `V_from` with `Aᵀ V_to + b`,
/// the image of `V_to` under the `F(k, m)` action.
pub fn validate_constant_section(atlas: &Atlas, section: &ConstantSection) -> Result<SectionReport, SectionError> {
    for id in section.per_chart.keys() {
        if atlas.chart(id).is_err() {
            return Err(SectionError::UnknownChart(id.clone()));
        }
    }
    let mut frames = BTreeMap::new();
    for chart in atlas.charts() {
        let s = section.get(&chart.id)?;
        if s.m() != chart.dim() || s.k() != section.k {
            return Err(SectionError::Shape(format!(
                "section on `{}` is F({}, {}), expected F({}, {})",
                chart.id,
                s.k(),
                s.m(),
                section.k,
                chart.dim()
            )));
        }
        frames.insert(chart.id.clone(), s.validate()?);
    }
    let mut transitions = Vec::new();
    for t in atlas.transitions() {
        let s_from = section.get(&t.from)?;
        let s_to = section.get(&t.to)?;
        let image = s_to.act(&t.dual_linear(), &t.b)?;
        transitions.push(SectionTransitionCheck {
            from: t.from.clone(),
            to: t.to.clone(),
            gap: subspace_gap(s_from, &image)?,
        });
    }
    Ok(SectionReport { frames, transitions })
}
