//! Pipeline: atlas → section → patch → lift and mirror data → verdicts.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::angle;
use crate::atlas::{Atlas, AtlasReport};
use crate::exterior::C64;
use crate::field::TangentFieldY;
use crate::lift;
use crate::locus::{self, BaseLocusPatch, GlueReport};
use crate::mirror;
use crate::section::{self, SectionReport};
use crate::solver::{self, PhaseProblem, PhaseSolution};

use super::config::{RunConfig, ThetaSpec, Tolerances};
use super::report::*;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage}: {message}")]
pub struct VerifyError {
    pub stage: &'static str,
    pub message: String,
}

fn stage<E: std::fmt::Display>(stage: &'static str) -> impl Fn(E) -> VerifyError {
    move |e| VerifyError {
        stage,
        message: e.to_string(),
    }
}

pub fn check_atlas(cfg: &RunConfig) -> Result<AtlasReport, VerifyError> {
    cfg.atlas.validate(cfg.samples_per_box).map_err(stage("atlas"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionCheck {
    pub section: SectionReport,
    pub passed: bool,
    pub glue: Vec<GlueReport>,
}

pub fn check_glue(cfg: &RunConfig) -> Result<Vec<GlueReport>, VerifyError> {
    cfg.glue
        .iter()
        .map(|g| {
            let t = &cfg.atlas.transitions()[g.transition];
            let s_from = cfg.section.get(&t.from).map_err(stage("glue"))?;
            let s_to = cfg.section.get(&t.to).map_err(stage("glue"))?;
            locus::glue_check(&cfg.atlas, g.transition, s_from, s_to, &g.u_from, &g.u_to, cfg.margin)
                .map_err(stage("glue"))
        })
        .collect()
}

pub fn check_section(cfg: &RunConfig) -> Result<SectionCheck, VerifyError> {
    let section = section::validate_constant_section(&cfg.atlas, &cfg.section).map_err(stage("section"))?;
    let passed = section.passed(section::OFFSET_TOL);
    Ok(SectionCheck {
        section,
        passed,
        glue: check_glue(cfg)?,
    })
}

/// Natural parametrization of the configured locus; `resolution` overrides
/// the configured node count per axis.
pub fn build_locus(cfg: &RunConfig, resolution: Option<usize>) -> Result<BaseLocusPatch, VerifyError> {
    let chart = cfg.atlas.chart(&cfg.locus.chart).map_err(stage("locus"))?;
    let s = cfg.section.get(&cfg.locus.chart).map_err(stage("locus"))?;
    let grid = cfg
        .locus
        .grid(resolution.unwrap_or(cfg.locus.resolution))
        .map_err(stage("locus"))?;
    let domain = cfg.locus_domain().map_err(stage("locus"))?;
    locus::build_patch(chart, s, &grid, &cfg.locus.initial_guess, &domain, cfg.newton).map_err(stage("locus"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusSummary {
    pub patch: PatchSummary,
    pub nodes: Vec<LocusNode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusNode {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
}

pub fn summarize_patch(patch: &BaseLocusPatch, field_mode: &str, tangency: f64) -> PatchSummary {
    PatchSummary {
        chart: patch.chart_id.clone(),
        m: patch.m(),
        k: patch.k(),
        nodes: patch.len(),
        resolution: patch.grid.shape().to_vec(),
        diagnostics: patch.diagnostics,
        field_mode: field_mode.to_string(),
        tangency_residual: tangency,
    }
}

pub fn locus_summary(cfg: &RunConfig, patch: &BaseLocusPatch) -> LocusSummary {
    LocusSummary {
        patch: summarize_patch(patch, cfg.field.mode(), 0.0),
        nodes: (0..patch.len())
            .map(|n| LocusNode {
                u: patch.grid.u(n).iter().copied().collect(),
                x: patch.x[n].iter().copied().collect(),
            })
            .collect(),
    }
}

/// Node table `u1,...,uk,x1,...,xm`.
pub fn locus_to_csv(summary: &LocusSummary) -> String {
    let (k, m) = (summary.patch.k, summary.patch.m);
    let mut head: Vec<String> = (1..=k).map(|i| format!("u{i}")).collect();
    head.extend((1..=m).map(|i| format!("x{i}")));
    let mut s = head.join(",");
    s.push('\n');
    for n in &summary.nodes {
        let row: Vec<String> = n.u.iter().chain(&n.x).map(|v| format_float(*v)).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn i_power(n: usize) -> C64 {
    [
        C64::new(1.0, 0.0),
        C64::new(0.0, 1.0),
        C64::new(-1.0, 0.0),
        C64::new(0.0, -1.0),
    ][n % 4]
}

/// Both sides of every correspondence row for `field` on `patch`.
/// Phase residuals are taken over `phase_nodes` (all nodes when `None`).
pub fn analyze(
    atlas: &Atlas,
    patch: &BaseLocusPatch,
    field: &TangentFieldY,
    theta0: f64,
    tol: &Tolerances,
    phase_nodes: Option<&[usize]>,
) -> Result<(Correspondence, Vec<NodeRecord>), VerifyError> {
    let (m, k) = (patch.m(), patch.k());
    let frames = lift::build_frames(patch, field);
    let zero_v = nalgebra::DVector::zeros(k);
    let mframes: Vec<_> = (0..patch.len())
        .map(|n| mirror::mirror_frame(patch, field, n, &zero_v))
        .collect();

    let lag_nodes: Vec<f64> = frames.iter().map(lift::LagrangianFrame::ww_block).collect();
    let f02_nodes = mirror::f02_node_norms(&mframes);
    let lagrangian_residual = lag_nodes.iter().copied().fold(0.0, f64::max);
    let f02_norm = f02_nodes.iter().copied().fold(0.0, f64::max);
    let lagrangian = lagrangian_residual <= tol.lagrangian;
    let integrable = f02_norm <= tol.lagrangian;
    let integrability = IntegrabilityRow {
        lagrangian_residual,
        f02_norm,
        lagrangian,
        integrable,
        agree: lagrangian == integrable,
        structural_zero: lift::structural_zero_residual(&frames),
        omega_deta_gap: lift::cross_identity_residual(&frames),
        curvature_deta_gap: mirror::mirror_cross_residual(&mframes, &frames),
        eta_identity_gap: lift::eta_identity_residual(patch, field, &frames),
    };

    let (phases, degenerate) = lift::phase_field(patch, field);
    let slag_nodes = lift::slag_node_residuals(&phases, theta0);
    let dhym = mirror::dhym_residual(patch, &mframes, field, theta0);
    let selected: Vec<usize> = match phase_nodes {
        Some(n) => n.to_vec(),
        None => (0..patch.len()).collect(),
    };
    let pick = |v: &[f64]| selected.iter().map(|&n| v[n]).fold(0.0, f64::max);
    let slag_residual = pick(&slag_nodes);
    let dhym_residual = pick(&dhym.node_residuals);
    // a vanishing det[𝒲|𝒵] (equivalently det B) is neither condition
    let regular = degenerate.is_empty();
    let special_lagrangian = regular && slag_residual <= tol.phase;
    let is_dhym = regular && dhym_residual <= tol.phase;

    let factor = i_power(m - k);
    let mut pullback_gap = 0.0f64;
    let mut pullback_phases = Vec::with_capacity(patch.len());
    for n in 0..patch.len() {
        let pm = lift::phase_matrices(patch, field, n);
        let omega = lift::omega_pullback(&pm);
        pullback_gap = pullback_gap.max((omega - factor * pm.det_wz).norm());
        pullback_phases.push(omega.arg());
    }

    let phase = PhaseRow {
        theta0,
        theta0_pullback: angle::wrap(theta0 + (m - k) as f64 * FRAC_PI_2),
        slag_residual,
        dhym_residual,
        special_lagrangian,
        dhym: is_dhym,
        agree: special_lagrangian == is_dhym,
        applicable: lagrangian && integrable,
        degenerate_nodes: degenerate.len(),
        factorization_constant: dhym.constant,
        factorization_gap: dhym.factorization_gap,
        phase_gap_mod_pi: dhym.phase_gap_mod_pi,
        exterior_oracle_gap: dhym.oracle_gap,
        dhym_im_residual: dhym.im_residual,
        omega_pullback_gap: pullback_gap,
        phase_max_jump: phases.max_jump,
        phase_continuous: phases.continuous(),
    };

    let triv = mirror::triviality_check(patch, field, tol.structural);
    let lift_is_trivial = triv.lift_coset_gap <= tol.structural;
    let triviality = TrivialityRow {
        lift_coset_gap: triv.lift_coset_gap,
        connection: triv.connection,
        orthogonality: triv.orthogonality,
        lift_is_trivial,
        connection_is_trivial: triv.trivial,
        field_is_normal: triv.normal,
        agree: lift_is_trivial == triv.trivial,
    };

    let (omega_tilde_gap, omega_tilde_min_eigenvalue) = mirror::omega_tilde_checks(&mframes);
    let mut transport = Vec::new();
    for t in atlas.transitions().iter().filter(|t| t.from == patch.chart_id) {
        let ys: Vec<_> = (0..patch.len())
            .filter(|&n| t.overlap.contains(patch.x[n].as_slice()))
            .map(|n| field.y[n].clone())
            .collect();
        let residual = mirror::connection_transport_check(t, &ys, None).map_err(stage("mirror_bundle"))?;
        transport.push(TransportCheck {
            from: t.from.clone(),
            to: t.to.clone(),
            samples: ys.len(),
            residual,
        });
    }
    let mirror_checks = MirrorChecks {
        cr_residual: mframes.iter().map(|f| f.cr_residual).fold(0.0, f64::max),
        omega_tilde_gap,
        omega_tilde_min_eigenvalue,
        v_independence: mirror::v_independence_residual(patch, field),
        kahler_compatibility: lift::kahler_compatibility_residual(patch),
        connection_transport: transport,
    };

    let nodes = (0..patch.len())
        .map(|n| NodeRecord {
            u: patch.grid.u(n).iter().copied().collect(),
            phase: phases.principal[n],
            phase_pullback: pullback_phases[n],
            lag_res: lag_nodes[n],
            f02_res: f02_nodes[n],
            slag_res: slag_nodes[n],
            dhym_res: dhym.node_residuals[n],
        })
        .collect();

    Ok((
        Correspondence {
            triviality,
            integrability,
            phase,
            mirror: mirror_checks,
        },
        nodes,
    ))
}

fn resolve_theta(spec: ThetaSpec, patch: &BaseLocusPatch, field: &TangentFieldY) -> Result<(f64, bool), VerifyError> {
    match spec {
        ThetaSpec::Value(v) => Ok((v, false)),
        ThetaSpec::Estimate => {
            let (phases, _) = lift::phase_field(patch, field);
            let t = solver::estimate_theta(&phases.principal).map_err(stage("phase_solver"))?;
            Ok((t, true))
        }
    }
}

/// Solve the phase equation per the `solve` block.
pub fn run_solve(
    cfg: &RunConfig,
    resolution: Option<usize>,
) -> Result<Option<(BaseLocusPatch, PhaseSolution, SolveSection)>, VerifyError> {
    let Some(sc) = &cfg.solve else {
        return Ok(None);
    };
    let patch = build_locus(cfg, Some(resolution.unwrap_or(sc.resolution)))?;
    let theta0 = match sc.theta0 {
        ThetaSpec::Value(v) => v,
        ThetaSpec::Estimate => {
            return Err(VerifyError {
                stage: "phase_solver",
                message: "solve.theta0 must be a value".into(),
            })
        }
    };
    let problem = PhaseProblem::from_expression(&patch, theta0, &sc.boundary, sc.options).map_err(stage("phase_solver"))?;
    let solution = solver::solve_phase(&problem).map_err(stage("phase_solver"))?;
    let (correspondence, _) = analyze(
        &cfg.atlas,
        &patch,
        &solution.field,
        theta0,
        &cfg.tolerances,
        Some(&solution.interior),
    )?;
    let section = SolveSection {
        solver: solution.report(theta0),
        residual_consistency: (solution.residual - correspondence.phase.slag_residual).abs(),
        correspondence,
    };
    Ok(Some((patch, solution, section)))
}

/// Solved potential at one grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedNode {
    pub u: Vec<f64>,
    pub f: f64,
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub result: SolveSection,
    pub nodes: Vec<SolvedNode>,
}

impl SolveOutput {
    pub fn new(patch: &BaseLocusPatch, solution: &PhaseSolution, result: SolveSection) -> Self {
        SolveOutput {
            result,
            nodes: (0..patch.len())
                .map(|n| SolvedNode {
                    u: patch.grid.u(n).iter().copied().collect(),
                    f: solution.f[n],
                    boundary: patch.grid.is_boundary(n),
                })
                .collect(),
        }
    }

    /// Node table `u1,...,uk,f`.
    pub fn to_csv(&self) -> String {
        let k = self.nodes.first().map_or(0, |n| n.u.len());
        let mut head: Vec<String> = (1..=k).map(|i| format!("u{i}")).collect();
        head.push("f".into());
        let mut s = head.join(",");
        s.push('\n');
        for n in &self.nodes {
            let row: Vec<String> = n.u.iter().chain([n.f].iter()).map(|v| format_float(*v)).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }
}

/// Full correspondence run.
pub fn run_verify(cfg: &RunConfig, resolution: Option<usize>) -> Result<CorrespondenceReport, VerifyError> {
    let atlas = check_atlas(cfg)?;
    let atlas_passed = atlas.passed(cfg.tolerances.glue);
    let section = check_section(cfg)?;
    let patch = build_locus(cfg, resolution)?;
    let field = TangentFieldY::evaluate(&cfg.field, &patch).map_err(stage("field"))?;
    let (theta0, theta0_estimated) = resolve_theta(cfg.theta0, &patch, &field)?;
    let (correspondence, nodes) = analyze(&cfg.atlas, &patch, &field, theta0, &cfg.tolerances, None)?;
    let solve = run_solve(cfg, None)?.map(|(_, _, s)| s);
    let all_agree = correspondence.all_agree() && solve.as_ref().is_none_or(|s| s.correspondence.all_agree());
    Ok(CorrespondenceReport {
        tolerances: cfg.tolerances,
        atlas,
        atlas_passed,
        section: section.section,
        section_passed: section.passed,
        glue: section.glue,
        patch: summarize_patch(&patch, cfg.field.mode(), field.tangency_residual(&patch)),
        theta0_estimated,
        correspondence,
        solve,
        nodes,
        all_agree,
    })
}
