//! Report types and their JSON/CSV serialization.
//!
//! Floats are written with 17 significant digits so that a JSON report read
//! back reproduces every value bit for bit.

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::atlas::AtlasReport;
use crate::locus::{GlueReport, PatchDiagnostics};
use crate::section::SectionReport;
use crate::solver::SolveReport;

use super::config::{OutputFormat, Tolerances};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchSummary {
    pub chart: String,
    pub m: usize,
    pub k: usize,
    pub nodes: usize,
    pub resolution: Vec<usize>,
    pub diagnostics: PatchDiagnostics,
    pub field_mode: String,
    /// Max `|g(Y, ζ^j)|`; zero for fields tangent to the locus.
    pub tangency_residual: f64,
}

/// Table row 1: `L(V, Y) = L(V, 0)` against `D^Y = d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrivialityRow {
    pub lift_coset_gap: f64,
    pub connection: f64,
    pub orthogonality: f64,
    pub lift_is_trivial: bool,
    pub connection_is_trivial: bool,
    pub field_is_normal: bool,
    pub agree: bool,
}

/// Table row 2: Lagrangian against integrable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrabilityRow {
    pub lagrangian_residual: f64,
    pub f02_norm: f64,
    pub lagrangian: bool,
    pub integrable: bool,
    pub agree: bool,
    /// Max `|ω(W_j, W_j')|` over the `W–Z` and `Z–Z` blocks.
    pub structural_zero: f64,
    /// Max `|ω(W_j, W_j') − dη_{jj'}|`.
    pub omega_deta_gap: f64,
    /// Max `|(F − Fᵀ) + dη|`.
    pub curvature_deta_gap: f64,
    /// Max `|η_j + ⟨ξ_j, Y⟩|`.
    pub eta_identity_gap: f64,
}

/// Table row 3: special Lagrangian against deformed Hermitian Yang–Mills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub theta0: f64,
    /// Target phase for `Ω(W, Z)` including the `i^{m−k}` factor.
    pub theta0_pullback: f64,
    pub slag_residual: f64,
    pub dhym_residual: f64,
    pub special_lagrangian: bool,
    pub dhym: bool,
    pub agree: bool,
    /// Both sides of row 2 hold, so the phase conditions are meaningful.
    pub applicable: bool,
    /// Nodes where `det[𝒲 | 𝒵]` vanishes; both verdicts are false when nonzero.
    pub degenerate_nodes: usize,
    pub factorization_constant: f64,
    pub factorization_gap: f64,
    pub phase_gap_mod_pi: f64,
    pub exterior_oracle_gap: Option<f64>,
    pub dhym_im_residual: f64,
    /// Max `|Ω(W, Z) − i^{m−k} det[𝒲 | 𝒵]|`.
    pub omega_pullback_gap: f64,
    pub phase_max_jump: f64,
    pub phase_continuous: bool,
}

/// Auxiliary checks on the mirror side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirrorChecks {
    pub cr_residual: f64,
    pub omega_tilde_gap: f64,
    pub omega_tilde_min_eigenvalue: f64,
    pub v_independence: f64,
    pub kahler_compatibility: f64,
    /// Per transition out of the locus chart: pairing mismatch after transport.
    pub connection_transport: Vec<TransportCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportCheck {
    pub from: String,
    pub to: String,
    pub samples: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub u: Vec<f64>,
    pub phase: f64,
    pub phase_pullback: f64,
    pub lag_res: f64,
    pub f02_res: f64,
    pub slag_res: f64,
    pub dhym_res: f64,
}

/// Correspondence rows for one field on one patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub triviality: TrivialityRow,
    pub integrability: IntegrabilityRow,
    pub phase: PhaseRow,
    pub mirror: MirrorChecks,
}

impl Correspondence {
    pub fn all_agree(&self) -> bool {
        self.triviality.agree && self.integrability.agree && self.phase.agree
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSection {
    pub solver: SolveReport,
    /// Rows for `Y = ∇f` with the solved `f`; phase rows use interior nodes.
    pub correspondence: Correspondence,
    /// `|solver residual − slag residual|` on the same nodes.
    pub residual_consistency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub tolerances: Tolerances,
    pub atlas: AtlasReport,
    pub atlas_passed: bool,
    pub section: SectionReport,
    pub section_passed: bool,
    pub glue: Vec<GlueReport>,
    pub patch: PatchSummary,
    pub theta0_estimated: bool,
    pub correspondence: Correspondence,
    pub solve: Option<SolveSection>,
    pub nodes: Vec<NodeRecord>,
    pub all_agree: bool,
}

/// Pretty JSON with floats in `{:.16e}` form; non-finite values become `null`.
pub struct FixedFloatFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Default for FixedFloatFormatter<'_> {
    fn default() -> Self {
        FixedFloatFormatter {
            inner: PrettyFormatter::new(),
        }
    }
}

pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

impl Formatter for FixedFloatFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format_float(v).as_bytes())
    }
    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.inner.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.inner.end_object_value(w)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedFloatFormatter::default());
    value.serialize(&mut ser).expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Per-node table with header `u1,...,uk,phase,lag_res,f02_res,slag_res,dhym_res`.
pub fn nodes_to_csv(k: usize, nodes: &[NodeRecord]) -> String {
    let mut out: Vec<String> = (1..=k).map(|i| format!("u{i}")).collect();
    out.extend(["phase", "lag_res", "f02_res", "slag_res", "dhym_res"].map(String::from));
    let mut s = out.join(",");
    s.push('\n');
    for n in nodes {
        let row: Vec<String> = n
            .u
            .iter()
            .chain([n.phase, n.lag_res, n.f02_res, n.slag_res, n.dhym_res].iter())
            .map(|v| format_float(*v))
            .collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn render(report: &CorrespondenceReport, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => to_json(report),
        OutputFormat::Csv => nodes_to_csv(report.patch.k, &report.nodes),
    }
}

/// Write the report to `path`, or stdout when `path` is `None`.
pub fn emit_report(report: &CorrespondenceReport, format: OutputFormat, path: Option<&Path>) -> io::Result<()> {
    write_text(&render(report, format), path)
}

pub fn write_text(text: &str, path: Option<&Path>) -> io::Result<()> {
    match path {
        Some(p) => std::fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}
