//! Run configuration: a TOML document with `atlas`, `charts`,
//! `transitions`, `section`, `locus`, `field`, `phase`, and optional
//! `solve`, `glue`, `output` and `tolerances` blocks.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::atlas::{Atlas, AtlasError, BoxDomain, Chart, TransitionSpec};
use crate::field::FieldSpec;
use crate::intmat::{self, IntMatrix};
use crate::locus::{LocusError, NewtonOptions, ParamGrid};
use crate::potential::{Expression, ParseError};
use crate::section::{ConstantSection, RationalAffineSubspace, SectionError};
use crate::solver::SolverOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("{context}: expression `{src}`: {source}")]
    Expression {
        context: String,
        src: String,
        #[source]
        source: ParseError,
    },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown chart id `{0}`")]
    UnknownChart(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Section(#[from] SectionError),
    #[error(transparent)]
    Locus(#[from] LocusError),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    atlas: RawAtlas,
    charts: Vec<RawChart>,
    #[serde(default)]
    transitions: Vec<RawTransition>,
    section: RawSection,
    locus: RawLocus,
    #[serde(default)]
    field: Option<RawField>,
    #[serde(default)]
    phase: Option<RawPhase>,
    #[serde(default)]
    solve: Option<RawSolve>,
    #[serde(default)]
    glue: Vec<RawGlue>,
    #[serde(default)]
    output: Option<RawOutput>,
    #[serde(default)]
    tolerances: Option<Tolerances>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAtlas {
    #[serde(default)]
    margin: f64,
    #[serde(default = "default_samples")]
    samples_per_box: usize,
}

impl Default for RawAtlas {
    fn default() -> Self {
        RawAtlas {
            margin: 0.0,
            samples_per_box: default_samples(),
        }
    }
}

fn default_samples() -> usize {
    5
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawChart {
    id: String,
    #[serde(rename = "box")]
    bounds: Vec<[f64; 2]>,
    potential: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTransition {
    from: String,
    to: String,
    #[serde(rename = "A")]
    a: Vec<Vec<i64>>,
    c: Vec<f64>,
    #[serde(default)]
    b: Option<Vec<f64>>,
    overlap: Vec<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    k: usize,
    charts: BTreeMap<String, RawFrame>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    #[serde(rename = "Xi")]
    xi: Vec<Vec<i64>>,
    #[serde(rename = "Zeta", default)]
    zeta: Vec<Vec<i64>>,
    a: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLocus {
    chart: String,
    u_box: Vec<[f64; 2]>,
    #[serde(default = "default_resolution")]
    resolution: usize,
    #[serde(default)]
    initial_guess: Option<Vec<f64>>,
}

fn default_resolution() -> usize {
    65
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    mode: String,
    #[serde(default)]
    f: Option<String>,
    #[serde(default)]
    components: Option<Vec<String>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawTheta {
    Number(f64),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhase {
    theta0: RawTheta,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolve {
    theta0: RawTheta,
    boundary: String,
    #[serde(default)]
    resolution: Option<usize>,
    #[serde(default)]
    tol: Option<f64>,
    #[serde(default)]
    max_iter: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGlue {
    from: String,
    to: String,
    u_from: Vec<[f64; 2]>,
    u_to: Vec<[f64; 2]>,
    #[serde(default = "default_glue_samples")]
    samples: usize,
}

fn default_glue_samples() -> usize {
    9
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    #[serde(default)]
    format: Option<OutputFormat>,
    #[serde(default)]
    path: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// Thresholds for the verdicts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// `lagrangian_residual` and `‖F^{(0,2)}‖`.
    pub lagrangian: f64,
    /// Special Lagrangian and dHYM phase residuals.
    pub phase: f64,
    /// Structural zeros of `ω`, triviality row.
    pub structural: f64,
    pub glue: f64,
    /// Cross identities between the two sides.
    pub equivalence: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            lagrangian: 1e-9,
            phase: 1e-9,
            structural: 1e-10,
            glue: 1e-10,
            equivalence: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThetaSpec {
    Value(f64),
    Estimate,
}

#[derive(Debug, Clone)]
pub struct LocusConfig {
    pub chart: String,
    pub u_box: Vec<[f64; 2]>,
    pub resolution: usize,
    pub initial_guess: DVector<f64>,
}

impl LocusConfig {
    pub fn grid(&self, resolution: usize) -> Result<ParamGrid, LocusError> {
        ParamGrid::uniform(&self.u_box, resolution)
    }
}

#[derive(Debug, Clone)]
pub struct SolveConfig {
    pub theta0: ThetaSpec,
    pub boundary: Expression,
    pub resolution: usize,
    pub options: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct GlueConfig {
    /// Index into the atlas transitions.
    pub transition: usize,
    pub u_from: ParamGrid,
    pub u_to: ParamGrid,
}

/// Validated configuration with every expression parsed.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub atlas: Atlas,
    pub margin: f64,
    pub samples_per_box: usize,
    pub section: ConstantSection,
    pub locus: LocusConfig,
    pub field: FieldSpec,
    pub theta0: ThetaSpec,
    pub solve: Option<SolveConfig>,
    pub glue: Vec<GlueConfig>,
    pub output_format: OutputFormat,
    pub output_path: Option<String>,
    pub tolerances: Tolerances,
    pub newton: NewtonOptions,
}

impl RunConfig {
    /// The chart box shrunk by the margin: the region Newton iterates must stay in.
    pub fn locus_domain(&self) -> Result<BoxDomain, AtlasError> {
        self.atlas.chart(&self.locus.chart)?.domain.shrink(self.margin)
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn expr(src: &str, vars: &str, n: usize, context: impl Into<String>) -> Result<Expression, ConfigError> {
    let parsed = match vars {
        "x" => Expression::in_x(src, n),
        _ => Expression::in_u(src, n),
    };
    parsed.map_err(|source| ConfigError::Expression {
        context: context.into(),
        src: src.to_string(),
        source,
    })
}

fn theta(raw: &RawTheta, context: &str) -> Result<ThetaSpec, ConfigError> {
    match raw {
        RawTheta::Number(v) => Ok(ThetaSpec::Value(*v)),
        RawTheta::Text(s) if s.trim() == "estimate" => Ok(ThetaSpec::Estimate),
        RawTheta::Text(s) => {
            let e = expr(s, "u", 1, context)?;
            if !e.is_constant() {
                return Err(ConfigError::Invalid(format!("{context}: `{s}` must be a constant")));
            }
            let v = e
                .eval(&[0.0])
                .map_err(|err| ConfigError::Invalid(format!("{context}: `{s}`: {err}")))?;
            Ok(ThetaSpec::Value(v))
        }
    }
}

/// Integer matrix from row-major rows; an empty list is an `nrows × 0` matrix.
fn int_matrix(rows: &[Vec<i64>], nrows: usize, ncols: usize, what: &str) -> Result<IntMatrix, ConfigError> {
    if rows.is_empty() && ncols == 0 {
        return Ok(IntMatrix::zeros(nrows, 0));
    }
    let got_cols = rows.first().map_or(0, Vec::len);
    if rows.len() != nrows || got_cols != ncols {
        return Err(ConfigError::Dimension(format!(
            "{what} is {}x{got_cols}, expected {nrows}x{ncols}",
            rows.len()
        )));
    }
    intmat::from_rows(rows, ncols).ok_or_else(|| ConfigError::Dimension(format!("{what} has ragged rows")))
}

fn domain(bounds: &[[f64; 2]], m: usize, what: &str) -> Result<BoxDomain, ConfigError> {
    if bounds.len() != m {
        return Err(ConfigError::Dimension(format!(
            "{what} has {} axes, expected {m}",
            bounds.len()
        )));
    }
    Ok(BoxDomain::from_bounds(bounds)?)
}

fn vector(v: &[f64], m: usize, what: &str) -> Result<DVector<f64>, ConfigError> {
    if v.len() != m {
        return Err(ConfigError::Dimension(format!("{what} has length {}, expected {m}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    if raw.charts.is_empty() {
        return Err(ConfigError::Invalid("at least one chart is required".into()));
    }
    let m = raw.charts[0].bounds.len();
    if m == 0 {
        return Err(ConfigError::Dimension("charts must have positive dimension".into()));
    }

    let mut charts = Vec::new();
    for c in &raw.charts {
        let dom = domain(&c.bounds, m, &format!("box of chart `{}`", c.id))?;
        let pot = expr(&c.potential, "x", m, format!("potential of chart `{}`", c.id))?;
        charts.push(Chart::new(c.id.clone(), dom, pot)?);
    }
    let ids: Vec<&str> = raw.charts.iter().map(|c| c.id.as_str()).collect();
    let known = |id: &str| -> Result<(), ConfigError> {
        if ids.contains(&id) {
            Ok(())
        } else {
            Err(ConfigError::UnknownChart(id.to_string()))
        }
    };

    let mut specs = Vec::new();
    for t in &raw.transitions {
        known(&t.from)?;
        known(&t.to)?;
        let what = format!("transition {} -> {}", t.from, t.to);
        specs.push(TransitionSpec {
            from: t.from.clone(),
            to: t.to.clone(),
            a: int_matrix(&t.a, m, m, &format!("A of {what}"))?,
            c: vector(&t.c, m, &format!("c of {what}"))?,
            b: t.b.as_deref().map(|b| vector(b, m, &format!("b of {what}"))).transpose()?,
            overlap: domain(&t.overlap, m, &format!("overlap of {what}"))?,
        });
    }
    let atlas = Atlas::new(charts, specs)?;

    let k = raw.section.k;
    if k > m {
        return Err(ConfigError::Dimension(format!("section dimension k = {k} exceeds m = {m}")));
    }
    let mut per_chart = BTreeMap::new();
    for (id, f) in &raw.section.charts {
        known(id)?;
        let xi = int_matrix(&f.xi, m, k, &format!("Xi of chart `{id}`"))?;
        let zeta = int_matrix(&f.zeta, m, m - k, &format!("Zeta of chart `{id}`"))?;
        let a = vector(&f.a, m, &format!("offset a of chart `{id}`"))?;
        per_chart.insert(id.clone(), RationalAffineSubspace::new(xi, zeta, a)?);
    }
    for id in &ids {
        if !per_chart.contains_key(*id) {
            return Err(SectionError::MissingChart(id.to_string()).into());
        }
    }
    let section = ConstantSection { k, per_chart };

    known(&raw.locus.chart)?;
    if raw.locus.u_box.len() != k {
        return Err(ConfigError::Dimension(format!(
            "locus u_box has {} axes, expected k = {k}",
            raw.locus.u_box.len()
        )));
    }
    let margin = raw.atlas.margin;
    if !(margin >= 0.0) {
        return Err(ConfigError::Invalid("atlas margin must be non-negative".into()));
    }
    let locus_domain = atlas.chart(&raw.locus.chart)?.domain.shrink(margin)?;
    let initial_guess = match &raw.locus.initial_guess {
        Some(g) => vector(g, m, "locus initial_guess")?,
        None => locus_domain.center(),
    };
    let locus = LocusConfig {
        chart: raw.locus.chart.clone(),
        u_box: raw.locus.u_box.clone(),
        resolution: raw.locus.resolution,
        initial_guess,
    };
    locus.grid(locus.resolution)?;

    let field = match &raw.field {
        None => FieldSpec::Zero,
        Some(f) => match f.mode.as_str() {
            "zero" => FieldSpec::Zero,
            "gradient" => {
                let src = f
                    .f
                    .as_deref()
                    .ok_or_else(|| ConfigError::Invalid("gradient field needs `f`".into()))?;
                FieldSpec::Gradient(expr(src, "u", k, "field potential f")?)
            }
            "explicit" | "normal" => {
                let comps = f
                    .components
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid(format!("{} field needs `components`", f.mode)))?;
                let expected = if f.mode == "explicit" { m } else { m - k };
                if comps.len() != expected {
                    return Err(ConfigError::Dimension(format!(
                        "{} field has {} components, expected {expected}",
                        f.mode,
                        comps.len()
                    )));
                }
                let parsed = comps
                    .iter()
                    .enumerate()
                    .map(|(i, s)| expr(s, "u", k, format!("field component {}", i + 1)))
                    .collect::<Result<Vec<_>, _>>()?;
                if f.mode == "explicit" {
                    FieldSpec::Explicit(parsed)
                } else {
                    FieldSpec::Normal(parsed)
                }
            }
            other => return Err(ConfigError::Invalid(format!("unknown field mode `{other}`"))),
        },
    };

    let theta0 = match &raw.phase {
        Some(p) => theta(&p.theta0, "phase theta0")?,
        None => ThetaSpec::Estimate,
    };

    let solve = raw
        .solve
        .as_ref()
        .map(|s| -> Result<SolveConfig, ConfigError> {
            let defaults = SolverOptions::default();
            Ok(SolveConfig {
                theta0: theta(&s.theta0, "solve theta0")?,
                boundary: expr(&s.boundary, "u", k, "solve boundary")?,
                resolution: s.resolution.unwrap_or(raw.locus.resolution),
                options: SolverOptions {
                    tol: s.tol.unwrap_or(defaults.tol),
                    max_iter: s.max_iter.unwrap_or(defaults.max_iter),
                    ..defaults
                },
            })
        })
        .transpose()?;

    let mut glue = Vec::new();
    for g in &raw.glue {
        known(&g.from)?;
        known(&g.to)?;
        let transition = atlas
            .transitions()
            .iter()
            .position(|t| t.from == g.from && t.to == g.to)
            .ok_or_else(|| ConfigError::Invalid(format!("glue block names no transition {} -> {}", g.from, g.to)))?;
        if g.u_from.len() != k || g.u_to.len() != k {
            return Err(ConfigError::Dimension("glue parameter boxes must have k axes".into()));
        }
        glue.push(GlueConfig {
            transition,
            u_from: ParamGrid::uniform(&g.u_from, g.samples)?,
            u_to: ParamGrid::uniform(&g.u_to, g.samples)?,
        });
    }

    let (output_format, output_path) = match &raw.output {
        Some(o) => (o.format.unwrap_or(OutputFormat::Json), o.path.clone()),
        None => (OutputFormat::Json, None),
    };

    Ok(RunConfig {
        atlas,
        margin,
        samples_per_box: raw.atlas.samples_per_box.max(2),
        section,
        locus,
        field,
        theta0,
        solve,
        glue,
        output_format,
        output_path,
        tolerances: raw.tolerances.unwrap_or_default(),
        newton: NewtonOptions::default(),
    })
}
