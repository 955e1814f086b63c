#![allow(dead_code)]

use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use semiflat_core::verify::{analyze, build_locus, load_config, RunConfig};
use semiflat_core::verify::report::{Correspondence, NodeRecord};
use semiflat_core::{BaseLocusPatch, Expression, FieldSpec, TangentFieldY};

pub const FIXTURES: [&str; 9] = [
    "flipped_frame",
    "line_locus",
    "lse_plane3",
    "lyz_semiflat",
    "normal_field",
    "rotation",
    "three_chart_shear",
    "two_chart_broken",
    "two_chart_glue",
];

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.cfg"))
}

pub fn fixture(name: &str) -> RunConfig {
    load_config(fixture_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn patch(cfg: &RunConfig) -> BaseLocusPatch {
    build_locus(cfg, None).expect("locus builds")
}

pub fn field(patch: &BaseLocusPatch, spec: &FieldSpec) -> TangentFieldY {
    TangentFieldY::evaluate(spec, patch).expect("field evaluates")
}

pub fn gradient(src: &str, k: usize) -> FieldSpec {
    FieldSpec::Gradient(Expression::in_u(src, k).expect("parses"))
}

pub fn explicit(components: &[String], k: usize) -> FieldSpec {
    FieldSpec::Explicit(
        components
            .iter()
            .map(|s| Expression::in_u(s, k).expect("parses"))
            .collect(),
    )
}

pub fn run(cfg: &RunConfig, patch: &BaseLocusPatch, spec: &FieldSpec, theta0: f64) -> (Correspondence, Vec<NodeRecord>) {
    let y = field(patch, spec);
    analyze(&cfg.atlas, patch, &y, theta0, &cfg.tolerances, None).expect("analysis runs")
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

fn coeff(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    let c: f64 = rng.gen_range(lo..hi);
    if rng.gen_bool(0.5) {
        c
    } else {
        -c
    }
}

/// Random smooth potential `f(u)` built from a fixed dictionary of terms.
pub fn random_potential(rng: &mut StdRng, k: usize) -> String {
    let terms: Vec<String> = match k {
        1 => vec!["u1^2".into(), "u1^3".into(), "sin(u1)".into(), "exp(0.5*u1)".into()],
        _ => vec![
            "u1^2".into(),
            "u1*u2".into(),
            "u2^2".into(),
            "sin(u1)*cos(u2)".into(),
            "exp(0.5*u2)".into(),
            "u1^3".into(),
        ],
    };
    terms
        .iter()
        .map(|t| format!("({:.6})*{t}", coeff(rng, 0.05, 0.8)))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// Random non-gradient field on a `k = 2` locus in `m` dimensions: the
/// tangential part has curl `2c` with `|c| >= 0.2` in flat coordinates.
pub fn random_curl_field(rng: &mut StdRng, m: usize) -> Vec<String> {
    let c = coeff(rng, 0.2, 0.9);
    let (a, b, g, d) = (
        coeff(rng, 0.1, 1.0),
        coeff(rng, 0.1, 1.0),
        coeff(rng, 0.0, 0.5),
        coeff(rng, 0.0, 0.5),
    );
    let mut comps = vec![
        format!("({a:.6})*u1 - ({c:.6})*u2 + ({g:.6})*sin(u1)"),
        format!("({b:.6})*u2 + ({c:.6})*u1 + ({d:.6})*cos(u2)"),
    ];
    for _ in 2..m {
        comps.push(format!("({:.6})*u1*u2", coeff(rng, 0.0, 0.5)));
    }
    comps
}
