#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkbundle_core::connections::{lift_connection, Christoffel, ConnectionComponents};
use tkbundle_core::expr::{parse_expr, parse_expr_with, DomainBox, MapSpec};
use tkbundle_core::jets::NaturalJet;
use tkbundle_core::metrics::{levi_civita, MetricField};
use tkbundle_core::{Backend, Rational};

pub const ROTATION_ANGLE: &str = "0.5";

pub fn q(p: i64, d: i64) -> Rational {
    Rational::new(p.into(), d.into())
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn boxed(intervals: &[(f64, f64)]) -> DomainBox {
    DomainBox::from_intervals(intervals).unwrap()
}

pub fn rational(rng: &mut ChaCha8Rng, num: i64, den: i64) -> Rational {
    q(rng.gen_range(-num..=num), rng.gen_range(1..=den))
}

pub fn rational_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| rational(rng, 6, 4)).collect()
}

/// Random polynomial in `n` variables as DSL text.
pub fn poly_text(rng: &mut ChaCha8Rng, n: usize, max_deg: u32, terms: usize, coef_num: i64) -> String {
    let mut parts = Vec::new();
    for _ in 0..terms {
        let c = q(rng.gen_range(-coef_num..=coef_num), rng.gen_range(1..=4));
        let mut t = format!("({c})");
        let mut deg = 0;
        for v in 1..=n {
            let e = rng.gen_range(0..=max_deg - deg);
            deg += e;
            if e > 0 {
                t.push_str(&format!("*x{v}^{e}"));
            }
        }
        parts.push(t);
    }
    parts.join(" + ")
}

pub fn random_poly_map(rng: &mut ChaCha8Rng, n: usize, m: usize, max_deg: u32, domain: DomainBox) -> MapSpec {
    let texts: Vec<String> = (0..m).map(|_| poly_text(rng, n, max_deg, 3, 6)).collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    MapSpec::parse(&refs, n, domain, Backend::Exact).unwrap()
}

/// `x + ε · quadratic`, invertible differential on the unit box.
pub fn near_identity_map(rng: &mut ChaCha8Rng, n: usize, domain: DomainBox) -> MapSpec {
    let texts: Vec<String> = (1..=n)
        .map(|v| {
            let quad = poly_text(rng, n, 2, 2, 1);
            format!("x{v} + (1/8)*({quad})")
        })
        .collect();
    let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
    MapSpec::parse(&refs, n, domain, Backend::Exact).unwrap()
}

/// Polynomial Christoffel field with small coefficients.
pub fn random_christoffel(rng: &mut ChaCha8Rng, n: usize, symmetric: bool) -> Christoffel {
    let mut texts = vec![String::new(); n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let idx = (i * n + j) * n + k;
                if symmetric && k < j {
                    texts[idx] = texts[(i * n + k) * n + j].clone();
                } else {
                    texts[idx] = poly_text(rng, n, 2, 2, 3);
                }
            }
        }
    }
    let exprs = texts
        .iter()
        .map(|t| parse_expr_with(t, n, Backend::Exact).unwrap())
        .collect();
    Christoffel::from_symbols(n, exprs, DomainBox::unbounded(n), symmetric).unwrap()
}

pub fn random_components(rng: &mut ChaCha8Rng, n: usize, k: usize) -> ConnectionComponents {
    lift_connection(&random_christoffel(rng, n, false), k).unwrap()
}

pub fn random_jet(rng: &mut ChaCha8Rng, n: usize, k: usize) -> NaturalJet<Rational> {
    NaturalJet::new(rational_vec(rng, n), (0..k).map(|_| rational_vec(rng, n)).collect()).unwrap()
}

pub fn metric(dim: usize, src: &[&str], domain: DomainBox) -> MetricField {
    let exprs = src.iter().map(|s| parse_expr(s, dim).unwrap()).collect();
    MetricField::from_components(dim, exprs, domain).unwrap()
}

/// Round sphere in `(θ, φ)` coordinates.
pub fn sphere_metric(domain: DomainBox) -> MetricField {
    metric(2, &["1", "0", "0", "sin(x1)^2"], domain)
}

/// Upper hemisphere as a graph over `(X, Y)`.
pub fn graph_metric() -> MetricField {
    let d = "(1 - x1^2 - x2^2)";
    let e00 = format!("1 + x1^2/{d}");
    let e01 = format!("x1*x2/{d}");
    let e11 = format!("1 + x2^2/{d}");
    metric(2, &[&e00, &e01, &e01, &e11], boxed(&[(-0.99, 0.99), (-0.99, 0.99)]))
}

pub fn sphere_rotation_domain() -> DomainBox {
    boxed(&[(0.4, 1.0), (0.5, 2.5)])
}

/// Rotation by [`ROTATION_ANGLE`] about the first axis, from the sphere
/// chart to the graph chart.
pub fn sphere_rotation() -> MapSpec {
    let a = ROTATION_ANGLE;
    let x = "sin(x1)*cos(x2)".to_string();
    let y = format!("sin(x1)*sin(x2)*cos({a}) - cos(x1)*sin({a})");
    MapSpec::parse(&[&x, &y], 2, sphere_rotation_domain(), Backend::Float).unwrap()
}

pub struct SphereRotation {
    pub map: MapSpec,
    pub source: Christoffel,
    pub target: Christoffel,
    pub source_metric: MetricField,
    pub target_metric: MetricField,
}

pub fn sphere_rotation_scenario() -> SphereRotation {
    let source_metric = sphere_metric(sphere_rotation_domain());
    let target_metric = graph_metric();
    SphereRotation {
        map: sphere_rotation(),
        source: levi_civita(&source_metric),
        target: levi_civita(&target_metric),
        source_metric,
        target_metric,
    }
}

pub fn polar_domain() -> DomainBox {
    boxed(&[(0.5, 2.0), (-1.0, 1.0)])
}

pub fn polar_map() -> MapSpec {
    MapSpec::parse(&["x1*cos(x2)", "x1*sin(x2)"], 2, polar_domain(), Backend::Float).unwrap()
}

pub fn polar_christoffel() -> Christoffel {
    levi_civita(&metric(2, &["1", "0", "0", "x1^2"], polar_domain()))
}

pub fn cubic_domain() -> DomainBox {
    boxed(&[(-1.0, 1.0)])
}

pub fn cubic_map(backend: Backend) -> MapSpec {
    MapSpec::parse(&["x1^3 + x1"], 1, cubic_domain(), backend).unwrap()
}

/// Flat connection on the target chart of the cubic, written in the source.
pub fn cubic_christoffel(backend: Backend) -> Christoffel {
    let e = parse_expr_with("6*x1/(3*x1^2 + 1)", 1, backend).unwrap();
    Christoffel::from_symbols(1, vec![e], cubic_domain(), true).unwrap()
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
