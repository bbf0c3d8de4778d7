//! Check records, residual accumulation and seeded sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expr::DomainBox;
use crate::linalg;
use crate::scalar::{Backend, Rational, Scalar};

/// Fraction of each domain width kept clear when sampling base points.
pub const SAMPLE_MARGIN: f64 = 0.05;

/// Exact samples are rounded to this denominator.
pub const EXACT_DENOMINATOR: i64 = 16;

pub const FLOAT_TOLERANCE: f64 = 1e-6;

/// One line of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub order: usize,
    pub samples: usize,
    pub max_abs_residual: f64,
    pub max_rel_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_order: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl CheckRecord {
    pub fn with_diagnostic(mut self, d: impl Into<String>) -> Self {
        self.diagnostic = Some(d.into());
        self
    }
}

/// Sample count, seed and pass threshold for a check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    pub samples: usize,
    pub seed: u64,
    pub tolerance: f64,
}

impl Settings {
    pub fn new(samples: usize, seed: u64, tolerance: f64) -> Self {
        Settings {
            samples,
            seed,
            tolerance,
        }
    }

    /// Default threshold for the backend: 0 for exact, `1e-6` for float.
    pub fn default_tolerance(backend: Backend) -> f64 {
        match backend {
            Backend::Exact => 0.0,
            Backend::Float => FLOAT_TOLERANCE,
        }
    }

    pub fn for_scalar<S: Scalar>(samples: usize, seed: u64) -> Self {
        let backend = if S::EXACT { Backend::Exact } else { Backend::Float };
        Settings::new(samples, seed, Self::default_tolerance(backend))
    }

    pub fn sampler(&self) -> Sampler {
        Sampler::new(self.seed)
    }
}

/// Running maximum of residuals. A sample passes when
/// `abs ≤ tolerance · max(1, scale)`, where `scale` is the largest term in
/// the identity.
#[derive(Debug, Clone)]
pub struct Residual {
    tolerance: f64,
    max_abs: f64,
    max_rel: f64,
    pass: bool,
    samples: usize,
    per_order: Vec<f64>,
}

impl Residual {
    pub fn new(tolerance: f64) -> Self {
        Residual {
            tolerance,
            max_abs: 0.0,
            max_rel: 0.0,
            pass: true,
            samples: 0,
            per_order: Vec::new(),
        }
    }

    pub fn observe(&mut self, abs: f64, scale: f64) {
        let ok = abs <= self.tolerance * scale.max(1.0);
        self.pass &= ok;
        if abs.is_nan() || self.max_abs.is_nan() {
            self.max_abs = f64::NAN;
            self.max_rel = f64::NAN;
            return;
        }
        self.max_abs = self.max_abs.max(abs);
        let rel = if scale > 0.0 { abs / scale } else { abs };
        self.max_rel = self.max_rel.max(rel);
    }

    /// Compares two block lists; block `i` feeds the order-`i + 1` entry.
    pub fn observe_blocks<S: Scalar>(&mut self, lhs: &[Vec<S>], rhs: &[Vec<S>]) {
        if self.per_order.len() < lhs.len() {
            self.per_order.resize(lhs.len(), 0.0);
        }
        for (i, (a, b)) in lhs.iter().zip(rhs).enumerate() {
            let abs = linalg::norm(&linalg::sub(a, b));
            let scale = linalg::norm(a).max(linalg::norm(b));
            self.per_order[i] = self.per_order[i].max(abs);
            self.observe(abs, scale);
        }
    }

    /// Compares with an explicit scale (e.g. the largest summand).
    pub fn observe_vec<S: Scalar>(&mut self, diff: &[S], scale: f64) {
        self.observe(linalg::norm(diff), scale);
    }

    pub fn end_sample(&mut self) {
        self.samples += 1;
    }

    pub fn passed(&self) -> bool {
        self.pass
    }

    pub fn max_abs(&self) -> f64 {
        self.max_abs
    }

    pub fn finish(self, name: &str, order: usize) -> CheckRecord {
        CheckRecord {
            name: name.to_string(),
            order,
            samples: self.samples,
            max_abs_residual: self.max_abs,
            max_rel_residual: self.max_rel,
            tolerance: self.tolerance,
            pass: self.pass,
            per_order: self.per_order,
            diagnostic: None,
        }
    }
}

/// Deterministic sampler. Exact scalars are rounded to multiples of 1/16.
#[derive(Debug, Clone)]
pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..=hi)
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.gen_range(0..n)
    }

    pub fn to_scalar<S: Scalar>(v: f64) -> S {
        if S::EXACT {
            let d = EXACT_DENOMINATOR;
            S::from_rational(&Rational::new(
                ((v * d as f64).round() as i64).into(),
                d.into(),
            ))
        } else {
            S::from_f64(v)
        }
    }

    pub fn scalar<S: Scalar>(&mut self, lo: f64, hi: f64) -> S {
        let v = self.uniform(lo, hi);
        Self::to_scalar(v)
    }

    /// Base point in the margin-shrunk box; unbounded sides use `[-1, 1]`.
    pub fn point<S: Scalar>(&mut self, domain: &DomainBox) -> Vec<S> {
        let inner = domain.shrink(SAMPLE_MARGIN);
        (0..domain.dim())
            .map(|i| {
                let lo = if inner.lo[i].is_finite() { inner.lo[i] } else { -1.0 };
                let hi = if inner.hi[i].is_finite() { inner.hi[i] } else { 1.0 };
                let mut v: S = self.scalar(lo, hi);
                let f = v.to_f64();
                if f < domain.lo[i] || f > domain.hi[i] {
                    v = S::from_f64(0.5 * (lo + hi));
                }
                v
            })
            .collect()
    }

    /// Vector with entries uniform in `[-1, 1]`.
    pub fn vector<S: Scalar>(&mut self, n: usize) -> Vec<S> {
        (0..n).map(|_| self.scalar(-1.0, 1.0)).collect()
    }

    pub fn vectors<S: Scalar>(&mut self, count: usize, n: usize) -> Vec<Vec<S>> {
        (0..count).map(|_| self.vector(n)).collect()
    }

    /// Euclidean unit vector (approximately unit for exact scalars).
    pub fn unit_vector<S: Scalar>(&mut self, n: usize) -> Vec<S> {
        loop {
            let v: Vec<f64> = (0..n).map(|_| self.uniform(-1.0, 1.0)).collect();
            let len = v.iter().map(|c| c * c).sum::<f64>().sqrt();
            if len > 0.1 {
                return v.iter().map(|c| Self::to_scalar(c / len)).collect();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_is_deterministic() {
        let dom = DomainBox::new(vec![0.0, -2.0], vec![1.0, 2.0]).unwrap();
        let a: Vec<f64> = Sampler::new(7).point(&dom);
        let b: Vec<f64> = Sampler::new(7).point(&dom);
        assert_eq!(a, b);
        assert!(dom.shrink(SAMPLE_MARGIN).contains(&a));
    }

    #[test]
    fn exact_samples_have_small_denominators() {
        let v: Vec<Rational> = Sampler::new(3).vector(5);
        for c in v {
            assert_eq!(EXACT_DENOMINATOR % i64::try_from(c.denom().clone()).unwrap(), 0);
        }
    }

    #[test]
    fn residual_threshold() {
        let mut r = Residual::new(1e-6);
        r.observe(1e-7, 0.5);
        assert!(r.passed());
        r.observe(5e-6, 10.0);
        assert!(r.passed());
        r.observe(2e-5, 10.0);
        assert!(!r.passed());
        let mut exact = Residual::new(0.0);
        exact.observe(0.0, 3.0);
        assert!(exact.passed());
        exact.observe(f64::NAN, 1.0);
        assert!(!exact.passed());
    }
}
