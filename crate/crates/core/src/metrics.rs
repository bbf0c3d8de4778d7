//! Riemannian metrics, Levi-Civita symbols, pullbacks along immersions and
//! the lifted direct-sum metric.

use crate::connections::{lift_connection, Christoffel};
use crate::error::{Error, Result};
use crate::expr::{derivative_tensor, DomainBox, Expr, MapSpec};
use crate::linalg::{self, Matrix};
use crate::morphisms::{check_inverse_round_trip, pushforward_lifted, MorphismScenario};
use crate::report::{CheckRecord, Residual, Settings};
use crate::scalar::Scalar;
use crate::series::Series;
use crate::trivialization::LiftedCoordinates;

#[derive(Debug, Clone, PartialEq)]
pub enum MetricKind {
    /// `n^2` expressions, row-major.
    Components(Vec<Expr>),
    Pullback(Box<ImmersionSpec>),
}

/// A field of symmetric bilinear forms on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricField {
    dim: usize,
    kind: MetricKind,
    domain: DomainBox,
}

/// An immersion `f` into a chart carrying the metric `ambient`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImmersionSpec {
    map: MapSpec,
    ambient: MetricField,
}

impl ImmersionSpec {
    pub fn new(map: MapSpec, ambient: MetricField) -> Result<Self> {
        if map.output_dim() != ambient.dim() {
            return Err(Error::DimensionMismatch {
                expected: ambient.dim(),
                found: map.output_dim(),
            });
        }
        if map.input_dim() > map.output_dim() {
            return Err(Error::Invalid(format!(
                "an immersion needs source dimension {} ≤ target dimension {}",
                map.input_dim(),
                map.output_dim()
            )));
        }
        Ok(ImmersionSpec { map, ambient })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn ambient(&self) -> &MetricField {
        &self.ambient
    }
}

impl MetricField {
    pub fn from_components(dim: usize, exprs: Vec<Expr>, domain: DomainBox) -> Result<Self> {
        if exprs.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: exprs.len(),
            });
        }
        if domain.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: domain.dim(),
            });
        }
        for i in 0..dim {
            for j in i + 1..dim {
                if exprs[i * dim + j] != exprs[j * dim + i] {
                    return Err(Error::Invalid(format!("metric entries ({i}, {j}) and ({j}, {i}) differ")));
                }
            }
        }
        if let Some(e) = exprs.iter().find(|e| e.arity_used() > dim) {
            return Err(Error::Invalid(format!("metric entry `{e}` uses more than {dim} variables")));
        }
        Ok(MetricField {
            dim,
            kind: MetricKind::Components(exprs),
            domain,
        })
    }

    pub fn euclidean(dim: usize, domain: DomainBox) -> Result<Self> {
        let exprs = (0..dim * dim)
            .map(|i| {
                let v = if i / dim == i % dim { 1 } else { 0 };
                Expr::Const(crate::scalar::Rational::from_integer(v.into()))
            })
            .collect();
        Self::from_components(dim, exprs, domain)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn kind(&self) -> &MetricKind {
        &self.kind
    }

    /// The Gram matrix `g(x)`.
    pub fn eval<S: Scalar>(&self, x: &[S]) -> Result<Matrix<S>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let point: Vec<f64> = x.iter().map(Scalar::to_f64).collect();
        if !self.domain.contains(&point) {
            return Err(Error::OutsideDomain { point });
        }
        match &self.kind {
            MetricKind::Components(exprs) => {
                let v = exprs
                    .iter()
                    .map(|e| e.eval(x))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(v.chunks(self.dim).map(<[S]>::to_vec).collect())
            }
            MetricKind::Pullback(s) => pullback_gram(s, x),
        }
    }

    /// `g(x)(u, v)`.
    pub fn inner<S: Scalar>(&self, x: &[S], u: &[S], v: &[S]) -> Result<S> {
        Ok(linalg::dot(u, &linalg::mat_vec(&self.eval(x)?, v)))
    }

    /// `∂_j g(x)` for every coordinate `j`.
    pub fn derivatives<S: Scalar>(&self, x: &[S]) -> Result<Vec<Matrix<S>>> {
        (0..self.dim)
            .map(|j| {
                let probe: Vec<Series<S>> = x
                    .iter()
                    .enumerate()
                    .map(|(a, c)| {
                        let d = if a == j { S::one() } else { S::zero() };
                        Series::new(vec![c.clone(), d], 1)
                    })
                    .collect();
                let m = self.eval(&probe)?;
                Ok(m.iter().map(|r| r.iter().map(|c| c.coeff(1)).collect()).collect())
            })
            .collect()
    }

    /// Levi-Civita symbols at `x` from the Koszul formula
    /// `g(Γ(e_j, e_k), e_l) = ½(∂_j g_kl + ∂_k g_jl − ∂_l g_jk)`, flattened as
    /// `(i * n + j) * n + k`.
    pub fn christoffel_table<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let n = self.dim;
        let g = self.eval(x)?;
        let dg = self.derivatives(x)?;
        let mut rhs = linalg::zeros::<S>(n, n * n);
        for l in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let v = dg[j][k][l].clone() + dg[k][j][l].clone() - dg[l][j][k].clone();
                    rhs[l][j * n + k] = v.div_int(2);
                }
            }
        }
        let sol = linalg::solve(&g, &rhs)?;
        Ok(sol.into_iter().flatten().collect())
    }

    /// Symmetry and positive-definiteness of `g(x)` (Cholesky in `f64`).
    pub fn check_at<S: Scalar>(&self, x: &[S]) -> Result<()> {
        let g = self.eval(x)?;
        let point: Vec<f64> = x.iter().map(Scalar::to_f64).collect();
        let n = self.dim;
        let a: Vec<Vec<f64>> = g.iter().map(|r| r.iter().map(Scalar::to_f64).collect()).collect();
        for i in 0..n {
            for j in 0..n {
                if (a[i][j] - a[j][i]).abs() > 1e-12 * (1.0 + a[i][j].abs()) {
                    return Err(Error::Invalid(format!("metric is not symmetric at {point:?}")));
                }
            }
        }
        let mut l = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
                if i == j {
                    let d = a[i][i] - s;
                    if d.is_nan() || d <= 0.0 {
                        return Err(Error::Invalid(format!("metric is not positive definite at {point:?}")));
                    }
                    l[i][i] = d.sqrt();
                } else {
                    l[i][j] = (a[i][j] - s) / l[j][j];
                }
            }
        }
        Ok(())
    }
}

fn full_column_rank<S: Scalar>(j: &Matrix<S>) -> bool {
    let rows = j.len();
    let cols = j.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<f64>> = j.iter().map(|r| r.iter().map(Scalar::to_f64).collect()).collect();
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if S::EXACT {
        let gram = linalg::mat_mul(&linalg::transpose(j), j);
        return linalg::inverse(&gram).is_ok();
    }
    let eps = 1e-12 * scale.max(1.0);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows).max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs())) else {
            break;
        };
        if a[p][c].abs() <= eps {
            continue;
        }
        a.swap(rank, p);
        for r in rank + 1..rows {
            let f = a[r][c] / a[rank][c];
            for cc in c..cols {
                a[r][cc] -= f * a[rank][cc];
            }
        }
        rank += 1;
    }
    rank == cols
}

fn immersion_jacobian<S: Scalar>(s: &ImmersionSpec, x: &[S]) -> Result<(Vec<S>, Matrix<S>)> {
    let n = x.len();
    let m = s.map.output_dim();
    let mut jac = linalg::zeros::<S>(m, n);
    let mut value = Vec::new();
    for j in 0..n {
        let probe: Vec<Series<S>> = x
            .iter()
            .enumerate()
            .map(|(a, c)| {
                let d = if a == j { S::one() } else { S::zero() };
                Series::new(vec![c.clone(), d], 1)
            })
            .collect();
        let out = s.map.eval_raw(&probe)?;
        for (i, o) in out.iter().enumerate() {
            jac[i][j] = o.coeff(1);
        }
        value = out.iter().map(|o| o.coeff(0)).collect();
    }
    if n == 0 {
        value = s.map.eval_raw(x)?;
    }
    Ok((value, jac))
}

fn pullback_gram<S: Scalar>(s: &ImmersionSpec, x: &[S]) -> Result<Matrix<S>> {
    s.map.check_domain(x)?;
    let (fx, jac) = immersion_jacobian(s, x)?;
    if !full_column_rank(&jac) {
        return Err(Error::RankDeficient {
            point: x.iter().map(Scalar::to_f64).collect(),
        });
    }
    let h = s.ambient.eval(&fx)?;
    Ok(linalg::mat_mul(&linalg::transpose(&jac), &linalg::mat_mul(&h, &jac)))
}

/// `g(p)(u, v) = h(f(p))(df u, df v)` as a metric field on the source chart.
pub fn pullback_metric(s: &ImmersionSpec) -> MetricField {
    MetricField {
        dim: s.map.input_dim(),
        domain: s.map.domain().clone(),
        kind: MetricKind::Pullback(Box::new(s.clone())),
    }
}

pub fn levi_civita(g: &MetricField) -> Christoffel {
    Christoffel::levi_civita_of(g.clone())
}

/// `Γ(x)(u, v) = Γ(x)(v, u)` at random samples.
pub fn check_torsion_free<S: Scalar>(gamma: &Christoffel, settings: &Settings) -> Result<CheckRecord> {
    let n = gamma.dim();
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(gamma.domain());
        let u: Vec<S> = rng.vector(n);
        let v: Vec<S> = rng.vector(n);
        let a = gamma.apply(&x, &u, &v)?;
        let b = gamma.apply(&x, &v, &u)?;
        res.observe_blocks(&[a], &[b]);
        res.end_sample();
    }
    Ok(res.finish("torsion-free", 1))
}

/// `dg(x).w(u, v) = g(Γ(w, u), v) + g(u, Γ(w, v))` for the Levi-Civita symbols.
pub fn check_metric_compatibility<S: Scalar>(g: &MetricField, settings: &Settings) -> Result<CheckRecord> {
    let n = g.dim();
    let gamma = levi_civita(g);
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(g.domain());
        let u: Vec<S> = rng.vector(n);
        let v: Vec<S> = rng.vector(n);
        let w: Vec<S> = rng.vector(n);
        let dg = g.derivatives(&x)?;
        let dgw: Matrix<S> = (0..n)
            .map(|a| {
                (0..n)
                    .map(|b| (0..n).fold(S::zero(), |acc, j| acc + w[j].clone() * dg[j][a][b].clone()))
                    .collect()
            })
            .collect();
        let lhs = linalg::dot(&u, &linalg::mat_vec(&dgw, &v));
        let t1 = g.inner(&x, &gamma.apply(&x, &w, &u)?, &v)?;
        let t2 = g.inner(&x, &u, &gamma.apply(&x, &w, &v)?)?;
        let scale = lhs.magnitude().max(t1.magnitude()).max(t2.magnitude());
        res.observe_vec(&[lhs - t1 - t2], scale);
        res.end_sample();
    }
    Ok(res.finish("metric-compatibility", 1))
}

/// Residuals of the Gauss identity for an immersion.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussReport {
    /// `⟨df Γ^M(u,v) − Γ^N(df u, df v) − d²f(u,v), df w⟩_h` over basis `w`.
    pub projected: CheckRecord,
    /// The full vector residual; its norm is the second fundamental form term.
    pub full: CheckRecord,
    /// Smallest full residual norm seen over the (unit) samples.
    pub full_min: f64,
}

pub fn gauss_residual<S: Scalar>(s: &ImmersionSpec, settings: &Settings) -> Result<GaussReport> {
    let n = s.map.input_dim();
    let g = pullback_metric(s);
    let gamma_m = levi_civita(&g);
    let gamma_n = levi_civita(&s.ambient);
    let mut rng = settings.sampler();
    let mut proj = Residual::new(settings.tolerance);
    let mut full = Residual::new(settings.tolerance);
    let mut full_min = f64::INFINITY;
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(s.map.domain());
        let u: Vec<S> = rng.unit_vector(n);
        let v: Vec<S> = rng.unit_vector(n);
        let (fx, jac) = immersion_jacobian(s, &x)?;
        if !full_column_rank(&jac) {
            return Err(Error::RankDeficient {
                point: x.iter().map(Scalar::to_f64).collect(),
            });
        }
        let hess = derivative_tensor(&s.map, &x, 2)?;
        let a = linalg::mat_vec(&jac, &gamma_m.apply(&x, &u, &v)?);
        let b = gamma_n.apply(&fx, &linalg::mat_vec(&jac, &u), &linalg::mat_vec(&jac, &v))?;
        let c = hess.apply(&[&u, &v]);
        let r = linalg::sub(&linalg::sub(&a, &b), &c);
        let scale = linalg::norm(&a).max(linalg::norm(&b)).max(linalg::norm(&c));
        let h = s.ambient.eval(&fx)?;
        let hr = linalg::mat_vec(&h, &r);
        let projected: Vec<S> = (0..n)
            .map(|w| (0..hr.len()).fold(S::zero(), |acc, i| acc + hr[i].clone() * jac[i][w].clone()))
            .collect();
        proj.observe_vec(&projected, scale);
        let rn = linalg::norm(&r);
        full_min = full_min.min(rn);
        full.observe(rn, scale);
        proj.end_sample();
        full.end_sample();
    }
    Ok(GaussReport {
        projected: proj.finish("gauss-residual-projected", 1),
        full: full.finish("gauss-residual-full", 1),
        full_min,
    })
}

/// Outcome of the lifted isometry test.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedIsometry {
    /// Order-1 isometry gate.
    pub gate: CheckRecord,
    /// Direct-sum metric preservation at order `k`; absent if the gate fails.
    pub lifted: Option<CheckRecord>,
    /// `T^k iso^{-1} ∘ T^k iso = id`, when an inverse is supplied.
    pub inverse: Option<CheckRecord>,
}

impl LiftedIsometry {
    pub fn pass(&self) -> bool {
        self.gate.pass
            && self.lifted.as_ref().is_some_and(|r| r.pass)
            && self.inverse.as_ref().map_or(true, |r| r.pass)
    }

    pub fn record(&self) -> CheckRecord {
        let mut r = self.lifted.clone().unwrap_or_else(|| self.gate.clone());
        if let Some(inv) = &self.inverse {
            if !inv.pass {
                r.pass = false;
                r.diagnostic = Some("inverse round trip failed".into());
            }
        }
        r.name = "lifted-isometry".into();
        r
    }
}

/// Checks that `T^k iso` preserves the direct sum of `k` copies of the
/// metric in lifted coordinates (Levi-Civita connections on both sides).
/// The source and target charts may carry different metric expressions.
pub fn lifted_metric_residual<S: Scalar>(
    source: &MetricField,
    target: &MetricField,
    iso: &MapSpec,
    inverse: Option<&MapSpec>,
    k: usize,
    settings: &Settings,
) -> Result<LiftedIsometry> {
    let n = iso.input_dim();
    let mut rng = settings.sampler();
    let mut gate = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(iso.domain());
        let u: Vec<S> = rng.vector(n);
        let v: Vec<S> = rng.vector(n);
        let jac = derivative_tensor(iso, &x, 1)?.as_matrix();
        let fx = crate::expr::eval_map(iso, &x)?;
        let a = source.inner(&x, &u, &v)?;
        let b = target.inner(&fx, &linalg::mat_vec(&jac, &u), &linalg::mat_vec(&jac, &v))?;
        let scale = a.magnitude().max(b.magnitude());
        gate.observe_vec(&[a - b], scale);
        gate.end_sample();
    }
    let gate = gate.finish("isometry-gate", 1);
    if !gate.pass {
        let gate = gate.with_diagnostic("map is not an isometry at order 1; lifted check skipped");
        return Ok(LiftedIsometry {
            gate,
            lifted: None,
            inverse: None,
        });
    }
    let gs = levi_civita(source);
    let gt = levi_civita(target);
    let forward = MorphismScenario::new(iso.clone(), lift_connection(&gs, k)?, lift_connection(&gt, k)?, k)?;
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(iso.domain());
        let l1 = LiftedCoordinates::new(x.clone(), rng.vectors(k, n))?;
        let l2 = LiftedCoordinates::new(x.clone(), rng.vectors(k, n))?;
        let p1 = pushforward_lifted(&forward, &l1)?;
        let p2 = pushforward_lifted(&forward, &l2)?;
        let mut before = Vec::with_capacity(k);
        let mut after = Vec::with_capacity(k);
        for i in 1..=k {
            before.push(source.inner(&x, l1.z(i), l2.z(i))?);
            after.push(target.inner(p1.base(), p1.z(i), p2.z(i))?);
        }
        let sum = |v: &[S]| v.iter().cloned().fold(S::zero(), |a, b| a + b);
        let scale = before.iter().chain(&after).map(Scalar::magnitude).fold(0.0, f64::max);
        res.observe_vec(&[sum(&before) - sum(&after)], scale);
        res.end_sample();
    }
    let lifted = res.finish("lifted-isometry", k);
    let inverse = match inverse {
        Some(inv) => {
            let back = MorphismScenario::new(inv.clone(), lift_connection(&gt, k)?, lift_connection(&gs, k)?, k)?;
            Some(check_inverse_round_trip::<S>(&forward, &back, settings)?)
        }
        None => None,
    };
    Ok(LiftedIsometry {
        gate,
        lifted: Some(lifted),
        inverse,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::scalar::{Backend, Rational};

    fn metric(dim: usize, src: &[&str], dom: DomainBox) -> MetricField {
        let exprs = src.iter().map(|s| parse_expr(s, dim).unwrap()).collect();
        MetricField::from_components(dim, exprs, dom).unwrap()
    }

    #[test]
    fn pullback_of_circle_and_graph() {
        let dom = DomainBox::new(vec![-3.0], vec![3.0]).unwrap();
        let plane = MetricField::euclidean(2, DomainBox::unbounded(2)).unwrap();
        let circle = MapSpec::parse(&["2*cos(x1)", "2*sin(x1)"], 1, dom.clone(), Backend::Float).unwrap();
        let g = pullback_metric(&ImmersionSpec::new(circle, plane.clone()).unwrap());
        assert!((g.eval(&[0.7]).unwrap()[0][0] - 4.0).abs() < 1e-12);
        let graph = MapSpec::parse(&["x1", "x1^2"], 1, dom, Backend::Exact).unwrap();
        let g = pullback_metric(&ImmersionSpec::new(graph, plane).unwrap());
        let q = Rational::new(3.into(), 2.into());
        assert_eq!(g.eval(&[q]).unwrap()[0][0], Rational::from_integer(10.into()));
    }

    #[test]
    fn rank_deficiency_is_named() {
        let dom = DomainBox::new(vec![-1.0], vec![1.0]).unwrap();
        let plane = MetricField::euclidean(2, DomainBox::unbounded(2)).unwrap();
        let cusp = MapSpec::parse(&["x1^2", "x1^3"], 1, dom, Backend::Float).unwrap();
        let g = pullback_metric(&ImmersionSpec::new(cusp, plane).unwrap());
        assert!(matches!(g.eval(&[0.0]), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn levi_civita_of_graph_metric() {
        let g = metric(1, &["1 + 4*x1^2"], DomainBox::new(vec![-2.0], vec![2.0]).unwrap());
        let gamma = levi_civita(&g);
        let x = 0.3;
        let v = gamma.apply(&[x], &[1.0], &[1.0]).unwrap()[0];
        assert!((v - 4.0 * x / (1.0 + 4.0 * x * x)).abs() < 1e-14);
        let flat = levi_civita(&MetricField::euclidean(2, DomainBox::unbounded(2)).unwrap());
        assert!(flat.table(&[1.0, 2.0]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sphere_symbols() {
        let dom = DomainBox::new(vec![0.3, -3.0], vec![2.8, 3.0]).unwrap();
        let g = metric(2, &["1", "0", "0", "sin(x1)^2"], dom);
        let t = levi_civita(&g).table(&[1.1, 0.2]).unwrap();
        let (s, c) = (1.1f64.sin(), 1.1f64.cos());
        // (i, j, k) → (i*2 + j)*2 + k
        assert!((t[3] + s * c).abs() < 1e-12);
        assert!((t[5] - c / s).abs() < 1e-12);
        assert!((t[6] - c / s).abs() < 1e-12);
        assert!(t[0].abs() < 1e-15 && t[7].abs() < 1e-15);
    }

    #[test]
    fn positive_definiteness() {
        let g = metric(2, &["1", "2", "2", "1"], DomainBox::unbounded(2));
        assert!(g.check_at(&[0.0, 0.0]).is_err());
        let g = metric(2, &["2", "1", "1", "2"], DomainBox::unbounded(2));
        assert!(g.check_at(&[0.0, 0.0]).is_ok());
    }
}
