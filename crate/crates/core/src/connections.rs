//! Christoffel fields, the lifted connection components `M^i` and the local
//! connection map on `T^k`.

use crate::error::{Error, Result};
use crate::expr::{DomainBox, Expr, MapSpec};
use crate::jets::TangentOfTk;
use crate::linalg::{self, Matrix};
use crate::metrics::MetricField;
use crate::scalar::{Rational, Scalar};
use crate::series::Series;

#[derive(Debug, Clone, PartialEq)]
pub enum ChristoffelKind {
    /// Identically zero.
    Flat,
    /// `n^3` expressions; entry `(i, j, k)` is component `i` of `Γ(e_j, e_k)`.
    Symbols(Vec<Expr>),
    /// Koszul solution for a metric.
    LeviCivita(MetricField),
    /// Transport of a connection on the target chart back along `map`.
    Pullback { target: Box<Christoffel>, map: MapSpec },
}

/// A field `x ↦ Γ(x)`, bilinear on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    kind: ChristoffelKind,
    symmetric: bool,
    domain: DomainBox,
}

impl Christoffel {
    pub fn flat(dim: usize) -> Self {
        Christoffel {
            dim,
            kind: ChristoffelKind::Flat,
            symmetric: true,
            domain: DomainBox::unbounded(dim),
        }
    }

    pub fn from_symbols(dim: usize, exprs: Vec<Expr>, domain: DomainBox, symmetric: bool) -> Result<Self> {
        if exprs.len() != dim.pow(3) {
            return Err(Error::DimensionMismatch {
                expected: dim.pow(3),
                found: exprs.len(),
            });
        }
        if domain.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: domain.dim(),
            });
        }
        if let Some(e) = exprs.iter().find(|e| e.arity_used() > dim) {
            return Err(Error::Invalid(format!("symbol `{e}` uses more than {dim} variables")));
        }
        Ok(Christoffel {
            dim,
            kind: ChristoffelKind::Symbols(exprs),
            symmetric,
            domain,
        })
    }

    pub(crate) fn levi_civita_of(metric: MetricField) -> Self {
        Christoffel {
            dim: metric.dim(),
            domain: metric.domain().clone(),
            kind: ChristoffelKind::LeviCivita(metric),
            symmetric: true,
        }
    }

    /// `Γ_α(x)(a, b) = dφ^{-1}[d²φ(a, b) + Γ_β(φ(x))(dφ a, dφ b)]`, the
    /// connection on the source chart that `map` relates to `target`.
    pub fn pullback(target: Christoffel, map: MapSpec) -> Result<Self> {
        if map.input_dim() != map.output_dim() || map.output_dim() != target.dim {
            return Err(Error::DimensionMismatch {
                expected: target.dim,
                found: map.input_dim(),
            });
        }
        Ok(Christoffel {
            dim: map.input_dim(),
            symmetric: target.symmetric,
            domain: map.domain().clone(),
            kind: ChristoffelKind::Pullback {
                target: Box::new(target),
                map,
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ChristoffelKind {
        &self.kind
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_flat(&self) -> bool {
        matches!(self.kind, ChristoffelKind::Flat)
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    fn check_point<S: Scalar>(&self, x: &[S]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let point: Vec<f64> = x.iter().map(Scalar::to_f64).collect();
        if self.domain.contains(&point) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point })
        }
    }

    /// All symbols at `x`, flattened as `(i * n + j) * n + k`.
    pub fn table<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        self.check_point(x)?;
        let n = self.dim;
        match &self.kind {
            ChristoffelKind::Flat => Ok(vec![S::zero(); n * n * n]),
            ChristoffelKind::Symbols(exprs) => Ok(exprs
                .iter()
                .map(|e| e.eval(x))
                .collect::<Result<Vec<_>, _>>()?),
            ChristoffelKind::LeviCivita(metric) => metric.christoffel_table(x),
            ChristoffelKind::Pullback { target, map } => pullback_table(target, map, x),
        }
    }

    /// `Γ(x)(a, b)`.
    pub fn apply<S: Scalar>(&self, x: &[S], a: &[S], b: &[S]) -> Result<Vec<S>> {
        let m = self.matrix(x, a)?;
        Ok(linalg::mat_vec(&m, b))
    }

    /// The matrix of `b ↦ Γ(x)(a, b)`.
    pub fn matrix<S: Scalar>(&self, x: &[S], a: &[S]) -> Result<Matrix<S>> {
        let n = self.dim;
        if a.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: a.len(),
            });
        }
        let t = self.table(x)?;
        Ok((0..n)
            .map(|i| {
                (0..n)
                    .map(|k| {
                        (0..n).fold(S::zero(), |acc, j| {
                            let c = &t[(i * n + j) * n + k];
                            if c.is_zero() {
                                acc
                            } else {
                                acc + c.clone() * a[j].clone()
                            }
                        })
                    })
                    .collect()
            })
            .collect())
    }
}

fn pullback_table<S: Scalar>(target: &Christoffel, map: &MapSpec, x: &[S]) -> Result<Vec<S>> {
    let n = x.len();
    let probe = |dir: &[usize]| -> Result<Vec<Series<S>>> {
        let args: Vec<Series<S>> = (0..n)
            .map(|a| {
                let d = if dir.contains(&a) { S::one() } else { S::zero() };
                Series::new(vec![x[a].clone(), d], 2)
            })
            .collect();
        map.eval_raw(&args)
    };
    let single: Vec<Vec<Series<S>>> = (0..n).map(|j| probe(&[j])).collect::<Result<_>>()?;
    let value: Vec<S> = single
        .first()
        .map(|s| s.iter().map(|c| c.coeff(0)).collect())
        .unwrap_or_default();
    let jac: Matrix<S> = (0..n)
        .map(|i| (0..n).map(|j| single[j][i].coeff(1)).collect())
        .collect();
    // hess[i][j][k] = ∂_j ∂_k φ^i
    let mut hess = vec![vec![vec![S::zero(); n]; n]; n];
    for j in 0..n {
        for i in 0..n {
            hess[i][j][j] = single[j][i].coeff(2).scale_int(2);
        }
        for k in j + 1..n {
            let both = probe(&[j, k])?;
            for i in 0..n {
                let v = both[i].coeff(2) - single[j][i].coeff(2) - single[k][i].coeff(2);
                hess[i][j][k] = v.clone();
                hess[i][k][j] = v;
            }
        }
    }
    let tb = target.table(&value)?;
    let mut rhs = linalg::zeros::<S>(n, n * n);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let mut acc = hess[i][j][k].clone();
                for p in 0..n {
                    for q in 0..n {
                        let c = &tb[(i * n + p) * n + q];
                        if !c.is_zero() {
                            acc = acc + c.clone() * jac[p][j].clone() * jac[q][k].clone();
                        }
                    }
                }
                rhs[i][j * n + k] = acc;
            }
        }
    }
    let sol = linalg::solve(&jac, &rhs)?;
    Ok(sol.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum ComponentsKind {
    /// Components induced by a linear connection on the base.
    Lifted(Christoffel),
    /// Pointwise `λ M^i + (1 − λ) M̄^i`.
    Combination {
        first: Box<ConnectionComponents>,
        second: Box<ConnectionComponents>,
        lambda: Rational,
    },
}

/// The fields `M^1 .. M^k` of a connection map on `T^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionComponents {
    order: usize,
    dim: usize,
    kind: ComponentsKind,
}

/// Output blocks `w_1 .. w_k` of the connection map, all over `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionMapValue<S> {
    pub base: Vec<S>,
    pub blocks: Vec<Vec<S>>,
}

pub fn lift_connection(gamma: &Christoffel, k: usize) -> Result<ConnectionComponents> {
    if k == 0 {
        return Err(Error::InvalidOrder(0));
    }
    Ok(ConnectionComponents {
        order: k,
        dim: gamma.dim(),
        kind: ComponentsKind::Lifted(gamma.clone()),
    })
}

/// Componentwise convex combination; `λ` must lie in `[0, 1]`.
pub fn convex_combine(
    c1: &ConnectionComponents,
    c2: &ConnectionComponents,
    lambda: Rational,
) -> Result<ConnectionComponents> {
    let zero = Rational::from_integer(0.into());
    let one = Rational::from_integer(1.into());
    if lambda < zero || lambda > one {
        return Err(Error::WeightOutOfRange(Scalar::to_f64(&lambda)));
    }
    affine_combine(c1, c2, lambda)
}

/// Like [`convex_combine`] without the range restriction.
pub fn affine_combine(
    c1: &ConnectionComponents,
    c2: &ConnectionComponents,
    lambda: Rational,
) -> Result<ConnectionComponents> {
    if c1.order != c2.order {
        return Err(Error::OrderMismatch {
            expected: c1.order,
            found: c2.order,
        });
    }
    if c1.dim != c2.dim {
        return Err(Error::DimensionMismatch {
            expected: c1.dim,
            found: c2.dim,
        });
    }
    Ok(ConnectionComponents {
        order: c1.order,
        dim: c1.dim,
        kind: ComponentsKind::Combination {
            first: Box::new(c1.clone()),
            second: Box::new(c2.clone()),
            lambda,
        },
    })
}

impl ConnectionComponents {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &ComponentsKind {
        &self.kind
    }

    /// Same fields, restricted to orders `1..=k`.
    pub fn with_order(&self, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidOrder(0));
        }
        let kind = match &self.kind {
            ComponentsKind::Lifted(g) => ComponentsKind::Lifted(g.clone()),
            ComponentsKind::Combination { first, second, lambda } => ComponentsKind::Combination {
                first: Box::new(first.with_order(k)?),
                second: Box::new(second.with_order(k)?),
                lambda: lambda.clone(),
            },
        };
        Ok(ConnectionComponents {
            order: k,
            dim: self.dim,
            kind,
        })
    }

    /// `M^1(x, ξ_1), …, M^r(x, ξ_1, …, ξ_r)` for `r = xi.len()`.
    pub fn matrices<S: Scalar>(&self, x: &[S], xi: &[Vec<S>]) -> Result<Vec<Matrix<S>>> {
        if xi.len() > self.order {
            return Err(Error::OrderMismatch {
                expected: self.order,
                found: xi.len(),
            });
        }
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        match &self.kind {
            ComponentsKind::Lifted(gamma) => lifted_matrices(gamma, x, xi),
            ComponentsKind::Combination { first, second, lambda } => {
                let a = first.matrices(x, xi)?;
                let b = second.matrices(x, xi)?;
                let l = S::from_rational(lambda);
                let r = S::one() - l.clone();
                Ok(a.into_iter()
                    .zip(b)
                    .map(|(ma, mb)| {
                        ma.into_iter()
                            .zip(mb)
                            .map(|(ra, rb)| {
                                ra.into_iter()
                                    .zip(rb)
                                    .map(|(u, v)| l.clone() * u + r.clone() * v)
                                    .collect()
                            })
                            .collect()
                    })
                    .collect())
            }
        }
    }

    /// `M^i(u) y` for a single order.
    pub fn component<S: Scalar>(&self, i: usize, x: &[S], xi: &[Vec<S>], y: &[S]) -> Result<Vec<S>> {
        if i == 0 || i > xi.len() {
            return Err(Error::InvalidOrder(i));
        }
        let m = self.matrices(x, &xi[..i])?;
        Ok(linalg::mat_vec(&m[i - 1], y))
    }
}

/// Evaluates the lifting recursion along the polynomial curve
/// `γ(t) = x + Σ t^i ξ_i`. With `G(t) = Γ(γ(t))(γ'(t), ·)`, the series
/// `W_1 = G`, `W_j = (W_{j-1}' + G W_{j-1}) / j` satisfy `M^j(u) = W_j(0)`:
/// the slot derivatives `∂_i M^{j-1}(·, iξ_i)` sum to the `t`-derivative
/// along the curve.
fn lifted_matrices<S: Scalar>(gamma: &Christoffel, x: &[S], xi: &[Vec<S>]) -> Result<Vec<Matrix<S>>> {
    let r = xi.len();
    let n = x.len();
    if r == 0 {
        return Ok(Vec::new());
    }
    if gamma.is_flat() {
        gamma.check_point(x)?;
        return Ok(vec![linalg::zeros(n, n); r]);
    }
    let curve: Vec<Series<S>> = (0..n)
        .map(|a| {
            let coeffs = std::iter::once(x[a].clone())
                .chain(xi.iter().map(|v| v[a].clone()))
                .collect();
            Series::new(coeffs, r)
        })
        .collect();
    let velocity: Vec<Series<S>> = curve.iter().map(Series::derivative).collect();
    let point: Vec<Series<S>> = curve.iter().map(|c| c.truncate(r - 1)).collect();
    let g = gamma.matrix(&point, &velocity)?;
    let constant = |w: &Matrix<Series<S>>| -> Matrix<S> {
        w.iter().map(|row| row.iter().map(|c| c.coeff(0)).collect()).collect()
    };
    let mut w = g.clone();
    let mut out = vec![constant(&w)];
    for j in 2..=r {
        let gw = linalg::mat_mul(&g, &w);
        w = w
            .iter()
            .zip(gw)
            .map(|(row, grow)| {
                row.iter()
                    .zip(grow)
                    .map(|(c, gc)| (c.derivative() + gc).div_int(j as i64))
                    .collect()
            })
            .collect();
        out.push(constant(&w));
    }
    Ok(out)
}

/// Blocks `η_i + Σ_{j=1}^{i-1} M^j(u) η_{i-j} + M^i(u) y`, `i = 1..k`.
pub fn apply_connection_map<S: Scalar>(
    c: &ConnectionComponents,
    t: &TangentOfTk<S>,
) -> Result<ConnectionMapValue<S>> {
    let u = t.base();
    if u.dim() != c.dim() {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: u.dim(),
        });
    }
    let k = t.order();
    let m = c.matrices(u.base(), u.components())?;
    let blocks = (1..=k)
        .map(|i| {
            (1..=i).fold(t.eta(i).to_vec(), |acc, j| {
                linalg::add(&acc, &linalg::mat_vec(&m[j - 1], t.eta(i - j)))
            })
        })
        .collect();
    Ok(ConnectionMapValue {
        base: u.base().to_vec(),
        blocks,
    })
}

/// `(u; y, η_1, …, η_k) ↦ (u; 0, y, η_1, …, η_{k-1})`, applied `a` times.
pub fn vertical_shift<S: Scalar>(t: &TangentOfTk<S>, a: usize) -> Result<TangentOfTk<S>> {
    let k = t.order();
    if a == 0 || a > k {
        return Err(Error::InvalidOrder(a));
    }
    let n = t.base().dim();
    // slot i (0 = y) moves to slot i + a
    let slot = |i: usize| -> Vec<S> {
        if i < a {
            vec![S::zero(); n]
        } else {
            t.eta(i - a).to_vec()
        }
    };
    TangentOfTk::new(t.base().clone(), slot(0), (1..=k).map(slot).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr_with;
    use crate::jets::NaturalJet;
    use crate::scalar::Backend;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    fn constant_gamma(c: &str) -> Christoffel {
        let e = parse_expr_with(c, 1, Backend::Exact).unwrap();
        Christoffel::from_symbols(1, vec![e], DomainBox::unbounded(1), true).unwrap()
    }

    #[test]
    fn flat_lift_is_zero() {
        let c = lift_connection(&Christoffel::flat(2), 3).unwrap();
        let xi = vec![vec![q(1, 1), q(2, 1)]; 3];
        let m = c.matrices(&[q(0, 1), q(0, 1)], &xi).unwrap();
        assert!(m.iter().flatten().flatten().all(Scalar::is_zero));
    }

    #[test]
    fn first_component_is_gamma() {
        let g = constant_gamma("3");
        let c = lift_connection(&g, 1).unwrap();
        let m = c.component(1, &[q(1, 2)], &[vec![q(2, 1)]], &[q(5, 1)]).unwrap();
        assert_eq!(m, vec![q(30, 1)]);
    }

    #[test]
    fn second_component_for_constant_symbol() {
        // M^2(x, ξ1, ξ2) y = (c ξ2 + c²ξ1²/2) y
        let g = constant_gamma("3");
        let c = lift_connection(&g, 2).unwrap();
        let xi = vec![vec![q(2, 1)], vec![q(-1, 1)]];
        let m = c.component(2, &[q(0, 1)], &xi, &[q(1, 1)]).unwrap();
        assert_eq!(m, vec![q(-3, 1) + q(9 * 4, 2)]);
    }

    #[test]
    fn connection_map_example() {
        let g = constant_gamma("2");
        let c = lift_connection(&g, 2).unwrap();
        let u = NaturalJet::new(vec![q(0, 1)], vec![vec![q(1, 1)], vec![q(1, 1)]]).unwrap();
        let t = TangentOfTk::new(u, vec![q(1, 1)], vec![vec![q(0, 1)], vec![q(0, 1)]]).unwrap();
        let v = apply_connection_map(&c, &t).unwrap();
        assert_eq!(v.blocks, vec![vec![q(2, 1)], vec![q(2 + 2, 1)]]);
    }

    #[test]
    fn shift_examples() {
        let u = NaturalJet::new(vec![0.0], vec![vec![1.0], vec![1.0]]).unwrap();
        let t = TangentOfTk::new(u, vec![7.0], vec![vec![8.0], vec![9.0]]).unwrap();
        let s1 = vertical_shift(&t, 1).unwrap();
        assert_eq!(s1.y(), &[0.0]);
        assert_eq!(s1.etas(), &[vec![7.0], vec![8.0]]);
        let s2 = vertical_shift(&t, 2).unwrap();
        assert_eq!(s2.etas(), &[vec![0.0], vec![7.0]]);
        assert_eq!(vertical_shift(&s1, 1).unwrap(), s2);
        assert!(vertical_shift(&t, 3).is_err());
    }

    #[test]
    fn combination_weights() {
        let a = lift_connection(&constant_gamma("4"), 2).unwrap();
        let flat = lift_connection(&Christoffel::flat(1), 2).unwrap();
        assert!(convex_combine(&a, &flat, q(3, 2)).is_err());
        let half = convex_combine(&a, &flat, q(1, 2)).unwrap();
        let xi = vec![vec![q(1, 1)], vec![q(1, 3)]];
        let full = a.matrices(&[q(0, 1)], &xi).unwrap();
        let got = half.matrices(&[q(0, 1)], &xi).unwrap();
        for (f, h) in full.iter().zip(&got) {
            assert_eq!(h[0][0].clone() * q(2, 1), f[0][0]);
        }
        let one = convex_combine(&a, &flat, q(1, 1)).unwrap();
        assert_eq!(one.matrices(&[q(0, 1)], &xi).unwrap(), full);
    }

    #[test]
    fn pullback_of_flat_along_cubic() {
        // Γ_α = φ''/φ' for φ(x) = x³ + x
        let map = MapSpec::parse(&["x1^3 + x1"], 1, DomainBox::unbounded(1), Backend::Exact).unwrap();
        let g = Christoffel::pullback(Christoffel::flat(1), map).unwrap();
        let v = g.apply(&[q(1, 2)], &[q(1, 1)], &[q(1, 1)]).unwrap();
        assert_eq!(v, vec![q(3, 1) / q(7, 4)]);
    }
}
