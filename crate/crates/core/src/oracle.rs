//! Independent oracles: brute-force polynomial expansion in exact
//! arithmetic, central finite differences, and the two auxiliary lemmas on
//! mixed partials.
//!
//! The polynomial oracle touches only [`Expr`] trees and rationals; it does
//! not use the series, tensor or jet code it is meant to judge.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::connections::ConnectionComponents;
use crate::error::{Error, Result};
use crate::expr::{Expr, MapSpec, SymTensor};
use crate::scalar::{factorial, Rational};
use crate::trivialization::build_mu;

/// Multivariate polynomial with rational coefficients, truncated at a total
/// degree after every operation.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySeries {
    nvars: usize,
    max_degree: u32,
    terms: BTreeMap<Vec<u32>, Rational>,
}

impl PolySeries {
    pub fn zero(nvars: usize, max_degree: u32) -> Self {
        PolySeries {
            nvars,
            max_degree,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, max_degree: u32, c: Rational) -> Self {
        let mut p = Self::zero(nvars, max_degree);
        p.add_term(vec![0; nvars], c);
        p
    }

    /// `c · Π v_i^{e_i}`.
    pub fn monomial(nvars: usize, max_degree: u32, exps: Vec<u32>, c: Rational) -> Self {
        assert_eq!(exps.len(), nvars);
        let mut p = Self::zero(nvars, max_degree);
        p.add_term(exps, c);
        p
    }

    pub fn max_degree(&self) -> u32 {
        self.max_degree
    }

    pub fn total_degree(&self) -> u32 {
        self.terms.keys().map(|e| e.iter().sum()).max().unwrap_or(0)
    }

    fn add_term(&mut self, exps: Vec<u32>, c: Rational) {
        if c.is_zero() || exps.iter().sum::<u32>() > self.max_degree {
            return;
        }
        let entry = self.terms.entry(exps).or_insert_with(Rational::zero);
        *entry += c;
        if entry.is_zero() {
            self.terms.retain(|_, v| !v.is_zero());
        }
    }

    pub fn coeff(&self, exps: &[u32]) -> Rational {
        self.terms.get(exps).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn as_constant(&self) -> Option<Rational> {
        if self.terms.keys().all(|e| e.iter().all(|&d| d == 0)) {
            Some(self.coeff(&vec![0; self.nvars]))
        } else {
            None
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (e, c) in &other.terms {
            out.add_term(e.clone(), c.clone());
        }
        out
    }

    pub fn neg(&self) -> Self {
        self.scale(&-Rational::one())
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Rational) -> Self {
        let mut out = Self::zero(self.nvars, self.max_degree);
        for (e, v) in &self.terms {
            out.add_term(e.clone(), v * c);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars, self.max_degree.min(other.max_degree));
        for (ea, ca) in &self.terms {
            for (eb, cb) in &other.terms {
                let e: Vec<u32> = ea.iter().zip(eb).map(|(a, b)| a + b).collect();
                out.add_term(e, ca * cb);
            }
        }
        out
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut out = Self::constant(self.nvars, self.max_degree, Rational::one());
        for _ in 0..e {
            out = out.mul(self);
        }
        out
    }
}

/// Substitutes polynomials for the variables of a polynomial expression.
pub fn substitute(e: &Expr, args: &[PolySeries]) -> Result<PolySeries> {
    let (nvars, deg) = (args[0].nvars, args[0].max_degree);
    Ok(match e {
        Expr::Var(i) => args[*i].clone(),
        Expr::Const(c) => PolySeries::constant(nvars, deg, c.clone()),
        Expr::Add(a, b) => substitute(a, args)?.add(&substitute(b, args)?),
        Expr::Sub(a, b) => substitute(a, args)?.sub(&substitute(b, args)?),
        Expr::Mul(a, b) => substitute(a, args)?.mul(&substitute(b, args)?),
        Expr::Neg(a) => substitute(a, args)?.neg(),
        Expr::Pow(a, k) => substitute(a, args)?.pow(*k),
        Expr::Div(a, b) => {
            let den = substitute(b, args)?;
            match den.as_constant() {
                Some(c) if !c.is_zero() => substitute(a, args)?.scale(&(Rational::one() / c)),
                _ => return Err(Error::NotPolynomial(format!("division by `{b}`"))),
            }
        }
        Expr::Func(f, _) => return Err(Error::NotPolynomial(f.name().to_string())),
    })
}

fn substitute_map(g: &MapSpec, args: &[PolySeries]) -> Result<Vec<PolySeries>> {
    g.exprs().iter().map(|e| substitute(e, args)).collect()
}

fn univariate_curve(curve: &[Vec<Rational>], a: usize, k: u32) -> PolySeries {
    let mut p = PolySeries::zero(1, k);
    for (i, c) in curve.iter().enumerate() {
        p.add_term(vec![i as u32], c[a].clone());
    }
    p
}

/// Raw derivatives of `g(curve(t))` at 0, orders `0..=k`, by literal
/// expansion.
pub fn poly_compose_oracle(g: &MapSpec, curve: &[Vec<Rational>], k: usize) -> Result<Vec<Vec<Rational>>> {
    let n = g.input_dim();
    if curve.iter().any(|c| c.len() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: curve.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0),
        });
    }
    let args: Vec<PolySeries> = (0..n).map(|a| univariate_curve(curve, a, k as u32)).collect();
    let out = substitute_map(g, &args)?;
    Ok((0..=k)
        .map(|i| {
            let f = Rational::from_integer(factorial(i));
            out.iter().map(|p| p.coeff(&[i as u32]) * &f).collect()
        })
        .collect())
}

fn eval_f64(g: &MapSpec, x: &[f64]) -> Result<Vec<f64>> {
    Ok(g.exprs()
        .iter()
        .map(|e| e.eval(x))
        .collect::<Result<Vec<f64>, _>>()?)
}

/// Central-difference estimate of `d^i m(x)` for `i ∈ {1, 2}`.
pub fn finite_difference_tensor(m: &MapSpec, x: &[f64], order: usize, h: f64) -> Result<SymTensor<f64>> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidOrder(order));
    }
    let n = m.input_dim();
    let reach = order as f64 * h;
    let dom = m.domain();
    if x.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x.len(),
        });
    }
    if (0..n).any(|i| x[i] - reach < dom.lo[i] || x[i] + reach > dom.hi[i]) {
        return Err(Error::MarginViolation {
            point: x.to_vec(),
            margin: reach,
        });
    }
    let shifted = |steps: &[(usize, f64)]| -> Result<Vec<f64>> {
        let mut p = x.to_vec();
        for &(i, d) in steps {
            p[i] += d * h;
        }
        eval_f64(m, &p)
    };
    let out = m.output_dim();
    let size = n.pow(order as u32);
    let mut data = vec![0.0; out * size];
    if order == 1 {
        for j in 0..n {
            let (fp, fm) = (shifted(&[(j, 1.0)])?, shifted(&[(j, -1.0)])?);
            for o in 0..out {
                data[o * size + j] = (fp[o] - fm[o]) / (2.0 * h);
            }
        }
    } else {
        let f0 = eval_f64(m, x)?;
        for j in 0..n {
            for k in j..n {
                let v: Vec<f64> = if j == k {
                    let (fp, fm) = (shifted(&[(j, 1.0)])?, shifted(&[(j, -1.0)])?);
                    (0..out).map(|o| (fp[o] - 2.0 * f0[o] + fm[o]) / (h * h)).collect()
                } else {
                    let pp = shifted(&[(j, 1.0), (k, 1.0)])?;
                    let pm = shifted(&[(j, 1.0), (k, -1.0)])?;
                    let mp = shifted(&[(j, -1.0), (k, 1.0)])?;
                    let mm = shifted(&[(j, -1.0), (k, -1.0)])?;
                    (0..out).map(|o| (pp[o] - pm[o] - mp[o] + mm[o]) / (4.0 * h * h)).collect()
                };
                for o in 0..out {
                    data[o * size + j * n + k] = v[o];
                    data[o * size + k * n + j] = v[o];
                }
            }
        }
    }
    SymTensor::from_data(order, n, out, data)
}

/// Levi-Civita symbols from central differences of the metric entries,
/// flattened as `(i * n + j) * n + k`.
pub fn fd_levi_civita(dim: usize, metric: &[Expr], x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = dim;
    let eval = |p: &[f64]| -> Result<Vec<f64>> {
        Ok(metric
            .iter()
            .map(|e| e.eval(p))
            .collect::<Result<Vec<f64>, _>>()?)
    };
    let g = eval(x)?;
    // dg[j][a * n + b] = ∂_j g_ab
    let mut dg = Vec::with_capacity(n);
    for j in 0..n {
        let mut p = x.to_vec();
        p[j] += h;
        let fp = eval(&p)?;
        p[j] -= 2.0 * h;
        let fm = eval(&p)?;
        dg.push(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect::<Vec<_>>());
    }
    let mut out = vec![0.0; n * n * n];
    for j in 0..n {
        for k in 0..n {
            let rhs: Vec<f64> = (0..n)
                .map(|l| 0.5 * (dg[j][k * n + l] + dg[k][j * n + l] - dg[l][j * n + k]))
                .collect();
            let sol = gauss_f64(&g, n, rhs)?;
            for i in 0..n {
                out[(i * n + j) * n + k] = sol[i];
            }
        }
    }
    Ok(out)
}

fn gauss_f64(a: &[f64], n: usize, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let mut m: Vec<Vec<f64>> = (0..n).map(|i| a[i * n..(i + 1) * n].to_vec()).collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| m[x][c].abs().total_cmp(&m[y][c].abs()))
            .ok_or(Error::Singular)?;
        if m[p][c] == 0.0 {
            return Err(Error::Singular);
        }
        m.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for cc in c..n {
                m[r][cc] -= f * m[c][cc];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Ok(x)
}

/// Both sides of an identity between mixed partials.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaResidual {
    pub lhs: Vec<Rational>,
    pub rhs: Vec<Rational>,
}

impl LemmaResidual {
    pub fn holds(&self) -> bool {
        self.lhs == self.rhs
    }

    pub fn difference(&self) -> f64 {
        self.lhs
            .iter()
            .zip(&self.rhs)
            .map(|(a, b)| num_traits::ToPrimitive::to_f64(&(a - b)).unwrap_or(f64::NAN).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// `∂^k/∂s∂t^{k-1} (f ∘ d̄_k)(0, 0) = (f ∘ μ̄)^(k)(0)` where `μ̄` realizes the
/// lifted coordinates `(x, fibre)` and
/// `d̄_k(t, s) = Σ_{i=0}^{k-1} (t^i / i!)(μ̄^(i)(0) + s μ̄^(i+1)(0))`.
pub fn lemma_a1_check(
    f: &MapSpec,
    c: &ConnectionComponents,
    x: &[Rational],
    fibre: &[Vec<Rational>],
    k: usize,
) -> Result<LemmaResidual> {
    if k < 2 || fibre.len() < k {
        return Err(Error::InvalidOrder(k));
    }
    let mu = build_mu(c, x, &fibre[..k])?;
    let mut coeffs: Vec<Vec<Rational>> = vec![x.to_vec()];
    coeffs.extend(mu.coefficients().iter().cloned());
    let n = x.len();
    let kd = k as u32;
    // variables (t, s)
    let dbar: Vec<PolySeries> = (0..n)
        .map(|a| {
            let mut p = PolySeries::zero(2, kd);
            for i in 0..k {
                p.add_term(vec![i as u32, 0], coeffs[i][a].clone());
                let lift = coeffs[i + 1][a].clone() * Rational::from_integer((i as i64 + 1).into());
                p.add_term(vec![i as u32, 1], lift);
            }
            p
        })
        .collect();
    let left = substitute_map(f, &dbar)?;
    let fk1 = Rational::from_integer(factorial(k - 1));
    let lhs = left.iter().map(|p| p.coeff(&[kd - 1, 1]) * &fk1).collect();
    let mu_t: Vec<PolySeries> = (0..n).map(|a| univariate_curve(&coeffs, a, kd)).collect();
    let right = substitute_map(f, &mu_t)?;
    let fk = Rational::from_integer(factorial(k));
    let rhs = right.iter().map(|p| p.coeff(&[kd]) * &fk).collect();
    Ok(LemmaResidual { lhs, rhs })
}

/// The two identities for the curves
/// `c̄_i(t, s, h) = c̄(t, s) + h · i · t^{i-1} ξ_i`, `c̄ = x + s y + Σ t^r ξ_r`:
/// (i)  `∂^{j+1}/∂h∂s∂t^{j-1} Σ_i f ∘ c̄_i = ∂^{j+1}/∂s∂t^j f ∘ c̄`;
/// (ii) `∂^j/∂h∂t^{j-1} Σ_i f ∘ c̄_i = ∂^j/∂t^j f ∘ c̄` at `s = 0`.
pub fn lemma_a2_check(
    f: &MapSpec,
    x: &[Rational],
    y: &[Rational],
    xi: &[Vec<Rational>],
    j: usize,
    k: usize,
) -> Result<(LemmaResidual, LemmaResidual)> {
    if j == 0 || j > k || xi.len() < k {
        return Err(Error::InvalidOrder(j));
    }
    let n = x.len();
    let deg = j as u32 + 1;
    // variables (t, s, h)
    let cbar: Vec<PolySeries> = (0..n)
        .map(|a| {
            let mut p = PolySeries::zero(3, deg);
            p.add_term(vec![0, 0, 0], x[a].clone());
            p.add_term(vec![0, 1, 0], y[a].clone());
            for r in 1..=k {
                p.add_term(vec![r as u32, 0, 0], xi[r - 1][a].clone());
            }
            p
        })
        .collect();
    let mut sum: Vec<PolySeries> = vec![PolySeries::zero(3, deg); f.output_dim()];
    for i in 1..=k {
        let ci: Vec<PolySeries> = (0..n)
            .map(|a| {
                let bump = PolySeries::monomial(
                    3,
                    deg,
                    vec![i as u32 - 1, 0, 1],
                    xi[i - 1][a].clone() * Rational::from_integer((i as i64).into()),
                );
                cbar[a].add(&bump)
            })
            .collect();
        for (acc, p) in sum.iter_mut().zip(substitute_map(f, &ci)?) {
            *acc = acc.add(&p);
        }
    }
    let plain = substitute_map(f, &cbar)?;
    let jd = j as u32;
    let fj1 = Rational::from_integer(factorial(j - 1));
    let fj = Rational::from_integer(factorial(j));
    let first = LemmaResidual {
        lhs: sum.iter().map(|p| p.coeff(&[jd - 1, 1, 1]) * &fj1).collect(),
        rhs: plain.iter().map(|p| p.coeff(&[jd, 1, 0]) * &fj).collect(),
    };
    let second = LemmaResidual {
        lhs: sum.iter().map(|p| p.coeff(&[jd - 1, 0, 1]) * &fj1).collect(),
        rhs: plain.iter().map(|p| p.coeff(&[jd, 0, 0]) * &fj).collect(),
    };
    Ok((first, second))
}
