//! Truncated univariate Taylor series over any [`Scalar`].
//!
//! A series carries the coefficients of `t^0 .. t^d` and its truncation
//! degree `d`. Constants and exact polynomials carry no truncation degree;
//! combining a truncated series with one of those keeps the truncation.
//! Series over series give multivariate jets with a separate degree bound per
//! variable, which is how mixed partials `∂s ∂t^i` are read off.

use std::ops::{Add, Mul, Neg, Sub};

use crate::scalar::{MathError, Rational, Scalar};

#[derive(Clone, Debug)]
pub struct Series<S> {
    coeffs: Vec<S>,
    order: Option<usize>,
}

fn min_order(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (Some(x), None) | (None, Some(x)) => Some(x),
        (None, None) => None,
    }
}

impl<S: Scalar> Series<S> {
    /// Series with known coefficients up to `t^order`.
    pub fn new(mut coeffs: Vec<S>, order: usize) -> Self {
        coeffs.truncate(order + 1);
        Series {
            coeffs,
            order: Some(order),
        }
    }

    /// An exact polynomial; never truncated.
    pub fn polynomial(coeffs: Vec<S>) -> Self {
        Series {
            coeffs,
            order: None,
        }
    }

    pub fn constant(c: S) -> Self {
        Series::polynomial(vec![c])
    }

    /// `value + t`, truncated at `order`.
    pub fn variable(value: S, order: usize) -> Self {
        Series::new(vec![value, S::one()], order)
    }

    pub fn order(&self) -> Option<usize> {
        self.order
    }

    pub fn coeff(&self, i: usize) -> S {
        self.coeffs.get(i).cloned().unwrap_or_else(S::zero)
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    /// Number of coefficients a result of this truncation degree holds.
    fn len_for(order: Option<usize>, natural: usize) -> usize {
        match order {
            Some(d) => natural.min(d + 1),
            None => natural,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(Scalar::is_zero)
    }

    /// Term-wise derivative; the truncation degree drops by one.
    pub fn derivative(&self) -> Self {
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, c)| c.scale_int(i as i64))
            .collect();
        Series {
            coeffs,
            order: self.order.map(|d| d.saturating_sub(1)),
        }
    }

    /// Reinterprets the series with a lower truncation degree.
    pub fn truncate(&self, order: usize) -> Self {
        let order = min_order(self.order, Some(order)).unwrap_or(order);
        Series::new(self.coeffs.clone(), order)
    }

    fn map_constant(&self, f: impl Fn(&S) -> Result<S, MathError>) -> Result<Self, MathError> {
        Ok(Series {
            coeffs: vec![f(&self.coeff(0))?],
            order: self.order,
        })
    }

    fn working_order(&self) -> Result<usize, MathError> {
        self.order.ok_or(MathError::UnboundedSeries)
    }

    pub fn recip(&self) -> Result<Self, MathError> {
        let a0 = self.coeff(0);
        if a0.is_zero() {
            return Err(MathError::DivisionByZero);
        }
        if self.is_constant() {
            return self.map_constant(|c| S::one().try_div(c));
        }
        let d = self.working_order()?;
        let inv0 = S::one().try_div(&a0)?;
        let mut b: Vec<S> = Vec::with_capacity(d + 1);
        b.push(inv0.clone());
        for n in 1..=d {
            let mut acc = S::zero();
            for k in 1..=n {
                acc = acc + self.coeff(k) * b[n - k].clone();
            }
            b.push(-(acc * inv0.clone()));
        }
        Ok(Series::new(b, d))
    }

    fn exp_series(&self) -> Result<Self, MathError> {
        if self.is_constant() {
            return self.map_constant(Scalar::exp);
        }
        let d = self.working_order()?;
        let mut e = vec![self.coeff(0).exp()?];
        for n in 1..=d {
            let mut acc = S::zero();
            for k in 1..=n {
                acc = acc + self.coeff(k).scale_int(k as i64) * e[n - k].clone();
            }
            e.push(acc.div_int(n as i64));
        }
        Ok(Series::new(e, d))
    }

    fn ln_series(&self) -> Result<Self, MathError> {
        if self.is_constant() {
            return self.map_constant(Scalar::ln);
        }
        let d = self.working_order()?;
        let a0 = self.coeff(0);
        let mut l = vec![a0.ln()?];
        for n in 1..=d {
            let mut acc = self.coeff(n).scale_int(n as i64);
            for k in 1..n {
                acc = acc - l[k].scale_int(k as i64) * self.coeff(n - k);
            }
            l.push(acc.try_div(&a0.scale_int(n as i64))?);
        }
        Ok(Series::new(l, d))
    }

    fn sin_cos(&self) -> Result<(Self, Self), MathError> {
        if self.is_constant() {
            return Ok((
                self.map_constant(Scalar::sin)?,
                self.map_constant(Scalar::cos)?,
            ));
        }
        let d = self.working_order()?;
        let a0 = self.coeff(0);
        let mut s = vec![a0.sin()?];
        let mut c = vec![a0.cos()?];
        for n in 1..=d {
            let mut sn = S::zero();
            let mut cn = S::zero();
            for k in 1..=n {
                let ka = self.coeff(k).scale_int(k as i64);
                sn = sn + ka.clone() * c[n - k].clone();
                cn = cn - ka * s[n - k].clone();
            }
            s.push(sn.div_int(n as i64));
            c.push(cn.div_int(n as i64));
        }
        Ok((Series::new(s, d), Series::new(c, d)))
    }

    fn sqrt_series(&self) -> Result<Self, MathError> {
        if self.is_constant() {
            return self.map_constant(Scalar::sqrt);
        }
        let d = self.working_order()?;
        let r0 = self.coeff(0).sqrt()?;
        if r0.is_zero() {
            return Err(MathError::SqrtAtZero);
        }
        let two_r0 = r0.scale_int(2);
        let mut r = vec![r0];
        for n in 1..=d {
            let mut acc = self.coeff(n);
            for k in 1..n {
                acc = acc - r[k].clone() * r[n - k].clone();
            }
            r.push(acc.try_div(&two_r0)?);
        }
        Ok(Series::new(r, d))
    }
}

impl<S: Scalar> PartialEq for Series<S> {
    fn eq(&self, other: &Self) -> bool {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n).all(|i| self.coeff(i) == other.coeff(i))
    }
}

impl<S: Scalar> Add for Series<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let order = min_order(self.order, rhs.order);
        let len = Self::len_for(order, self.coeffs.len().max(rhs.coeffs.len()));
        let coeffs = (0..len).map(|i| self.coeff(i) + rhs.coeff(i)).collect();
        Series { coeffs, order }
    }
}

impl<S: Scalar> Sub for Series<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let order = min_order(self.order, rhs.order);
        let len = Self::len_for(order, self.coeffs.len().max(rhs.coeffs.len()));
        let coeffs = (0..len).map(|i| self.coeff(i) - rhs.coeff(i)).collect();
        Series { coeffs, order }
    }
}

impl<S: Scalar> Mul for Series<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let order = min_order(self.order, rhs.order);
        if self.coeffs.is_empty() || rhs.coeffs.is_empty() {
            return Series {
                coeffs: Vec::new(),
                order,
            };
        }
        let len = Self::len_for(order, self.coeffs.len() + rhs.coeffs.len() - 1);
        let mut coeffs = vec![S::zero(); len];
        for (i, a) in self.coeffs.iter().enumerate().take(len) {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate().take(len - i) {
                coeffs[i + j] = coeffs[i + j].clone() + a.clone() * b.clone();
            }
        }
        Series { coeffs, order }
    }
}

impl<S: Scalar> Neg for Series<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Series {
            coeffs: self.coeffs.into_iter().map(Neg::neg).collect(),
            order: self.order,
        }
    }
}

impl<S: Scalar> Scalar for Series<S> {
    const EXACT: bool = S::EXACT;

    fn zero() -> Self {
        Series::polynomial(Vec::new())
    }
    fn one() -> Self {
        Series::constant(S::one())
    }
    fn from_rational(r: &Rational) -> Self {
        Series::constant(S::from_rational(r))
    }
    fn from_f64(v: f64) -> Self {
        Series::constant(S::from_f64(v))
    }
    fn try_div(&self, other: &Self) -> Result<Self, MathError> {
        Ok(self.clone() * other.recip()?)
    }
    fn sin(&self) -> Result<Self, MathError> {
        Ok(self.sin_cos()?.0)
    }
    fn cos(&self) -> Result<Self, MathError> {
        Ok(self.sin_cos()?.1)
    }
    fn exp(&self) -> Result<Self, MathError> {
        self.exp_series()
    }
    fn ln(&self) -> Result<Self, MathError> {
        self.ln_series()
    }
    fn sqrt(&self) -> Result<Self, MathError> {
        self.sqrt_series()
    }
    fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Scalar::is_zero)
    }
    fn to_f64(&self) -> f64 {
        self.coeff(0).to_f64()
    }
    fn magnitude(&self) -> f64 {
        self.coeff(0).magnitude()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    #[test]
    fn product_truncates() {
        // (t + t^2)^2 = t^2 + 2t^3 + t^4, truncated at degree 3
        let c = Series::new(vec![q(0, 1), q(1, 1), q(1, 1)], 3);
        let sq = c.clone() * c;
        assert_eq!(sq.coeffs(), &[q(0, 1), q(0, 1), q(1, 1), q(2, 1)]);
    }

    #[test]
    fn recip_of_one_minus_t() {
        let s = Series::new(vec![q(1, 1), q(-1, 1)], 5);
        let r = s.recip().unwrap();
        for i in 0..=5 {
            assert_eq!(r.coeff(i), q(1, 1));
        }
        assert_eq!(Series::<Rational>::new(vec![q(0, 1), q(1, 1)], 3).recip(), Err(MathError::DivisionByZero));
    }

    #[test]
    fn transcendental_coefficients_match_known_expansions() {
        let t = Series::variable(0.0f64, 6);
        let e = t.exp().unwrap();
        let s = t.sin().unwrap();
        let c = t.cos().unwrap();
        let fact = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0];
        for n in 0..=6 {
            assert!((e.coeff(n) - 1.0 / fact[n]).abs() < 1e-15);
        }
        assert!((s.coeff(3) + 1.0 / 6.0).abs() < 1e-15);
        assert!((c.coeff(4) - 1.0 / 24.0).abs() < 1e-15);
        let one_plus_t = Series::variable(1.0f64, 5);
        let l = one_plus_t.ln().unwrap();
        assert!((l.coeff(3) - 1.0 / 3.0).abs() < 1e-15);
        assert!((l.coeff(4) + 1.0 / 4.0).abs() < 1e-15);
        let r = one_plus_t.sqrt().unwrap();
        let rr = r.clone() * r;
        for n in 0..=5 {
            let expect = if n <= 1 { 1.0 } else { 0.0 };
            assert!((rr.coeff(n) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn exact_series_refuses_transcendentals() {
        let t = Series::variable(q(1, 2), 3);
        assert_eq!(t.sin(), Err(MathError::NotExact("sin")));
        assert_eq!(Series::polynomial(vec![1.0, 1.0]).exp(), Err(MathError::UnboundedSeries));
    }

    #[test]
    fn nested_series_reads_mixed_partials() {
        // f(t, s) = (1 + t + s)^3; coefficient of t^1 s^1 is 6
        let inner = |c0: i64, c1: i64| Series::new(vec![q(c0, 1), q(c1, 1)], 1);
        let t = Series::new(vec![inner(1, 1), inner(1, 0)], 2);
        let cube = t.powi(3);
        assert_eq!(cube.coeff(1).coeff(1), q(6, 1));
        assert_eq!(cube.coeff(2).coeff(0), q(3, 1));
    }
}
