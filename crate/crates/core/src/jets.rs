//! Jets of curves, partitions and the higher-order chain rule.

use crate::error::{Error, Result};
use crate::expr::DerivativeTower;
use crate::scalar::{factorial, factorial_s, Rational, Scalar};

/// Non-decreasing tuple of positive integers summing to its order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    parts: Vec<usize>,
}

impl Partition {
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        if parts.is_empty() || parts.contains(&0) {
            return Err(Error::Invalid(format!("not a partition: {parts:?}")));
        }
        parts.sort_unstable();
        Ok(Partition { parts })
    }

    pub fn parts(&self) -> &[usize] {
        &self.parts
    }

    /// The integer being partitioned.
    pub fn order(&self) -> usize {
        self.parts.iter().sum()
    }

    /// Number of parts.
    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    /// `m_1 .. m_k`, where `m_j` counts parts equal to `j`.
    pub fn multiplicities(&self) -> Vec<usize> {
        let mut m = vec![0; self.order()];
        for &p in &self.parts {
            m[p - 1] += 1;
        }
        m
    }
}

/// All partitions of `k` in lexicographic order.
pub fn partitions_of_order(k: usize) -> Result<Vec<Partition>> {
    if k == 0 {
        return Err(Error::InvalidOrder(0));
    }
    fn rec(rest: usize, min: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if rest == 0 {
            out.push(Partition { parts: cur.clone() });
            return;
        }
        for p in min..=rest {
            if p < rest && rest - p < p {
                continue;
            }
            cur.push(p);
            rec(rest - p, p, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(k, 1, &mut Vec::new(), &mut out);
    Ok(out)
}

/// `k! / (l_1! … l_i! · m_1! … m_k!)`.
pub fn faa_di_bruno_coefficient(p: &Partition) -> Rational {
    let mut den = num_bigint::BigInt::from(1);
    for &l in &p.parts {
        den *= factorial(l);
    }
    for m in p.multiplicities() {
        den *= factorial(m);
    }
    Rational::new(factorial(p.order()), den)
}

/// A point of `T^k` in natural coordinates: base `x` and scaled
/// derivatives `ξ_i = γ^(i)(0) / i!`.
#[derive(Debug, Clone, PartialEq)]
pub struct NaturalJet<S> {
    base: Vec<S>,
    comps: Vec<Vec<S>>,
}

impl<S: Scalar> NaturalJet<S> {
    pub fn new(base: Vec<S>, comps: Vec<Vec<S>>) -> Result<Self> {
        if comps.is_empty() {
            return Err(Error::InvalidOrder(0));
        }
        if let Some(c) = comps.iter().find(|c| c.len() != base.len()) {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                found: c.len(),
            });
        }
        Ok(NaturalJet { base, comps })
    }

    /// From raw derivatives `γ^(1)(0) .. γ^(k)(0)`.
    pub fn from_raw(base: Vec<S>, raw: Vec<Vec<S>>) -> Result<Self> {
        let comps = raw
            .into_iter()
            .enumerate()
            .map(|(i, v)| {
                let f: S = factorial_s(i + 1);
                v.iter().map(|c| c.try_div(&f)).collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(base, comps)
    }

    pub fn order(&self) -> usize {
        self.comps.len()
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn base(&self) -> &[S] {
        &self.base
    }

    /// Scaled component `ξ_i`, `1 ≤ i ≤ order`.
    pub fn xi(&self, i: usize) -> &[S] {
        &self.comps[i - 1]
    }

    pub fn components(&self) -> &[Vec<S>] {
        &self.comps
    }

    /// Raw derivative `γ^(i)(0) = i! ξ_i`; `i = 0` gives the base.
    pub fn raw(&self, i: usize) -> Vec<S> {
        if i == 0 {
            return self.base.clone();
        }
        let f: S = factorial_s(i);
        self.comps[i - 1].iter().map(|c| c.clone() * f.clone()).collect()
    }

    /// Coefficients `x, ξ_1, …, ξ_k` of the polynomial representative.
    pub fn curve(&self) -> Vec<Vec<S>> {
        std::iter::once(self.base.clone())
            .chain(self.comps.iter().cloned())
            .collect()
    }
}

/// A tangent vector `(u; y, η_1, …, η_k)` at a point `u` of `T^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentOfTk<S> {
    base: NaturalJet<S>,
    y: Vec<S>,
    eta: Vec<Vec<S>>,
}

impl<S: Scalar> TangentOfTk<S> {
    pub fn new(base: NaturalJet<S>, y: Vec<S>, eta: Vec<Vec<S>>) -> Result<Self> {
        if eta.len() != base.order() {
            return Err(Error::OrderMismatch {
                expected: base.order(),
                found: eta.len(),
            });
        }
        let n = base.dim();
        if let Some(v) = std::iter::once(&y).chain(&eta).find(|v| v.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: v.len(),
            });
        }
        Ok(TangentOfTk { base, y, eta })
    }

    pub fn base(&self) -> &NaturalJet<S> {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.base.order()
    }

    pub fn y(&self) -> &[S] {
        &self.y
    }

    /// `η_i` for `1 ≤ i ≤ k`; `η_0` is read as `y`.
    pub fn eta(&self, i: usize) -> &[S] {
        if i == 0 {
            &self.y
        } else {
            &self.eta[i - 1]
        }
    }

    pub fn etas(&self) -> &[Vec<S>] {
        &self.eta
    }
}

/// Jet of `g ∘ γ` from the derivative tower of `g` at `γ(0)`.
pub fn compose_jet<S: Scalar>(tower: &DerivativeTower<S>, j: &NaturalJet<S>) -> Result<NaturalJet<S>> {
    let k = j.order();
    if tower.order() < k {
        return Err(Error::OrderMismatch {
            expected: k,
            found: tower.order(),
        });
    }
    if tower.input_dim() != j.dim() {
        return Err(Error::DimensionMismatch {
            expected: tower.input_dim(),
            found: j.dim(),
        });
    }
    if tower.base() != j.base() {
        return Err(Error::Invalid("tower and jet have different base points".into()));
    }
    let raw: Vec<Vec<S>> = (1..=k).map(|l| j.raw(l)).collect();
    let m = tower.output_dim();
    let mut out = Vec::with_capacity(k);
    for order in 1..=k {
        let mut acc = vec![S::zero(); m];
        for p in partitions_of_order(order)? {
            let a = S::from_rational(&faa_di_bruno_coefficient(&p));
            let args: Vec<&[S]> = p.parts().iter().map(|&l| raw[l - 1].as_slice()).collect();
            let term = tower.tensor(p.len()).apply(&args);
            for (x, t) in acc.iter_mut().zip(term) {
                *x = x.clone() + a.clone() * t;
            }
        }
        out.push(acc);
    }
    NaturalJet::from_raw(tower.value().to_vec(), out)
}

/// Projection `T^j → T^i`.
pub fn truncate<S: Scalar>(j: &NaturalJet<S>, i: usize) -> Result<NaturalJet<S>> {
    if i == 0 || i > j.order() {
        return Err(Error::InvalidOrder(i));
    }
    NaturalJet::new(j.base.clone(), j.comps[..i].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{DomainBox, MapSpec};
    use crate::scalar::Backend;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    fn parts(k: usize) -> Vec<Vec<usize>> {
        partitions_of_order(k).unwrap().into_iter().map(|p| p.parts).collect()
    }

    #[test]
    fn enumerates_partitions() {
        assert_eq!(parts(1), vec![vec![1]]);
        assert_eq!(parts(3), vec![vec![1, 1, 1], vec![1, 2], vec![3]]);
        assert_eq!(
            parts(4),
            vec![vec![1, 1, 1, 1], vec![1, 1, 2], vec![1, 3], vec![2, 2], vec![4]]
        );
        assert_eq!(partitions_of_order(0), Err(Error::InvalidOrder(0)));
    }

    #[test]
    fn coefficient_examples() {
        let c = |v: Vec<usize>| faa_di_bruno_coefficient(&Partition::new(v).unwrap());
        assert_eq!(c(vec![5]), q(1, 1));
        assert_eq!(c(vec![1; 5]), q(1, 1));
        assert_eq!(c(vec![1, 2]), q(3, 1));
        assert_eq!(c(vec![2, 2]), q(3, 1));
        assert_eq!(c(vec![1, 1, 2]), q(6, 1));
    }

    #[test]
    fn square_of_curve() {
        let m = MapSpec::parse(&["x1^2"], 1, DomainBox::unbounded(1), Backend::Exact).unwrap();
        let j = NaturalJet::new(vec![q(0, 1)], vec![vec![q(1, 1)], vec![q(1, 1)], vec![q(0, 1)]]).unwrap();
        let t = DerivativeTower::compute(&m, j.base(), 3).unwrap();
        let out = compose_jet(&t, &j).unwrap();
        assert_eq!(out.components(), &[vec![q(0, 1)], vec![q(1, 1)], vec![q(2, 1)]]);
        assert_eq!(out.raw(3), vec![q(12, 1)]);
    }

    #[test]
    fn truncation() {
        let j = NaturalJet::new(vec![1.0], vec![vec![2.0], vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(truncate(&j, 3).unwrap(), j);
        assert_eq!(truncate(&j, 1).unwrap().components(), &[vec![2.0]]);
        assert!(truncate(&j, 0).is_err());
        assert!(truncate(&j, 4).is_err());
    }

    #[test]
    fn order_mismatch_is_rejected() {
        let m = MapSpec::identity(1, DomainBox::unbounded(1));
        let t = DerivativeTower::compute(&m, &[0.0], 1).unwrap();
        let j = NaturalJet::new(vec![0.0], vec![vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(compose_jet(&t, &j), Err(Error::OrderMismatch { .. })));
    }
}
