//! Connection-induced vector bundle charts on `T^k`.
//!
//! Fibre coordinates are `z^1 = ξ_1` and
//! `z^i = (1/i) Σ_{m=0}^{i-1} M^m(u) γ^(i-m)(0) / (i-m-1)!` with `M^0 = id`.
//! Since `γ^(r)(0) / (r-1)! = r ξ_r`, this is computed on the scaled jet.

use crate::connections::ConnectionComponents;
use crate::error::{Error, Result};
use crate::expr::MapSpec;
use crate::jets::NaturalJet;
use crate::linalg;
use crate::morphisms::pushforward_natural;
use crate::report::{CheckRecord, Residual, Settings};
use crate::scalar::Scalar;

/// Base point and fibre `(ξ_1, z^2, …, z^k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedCoordinates<S> {
    base: Vec<S>,
    fibre: Vec<Vec<S>>,
}

impl<S: Scalar> LiftedCoordinates<S> {
    pub fn new(base: Vec<S>, fibre: Vec<Vec<S>>) -> Result<Self> {
        if fibre.is_empty() {
            return Err(Error::InvalidOrder(0));
        }
        if let Some(f) = fibre.iter().find(|f| f.len() != base.len()) {
            return Err(Error::DimensionMismatch {
                expected: base.len(),
                found: f.len(),
            });
        }
        Ok(LiftedCoordinates { base, fibre })
    }

    pub fn base(&self) -> &[S] {
        &self.base
    }

    pub fn order(&self) -> usize {
        self.fibre.len()
    }

    /// Block `i` (`z^i`, with `z^1 = ξ_1`), `1 ≤ i ≤ order`.
    pub fn z(&self, i: usize) -> &[S] {
        &self.fibre[i - 1]
    }

    pub fn fibre(&self) -> &[Vec<S>] {
        &self.fibre
    }

    /// Keeps the first `i` fibre blocks.
    pub fn truncate(&self, i: usize) -> Result<Self> {
        if i == 0 || i > self.order() {
            return Err(Error::InvalidOrder(i));
        }
        Self::new(self.base.clone(), self.fibre[..i].to_vec())
    }
}

/// The polynomial curve `μ̄_k(t) = x + Σ t^i c_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveMu<S> {
    base: Vec<S>,
    coeffs: Vec<Vec<S>>,
}

impl<S: Scalar> CurveMu<S> {
    pub fn base(&self) -> &[S] {
        &self.base
    }

    /// `c_1 .. c_k`.
    pub fn coefficients(&self) -> &[Vec<S>] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }

    /// Raw derivative `μ̄^(i)(0)`.
    pub fn derivative_at_zero(&self, i: usize) -> Vec<S> {
        self.jet().raw(i)
    }

    pub fn jet(&self) -> NaturalJet<S> {
        NaturalJet::new(self.base.clone(), self.coeffs.clone())
            .expect("curve has at least one coefficient of base dimension")
    }
}

fn check_order(c: &ConnectionComponents, k: usize, n: usize) -> Result<()> {
    if c.order() < k {
        return Err(Error::OrderMismatch {
            expected: k,
            found: c.order(),
        });
    }
    if c.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: c.dim(),
            found: n,
        });
    }
    Ok(())
}

pub fn trivialize<S: Scalar>(c: &ConnectionComponents, j: &NaturalJet<S>) -> Result<LiftedCoordinates<S>> {
    let k = j.order();
    check_order(c, k, j.dim())?;
    let m = c.matrices(j.base(), &j.components()[..k - 1])?;
    let fibre = (1..=k)
        .map(|i| {
            let mut acc = j.xi(i).iter().map(|v| v.scale_int(i as i64)).collect::<Vec<_>>();
            for (mi, mat) in m.iter().enumerate().take(i - 1) {
                let r = i - mi - 1;
                let term = linalg::mat_vec(mat, j.xi(r));
                acc = linalg::add(&acc, &term.iter().map(|v| v.scale_int(r as i64)).collect::<Vec<_>>());
            }
            acc.iter().map(|v| v.div_int(i as i64)).collect()
        })
        .collect();
    LiftedCoordinates::new(j.base().to_vec(), fibre)
}

/// `c_i = (1/i)(i z^i − Σ_{m=1}^{i-1} M^m(x, c_1..c_m) (i-m) c_{i-m})`, which
/// makes the trivialization of the resulting jet return `fibre` exactly.
pub fn build_mu<S: Scalar>(c: &ConnectionComponents, x: &[S], fibre: &[Vec<S>]) -> Result<CurveMu<S>> {
    let k = fibre.len();
    if k == 0 {
        return Err(Error::InvalidOrder(0));
    }
    check_order(c, k, x.len())?;
    if let Some(f) = fibre.iter().find(|f| f.len() != x.len()) {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: f.len(),
        });
    }
    let mut coeffs: Vec<Vec<S>> = vec![fibre[0].clone()];
    for i in 2..=k {
        let m = c.matrices(x, &coeffs)?;
        let mut acc = fibre[i - 1].iter().map(|v| v.scale_int(i as i64)).collect::<Vec<_>>();
        for (mi, mat) in m.iter().enumerate() {
            let r = i - mi - 1;
            let term = linalg::mat_vec(mat, &coeffs[r - 1]);
            acc = linalg::sub(&acc, &term.iter().map(|v| v.scale_int(r as i64)).collect::<Vec<_>>());
        }
        coeffs.push(acc.iter().map(|v| v.div_int(i as i64)).collect());
    }
    Ok(CurveMu {
        base: x.to_vec(),
        coeffs,
    })
}

pub fn detrivialize<S: Scalar>(c: &ConnectionComponents, l: &LiftedCoordinates<S>) -> Result<NaturalJet<S>> {
    Ok(build_mu(c, l.base(), l.fibre())?.jet())
}

/// Lifted transition `Φ_β ∘ Φ_α^{-1}` over `phi`, compared with the
/// block-diagonal form `(φ(x), dφ ξ_1, …, dφ ξ_k)`. Additivity and
/// homogeneity of the fibre map are checked at the same samples.
pub fn transition_check<S: Scalar>(
    c_alpha: &ConnectionComponents,
    c_beta: &ConnectionComponents,
    phi: &MapSpec,
    settings: &Settings,
) -> Result<CheckRecord> {
    let k = c_alpha.order().min(c_beta.order());
    let n = phi.input_dim();
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    let transition = |x: &[S], f: &[Vec<S>]| -> Result<Vec<Vec<S>>> {
        let l = LiftedCoordinates::new(x.to_vec(), f.to_vec())?;
        let j = detrivialize(c_alpha, &l)?;
        let image = pushforward_natural(phi, &j)?;
        Ok(trivialize(c_beta, &image)?.fibre)
    };
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(phi.domain());
        let f1: Vec<Vec<S>> = rng.vectors(k, n);
        let f2: Vec<Vec<S>> = rng.vectors(k, n);
        let a: S = rng.scalar(-2.0, 2.0);
        let jac = crate::expr::derivative_tensor(phi, &x, 1)?.as_matrix();
        let got = transition(&x, &f1)?;
        let expect: Vec<Vec<S>> = f1.iter().map(|v| linalg::mat_vec(&jac, v)).collect();
        res.observe_blocks(&got, &expect);
        let sum: Vec<Vec<S>> = f1.iter().zip(&f2).map(|(p, q)| linalg::add(p, q)).collect();
        let got2 = transition(&x, &f2)?;
        let got_sum = transition(&x, &sum)?;
        let added: Vec<Vec<S>> = got.iter().zip(&got2).map(|(p, q)| linalg::add(p, q)).collect();
        res.observe_blocks(&got_sum, &added);
        let scaled: Vec<Vec<S>> = f1.iter().map(|v| linalg::scale(&a, v)).collect();
        let got_scaled = transition(&x, &scaled)?;
        let expect_scaled: Vec<Vec<S>> = got.iter().map(|v| linalg::scale(&a, v)).collect();
        res.observe_blocks(&got_scaled, &expect_scaled);
        res.end_sample();
    }
    Ok(res.finish("transition-linearity", k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connections::{lift_connection, Christoffel};
    use crate::expr::{parse_expr_with, DomainBox};
    use crate::scalar::{Backend, Rational};

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    fn constant(c: &str, k: usize) -> ConnectionComponents {
        let e = parse_expr_with(c, 1, Backend::Exact).unwrap();
        let g = Christoffel::from_symbols(1, vec![e], DomainBox::unbounded(1), true).unwrap();
        lift_connection(&g, k).unwrap()
    }

    #[test]
    fn flat_trivialization_is_natural_chart() {
        let c = lift_connection(&Christoffel::flat(2), 3).unwrap();
        let j = NaturalJet::new(vec![q(1, 1), q(0, 1)], vec![vec![q(1, 2), q(1, 3)], vec![q(2, 1), q(-1, 1)], vec![q(0, 1), q(5, 1)]]).unwrap();
        let l = trivialize(&c, &j).unwrap();
        assert_eq!(l.fibre(), j.components());
        assert_eq!(detrivialize(&c, &l).unwrap(), j);
    }

    #[test]
    fn second_coordinate_with_constant_symbol() {
        // γ'(0) = 1, γ''(0) = 2, Γ = c: z² = 1 + c/2
        let c = constant("3", 2);
        let j = NaturalJet::new(vec![q(0, 1)], vec![vec![q(1, 1)], vec![q(1, 1)]]).unwrap();
        let l = trivialize(&c, &j).unwrap();
        assert_eq!(l.z(2), &[q(5, 2)]);
        assert_eq!(l.z(1), &[q(1, 1)]);
    }

    #[test]
    fn mu_curve_for_constant_symbol() {
        let c = constant("1", 2);
        let z = q(3, 2);
        let mu = build_mu(&c, &[q(0, 1)], &[vec![q(1, 1)], vec![z.clone()]]).unwrap();
        assert_eq!(mu.coefficients(), &[vec![q(1, 1)], vec![z.clone() - q(1, 2)]]);
        assert_eq!(mu.derivative_at_zero(2), vec![q(2, 1)]);
        let back = trivialize(&c, &mu.jet()).unwrap();
        assert_eq!(back.z(2), &[z]);
    }

    #[test]
    fn zero_fibre_gives_constant_curve() {
        let c = constant("x1^2 + 1", 4);
        let mu = build_mu(&c, &[q(1, 3)], &vec![vec![q(0, 1)]; 4]).unwrap();
        assert!(mu.coefficients().iter().flatten().all(Scalar::is_zero));
    }

    #[test]
    fn order_one_is_tangent_bundle() {
        let c = constant("x1", 1);
        let j = NaturalJet::new(vec![q(2, 1)], vec![vec![q(7, 1)]]).unwrap();
        assert_eq!(trivialize(&c, &j).unwrap().fibre(), &[vec![q(7, 1)]]);
    }
}
