//! The `k`-th order differential `T^k g` and relatedness of connection maps.

use crate::connections::{apply_connection_map, lift_connection, Christoffel, ConnectionComponents};
use crate::error::{Error, Result};
use crate::expr::{derivative_tensor, DerivativeTower, MapSpec};
use crate::jets::{compose_jet, truncate, NaturalJet, TangentOfTk};
use crate::linalg::{self, Matrix};
use crate::report::{CheckRecord, Residual, Sampler, Settings};
use crate::scalar::Scalar;
use crate::series::Series;
use crate::trivialization::{detrivialize, trivialize, LiftedCoordinates};

/// A map `g` between two charts together with connection data on both.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphismScenario {
    map: MapSpec,
    source: ConnectionComponents,
    target: ConnectionComponents,
    order: usize,
}

impl MorphismScenario {
    pub fn new(
        map: MapSpec,
        source: ConnectionComponents,
        target: ConnectionComponents,
        order: usize,
    ) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidOrder(0));
        }
        if map.input_dim() != source.dim() {
            return Err(Error::DimensionMismatch {
                expected: source.dim(),
                found: map.input_dim(),
            });
        }
        if map.output_dim() != target.dim() {
            return Err(Error::DimensionMismatch {
                expected: target.dim(),
                found: map.output_dim(),
            });
        }
        for c in [&source, &target] {
            if c.order() < order {
                return Err(Error::OrderMismatch {
                    expected: order,
                    found: c.order(),
                });
            }
        }
        Ok(MorphismScenario {
            map,
            source,
            target,
            order,
        })
    }

    /// Lifts both Christoffel fields to order `k`.
    pub fn from_christoffel(map: MapSpec, source: &Christoffel, target: &Christoffel, k: usize) -> Result<Self> {
        Self::new(map, lift_connection(source, k)?, lift_connection(target, k)?, k)
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    pub fn source(&self) -> &ConnectionComponents {
        &self.source
    }

    pub fn target(&self) -> &ConnectionComponents {
        &self.target
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn with_order(&self, k: usize) -> Result<Self> {
        Self::new(
            self.map.clone(),
            self.source.with_order(k)?,
            self.target.with_order(k)?,
            k,
        )
    }
}

/// `[γ, x]_k ↦ [g ∘ γ, g(x)]_k`.
pub fn pushforward_natural<S: Scalar>(g: &MapSpec, j: &NaturalJet<S>) -> Result<NaturalJet<S>> {
    let tower = DerivativeTower::compute(g, j.base(), j.order())?;
    compose_jet(&tower, j)
}

/// `Ψ_β ∘ T^k g ∘ Φ_α^{-1}` in lifted coordinates.
pub fn pushforward_lifted<S: Scalar>(
    s: &MorphismScenario,
    l: &LiftedCoordinates<S>,
) -> Result<LiftedCoordinates<S>> {
    let j = detrivialize(&s.source, l)?;
    let image = pushforward_natural(&s.map, &j)?;
    trivialize(&s.target, &image)
}

fn jacobian<S: Scalar>(g: &MapSpec, x: &[S]) -> Result<Matrix<S>> {
    Ok(derivative_tensor(g, x, 1)?.as_matrix())
}

struct VerticalSample<S> {
    tangent: TangentOfTk<S>,
}

fn sample_tangent<S: Scalar>(rng: &mut Sampler, g: &MapSpec, k: usize) -> Result<VerticalSample<S>> {
    let n = g.input_dim();
    let x: Vec<S> = rng.point(g.domain());
    let u = NaturalJet::new(x, rng.vectors(k, n))?;
    let tangent = TangentOfTk::new(u, rng.vector(n), rng.vectors(k, n))?;
    Ok(VerticalSample { tangent })
}

/// `dg(x)` applied to every block of `K_M(u; y, η)`.
fn source_side<S: Scalar>(s: &MorphismScenario, t: &TangentOfTk<S>) -> Result<Vec<Vec<S>>> {
    let jac = jacobian(&s.map, t.base().base())?;
    Ok(apply_connection_map(&s.source, t)?
        .blocks
        .iter()
        .map(|b| linalg::mat_vec(&jac, b))
        .collect())
}

/// `TT^k g (u; y, η)`: the jet of `s ↦ T^k g(u + s(y, η))`, pushed through
/// the derivative tower of `g` at a base point carrying an `s`-series.
pub fn tangent_pushforward<S: Scalar>(g: &MapSpec, t: &TangentOfTk<S>) -> Result<TangentOfTk<S>> {
    let u = t.base();
    let lift = |a: &[S], b: &[S]| -> Vec<Series<S>> {
        a.iter()
            .zip(b)
            .map(|(p, v)| Series::new(vec![p.clone(), v.clone()], 1))
            .collect()
    };
    let base = lift(u.base(), t.y());
    let comps = (1..=u.order()).map(|i| lift(u.xi(i), t.eta(i))).collect();
    let image = pushforward_natural(g, &NaturalJet::new(base, comps)?)?;
    let part = |v: &[Series<S>], c: usize| -> Vec<S> { v.iter().map(|s| s.coeff(c)).collect() };
    let ubar = NaturalJet::new(
        part(image.base(), 0),
        image.components().iter().map(|v| part(v, 0)).collect(),
    )?;
    TangentOfTk::new(
        ubar,
        part(image.base(), 1),
        image.components().iter().map(|v| part(v, 1)).collect(),
    )
}

/// Barred data `(ū; ȳ, η̄)` from mixed partials of `g ∘ c̄` with
/// `c̄(t, s) = x + s y + Σ t^i (ξ_i + s η_i)`.
pub fn auxiliary_curve_data<S: Scalar>(g: &MapSpec, t: &TangentOfTk<S>) -> Result<TangentOfTk<S>> {
    let u = t.base();
    let k = u.order();
    g.check_domain(u.base())?;
    let args: Vec<Series<Series<S>>> = (0..u.dim())
        .map(|a| {
            let coeffs = (0..=k)
                .map(|i| {
                    let (p, v) = if i == 0 {
                        (u.base()[a].clone(), t.y()[a].clone())
                    } else {
                        (u.xi(i)[a].clone(), t.eta(i)[a].clone())
                    };
                    Series::new(vec![p, v], 1)
                })
                .collect();
            Series::new(coeffs, k)
        })
        .collect();
    let out = g.eval_raw(&args)?;
    let coeff = |i: usize, c: usize| -> Vec<S> { out.iter().map(|o| o.coeff(i).coeff(c)).collect() };
    let ubar = NaturalJet::new(coeff(0, 0), (1..=k).map(|i| coeff(i, 0)).collect())?;
    TangentOfTk::new(ubar, coeff(0, 1), (1..=k).map(|i| coeff(i, 1)).collect())
}

/// `K_N ∘ TT^k g = ⊕ Tg ∘ K_M` at random samples.
pub fn check_g_related_global<S: Scalar>(s: &MorphismScenario, settings: &Settings) -> Result<CheckRecord> {
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let t = sample_tangent::<S>(&mut rng, &s.map, s.order)?.tangent;
        let lhs = apply_connection_map(&s.target, &tangent_pushforward(&s.map, &t)?)?.blocks;
        let rhs = source_side(s, &t)?;
        res.observe_blocks(&lhs, &rhs);
        res.end_sample();
    }
    Ok(res.finish("g-related-global", s.order))
}

/// The local compatibility identity
/// `dg[η_i + Σ M^j η_{i-j} + M^i y] = η̄_i + Σ N^j η̄_{i-j} + N^i ȳ`,
/// with per-order residuals in the record.
pub fn check_g_related_local<S: Scalar>(s: &MorphismScenario, settings: &Settings) -> Result<CheckRecord> {
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let t = sample_tangent::<S>(&mut rng, &s.map, s.order)?.tangent;
        let barred = auxiliary_curve_data(&s.map, &t)?;
        let lhs = source_side(s, &t)?;
        let rhs = apply_connection_map(&s.target, &barred)?.blocks;
        res.observe_blocks(&lhs, &rhs);
        res.end_sample();
    }
    Ok(res.finish("g-related-local", s.order))
}

/// Outcome of lifting a pair of connections and testing relatedness.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedRelatedness {
    /// Relatedness of the base connections (order 1).
    pub base: CheckRecord,
    /// The order-`k` check; absent when the hypothesis already fails.
    pub lifted: Option<CheckRecord>,
}

impl LiftedRelatedness {
    pub fn pass(&self) -> bool {
        self.base.pass && self.lifted.as_ref().is_some_and(|r| r.pass)
    }

    pub fn hypothesis_violated(&self) -> bool {
        !self.base.pass
    }

    pub fn conclusion_violated(&self) -> bool {
        self.base.pass && self.lifted.as_ref().is_some_and(|r| !r.pass)
    }

    /// The record a report should show.
    pub fn record(&self) -> CheckRecord {
        let mut r = self.lifted.clone().unwrap_or_else(|| self.base.clone());
        r.name = "lifted-relatedness".into();
        r
    }
}

pub fn verify_lifted_relatedness<S: Scalar>(
    gamma_m: &Christoffel,
    gamma_n: &Christoffel,
    g: &MapSpec,
    k: usize,
    settings: &Settings,
) -> Result<LiftedRelatedness> {
    let base_scenario = MorphismScenario::from_christoffel(g.clone(), gamma_m, gamma_n, 1)?;
    let base = check_g_related_local::<S>(&base_scenario, settings)?;
    if !base.pass {
        let base = base.with_diagnostic(
            "hypothesis violated: the base connections are not g-related (order 1 fails)",
        );
        return Ok(LiftedRelatedness { base, lifted: None });
    }
    let scenario = MorphismScenario::from_christoffel(g.clone(), gamma_m, gamma_n, k)?;
    let mut lifted = check_g_related_local::<S>(&scenario, settings)?;
    if !lifted.pass {
        let bad: Vec<String> = lifted
            .per_order
            .iter()
            .enumerate()
            .filter(|(_, r)| **r > settings.tolerance)
            .map(|(i, _)| (i + 1).to_string())
            .collect();
        lifted.diagnostic = Some(format!(
            "conclusion violated: base connections are related but the lifts differ at order(s) {}",
            bad.join(", ")
        ));
    }
    Ok(LiftedRelatedness {
        base,
        lifted: Some(lifted),
    })
}

/// Truncation commutes with `T^k g` for one jet; with `lifted`, the same is
/// checked for lifted coordinates `trivialize(source, j)`.
pub fn check_projective_consistency<S: Scalar>(
    g: &MapSpec,
    j: &NaturalJet<S>,
    lifted: Option<&MorphismScenario>,
    tolerance: f64,
) -> Result<CheckRecord> {
    let jmax = j.order();
    if jmax < 2 {
        return Err(Error::InvalidOrder(jmax));
    }
    let mut res = Residual::new(tolerance);
    project_once(g, j, lifted, &mut res)?;
    res.end_sample();
    Ok(res.finish("projective-consistency", jmax))
}

fn project_once<S: Scalar>(
    g: &MapSpec,
    j: &NaturalJet<S>,
    lifted: Option<&MorphismScenario>,
    res: &mut Residual,
) -> Result<()> {
    let jmax = j.order();
    let full = pushforward_natural(g, j)?;
    for i in 1..=jmax {
        let a = truncate(&full, i)?;
        let b = pushforward_natural(g, &truncate(j, i)?)?;
        res.observe_blocks(&a.curve(), &b.curve());
    }
    if let Some(s) = lifted {
        let l = trivialize(s.source(), j)?;
        let image = pushforward_lifted(s, &l)?;
        for i in 1..=jmax {
            let a = image.truncate(i)?;
            let b = pushforward_lifted(&s.with_order(i)?, &l.truncate(i)?)?;
            res.observe_blocks(a.fibre(), b.fibre());
            res.observe_blocks(&[a.base().to_vec()], &[b.base().to_vec()]);
        }
    }
    Ok(())
}

/// Sampled form of [`check_projective_consistency`] at order `jmax`.
pub fn projective_consistency<S: Scalar>(
    g: &MapSpec,
    jmax: usize,
    lifted: Option<&MorphismScenario>,
    settings: &Settings,
) -> Result<CheckRecord> {
    if jmax < 2 {
        return Err(Error::InvalidOrder(jmax));
    }
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(g.domain());
        let j = NaturalJet::new(x, rng.vectors(jmax, g.input_dim()))?;
        project_once(g, &j, lifted, &mut res)?;
        res.end_sample();
    }
    Ok(res.finish("projective-consistency", jmax))
}

/// Fibre behaviour of `T^k g` in lifted coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FibreLinearity {
    /// Distance from `(g(x), dg ξ_1, …, dg ξ_k)`.
    pub block_diagonal: CheckRecord,
    /// Additivity and homogeneity defects of the fibre map.
    pub additivity: CheckRecord,
}

pub fn check_fibre_linearity<S: Scalar>(s: &MorphismScenario, settings: &Settings) -> Result<FibreLinearity> {
    let k = s.order;
    let n = s.map.input_dim();
    let mut rng = settings.sampler();
    let mut diag = Residual::new(settings.tolerance);
    let mut add = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(s.map.domain());
        let f1: Vec<Vec<S>> = rng.vectors(k, n);
        let f2: Vec<Vec<S>> = rng.vectors(k, n);
        let a: S = rng.scalar(-2.0, 2.0);
        let push = |f: &[Vec<S>]| -> Result<Vec<Vec<S>>> {
            let l = LiftedCoordinates::new(x.clone(), f.to_vec())?;
            Ok(pushforward_lifted(s, &l)?.fibre().to_vec())
        };
        let jac = jacobian(&s.map, &x)?;
        let p1 = push(&f1)?;
        let expect: Vec<Vec<S>> = f1.iter().map(|v| linalg::mat_vec(&jac, v)).collect();
        diag.observe_blocks(&p1, &expect);
        let p2 = push(&f2)?;
        let sum: Vec<Vec<S>> = f1.iter().zip(&f2).map(|(p, q)| linalg::add(p, q)).collect();
        let psum = push(&sum)?;
        let added: Vec<Vec<S>> = p1.iter().zip(&p2).map(|(p, q)| linalg::add(p, q)).collect();
        add.observe_blocks(&psum, &added);
        let scaled: Vec<Vec<S>> = f1.iter().map(|v| linalg::scale(&a, v)).collect();
        let pscaled = push(&scaled)?;
        let expect_scaled: Vec<Vec<S>> = p1.iter().map(|v| linalg::scale(&a, v)).collect();
        add.observe_blocks(&pscaled, &expect_scaled);
        diag.end_sample();
        add.end_sample();
    }
    Ok(FibreLinearity {
        block_diagonal: diag.finish("fibre-linearity", k),
        additivity: add.finish("fibre-additivity", k),
    })
}

/// `T^k g^{-1} ∘ T^k g = id` on lifted coordinates.
pub fn check_inverse_round_trip<S: Scalar>(
    forward: &MorphismScenario,
    inverse: &MorphismScenario,
    settings: &Settings,
) -> Result<CheckRecord> {
    let k = forward.order.min(inverse.order);
    let n = forward.map.input_dim();
    let mut rng = settings.sampler();
    let mut res = Residual::new(settings.tolerance);
    for _ in 0..settings.samples {
        let x: Vec<S> = rng.point(forward.map.domain());
        let l = LiftedCoordinates::new(x, rng.vectors(k, n))?;
        let there = pushforward_lifted(forward, &l)?;
        let back = pushforward_lifted(inverse, &there)?;
        res.observe_blocks(back.fibre(), l.fibre());
        res.observe_blocks(&[back.base().to_vec()], &[l.base().to_vec()]);
        res.end_sample();
    }
    Ok(res.finish("diffeomorphism-round-trip", k))
}
