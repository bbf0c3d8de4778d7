//! The named checks a scenario can invoke.

use tkbundle_core::connections::{convex_combine, lift_connection};
use tkbundle_core::expr::{taylor_push, DerivativeTower};
use tkbundle_core::jets::{compose_jet, NaturalJet};
use tkbundle_core::metrics::{
    check_metric_compatibility, check_torsion_free, gauss_residual, lifted_metric_residual, ImmersionSpec,
};
use tkbundle_core::morphisms::{
    check_fibre_linearity, check_g_related_global, check_g_related_local, check_inverse_round_trip,
    projective_consistency, verify_lifted_relatedness, MorphismScenario,
};
use tkbundle_core::oracle::{lemma_a1_check, lemma_a2_check};
use tkbundle_core::report::{CheckRecord, Residual, Settings};
use tkbundle_core::trivialization::{detrivialize, transition_check, trivialize, LiftedCoordinates};
use tkbundle_core::{Backend, Rational, Result, Scalar};

use crate::scenario::{Chart, Invocation};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CheckInfo {
    pub name: &'static str,
    /// The identity being verified.
    pub anchor: &'static str,
    /// The library operation the check runs.
    pub operation: &'static str,
    /// Scenario keys the check needs.
    pub requires: &'static [&'static str],
}

pub const CHECKS: &[CheckInfo] = &[
    CheckInfo {
        name: "chain-rule",
        anchor: "higher-order chain rule: T^k g(j) via integer partitions equals Taylor pushforward",
        operation: "jets::compose_jet",
        requires: &["map"],
    },
    CheckInfo {
        name: "round-trip",
        anchor: "the curve μ̄ realizes prescribed lifted coordinates: Φ^k and its inverse compose to the identity",
        operation: "trivialization::detrivialize",
        requires: &["connection"],
    },
    CheckInfo {
        name: "transition-linearity",
        anchor: "lifted transitions are linear and block-diagonal with blocks dφ_βα(x)",
        operation: "trivialization::transition_check",
        requires: &["map", "source", "target"],
    },
    CheckInfo {
        name: "g-related-global",
        anchor: "K_N ∘ TT^k g = ⊕ Tg ∘ K_M on full tangent vectors",
        operation: "morphisms::check_g_related_global",
        requires: &["map", "source", "target"],
    },
    CheckInfo {
        name: "g-related-local",
        anchor: "dg(x) M^i_α(u) = Σ_j ∂_j(dg) terms + M^i_β(T^k g(u)) in components",
        operation: "morphisms::check_g_related_local",
        requires: &["map", "source", "target"],
    },
    CheckInfo {
        name: "lifted-relatedness",
        anchor: "g-related base connections give g-related connection maps at every order",
        operation: "morphisms::verify_lifted_relatedness",
        requires: &["map", "source", "target"],
    },
    CheckInfo {
        name: "fibre-linearity",
        anchor: "T^k g is a vector bundle morphism: (g(x), dg ξ_1, …, dg ξ_k) in lifted coordinates",
        operation: "morphisms::check_fibre_linearity",
        requires: &["map", "source", "target"],
    },
    CheckInfo {
        name: "inverse-round-trip",
        anchor: "T^k g^{-1} ∘ T^k g = id for a diffeomorphism",
        operation: "morphisms::check_inverse_round_trip",
        requires: &["map", "source", "target"],
    },
    CheckInfo {
        name: "projective-consistency",
        anchor: "truncation π_{k,i} commutes with T^k g, so the limit map is well defined",
        operation: "morphisms::projective_consistency",
        requires: &["map"],
    },
    CheckInfo {
        name: "convex-fibre",
        anchor: "fibre coordinates of λK + (1-λ)K̄ are the convex combination of fibre coordinates",
        operation: "connections::convex_combine",
        requires: &["connection", "other", "lambda"],
    },
    CheckInfo {
        name: "koszul",
        anchor: "Levi-Civita symbols from the Koszul formula are torsion-free and metric-compatible",
        operation: "metrics::levi_civita",
        requires: &["metric"],
    },
    CheckInfo {
        name: "gauss-residual",
        anchor: "Gauss formula: Levi-Civita connections are f-related modulo the second fundamental form",
        operation: "metrics::gauss_residual",
        requires: &["map", "metric"],
    },
    CheckInfo {
        name: "lifted-isometry",
        anchor: "T^k of an isometry preserves the direct-sum metric on lifted fibres",
        operation: "metrics::lifted_metric_residual",
        requires: &["map", "source_metric", "target_metric"],
    },
    CheckInfo {
        name: "lemma-A1",
        anchor: "∂^k/∂s∂t^{k-1} (f ∘ d̄_k)(0,0) = (f ∘ μ̄)^(k)(0)",
        operation: "oracle::lemma_a1_check",
        requires: &["map", "connection"],
    },
    CheckInfo {
        name: "lemma-A2",
        anchor: "mixed partials of Σ_i f ∘ c̄_i against those of f ∘ c̄, for every j ≤ k",
        operation: "oracle::lemma_a2_check",
        requires: &["map"],
    },
];

pub fn lookup(name: &str) -> Option<&'static CheckInfo> {
    CHECKS.iter().find(|c| c.name == name)
}

/// Text printed by `list-checks`.
pub fn listing() -> String {
    let width = CHECKS.iter().map(|c| c.name.len()).max().unwrap_or(0);
    let mut out = String::new();
    for c in CHECKS {
        out.push_str(&format!("{:<width$}  ⇒ {}  [{}]\n", c.name, c.anchor, c.operation));
    }
    out
}

type Invalid = (String, String);

fn err(key: &str, message: impl Into<String>) -> std::result::Result<(), Invalid> {
    Err((key.to_string(), message.into()))
}

/// Structural checks that need more than name resolution.
pub fn validate(inv: &Invocation, backend: Backend, charts: &[Chart]) -> std::result::Result<(), Invalid> {
    let info = lookup(inv.check).expect("registered");
    for key in info.requires {
        let present = match *key {
            "map" => inv.map.is_some(),
            "source" => inv.source.is_some(),
            "target" => inv.target.is_some(),
            "connection" => inv.connection.is_some(),
            "other" => inv.other.is_some(),
            "lambda" => inv.lambda.is_some(),
            "metric" => inv.metric.is_some(),
            "source_metric" => inv.source_metric.is_some(),
            "target_metric" => inv.target_metric.is_some(),
            _ => unreachable!(),
        };
        if !present {
            return err(key, format!("required by check `{}`", inv.check));
        }
    }
    let chart_name = |i: usize| charts[i].name.as_str();
    if let Some(m) = &inv.map {
        if let Some(s) = &inv.source {
            if s.chart != m.source {
                return err("source", format!("connection lives on `{}`, map starts on `{}`", chart_name(s.chart), chart_name(m.source)));
            }
        }
        if let Some(t) = &inv.target {
            if t.chart != m.target {
                return err("target", format!("connection lives on `{}`, map ends on `{}`", chart_name(t.chart), chart_name(m.target)));
            }
        }
        if let Some(c) = &inv.connection {
            if c.chart != m.source {
                return err("connection", format!("connection lives on `{}`, map starts on `{}`", chart_name(c.chart), chart_name(m.source)));
            }
        }
        if let Some(g) = &inv.metric {
            if g.chart != m.target {
                return err("metric", format!("metric lives on `{}`, map ends on `{}`", chart_name(g.chart), chart_name(m.target)));
            }
        }
        if let Some(g) = &inv.source_metric {
            if g.chart != m.source {
                return err("source_metric", format!("metric lives on `{}`, map starts on `{}`", chart_name(g.chart), chart_name(m.source)));
            }
        }
        if let Some(g) = &inv.target_metric {
            if g.chart != m.target {
                return err("target_metric", format!("metric lives on `{}`, map ends on `{}`", chart_name(g.chart), chart_name(m.target)));
            }
        }
    }
    let square = inv.map.as_ref().map_or(true, |m| charts[m.source].dim == charts[m.target].dim);
    match inv.check {
        "transition-linearity" | "lifted-isometry" if !square => {
            return err("map", "needs a map between charts of equal dimension");
        }
        "inverse-round-trip" if inv.map.as_ref().is_some_and(|m| m.inverse.is_none()) => {
            return err("map", "the map declares no inverse");
        }
        "projective-consistency" if inv.order < 2 => {
            return err("order", "projective consistency needs order at least 2");
        }
        "projective-consistency" if inv.source.is_some() != inv.target.is_some() => {
            return err("target", "give both `source` and `target` for the lifted form, or neither");
        }
        "lemma-A1" if inv.order < 2 => {
            return err("order", "the first lemma needs order at least 2");
        }
        "lemma-A1" | "lemma-A2" if backend != Backend::Exact => {
            return err("check", "lemma checks compare exact coefficients and need the exact backend");
        }
        "convex-fibre" => {
            let (a, b) = (inv.connection.as_ref().unwrap(), inv.other.as_ref().unwrap());
            if a.chart != b.chart {
                return err("other", "both connections must live on the same chart");
            }
            let l = inv.lambda.as_ref().unwrap();
            if *l < Rational::from_integer(0.into()) || *l > Rational::from_integer(1.into()) {
                return err("lambda", "weight must lie in [0, 1]");
            }
        }
        _ => {}
    }
    Ok(())
}

fn settings(inv: &Invocation) -> Settings {
    Settings::new(inv.samples, inv.seed, inv.tolerance)
}

fn failed(inv: &Invocation, e: tkbundle_core::Error) -> CheckRecord {
    CheckRecord {
        name: inv.check.to_string(),
        order: inv.order,
        samples: 0,
        max_abs_residual: f64::NAN,
        max_rel_residual: f64::NAN,
        tolerance: inv.tolerance,
        pass: false,
        per_order: Vec::new(),
        diagnostic: Some(format!("error: {e}")),
    }
}

/// Runs one invocation; library errors become a failed record.
pub fn run<S: Scalar>(inv: &Invocation) -> Vec<CheckRecord> {
    dispatch::<S>(inv).unwrap_or_else(|e| vec![failed(inv, e)])
}

fn scenario(inv: &Invocation) -> Result<MorphismScenario> {
    MorphismScenario::from_christoffel(
        inv.map.as_ref().unwrap().map.clone(),
        &inv.source.as_ref().unwrap().gamma,
        &inv.target.as_ref().unwrap().gamma,
        inv.order,
    )
}

fn dispatch<S: Scalar>(inv: &Invocation) -> Result<Vec<CheckRecord>> {
    let st = settings(inv);
    let k = inv.order;
    let map = || &inv.map.as_ref().unwrap().map;
    let one = |r: CheckRecord| Ok(vec![r]);
    match inv.check {
        "chain-rule" => one(chain_rule::<S>(inv, &st)?),
        "round-trip" => one(round_trip::<S>(inv, &st)?),
        "transition-linearity" => one(transition_check::<S>(
            &lift_connection(&inv.source.as_ref().unwrap().gamma, k)?,
            &lift_connection(&inv.target.as_ref().unwrap().gamma, k)?,
            map(),
            &st,
        )?),
        "g-related-global" => one(check_g_related_global::<S>(&scenario(inv)?, &st)?),
        "g-related-local" => one(check_g_related_local::<S>(&scenario(inv)?, &st)?),
        "lifted-relatedness" => {
            let r = verify_lifted_relatedness::<S>(
                &inv.source.as_ref().unwrap().gamma,
                &inv.target.as_ref().unwrap().gamma,
                map(),
                k,
                &st,
            )?;
            one(r.record())
        }
        "fibre-linearity" => {
            let r = check_fibre_linearity::<S>(&scenario(inv)?, &st)?;
            Ok(vec![r.block_diagonal, r.additivity])
        }
        "inverse-round-trip" => {
            let m = inv.map.as_ref().unwrap();
            let backward = MorphismScenario::from_christoffel(
                m.inverse.clone().unwrap(),
                &inv.target.as_ref().unwrap().gamma,
                &inv.source.as_ref().unwrap().gamma,
                k,
            )?;
            one(check_inverse_round_trip::<S>(&scenario(inv)?, &backward, &st)?)
        }
        "projective-consistency" => {
            let lifted = match inv.source {
                Some(_) => Some(scenario(inv)?),
                None => None,
            };
            one(projective_consistency::<S>(map(), k, lifted.as_ref(), &st)?)
        }
        "convex-fibre" => one(convex_fibre::<S>(inv, &st)?),
        "koszul" => {
            let g = &inv.metric.as_ref().unwrap().field;
            let gamma = tkbundle_core::metrics::levi_civita(g);
            Ok(vec![
                check_torsion_free::<S>(&gamma, &st)?,
                check_metric_compatibility::<S>(g, &st)?,
            ])
        }
        "gauss-residual" => {
            let imm = ImmersionSpec::new(map().clone(), inv.metric.as_ref().unwrap().field.clone())?;
            let r = gauss_residual::<S>(&imm, &st)?;
            let mut rec = r.projected;
            rec.name = "gauss-residual".into();
            rec.diagnostic = Some(format!(
                "second fundamental form term: max {:.3e}, min {:.3e}",
                r.full.max_abs_residual, r.full_min
            ));
            one(rec)
        }
        "lifted-isometry" => {
            let m = inv.map.as_ref().unwrap();
            let r = lifted_metric_residual::<S>(
                &inv.source_metric.as_ref().unwrap().field,
                &inv.target_metric.as_ref().unwrap().field,
                &m.map,
                m.inverse.as_ref(),
                k,
                &st,
            )?;
            one(r.record())
        }
        "lemma-A1" => one(lemma_a1(inv, &st)?),
        "lemma-A2" => one(lemma_a2(inv, &st)?),
        other => unreachable!("unregistered check {other}"),
    }
}

fn chain_rule<S: Scalar>(inv: &Invocation, st: &Settings) -> Result<CheckRecord> {
    let g = &inv.map.as_ref().unwrap().map;
    let (n, k) = (g.input_dim(), inv.order);
    let mut rng = st.sampler();
    let mut res = Residual::new(st.tolerance);
    for _ in 0..st.samples {
        let j = NaturalJet::new(rng.point(g.domain()), rng.vectors(k, n))?;
        let tower = DerivativeTower::compute(g, j.base(), k)?;
        let image = compose_jet(&tower, &j)?;
        let raw: Vec<Vec<S>> = (0..=k).map(|i| image.raw(i)).collect();
        res.observe_blocks(&raw, &taylor_push(g, &j.curve(), k)?);
        res.end_sample();
    }
    Ok(res.finish("chain-rule", k))
}

fn round_trip<S: Scalar>(inv: &Invocation, st: &Settings) -> Result<CheckRecord> {
    let gamma = &inv.connection.as_ref().unwrap().gamma;
    let (n, k) = (gamma.dim(), inv.order);
    let c = lift_connection(gamma, k)?;
    let mut rng = st.sampler();
    let mut res = Residual::new(st.tolerance);
    for _ in 0..st.samples {
        let j: NaturalJet<S> = NaturalJet::new(rng.point(gamma.domain()), rng.vectors(k, n))?;
        let back = detrivialize(&c, &trivialize(&c, &j)?)?;
        res.observe_blocks(back.components(), j.components());
        let l: LiftedCoordinates<S> = LiftedCoordinates::new(rng.point(gamma.domain()), rng.vectors(k, n))?;
        let again = trivialize(&c, &detrivialize(&c, &l)?)?;
        res.observe_blocks(again.fibre(), l.fibre());
        res.end_sample();
    }
    Ok(res.finish("round-trip", k))
}

fn convex_fibre<S: Scalar>(inv: &Invocation, st: &Settings) -> Result<CheckRecord> {
    let first = &inv.connection.as_ref().unwrap().gamma;
    let second = &inv.other.as_ref().unwrap().gamma;
    let lambda = inv.lambda.clone().unwrap();
    let (n, k) = (first.dim(), inv.order);
    let a = lift_connection(first, k)?;
    let b = lift_connection(second, k)?;
    let mix = convex_combine(&a, &b, lambda.clone())?;
    let l = S::from_rational(&lambda);
    let rest = S::one() - l.clone();
    let mut rng = st.sampler();
    let mut res = Residual::new(st.tolerance);
    for _ in 0..st.samples {
        let j: NaturalJet<S> = NaturalJet::new(rng.point(first.domain()), rng.vectors(k, n))?;
        let za = trivialize(&a, &j)?;
        let zb = trivialize(&b, &j)?;
        let zm = trivialize(&mix, &j)?;
        let expect: Vec<Vec<S>> = za
            .fibre()
            .iter()
            .zip(zb.fibre())
            .map(|(p, q)| {
                p.iter()
                    .zip(q)
                    .map(|(x, y)| l.clone() * x.clone() + rest.clone() * y.clone())
                    .collect()
            })
            .collect();
        res.observe_blocks(zm.fibre(), &expect);
        res.end_sample();
    }
    Ok(res.finish("convex-fibre", k))
}

fn lemma_a1(inv: &Invocation, st: &Settings) -> Result<CheckRecord> {
    let f = &inv.map.as_ref().unwrap().map;
    let (n, k) = (f.input_dim(), inv.order);
    let c = lift_connection(&inv.connection.as_ref().unwrap().gamma, k)?;
    let mut rng = st.sampler();
    let mut res = Residual::new(st.tolerance);
    for _ in 0..st.samples {
        let x: Vec<Rational> = rng.point(f.domain());
        let fibre: Vec<Vec<Rational>> = rng.vectors(k, n);
        let r = lemma_a1_check(f, &c, &x, &fibre, k)?;
        res.observe_blocks(&[r.lhs], &[r.rhs]);
        res.end_sample();
    }
    Ok(res.finish("lemma-A1", k))
}

fn lemma_a2(inv: &Invocation, st: &Settings) -> Result<CheckRecord> {
    let f = &inv.map.as_ref().unwrap().map;
    let (n, k) = (f.input_dim(), inv.order);
    let mut rng = st.sampler();
    let mut res = Residual::new(st.tolerance);
    for _ in 0..st.samples {
        let x: Vec<Rational> = rng.point(f.domain());
        let y: Vec<Rational> = rng.vector(n);
        let xi: Vec<Vec<Rational>> = rng.vectors(k, n);
        for j in 1..=k {
            let (first, second) = lemma_a2_check(f, &x, &y, &xi, j, k)?;
            res.observe_blocks(&[first.lhs, second.lhs], &[first.rhs, second.rhs]);
        }
        res.end_sample();
    }
    Ok(res.finish("lemma-A2", k))
}
