use std::f64::consts::PI;

use proptest::prelude::*;

use multimin::domain::{BoxDomain, Design, EvaluatedDesign, Point};
use multimin::infill::{expected_improvement, CriterionContext};
use multimin::lhs::lhs_sample;
use multimin::metrics::ahd;
use multimin::minima::agglomerate_points;
use multimin::objectives::{lookup, BlackBox};
use multimin::random::RandomStream;
use multimin::surrogate::{KrigingConfig, KrigingModel};

fn evaluated(domain: &BoxDomain, points: Vec<Point>, f: impl Fn(&[f64]) -> f64) -> EvaluatedDesign {
    let y = points.iter().map(|x| f(x)).collect();
    EvaluatedDesign::new(Design::new(domain, points).unwrap(), y).unwrap()
}

fn fit(data: &EvaluatedDesign, domain: &BoxDomain) -> KrigingModel {
    KrigingModel::fit(data, domain, &KrigingConfig::default(), &mut RandomStream::new(4)).unwrap()
}

#[test]
fn surrogate_equivariant_under_affine_responses() {
    let f = &lookup("Branin", 2).unwrap().function;
    let domain = f.domain();
    let design = lhs_sample(domain, 20, &mut RandomStream::new(8)).unwrap();
    let base = evaluated(domain, design.points().to_vec(), |x| f.value(x));
    let model = fit(&base, domain);
    for (a, b) in [(3.5, -20.0), (1e-3, 7.0), (250.0, 1e4)] {
        let scaled = evaluated(domain, design.points().to_vec(), |x| a * f.value(x) + b);
        let other = fit(&scaled, domain);
        for x in [[-2.0, 3.0], [0.5, 12.0], [8.0, 1.0]] {
            let p = model.predict(&x).unwrap();
            let q = other.predict(&x).unwrap();
            let mean = a * p.mean + b;
            assert!(
                (q.mean - mean).abs() <= 1e-8 * mean.abs().max(a * p.sd).max(1.0),
                "{a} {b} {x:?}"
            );
            assert!((q.sd - a * p.sd).abs() <= 1e-6 * a * p.sd, "{a} {b} {x:?}");
        }
    }
}

#[test]
fn probability_factor_invariant_under_affine_responses() {
    let domain = BoxDomain::unit(1);
    let points: Vec<Point> = (0..6).map(|i| vec![i as f64 / 5.0]).collect();
    let f = |x: &[f64]| (7.0 * x[0]).sin() + x[0];
    let base = CriterionContext::new(&evaluated(&domain, points.clone(), f), 0.001);
    for (a, b) in [(2.0, 1.0), (0.01, -3.0), (40.0, 100.0)] {
        let scaled = CriterionContext::new(&evaluated(&domain, points.clone(), |x| a * f(x) + b), 0.001);
        for mu in [-1.5, -0.3, 0.0, 0.4, 1.2] {
            let p = base.probability_factor(mu);
            let q = scaled.probability_factor(a * mu + b);
            assert!((p - q).abs() <= 1e-12, "{a} {b} {mu}: {p} vs {q}");
        }
    }
}

#[test]
fn leave_one_out_error_on_a_sine() {
    let domain = BoxDomain::unit(1);
    let xs: Vec<f64> = (0..12).map(|i| (i as f64 + 0.5) / 12.0).collect();
    let f = |x: f64| (2.0 * PI * x).sin();
    let mut abs_err = 0.0;
    for hold in 0..xs.len() {
        let train: Vec<Point> = xs
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != hold)
            .map(|(_, &x)| vec![x])
            .collect();
        let model = fit(&evaluated(&domain, train, |x| f(x[0])), &domain);
        abs_err += (model.predict(&[xs[hold]]).unwrap().mean - f(xs[hold])).abs();
    }
    let mae = abs_err / xs.len() as f64;
    assert!(mae < 0.05, "leave-one-out MAE {mae}");
}

#[test]
fn gradient_follows_the_chain_rule_under_domain_scaling() {
    let unit = BoxDomain::unit(2);
    let wide = BoxDomain::new(vec![-5.0, 10.0], vec![15.0, 14.0]).unwrap();
    let design = lhs_sample(&unit, 15, &mut RandomStream::new(21)).unwrap();
    let g = |z: &[f64]| (3.0 * z[0]).sin() * (2.0 * z[1]).cos() + z[0] * z[1];
    let to_wide = |z: &[f64]| -> Point { wide.denormalize(z).unwrap() };
    let small = fit(&evaluated(&unit, design.points().to_vec(), g), &unit);
    let big = fit(
        &evaluated(&wide, design.points().iter().map(|z| to_wide(z)).collect(), |x| {
            g(&wide.normalize(x).unwrap())
        }),
        &wide,
    );
    for z in [[0.2, 0.7], [0.55, 0.1], [0.9, 0.45]] {
        let gu = small.mean_gradient(&z).unwrap();
        let gw = big.mean_gradient(&to_wide(&z)).unwrap();
        for j in 0..2 {
            let expect = gu[j] / wide.width(j);
            assert!(
                (gw[j] - expect).abs() <= 1e-6 * expect.abs().max(1e-3),
                "{z:?} {j}: {} vs {expect}",
                gw[j]
            );
        }
    }
}

fn point_set(dim: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, dim), 1..8)
}

proptest! {
    #[test]
    fn ahd_symmetric_and_monotone_in_order((a, b) in (1usize..4).prop_flat_map(|d| (point_set(d), point_set(d)))) {
        let one = ahd(&a, &b, 1.0).unwrap();
        prop_assert_eq!(one, ahd(&b, &a, 1.0).unwrap());
        prop_assert!(ahd(&a, &b, 2.0).unwrap() >= one * (1.0 - 1e-12));
    }

    #[test]
    fn expected_improvement_nonnegative_and_decreasing_in_mean(
        mu in -50.0f64..50.0, dmu in 0.0f64..10.0, s in 0.0f64..20.0, best in -50.0f64..50.0
    ) {
        let lo = expected_improvement(mu, s, best);
        let hi = expected_improvement(mu + dmu, s, best);
        prop_assert!(lo >= 0.0 && hi >= 0.0);
        prop_assert!(hi <= lo * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn agglomerated_clusters_separated_by_delta(
        pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, -5.0f64..5.0), 1..60),
        delta in 0.01f64..0.2
    ) {
        let input: Vec<(Point, f64)> = pts.iter().map(|&(a, b, y)| (vec![a, b], y)).collect();
        let clusters = agglomerate_points(&input, delta).unwrap();
        prop_assert_eq!(clusters.iter().map(|c| c.members).sum::<usize>(), input.len());
        prop_assert!(clusters.windows(2).all(|w| w[0].value <= w[1].value));
        for (i, c) in clusters.iter().enumerate() {
            prop_assert!(input.iter().any(|(x, y)| *x == c.representative && *y == c.value));
            for d in &clusters[i + 1..] {
                let dist = c.representative.iter().zip(&d.representative).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                prop_assert!(dist > delta);
            }
        }
    }
}
