use std::f64::consts::TAU;
use std::sync::Arc;

use proptest::prelude::*;
use sos_scout::boundary::{rho_y, BoundaryTorusField, B_GRID};
use sos_scout::cohomology::{nice_representative, BoundaryData, BumpPotential, ClosedForm, DualClass};
use sos_scout::geometry::{flow, ChartPoint, FlowScenario, RadialProfile};
use sos_scout::measures::{
    assemble_lp, birkhoff_average, boundary_measure_pairing, certify_positivity, check_condition_iii,
    ConditionSettings, ConditionVerdict, OccupationGrid, TorusMeasure, Verdict, DELTA_SLACK,
};
use sos_scout::Error;

const OMEGA: [f64; 3] = [1.0, 1.618, 1.414];

fn t3_certificate(sign: i64) -> sos_scout::measures::Certificate {
    let s = FlowScenario::t3_linear(OMEGA);
    let y = DualClass::from_pairings(&s, &[sign, 0, 0]).unwrap();
    let grid = OccupationGrid::new(&s, 8, 1).unwrap();
    let lp = assemble_lp(&grid, &nice_representative(&y, &s).unwrap(), DELTA_SLACK).unwrap();
    certify_positivity(&s, &lp)
}

#[test]
fn t3_positive_class_is_certified() {
    // β(X) = y·ω = 1 at every node, so g = 0 is optimal
    let c = t3_certificate(1);
    assert_eq!(c.verdict, Verdict::Certified);
    assert!((c.epsilon_star - 1.0).abs() < 1e-6, "{}", c.epsilon_star);
    assert!(c.duality_gap <= 1e-8);
    assert!(c.verified && c.refined_min.unwrap() >= 0.5 * c.epsilon_star);
    assert_eq!(c.refined_nodes, 80 * 80 * 80);
}

#[test]
fn t3_negative_class_is_refuted() {
    let c = t3_certificate(-1);
    assert_eq!(c.verdict, Verdict::Refuted);
    assert!((c.pairing + 1.0).abs() < 1e-6);
    assert!((c.epsilon_star + 1.0).abs() < 1e-6);
    assert!(c.invariance_residual <= 1e-6);
    assert!(c.duality_gap <= 1e-8);
    let mass: f64 = c.measure.iter().map(|(_, w)| w).sum();
    assert!((mass - 1.0).abs() < 1e-12);
}

#[test]
fn solid_torus_meridian_class_is_certified() {
    let s = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
    let y = DualClass::from_boundary(&s, &[BoundaryData { p: 0.0, q: 1.0, epsilon: 1 }]).unwrap();
    let grid = OccupationGrid::new(&s, 6, 1).unwrap();
    assert!(grid.nodes.iter().any(|n| n.link == Some(0)));
    let lp = assemble_lp(&grid, &nice_representative(&y, &s).unwrap(), DELTA_SLACK).unwrap();
    let c = certify_positivity(&s, &lp);
    assert_eq!(c.verdict, Verdict::Certified);
    assert!((c.epsilon_star - 1.0 / TAU).abs() < 1e-6);
}

#[test]
fn boundary_pairing_oracles() {
    let rigid = BoundaryTorusField::from_fn("rigid", TAU, 32, 32, |_, _| 0.3);
    let v = boundary_measure_pairing(&rigid, 1.0, TAU, &TorusMeasure::Area).unwrap();
    assert!((v - 0.3).abs() < 1e-12 && (v - rho_y(0.3, TAU, 0.0, 1.0)).abs() < 1e-6);
    let v = boundary_measure_pairing(&rigid, 1.0 / TAU, TAU, &TorusMeasure::Area).unwrap();
    assert!((v - 0.3 / TAU).abs() < 1e-12);

    let hyp = BoundaryTorusField::from_fn("hyp", TAU, 32, B_GRID, |_, th| -0.5 * (2.0 * th).sin());
    let v = boundary_measure_pairing(&hyp, 1.0, TAU, &TorusMeasure::Circle { theta: 0.0 }).unwrap();
    assert!(v.abs() < 1e-12);
    assert!(matches!(boundary_measure_pairing(&hyp, 1.0, TAU, &TorusMeasure::Area), Err(Error::Residual(_))));
}

#[test]
fn birkhoff_average_oracles() {
    let s = FlowScenario::t3_linear(OMEGA);
    let beta = ClosedForm::constant(s.domain(), [1.0, 0.0, 0.0]);
    let avg = birkhoff_average(&s, &beta, ChartPoint::new(0, &[0.1, 0.2, 0.3]), 200.0, 1e-10).unwrap();
    assert!((avg.value - 1.0).abs() < 1e-12);
    assert!(avg.windows.iter().all(|w| (w.average - 1.0).abs() < 1e-12));
    assert!(birkhoff_average(&s, &beta, ChartPoint::new(0, &[0.1, 0.2, 0.3]), 50.0, 1e-10).is_err());

    let solid = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
    let beta = ClosedForm::constant(solid.domain(), [0.0, 0.0, 1.0 / TAU]);
    for p in [ChartPoint::new(0, &[0.0, 0.6, 1.0]), ChartPoint::new(1, &[0.0, 0.1, -0.05])] {
        let avg = birkhoff_average(&solid, &beta, p, 100.0 * TAU, 1e-10).unwrap();
        assert!((avg.value - 1.0 / TAU).abs() < 1e-10);
    }

    let g = FlowScenario::geodesic();
    let beta = ClosedForm::constant(g.domain(), [0.0, 0.0, 1.0 / TAU]);
    let x = [0.6_f64, 0.0, 0.8];
    let v = [0.0, 1.0, 0.0];
    let avg = birkhoff_average(&g, &beta, ChartPoint::new(0, &[x[0], x[1], x[2], v[0], v[1], v[2]]), 100.0 * TAU, 1e-10)
        .unwrap();
    assert!(avg.value > 0.0 && avg.spread < 1e-6, "{avg:?}");
    // one crossing of the annulus per period 2π
    assert!((avg.value - 1.0 / TAU).abs() < 1e-6);
}

#[test]
fn birkhoff_matches_uniform_occupation_pairing() {
    let s = FlowScenario::t3_linear(OMEGA);
    let bump = Arc::new(BumpPotential::new(s.domain(), 0.02, [1, 1, 0]));
    let beta = ClosedForm::constant(s.domain(), [1.0, 0.0, 0.0]).with_potential(bump);
    let avg = birkhoff_average(&s, &beta, ChartPoint::new(0, &[0.3, 0.1, 0.7]), 1000.0, 1e-10).unwrap();
    let grid = OccupationGrid::new(&s, 8, 1).unwrap();
    let lp = assemble_lp(&grid, &beta, DELTA_SLACK).unwrap();
    assert!((avg.value - lp.uniform_pairing()).abs() < 1e-4, "{} vs {}", avg.value, lp.uniform_pairing());
}

#[test]
fn domain_field_is_the_pushforward_of_the_flow() {
    let cases = [
        (FlowScenario::t3_linear(OMEGA), ChartPoint::new(0, &[0.2, 0.4, 0.6])),
        (FlowScenario::solid_torus(RadialProfile { coeffs: vec![0.5, 0.0, 1.0] }, TAU), ChartPoint::new(0, &[0.3, 0.6, 1.0])),
        (FlowScenario::linear_block([[0.1, -0.4], [0.3, 0.2]], TAU), ChartPoint::new(0, &[0.3, 0.3, 0.2])),
        (FlowScenario::hopf(), ChartPoint::new(0, &[0.6, 0.0, 0.0, 0.8])),
        (FlowScenario::geodesic(), ChartPoint::new(0, &[0.6, 0.0, 0.8, 0.0, 1.0, 0.0])),
    ];
    for (s, p) in cases {
        let q = s.manifold_to_domain(&p);
        let h = 1e-4;
        let ahead = s.manifold_to_domain(&flow(&s, p, h, 1e-13).unwrap());
        let behind = s.manifold_to_domain(&flow(&s, p, -h, 1e-13).unwrap());
        let v = s.domain_field(&q);
        let d = s.domain();
        for k in 0..3 {
            let mut diff = ahead[k] - behind[k];
            if d.axes[k].periodic {
                diff = sos_scout::geometry::wrap_signed(diff, d.axes[k].width());
            }
            assert!((diff / (2.0 * h) - v[k]).abs() < 1e-6, "{:?} axis {k}: {} vs {}", s.kind(), diff / (2.0 * h), v[k]);
        }
    }
}

#[test]
fn condition_iii_verdicts() {
    let settings = ConditionSettings { grid: 6, ..ConditionSettings::default() };
    let class = |s: &FlowScenario| DualClass::from_boundary(s, &[BoundaryData { p: 0.0, q: 1.0, epsilon: 1 }]).unwrap();

    let s = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
    let r = check_condition_iii(&s, &class(&s), &settings).unwrap();
    assert!((r.components[0].rho_y - 1.0).abs() < 1e-9);
    assert_eq!(r.verdict, ConditionVerdict::Holds);

    let s = FlowScenario::solid_torus(RadialProfile::constant(-1.0), TAU);
    let r = check_condition_iii(&s, &class(&s), &settings).unwrap();
    assert!((r.components[0].rho_y + 1.0).abs() < 1e-9);
    assert_eq!(r.verdict, ConditionVerdict::Fails);

    let s = FlowScenario::linear_block([[0.5, 0.0], [0.0, -0.5]], TAU);
    let r = check_condition_iii(&s, &class(&s), &settings).unwrap();
    let c = &r.components[0];
    assert!(c.rho_y.abs() < 1e-9);
    assert!(!c.condition_a);
    assert!(c.annotation.as_deref().unwrap().contains("generic obstruction"));
    assert_eq!(r.verdict, ConditionVerdict::Fails);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pairing_is_linear_in_the_measure(lambda in 0.0f64..1.0, i in 0usize..216, j in 0usize..36) {
        // mixed measure: interior Dirac plus a boundary-torus Dirac
        let s = FlowScenario::solid_torus(RadialProfile { coeffs: vec![0.7, 0.0, 0.4] }, TAU);
        let y = DualClass::from_boundary(&s, &[BoundaryData { p: 0.0, q: 1.0, epsilon: 1 }]).unwrap();
        let grid = OccupationGrid::new(&s, 6, 1).unwrap();
        let lp = assemble_lp(&grid, &nice_representative(&y, &s).unwrap(), DELTA_SLACK).unwrap();
        let n = lp.variable_count();
        let boundary: Vec<usize> = (0..n).filter(|&k| grid.nodes[k].link.is_some()).collect();
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        let mut b = vec![0.0; n];
        b[boundary[j]] = 1.0;
        let mixed: Vec<f64> = a.iter().zip(&b).map(|(x, y)| lambda * x + (1.0 - lambda) * y).collect();
        let lhs = lp.pairing(&mixed);
        let rhs = lambda * lp.pairing(&a) + (1.0 - lambda) * lp.pairing(&b);
        prop_assert!((lhs - rhs).abs() <= 1e-8);
    }
}
