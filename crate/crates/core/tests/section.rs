use std::f64::consts::TAU;

use proptest::prelude::*;
use sos_scout::cohomology::{nice_representative, BoundaryData, ClosedForm, DualClass};
use sos_scout::geometry::{FlowScenario, RadialProfile};
use sos_scout::section::*;
use sos_scout::Error;

const OMEGA: [f64; 3] = [1.0, 1.618, 1.414];

fn meridian(s: &FlowScenario, epsilon: i32) -> DualClass {
    let data = BoundaryData { p: 0.0, q: epsilon as f64, epsilon };
    DualClass::from_boundary(s, &vec![data; s.link().len()]).unwrap()
}

fn projection(s: &FlowScenario, class: &DualClass, n: usize) -> ProjectionField {
    let d = s.domain();
    let base = [d.axes[0].lo, d.axes[1].lo, d.axes[2].lo];
    build_projection(s, &nice_representative(class, s).unwrap(), base, n).unwrap()
}

fn section(s: &FlowScenario, class: &DualClass, eps: f64, samples: usize) -> SectionReport {
    let p = projection(s, class, 16);
    let leaf = extract_leaf(s, &p, p.regular_value()).unwrap();
    let settings = SectionSettings { return_samples: samples, ..Default::default() };
    verify_global_section(s, class, &p, &leaf, eps, &settings).unwrap()
}

#[test]
fn solid_torus_meridian_disk() {
    let s = FlowScenario::solid_torus(RadialProfile::constant(1.0), TAU);
    let r = section(&s, &meridian(&s, 1), 1.0 / TAU, 200);
    assert_eq!(r.verdict, SectionVerdict::Pass, "{:?}", r.failures);
    assert_eq!((r.boundary.len(), r.boundary[0].n1, r.boundary[0].n2), (1, 1, 0));
    assert_eq!((r.genus, r.components), (0, 1));
    assert_eq!(r.returns.misses, 0);
    // every orbit off the core is 2π-periodic and crosses once
    assert!((r.returns.tau_min - TAU).abs() < 1e-6 && (r.returns.tau_max - TAU).abs() < 1e-6);
    let row = |n: &str| r.degree.iter().find(|d| d.name == n).unwrap().degree;
    assert_eq!((row("meridian:core"), row("loop:t")), (1, 0));
}

#[test]
fn reversed_rotation_gives_negative_boundary_winding() {
    let s = FlowScenario::solid_torus(RadialProfile::constant(-1.0), TAU);
    let r = section(&s, &meridian(&s, -1), 1.0 / TAU, 50);
    assert_eq!(r.verdict, SectionVerdict::Pass, "{:?}", r.failures);
    assert_eq!((r.boundary[0].n1, r.boundary[0].n2), (-1, 0));
}

#[test]
fn t3_fiber_torus() {
    let s = FlowScenario::t3_linear(OMEGA);
    let class = DualClass::from_pairings(&s, &[1, 0, 0]).unwrap();
    let r = section(&s, &class, 1.0, 200);
    assert_eq!(r.verdict, SectionVerdict::Pass, "{:?}", r.failures);
    assert_eq!((r.genus, r.boundary.len()), (1, 0));
    // x₁ advances at unit speed
    assert!((r.returns.tau_min - 1.0).abs() < 1e-9 && (r.returns.tau_max - 1.0).abs() < 1e-9);
    assert!(r.return_time_floor <= r.returns.tau_min);
}

#[test]
fn t3_degree_of_a_slanted_loop() {
    let s = FlowScenario::t3_linear(OMEGA);
    let p = projection(&s, &DualClass::from_pairings(&s, &[1, 0, 0]).unwrap(), 8);
    // closed loop of class (2, 3, 0)
    let pts: Vec<[f64; 3]> = (0..=600).map(|i| i as f64 / 600.0).map(|u| [0.1 + 2.0 * u, 0.2 + 3.0 * u, 0.3]).collect();
    let rows = verify_degree(&p, &[("slant".into(), pts)]).unwrap();
    assert_eq!(rows[0].degree, 2);
    assert!((rows[0].pairing - 2.0).abs() < 1e-9);
}

#[test]
fn hopf_page_is_a_disk() {
    let s = FlowScenario::hopf();
    let r = section(&s, &meridian(&s, 1), 1.0 / TAU, 100);
    assert_eq!(r.verdict, SectionVerdict::Pass, "{:?}", r.failures);
    assert_eq!((r.genus, r.euler_characteristic, r.boundary.len()), (0, 1, 1));
    assert!((r.returns.tau_max - TAU).abs() < 1e-6);
}

#[test]
fn birkhoff_annulus() {
    let s = FlowScenario::geodesic();
    let r = section(&s, &meridian(&s, 1), 1.0 / TAU, 200);
    assert_eq!(r.verdict, SectionVerdict::Pass, "{:?}", r.failures);
    assert_eq!((r.genus, r.euler_characteristic, r.boundary.len()), (0, 0, 2));
    assert!(r.boundary.iter().all(|c| c.n1 == 1 && c.n2 == 0));
    let t = &r.transversality;
    assert!(t.interior_angle > 0.0 && t.boundary_angle < t.interior_angle);
    assert!(r.returns.tau_max <= TAU + 1e-3 && r.returns.misses == 0);
}

#[test]
fn negative_form_fails_transversality() {
    let s = FlowScenario::t3_linear(OMEGA);
    let eta = ClosedForm::constant(s.domain(), [1.0, -1.0, 0.0]);
    let p = build_projection(&s, &eta, [0.0; 3], 8).unwrap();
    let leaf = extract_leaf(&s, &p, p.regular_value()).unwrap();
    match verify_transversality(&s, &p, &leaf, 1.0) {
        Err(Error::Verification(msg)) => assert!(msg.contains("faces")),
        other => panic!("expected a verification failure, got {other:?}"),
    }
}

#[test]
fn boundary_transversality_degenerates_under_refinement() {
    // the annulus is tangent to X along its boundary orbits
    let s = FlowScenario::geodesic();
    let class = meridian(&s, 1);
    let angle = |n| {
        let p = projection(&s, &class, n);
        let leaf = extract_leaf(&s, &p, p.regular_value()).unwrap();
        verify_transversality(&s, &p, &leaf, 1.0 / TAU).unwrap().boundary_angle
    };
    assert!(angle(32) < angle(8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn leaves_at_different_levels_agree(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let s = FlowScenario::solid_torus(RadialProfile { coeffs: vec![0.8, 0.0, 0.5] }, TAU);
        let class = meridian(&s, 1);
        let p = projection(&s, &class, 8);
        let wind = |x: f64| {
            let leaf = extract_leaf(&s, &p, x).unwrap();
            let c = boundary_winding(&s, &leaf).unwrap();
            (leaf.genus, leaf.components, c[0].n1, c[0].n2)
        };
        prop_assert_eq!(wind(a), wind(b));
    }

    #[test]
    fn flowing_the_leaf_reaches_the_shifted_level(delta in 0.05f64..0.9) {
        let s = FlowScenario::hopf();
        let p = projection(&s, &meridian(&s, 1), 8);
        let leaf = extract_leaf(&s, &p, p.regular_value()).unwrap();
        prop_assert!(flow_deformation_residual(&s, &p, &leaf, delta, 32) < 1e-4);
    }
}
