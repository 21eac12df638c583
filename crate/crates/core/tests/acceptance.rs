//! Acceptance criteria at their pinned tolerances, one line per criterion.

use std::f64::consts::{PI, TAU};
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sos_scout::boundary::{blowup_limit_fit, reframe, rho_y, rotation_number, BoundaryTorusField, B_GRID};
use sos_scout::cli::{render_json, run_scenario, RunConfig, RunReport};
use sos_scout::cohomology::{nice_representative, BumpPotential, ClosedForm, DualClass};
use sos_scout::geometry::{ChartPoint, FlowScenario};
use sos_scout::measures::{
    assemble_lp, birkhoff_average, boundary_measure_pairing, certify_positivity, ConditionVerdict, OccupationGrid,
    TorusMeasure, Verdict, DELTA_SLACK,
};
use sos_scout::orbit::{refine_periodic_orbit, transverse_block, OrbitClass};
use sos_scout::section::SectionVerdict;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn config(name: &str) -> RunConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str) -> Result<RunReport, String> {
    run_scenario(&config(name)).map_err(|e| e.to_string())
}

fn rotation_oracle() -> Check {
    let seeds: Vec<(f64, f64)> = (0..8).map(|k| (TAU * k as f64 / 8.0, 0.77 * k as f64)).collect();
    let b = BoundaryTorusField::from_fn("oracle", TAU, 16, B_GRID, |_, th| 2.0 + th.cos());
    let est = rotation_number(&b, &seeds, 1 << 21).map_err(|e| e.to_string())?;
    let err = (est.rho_theta - 3f64.sqrt()).abs();
    let rigid = BoundaryTorusField::from_fn("rigid", TAU, 16, 16, |_, _| 0.3);
    let r = rotation_number(&rigid, &seeds, 1 << 10).map_err(|e| e.to_string())?;
    let err_rigid = (r.rho_theta - 0.3).abs();
    ensure(err < 1e-6 && err_rigid < 1e-9, format!("|ρ−√3| = {err:.2e}, rigid |ρ−0.3| = {err_rigid:.2e}"))
}

fn framing_invariance() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (p, q, rho) = (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-2.0..2.0));
        let period = rng.gen_range(0.5..20.0);
        let m = rng.gen_range(-5..=5);
        let (p2, q2, r2) = reframe(p, q, rho, m, period);
        worst = worst.max((rho_y(r2, period, p2, q2) - rho_y(rho, period, p, q)).abs());
    }
    ensure(worst <= 1e-12, format!("max |Δρ^y| = {worst:.2e} over 50 tuples"))
}

fn boundary_of(s: &FlowScenario) -> Result<BoundaryTorusField, String> {
    let c = &s.link()[0];
    let orbit = refine_periodic_orbit(s, &c.id, c.seed, c.period_guess).map_err(|e| e.to_string())?;
    let lin = transverse_block(s, &orbit, 0).map_err(|e| e.to_string())?;
    BoundaryTorusField::from_linearization(&lin, B_GRID, B_GRID).map_err(|e| e.to_string())
}

fn blowup_fit() -> Check {
    let s = FlowScenario::linear_block_with_quadratic([[0.5, 0.0], [0.0, -0.5]], [[0.2, -0.1, 0.4], [0.3, 0.5, -0.2]], TAU);
    let b = boundary_of(&s)?;
    let fit = blowup_limit_fit(&s, 0, &b, &[1e-2, 1e-3, 1e-4], 16);
    ensure(fit.relative_variation < 0.2, format!("C = {:?}, variation {:.3}", fit.constants, fit.relative_variation))
}

fn boundary_pairing() -> Check {
    let rigid = BoundaryTorusField::from_fn("rigid", TAU, 32, 32, |_, _| 0.3);
    let a = boundary_measure_pairing(&rigid, 1.0, TAU, &TorusMeasure::Area).map_err(|e| e.to_string())?;
    let ea = (a - rho_y(0.3, TAU, 0.0, 1.0)).abs();
    let hyp = boundary_of(&FlowScenario::linear_block([[0.5, 0.0], [0.0, -0.5]], TAU))?;
    let h = boundary_measure_pairing(&hyp, 1.0, TAU, &TorusMeasure::Circle { theta: 0.0 }).map_err(|e| e.to_string())?;
    let eh = (h - rho_y(0.0, TAU, 0.0, 1.0)).abs();
    ensure(ea < 1e-6 && eh < 1e-6, format!("rigid {ea:.2e}, hyperbolic {eh:.2e}"))
}

fn t3_lp() -> Check {
    let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
    let mut detail = Vec::new();
    let mut ok = true;
    for sign in [1i64, -1] {
        let y = DualClass::from_pairings(&s, &[sign, 0, 0]).map_err(|e| e.to_string())?;
        let grid = OccupationGrid::new(&s, 8, 1).map_err(|e| e.to_string())?;
        let beta = nice_representative(&y, &s).map_err(|e| e.to_string())?;
        let lp = assemble_lp(&grid, &beta, DELTA_SLACK).map_err(|e| e.to_string())?;
        let c = certify_positivity(&s, &lp);
        let expected = if sign > 0 { Verdict::Certified } else { Verdict::Refuted };
        let mass: f64 = c.measure.iter().map(|(_, w)| w).sum();
        let reverified = if sign > 0 {
            c.verified && c.refined_min.is_some_and(|m| m >= 0.5 * c.epsilon_star)
        } else {
            c.invariance_residual <= 1e-6 && (mass - 1.0).abs() < 1e-9 && c.measure.iter().all(|(_, w)| *w >= 0.0)
        };
        ok &= c.verdict == expected
            && (c.epsilon_star - sign as f64).abs() < 1e-4
            && c.duality_gap <= 1e-8
            && reverified;
        detail.push(format!("{:?} ε* = {:+.6} gap {:.1e}", c.verdict, c.epsilon_star, c.duality_gap));
    }
    ensure(ok, detail.join("; "))
}

fn solid_torus_end_to_end() -> Check {
    let r = run("solid_torus_meridian")?;
    let sec = r.section.as_ref().ok_or("no section")?;
    let winding = sec.boundary.iter().map(|b| (b.n1, b.n2)).collect::<Vec<_>>();
    let degrees_exact = sec.degree.iter().all(|d| d.matches && d.pairing.round() as i64 == d.degree);
    let q = &sec.returns;
    let tau_ok = q.samples >= 1000 && q.misses == 0 && (q.tau_min - TAU).abs() <= 1e-6 && (q.tau_max - TAU).abs() <= 1e-6;
    ensure(
        r.certificate.verdict == Verdict::Certified
            && winding == [(1, 0)]
            && degrees_exact
            && tau_ok
            && r.condition_iii.verdict == ConditionVerdict::Holds
            && sec.verdict == SectionVerdict::Pass,
        format!("winding {winding:?}, τ ∈ [{:.9}, {:.9}] over {} samples", q.tau_min, q.tau_max, q.samples),
    )
}

fn hyperbolic_obstruction() -> Check {
    let r = run("hyperbolic_obstruction")?;
    let o = r.orbits.first().ok_or("no orbit")?;
    let mult: Vec<f64> = o.multipliers.iter().map(|m| m[0]).collect();
    let hi = mult.iter().cloned().fold(f64::MIN, f64::max);
    let lo = mult.iter().cloned().fold(f64::MAX, f64::min);
    let mult_ok = (hi / PI.exp() - 1.0).abs() < 1e-6 && (lo / (-PI).exp() - 1.0).abs() < 1e-6;
    ensure(
        o.rho_y.value.abs() <= 1e-9 && mult_ok && o.orbit_class == OrbitClass::Hyperbolic && !o.condition_a,
        format!("ρ^y = {:.1e}, multipliers {hi:.6}, {lo:.6}, outcome {:?}", o.rho_y.value, r.outcome()),
    )
}

fn birkhoff_annulus() -> Check {
    let r = run("birkhoff_annulus")?;
    let sec = r.section.as_ref().ok_or("no section")?;
    let q = &sec.returns;
    let t = &sec.transversality;
    ensure(
        t.interior_angle > 0.0 && t.min_eta_x > 0.0 && q.samples >= 10_000 && q.misses == 0 && q.tau_max <= TAU + 1e-3,
        format!("interior margin {:.3e}, τ_max {:.9} over {} samples, {} misses", t.interior_angle, q.tau_max, q.samples, q.misses),
    )
}

fn birkhoff_vs_lp() -> Check {
    let s = FlowScenario::t3_linear([1.0, 1.618, 1.414]);
    let bump = Arc::new(BumpPotential::new(s.domain(), 0.02, [1, 1, 0]));
    let beta = ClosedForm::constant(s.domain(), [1.0, 0.0, 0.0]).with_potential(bump);
    let grid = OccupationGrid::new(&s, 8, 1).map_err(|e| e.to_string())?;
    let uniform = assemble_lp(&grid, &beta, DELTA_SLACK).map_err(|e| e.to_string())?.uniform_pairing();
    let mut worst: f64 = 0.0;
    for horizon in [1000.0, 4000.0] {
        let avg = birkhoff_average(&s, &beta, ChartPoint::new(0, &[0.3, 0.1, 0.7]), horizon, 1e-10).map_err(|e| e.to_string())?;
        worst = worst.max((avg.value - uniform).abs());
    }
    ensure(worst < 1e-4, format!("max |average − uniform| = {worst:.2e}"))
}

fn strip_timing(json: &str) -> Result<String, String> {
    let mut v: serde_json::Value = serde_json::from_str(json).map_err(|e| e.to_string())?;
    v.as_object_mut().ok_or("report is not an object")?.remove("timing");
    Ok(v.to_string())
}

fn reproducibility() -> Check {
    let names =
        ["t3_positive", "t3_negative", "solid_torus_meridian", "hopf_page", "birkhoff_annulus", "hyperbolic_obstruction"];
    for name in names {
        let a = render_json(&run(name)?).map_err(|e| e.to_string())?;
        let b = render_json(&run(name)?).map_err(|e| e.to_string())?;
        if strip_timing(&a)? != strip_timing(&b)? {
            return Err(format!("{name}: reports differ"));
        }
    }
    Ok(format!("{} configs byte-identical modulo timing", names.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("rotation-number oracle", rotation_oracle),
        ("framing invariance", framing_invariance),
        ("blow-up limit fit", blowup_fit),
        ("boundary measure pairing", boundary_pairing),
        ("T3 LP certificate and refutation", t3_lp),
        ("solid torus end to end", solid_torus_end_to_end),
        ("hyperbolic obstruction", hyperbolic_obstruction),
        ("Birkhoff annulus", birkhoff_annulus),
        ("Birkhoff average vs LP", birkhoff_vs_lp),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
