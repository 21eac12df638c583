//! Scenario runner: configuration, pipeline and reports.

mod config;
mod run;

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

pub use config::{ClassConfig, NumericSettings, OutputConfig, ReportFormat, RunConfig, ScenarioConfig, SCHEMA_VERSION};
pub use run::{run_scenario, ConditionSummary, OrbitSummary, Outcome, Provenance, Quantity, RunReport, Timing};

use crate::error::Result;
use crate::measures::Verdict;

/// The verdict line that opens the text report.
pub fn verdict_line(r: &RunReport) -> String {
    let c = &r.certificate;
    match r.outcome() {
        Outcome::CertifiedVerified => format!("CERTIFIED ε*={:.6e} section verified", c.epsilon_star),
        Outcome::Refuted if c.verdict == Verdict::Refuted => {
            format!("REFUTED μ·y={:.6e} (invariance residual {:.1e})", c.pairing, c.invariance_residual)
        }
        Outcome::Refuted => match r.orbits.iter().find(|o| !o.condition_a) {
            Some(o) => format!(
                "REFUTED ρ^y={:.6e} at {} ({})",
                o.rho_y.value,
                o.orbit_id,
                o.annotation.as_deref().unwrap_or("condition (a) fails")
            ),
            None => "REFUTED".to_string(),
        },
        Outcome::Inconclusive => format!("INCONCLUSIVE ε*={:.6e}", c.epsilon_star),
    }
}

fn bound(q: &Quantity) -> String {
    match q.error_bound {
        Some(e) => format!("{:.9} ± {:.1e} {}", q.value, e, q.units),
        None => format!("{:.9} {}", q.value, q.units),
    }
}

pub fn render_text(r: &RunReport) -> String {
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "{}", verdict_line(r));
    let _ = writeln!(w, "config {} sha256 {} seed {}", r.config.name, &r.config.config_hash[..16], r.config.seed);
    let _ = writeln!(w, "condition (iii): {:?}", r.condition_iii.verdict);
    for reason in &r.condition_iii.reasons {
        let _ = writeln!(w, "  - {reason}");
    }
    for o in &r.orbits {
        let _ = writeln!(w, "orbit {}: period {}", o.orbit_id, bound(&o.period));
        let _ = writeln!(w, "  ρ_θ {}  ρ^y {}", bound(&o.rho_theta), bound(&o.rho_y));
        let m = &o.multipliers;
        let _ = writeln!(
            w,
            "  multipliers {:.6}{:+.6}i, {:.6}{:+.6}i ({:?}), condition (a) {}",
            m[0][0],
            m[0][1],
            m[1][0],
            m[1][1],
            o.orbit_class,
            if o.condition_a { "holds" } else { "fails" }
        );
    }
    let c = &r.certificate;
    let _ = writeln!(
        w,
        "certificate: {:?}, LP {:?} after {} pivots ({} variables, {} constraints)",
        c.verdict, c.lp_status, c.pivots, c.variables, c.constraints
    );
    let _ = writeln!(
        w,
        "  ε* {:.6e}  discretization {:.1e}  gap {:.1e}  refined min {}",
        c.epsilon_star,
        c.discretization_bound,
        c.duality_gap,
        c.refined_min.map_or("n/a".to_string(), |v| format!("{v:.6e}"))
    );
    if let Some(s) = &r.section {
        let _ = writeln!(
            w,
            "section: {:?} at level {:.4}, {} vertices, {} faces, genus {}, {} component(s)",
            s.verdict, s.level, s.vertices, s.faces, s.genus, s.components
        );
        for b in &s.boundary {
            let _ = writeln!(w, "  boundary on component {}: ({}, {})", b.component, b.n1, b.n2);
        }
        let t = &s.transversality;
        let _ = writeln!(
            w,
            "  min η(X) {:.6e} (need {:.6e}), angle interior {:.3e} boundary {:.3e}",
            t.min_eta_x, t.threshold, t.interior_angle, t.boundary_angle
        );
        for d in &s.degree {
            let _ = writeln!(w, "  degree {:<16} {:>3}  ∫η {:+.9}", d.name, d.degree, d.pairing);
        }
        let q = &s.returns;
        let _ = writeln!(
            w,
            "  return τ min {:.9} mean {:.9} max {:.9} over {} samples, {} misses",
            q.tau_min, q.tau_mean, q.tau_max, q.samples, q.misses
        );
        for f in &s.failures {
            let _ = writeln!(w, "  FAIL {f}");
        }
    }
    let t = &r.timing;
    let _ = writeln!(w, "timing: condition {:.2}s, section {:.2}s, total {:.2}s", t.condition_seconds, t.section_seconds, t.total_seconds);
    out
}

pub fn render_json(r: &RunReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(r)? + "\n")
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents.as_bytes())?;
    Ok(())
}

/// Writes the report in `format` into `dir` and returns the paths written.
pub fn emit_report(r: &RunReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Text => {
            let p = dir.join("report.txt");
            write_file(&p, &render_text(r))?;
            written.push(p);
        }
        ReportFormat::Json => {
            let p = dir.join("report.json");
            write_file(&p, &render_json(r)?)?;
            written.push(p);
        }
        ReportFormat::CsvBundle => {
            let mut b = String::from("orbit,t,theta,b\n");
            for (o, f) in r.orbits.iter().zip(&r.boundary_fields) {
                for i in 0..f.nt {
                    for j in 0..f.ntheta {
                        let _ = writeln!(b, "{},{:.12e},{:.12e},{:.12e}", o.orbit_id, f.t_node(i), f.theta_node(j), f.node(i, j));
                    }
                }
            }
            let mut rot = String::from("orbit,horizon,estimate,seed_spread\n");
            for o in &r.orbits {
                for win in &o.rotation_windows {
                    let _ = writeln!(rot, "{},{:.12e},{:.12e},{:.12e}", o.orbit_id, win.horizon, win.estimate, win.seed_spread);
                }
            }
            let mut ret = String::from("lo,hi,count\n");
            if let Some(s) = &r.section {
                for bin in &s.returns.histogram {
                    let _ = writeln!(ret, "{:.12e},{:.12e},{}", bin.lo, bin.hi, bin.count);
                }
            }
            for (name, text) in [("b_grid.csv", b), ("rotation_windows.csv", rot), ("return_times.csv", ret)] {
                let p = dir.join(name);
                write_file(&p, &text)?;
                written.push(p);
            }
        }
    }
    if let Some(leaf) = &r.leaf {
        let p = dir.join("leaf.obj");
        leaf.write_obj(&p)?;
        written.push(p);
    }
    Ok(written)
}
