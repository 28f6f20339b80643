//! Acceptance suite: one line per criterion, exit status 1 if any fails.
//!
//! Tolerances are those of the criteria themselves. Where a criterion has a
//! hand-computable reference, it is recomputed here from first principles
//! and compared with the reference the library used, so a wrong oracle in
//! the library cannot produce a pass.
//!
//! `SKEWDIFF_SLOW=1` adds the long Monte Carlo check of criterion 12.

use std::process::ExitCode;
use std::time::Instant;

use skewdiff_core::verify::{run_criterion, CriterionReport, VerifyOptions, CRITERIA};

/// `alpha(lambda) = lambda sqrt(D-) / (lambda sqrt(D-) + (1 - lambda) sqrt(D+))`.
fn alpha(dp: f64, dm: f64, lambda: f64) -> f64 {
    lambda * dm.sqrt() / (lambda * dm.sqrt() + (1.0 - lambda) * dp.sqrt())
}

/// Independent references, keyed by criterion. Each returns the labels of
/// checks whose reference disagrees with the hand computation.
fn oracle_mismatches(report: &CriterionReport) -> Vec<String> {
    let mut bad = Vec::new();
    let mut expect = |label_part: &str, value: f64, tol: f64, use_estimate: bool| {
        let hits: Vec<_> = report.checks.iter().filter(|c| c.label.contains(label_part)).collect();
        if hits.is_empty() {
            bad.push(format!("no check labelled `{label_part}`"));
        }
        for c in hits {
            let got = if use_estimate { c.estimate } else { c.reference };
            if (got - value).abs() > tol {
                bad.push(format!("{}: library {got} vs oracle {value}", c.label));
            }
        }
    };
    match report.id {
        2 => {
            expect("D = (4, 1)", 2.0 / 3.0, 1e-10, true);
            expect("D = (1, 4)", 1.0 / 3.0, 1e-10, true);
            expect("D = (25, 1)", 5.0 / 6.0, 1e-10, true);
        }
        6 => {
            for (dp, dm) in [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0), (25.0, 1.0)] {
                for lambda in [0.3, dp / (dp + dm), 0.7] {
                    let tag = format!("D = ({dp}, {dm}), lambda = {lambda:.4}");
                    expect(&tag, alpha(dp, dm, lambda), 1e-12, false);
                }
            }
            // at the flux-continuous lambda the sign law is sqrt(D+) / (sqrt(D+) + sqrt(D-))
            expect("D = (4, 1), lambda = 0.8000", 2.0 / 3.0, 1e-12, false);
        }
        7 => {
            // scale s' = 1/D, speed m' = 2 on (-1, 1) with D = (3, 1):
            // s(-1, 0) = 1, s(0, 1) = 1/3, so P(left) = (1/3) / (4/3) and
            // E tau = (3/4) [ (1/3) int_{-1}^0 2 (y + 1) dy + int_0^1 2 (1 - y) / 3 dy ] = 1/2
            expect("analytic P(exit left)", 0.25, 1e-14, true);
            expect("analytic E tau", 0.5, 1e-14, true);
        }
        9 => {
            let threshold = 2.0 / 3.0;
            for lambda in [threshold - 0.1, threshold, threshold + 0.1] {
                expect(&format!("E G+ = alpha t, lambda = {lambda:.4}"), alpha(4.0, 1.0, lambda), 1e-12, false);
            }
            expect("E G+ = alpha t, lambda = 0.6667", 0.5, 1e-12, false);
        }
        12 => {
            expect("D bar at v0 = 0", 1.25, 0.0, false);
            for (dp, dm, v0, r) in [(2.0f64, 0.5f64, 1.0f64, 1.0f64), (1.0, 1.0, 3.0, 0.5), (5.0, 2.0, 10.0, 2.0)] {
                let d_a = (dp + dm) / 2.0;
                let d_h = dp * dm / (dp + dm);
                let closed = d_a + 4.0 * v0 * v0 * r * r / (945.0 * d_h);
                let lib = skewdiff_core::homogenize::single_interface_parabolic_closed_form(dp, dm, v0, r);
                if (lib - closed).abs() > 1e-14 * closed {
                    bad.push(format!("closed form ({dp}, {dm}, {v0}, {r}): library {lib} vs oracle {closed}"));
                }
            }
        }
        13 => {
            expect("junction exit frequency, edge a", 0.25, 1e-12, false);
            expect("junction exit frequency, edge b", 0.25, 1e-12, false);
            expect("junction exit frequency, edge c", 0.5, 1e-12, false);
        }
        _ => {}
    }
    bad
}

fn main() -> ExitCode {
    let opts = VerifyOptions { slow: std::env::var("SKEWDIFF_SLOW").is_ok_and(|v| v == "1"), ..VerifyOptions::default() };
    println!("acceptance suite, seed {}, slow checks {}", opts.seed, if opts.slow { "on" } else { "off" });
    let mut failed = Vec::new();
    for id in CRITERIA {
        let start = Instant::now();
        let line = match run_criterion(id, &opts) {
            Ok(report) => {
                let mismatches = oracle_mismatches(&report);
                let ok = report.passed() && mismatches.is_empty();
                let mut line = format!(
                    "criterion {id:>2} {}  {} ({}/{} checks, {:.1} s)",
                    if ok { "PASS" } else { "FAIL" },
                    report.title,
                    report.checks.iter().filter(|c| c.pass).count(),
                    report.checks.len(),
                    start.elapsed().as_secs_f64()
                );
                for c in report.failures().iter().take(4) {
                    let interval = c.ci.map(|[lo, hi]| format!(" in [{lo:.6}, {hi:.6}]")).unwrap_or_default();
                    line.push_str(&format!("\n    failed: {} = {:.6e}{interval}, reference {:.6e}", c.label, c.estimate, c.reference));
                }
                if report.failures().len() > 4 {
                    line.push_str(&format!("\n    ... and {} more", report.failures().len() - 4));
                }
                for m in &mismatches {
                    line.push_str(&format!("\n    oracle mismatch: {m}"));
                }
                if !ok {
                    for n in &report.notes {
                        line.push_str(&format!("\n    note: {n}"));
                    }
                    failed.push(id);
                }
                line
            }
            Err(e) => {
                failed.push(id);
                format!("criterion {id:>2} FAIL  error: {e}")
            }
        };
        println!("{line}");
    }
    if failed.is_empty() {
        println!("all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("failing criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
