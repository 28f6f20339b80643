use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};
use skewdiff_core::densities::{physical_density, skew_diffusion_density};
use skewdiff_core::functionals::{
    exit_stats_analytic, exit_stats_mc, first_passage_survival, natural_local_time_mc, occupation_balance_report,
};
use skewdiff_core::homogenize::{
    effective_dispersion, g_function, mc_longtime_variance, single_interface_parabolic_closed_form, LayeredCrossSection,
};
use skewdiff_core::network::{
    dispersal_kernel_mc, edge_bins, network_histogram_mc, network_pde_crosscheck, KernelEstimate, NetworkPosition, RiverNetwork,
};
use skewdiff_core::paths::{stepper_for, write_paths_csv, Scheme, SimConfig};
use skewdiff_core::pde::{breakthrough_curve, solve_interface_pde, Boundary, Grid, PdeProblem, TimeScheme};
use skewdiff_core::stats::chi_square;
use skewdiff_core::verify::{run_criterion, Scale, VerifyOptions, CRITERIA};
use skewdiff_core::InterfaceMedium;

use crate::config::{pick, require, RunConfig};
use crate::output::Output;
use crate::{
    Cli, Command, DensityArgs, DensityKind, FunctionalsCommand, HomogenizeArgs, MediumArgs, NetworkArgs, NetworkCommand, Outcome,
    PdeArgs, SampleArgs, SchemeArg, SimArgs, TimeSchemeArg, VerifyArgs,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn run(cli: &Cli) -> Result<Outcome> {
    let started = Instant::now();
    let file = RunConfig::load(cli.config.as_deref())?;
    let mut out = Output::new(&cli.out)?;
    let (name, config, seed, outcome) = match &cli.command {
        Command::Density(a) => density(a, &file, &mut out)?,
        Command::Sample(a) => sample(a, &file, &mut out)?,
        Command::Functionals(c) => functionals(c, &file, &mut out)?,
        Command::Pde(a) => pde(a, &file, &mut out)?,
        Command::Homogenize(a) => homogenize(a, &file, &mut out)?,
        Command::Network(c) => network(c, &file, &mut out)?,
        Command::Verify(a) => verify(a, &mut out)?,
    };
    // timing lives apart from the results so those stay byte-identical
    out.json(
        "run.json",
        &json!({
            "command": name,
            "version": VERSION,
            "seed": seed,
            "config": config,
            "duration_seconds": started.elapsed().as_secs_f64(),
        }),
    )?;
    out.commit()?;
    Ok(outcome)
}

type Ran = (&'static str, Value, Option<u64>, Outcome);

/// The result document: resolved config, seed and version alongside the results.
fn result_json(out: &mut Output, command: &str, config: &Value, seed: Option<u64>, results: impl Serialize) -> Result<()> {
    out.json(
        "result.json",
        &json!({"command": command, "version": VERSION, "seed": seed, "config": config, "results": results}),
    )
}

fn medium(args: &MediumArgs, file: &RunConfig) -> Result<InterfaceMedium> {
    let dp = require(args.d_plus, file.medium.d_plus, "d-plus")?;
    let dm = require(args.d_minus, file.medium.d_minus, "d-minus")?;
    Ok(match args.lambda.or(file.medium.lambda) {
        Some(l) => InterfaceMedium::new(dp, dm, l)?,
        None => InterfaceMedium::conservative(dp, dm)?,
    })
}

fn medium_json(m: &InterfaceMedium) -> Value {
    json!({"d_plus": m.d_plus(), "d_minus": m.d_minus(), "lambda": m.lambda()})
}

fn sim(args: &SimArgs, file: &RunConfig, defaults: SimConfig) -> Result<SimConfig> {
    let scheme = match args.scheme {
        Some(SchemeArg::ExactStep) => Some(Scheme::ExactStep),
        Some(SchemeArg::EulerTransformed) => Some(Scheme::EulerTransformed),
        Some(SchemeArg::SkewWalk) => Some(Scheme::SkewWalk),
        None => None,
    };
    let cfg = SimConfig {
        n_paths: pick(args.n_paths, file.sim.n_paths, defaults.n_paths),
        dt: pick(args.dt, file.sim.dt, defaults.dt),
        horizon: pick(args.horizon, file.sim.horizon, defaults.horizon),
        seed: pick(args.seed, file.sim.seed, defaults.seed),
        scheme: pick(scheme, file.sim.scheme, defaults.scheme),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn density(a: &DensityArgs, file: &RunConfig, out: &mut Output) -> Result<Ran> {
    let m = medium(&a.medium, file)?;
    let explicit_lambda = a.medium.lambda.or(file.medium.lambda).is_some();
    let kind = a.kind.unwrap_or(if explicit_lambda { DensityKind::Skew } else { DensityKind::Physical });
    let p = |y: f64| match kind {
        DensityKind::Physical => physical_density(&m, a.t, a.x, y),
        DensityKind::Skew => skew_diffusion_density(&m, a.t, a.x, y),
    };
    let values: Vec<(f64, f64)> = a.y_grid.iter().map(|&y| Ok((y, p(y)?))).collect::<skewdiff_core::Result<_>>()?;
    // trapezoid sums over the grid points on each side of the interface
    let side_sum = |keep: &dyn Fn(f64) -> bool| -> f64 {
        values.windows(2).filter(|w| keep(w[0].0) && keep(w[1].0)).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
    };
    let plus = side_sum(&|y| y >= 0.0);
    let minus = side_sum(&|y| y <= 0.0);
    let alpha = match kind {
        DensityKind::Physical => m.alpha_star(),
        DensityKind::Skew => m.alpha_of_lambda(),
    };
    out.csv("density.csv", "y,p", values.iter().map(|(y, p)| format!("{y},{p}")))?;
    let config = json!({"medium": medium_json(&m), "kind": format!("{kind:?}").to_lowercase(), "t": a.t, "x": a.x,
                        "y_grid": {"first": a.y_grid.first(), "last": a.y_grid.last(), "points": a.y_grid.len()}});
    result_json(out, "density", &config, None, json!({"half_line_sum_plus": plus, "half_line_sum_minus": minus, "interface_alpha": alpha}))?;
    Ok(("density", config, None, Outcome::Done))
}

fn sample(a: &SampleArgs, file: &RunConfig, out: &mut Output) -> Result<Ran> {
    let m = medium(&a.medium, file)?;
    let cfg = sim(&a.sim, file, SimConfig::new(100, 1e-2, 1.0, 1))?;
    let stepper = stepper_for(&m, &cfg)?;
    let paths = skewdiff_core::paths::simulate_with(stepper.as_ref(), a.x0, &cfg)?;
    out.write_with("paths.csv", |w| write_paths_csv(&paths, w))?;
    let positive = paths.iter().filter(|p| p.last_position() > 0.0).count();
    let config = json!({"medium": medium_json(&m), "sim": cfg, "x0": a.x0});
    result_json(out, "sample", &config, Some(cfg.seed), json!({"n_paths": paths.len(), "fraction_positive_at_horizon": positive as f64 / paths.len() as f64}))?;
    Ok(("sample", config, Some(cfg.seed), Outcome::Done))
}

fn functionals(c: &FunctionalsCommand, file: &RunConfig, out: &mut Output) -> Result<Ran> {
    match c {
        FunctionalsCommand::Exit { medium: ma, sim: sa, a, x, b, mc } => {
            let m = medium(ma, file)?;
            let analytic = exit_stats_analytic(&m.profile(), *a, *x, *b)?;
            let mut results = json!({"analytic": analytic});
            let mut seed = None;
            let mut config = json!({"medium": medium_json(&m), "a": a, "x": x, "b": b});
            if *mc {
                let cfg = sim(sa, file, SimConfig::new(10_000, 1e-3, 50.0, 1))?;
                let stepper = stepper_for(&m, &cfg)?;
                results["monte_carlo"] = json!(exit_stats_mc(stepper.as_ref(), *a, *x, *b, &cfg)?);
                config["sim"] = json!(cfg);
                seed = Some(cfg.seed);
            }
            result_json(out, "functionals exit", &config, seed, &results)?;
            Ok(("functionals exit", config, seed, Outcome::Done))
        }
        FunctionalsCommand::Survival { medium: ma, sim: sa, x0, level, t_grid } => {
            let m = medium(ma, file)?;
            let cfg = sim(sa, file, SimConfig::new(10_000, 1e-3, 1.0, 1))?;
            let stepper = stepper_for(&m, &cfg)?;
            let curve = first_passage_survival(stepper.as_ref(), *x0, *level, t_grid, &cfg)?;
            out.csv(
                "survival.csv",
                "t,survival,ci_halfwidth",
                curve.t_grid.iter().zip(&curve.survival).zip(&curve.ci).map(|((t, s), c)| format!("{t},{s},{c}")),
            )?;
            let config = json!({"medium": medium_json(&m), "sim": cfg, "x0": x0, "level": level, "t_grid": t_grid});
            result_json(out, "functionals survival", &config, Some(cfg.seed), json!({"monotone_violation": curve.monotone_violation}))?;
            Ok(("functionals survival", config, Some(cfg.seed), Outcome::Done))
        }
        FunctionalsCommand::Occupation { medium: ma, sim: sa, lambdas } => {
            let m = medium(ma, file)?;
            let cfg = sim(sa, file, SimConfig::new(10_000, 1e-3, 1.0, 1))?;
            let lambdas = if lambdas.is_empty() { vec![m.lambda()] } else { lambdas.clone() };
            let media = lambdas.iter().map(|&l| m.with_lambda(l)).collect::<skewdiff_core::Result<Vec<_>>>()?;
            let rows = occupation_balance_report(&media, cfg.horizon, &cfg)?;
            let config = json!({"medium": medium_json(&m), "sim": cfg, "lambdas": lambdas});
            result_json(out, "functionals occupation", &config, Some(cfg.seed), &rows)?;
            Ok(("functionals occupation", config, Some(cfg.seed), Outcome::Done))
        }
        FunctionalsCommand::LocalTime { medium: ma, sim: sa, level, x0, epsilon } => {
            let m = medium(ma, file)?;
            let cfg = sim(sa, file, SimConfig::new(10_000, 1e-4, 1.0, 1))?;
            let stepper = stepper_for(&m, &cfg)?;
            let est = natural_local_time_mc(stepper.as_ref(), *x0, *level, *epsilon, &cfg)?;
            let config = json!({"medium": medium_json(&m), "sim": cfg, "level": level, "x0": x0, "epsilon": epsilon});
            result_json(out, "functionals local-time", &config, Some(cfg.seed), est)?;
            Ok(("functionals local-time", config, Some(cfg.seed), Outcome::Done))
        }
    }
}

fn boundary(s: &str) -> Result<Boundary> {
    match s.split_once(':') {
        None if s == "neumann" => Ok(Boundary::Neumann),
        Some(("dirichlet", v)) => Ok(Boundary::Dirichlet(v.parse().with_context(|| format!("boundary value `{v}`"))?)),
        _ => bail!("boundary must be `neumann` or `dirichlet:<value>`, got `{s}`"),
    }
}

const BREAKTHROUGH_POINTS: usize = 200;

fn pde(a: &PdeArgs, file: &RunConfig, out: &mut Output) -> Result<Ran> {
    let m = medium(&a.medium, file)?;
    let g = &file.grid;
    let x_min = pick(a.x_min, g.x_min, -5.0);
    let x_max = pick(a.x_max, g.x_max, 5.0);
    let n_cells = pick(a.n_cells, g.n_cells, 500);
    let t_end = pick(a.t_end, g.t_end, 1.0);
    let scheme = match a.scheme {
        Some(TimeSchemeArg::Implicit) => Some(TimeScheme::Implicit),
        Some(TimeSchemeArg::Explicit) => Some(TimeScheme::Explicit),
        Some(TimeSchemeArg::CrankNicolson) => Some(TimeScheme::CrankNicolson),
        None => None,
    };
    let scheme = pick(scheme, g.scheme, TimeScheme::Implicit);
    let grid = if x_min < 0.0 && x_max > 0.0 { Grid::around_origin(x_min, x_max, n_cells)? } else { Grid::new(x_min, x_max, n_cells, &[])? };
    let (left, right) = (boundary(&a.left)?, boundary(&a.right)?);
    let problem = PdeProblem::new(m.profile(), grid, left, right)?.with_scheme(scheme);
    let dt = pick(a.dt, g.dt, match scheme {
        TimeScheme::Explicit => 0.9 * problem.explicit_limit(),
        _ => problem.grid.max_spacing().powi(2),
    });
    let u0 = problem.grid.delta(a.x0)?;
    // a breakthrough curve needs dense snapshots; the profile files keep only the requested ones
    let mut stops = a.snapshots.clone();
    if a.observe.is_some() {
        stops.extend((1..BREAKTHROUGH_POINTS).map(|k| t_end * k as f64 / BREAKTHROUGH_POINTS as f64));
        stops.sort_by(f64::total_cmp);
        stops.dedup();
    }
    let sol = solve_interface_pde(&problem, &u0, t_end, dt, &stops)?;
    let shown: Vec<usize> = (0..sol.t_snapshots.len())
        .filter(|&k| k == 0 || k + 1 == sol.t_snapshots.len() || a.snapshots.contains(&sol.t_snapshots[k]))
        .collect();
    out.csv(
        "solution.csv",
        "t,x,u",
        shown.iter().flat_map(|&k| {
            let t = sol.t_snapshots[k];
            sol.x.iter().zip(&sol.u[k]).map(move |(x, v)| format!("{t},{x},{v}"))
        }),
    )?;
    out.csv(
        "mass.csv",
        "t,mass,capacity_mass,boundary_outflow",
        shown.iter().map(|&k| format!("{},{},{},{}", sol.t_snapshots[k], sol.mass[k], sol.capacity_mass[k], sol.boundary_outflow[k])),
    )?;
    if let Some(x_obs) = a.observe {
        let curve = breakthrough_curve(&sol, x_obs)?;
        out.csv("breakthrough.csv", "t,u", curve.iter().map(|(t, u)| format!("{t},{u}")))?;
    }
    let config = json!({"medium": medium_json(&m), "grid": {"x_min": x_min, "x_max": x_max, "n_cells": n_cells}, "t_end": t_end,
                        "dt": dt, "scheme": scheme, "x0": a.x0, "left": left, "right": right, "snapshots": a.snapshots, "observe": a.observe});
    result_json(out, "pde", &config, None, json!({"n_steps": sol.n_steps, "max_step_mass_change": sol.max_step_mass_change,
                                                   "final_mass": sol.mass.last(), "final_capacity_mass": sol.capacity_mass.last()}))?;
    Ok(("pde", config, None, Outcome::Done))
}

fn homogenize(a: &HomogenizeArgs, file: &RunConfig, out: &mut Output) -> Result<Ran> {
    let (cs, closed) = if let Some(path) = &a.layers {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        (serde_json::from_str::<LayeredCrossSection>(&text).with_context(|| format!("parsing {}", path.display()))?, None)
    } else if let (Some(dp), Some(dm), Some(v0), Some(r)) = (a.d_plus, a.d_minus, a.v0, a.r) {
        (LayeredCrossSection::single_interface_parabolic(dp, dm, v0, r)?, Some(single_interface_parabolic_closed_form(dp, dm, v0, r)))
    } else if let Some(cs) = &file.layers {
        (cs.clone(), None)
    } else {
        bail!("give --layers FILE, a [layers] config section, or all of --d-plus --d-minus --v0 --r");
    };
    cs.validate()?;
    let report = effective_dispersion(&cs)?;
    let n = 201;
    let ys: Vec<f64> = (0..n).map(|k| cs.a() + cs.width() * k as f64 / (n - 1) as f64).collect();
    let rows = ys.iter().map(|&y| Ok(format!("{y},{},{}", cs.velocity_at(y), g_function(&cs, y)?))).collect::<skewdiff_core::Result<Vec<_>>>()?;
    out.csv("profile.csv", "y,velocity,g", rows)?;
    let mut results = json!({"dispersion": report, "closed_form": closed});
    let mut config = json!({"layers": cs});
    let mut seed = None;
    if a.mc {
        let cfg = sim(&a.sim, file, SimConfig::new(2_000, 5e-3, a.t_long, 1))?;
        results["monte_carlo"] = json!(mc_longtime_variance(&cs, a.t_long, &cfg)?);
        config["sim"] = json!(cfg);
        config["t_long"] = json!(a.t_long);
        seed = Some(cfg.seed);
    }
    result_json(out, "homogenize", &config, seed, &results)?;
    Ok(("homogenize", config, seed, Outcome::Done))
}

fn load_network(path: Option<&Path>) -> Result<RiverNetwork> {
    let path = path.context("missing --network (or [network] file in the config)")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let net = RiverNetwork::parse(&text).with_context(|| format!("in {}", path.display()))?;
    for (edge, rel) in net.discharge_imbalances() {
        eprintln!("warning: discharge is not balanced at the upstream node of edge {edge} (relative imbalance {rel:.3e})");
    }
    Ok(net)
}

fn kernel_csv(out: &mut Output, name: &str, est: &KernelEstimate) -> Result<()> {
    out.csv(name, "edge_id,x_bin_center,mass", est.bins.iter().map(|b| format!("{},{},{}", b.edge_id, b.center(), b.mass)))
}

fn network(c: &NetworkCommand, file: &RunConfig, out: &mut Output) -> Result<Ran> {
    let na: &NetworkArgs = match c {
        NetworkCommand::Kernel { net, .. } | NetworkCommand::Crosscheck { net, .. } => net,
    };
    let net = load_network(na.network.as_deref().or(file.network.file.as_deref()))?;
    let start = NetworkPosition { edge_id: na.start_edge.clone(), x: na.start_x };
    let base = json!({"network": net.edges(), "start": start, "bin_width": na.bin_width});
    match c {
        NetworkCommand::Kernel { sigma, .. } => {
            let cfg = sim(&na.sim, file, SimConfig::new(10_000, 1e-3, 1.0, 1))?;
            let est = dispersal_kernel_mc(&net, &start, *sigma, na.bin_width, &cfg)?;
            kernel_csv(out, "kernel.csv", &est)?;
            let mut config = base;
            config["sigma"] = json!(sigma);
            config["sim"] = json!({"n_paths": cfg.n_paths, "dt": cfg.dt, "seed": cfg.seed});
            result_json(out, "network kernel", &config, Some(cfg.seed), json!({"absorbed_fraction": est.absorbed_fraction, "n_paths": est.n_paths}))?;
            Ok(("network kernel", config, Some(cfg.seed), Outcome::Done))
        }
        NetworkCommand::Crosscheck { t_end, dx, pde_dt, .. } => {
            let cfg = sim(&na.sim, file, SimConfig::new(10_000, 1e-3, *t_end, 1))?;
            let mc = network_histogram_mc(&net, &start, *t_end, na.bin_width, &cfg)?;
            let dx = dx.unwrap_or(net.min_length() / 200.0);
            let pde = network_pde_crosscheck(&net, &start, *t_end, dx, *pde_dt)?;
            let expected = pde.bin_masses(&net, na.bin_width);
            kernel_csv(out, "histogram.csv", &mc)?;
            out.csv(
                "compare.csv",
                "edge_id,x_bin_center,mc_mass,pde_mass",
                edge_bins(&net, na.bin_width)
                    .iter()
                    .zip(&mc.bins)
                    .zip(&expected)
                    .map(|((&(e, lo, hi), b), p)| format!("{},{},{},{p}", net.edge(e).id, 0.5 * (lo + hi), b.mass)),
            )?;
            let n = mc.n_paths as f64;
            let mut observed: Vec<f64> = mc.bins.iter().map(|b| b.count as f64).collect();
            let mut exp: Vec<f64> = expected.iter().map(|m| m * n).collect();
            let absorbed_pde = pde.absorbed.last().copied().unwrap_or(f64::NAN);
            observed.push(mc.absorbed_count as f64);
            exp.push(absorbed_pde * n);
            let chi = chi_square(&observed, &exp, false);
            let mut config = base;
            config["t_end"] = json!(t_end);
            config["pde"] = json!({"dx": dx, "dt": pde_dt});
            config["sim"] = json!({"n_paths": cfg.n_paths, "dt": cfg.dt, "seed": cfg.seed});
            result_json(out, "network crosscheck", &config, Some(cfg.seed), json!({
                "absorbed_fraction_mc": mc.absorbed_fraction, "absorbed_fraction_pde": absorbed_pde,
                "pde_mass_final": pde.mass.last(), "chi_square": chi}))?;
            Ok(("network crosscheck", config, Some(cfg.seed), Outcome::Done))
        }
    }
}

fn verify(a: &VerifyArgs, out: &mut Output) -> Result<Ran> {
    let slow = a.slow || std::env::var("SKEWDIFF_SLOW").is_ok_and(|v| v == "1");
    let opts = VerifyOptions { scale: if a.smoke { Scale::Smoke } else { Scale::Full }, seed: a.seed.unwrap_or(VerifyOptions::default().seed), slow };
    let ids: Vec<u8> = if a.criteria.is_empty() { CRITERIA.collect() } else { a.criteria.clone() };
    if let Some(bad) = ids.iter().find(|id| !CRITERIA.contains(id)) {
        bail!("criterion {bad} is not in 1..=14");
    }
    let mut reports = Vec::new();
    for &id in &ids {
        let report = run_criterion(id, &opts)?;
        println!("criterion {id:>2} {}  {}", if report.passed() { "PASS" } else { "FAIL" }, report.title);
        out.json(&format!("criterion_{id:02}.json"), &report)?;
        reports.push(report);
    }
    out.json("verify.json", &reports)?;
    let config = json!({"criteria": ids, "scale": opts.scale, "slow": slow});
    let outcome = if reports.iter().all(|r| r.passed()) { Outcome::Done } else { Outcome::VerificationFailed };
    Ok(("verify", config, Some(opts.seed), outcome))
}
