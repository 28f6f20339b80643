use proptest::prelude::*;
use skewdiff_core::densities::{half_line_mass, skew_diffusion_density};
use skewdiff_core::functionals::exit_stats_analytic;
use skewdiff_core::pde::{solve_interface_pde, Boundary, Grid, PdeProblem};
use skewdiff_core::{InterfaceMedium, RiverNetwork, Side};

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (f(a) + inner + f(b))
}

fn alpha(dp: f64, dm: f64, lambda: f64) -> f64 {
    lambda * dm.sqrt() / (lambda * dm.sqrt() + (1.0 - lambda) * dp.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn skew_density_integrates_to_one(dp in 0.2f64..20.0, dm in 0.2f64..20.0, lambda in 0.05f64..0.95,
                                      t in 0.1f64..3.0, x in -2f64..2.0) {
        let m = InterfaceMedium::new(dp, dm, lambda).unwrap();
        let p = |y: f64| skew_diffusion_density(&m, t, x, y).unwrap();
        // the interface point belongs to the minus side; the plus side needs the right limit there
        let p_plus = |y: f64| p(if y == 0.0 { f64::MIN_POSITIVE } else { y });
        let reach = 12.0 * (dp.max(dm) * t).sqrt() + x.abs();
        let split = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
            if a < x && x < b { simpson(f, a, x, 2000) + simpson(f, x, b, 2000) } else { simpson(f, a, b, 4000) }
        };
        let mass = split(&p, -reach, 0.0) + split(&p_plus, 0.0, reach);
        prop_assert!((mass - 1.0).abs() < 1e-7, "mass {}", mass);
    }

    #[test]
    fn positive_half_line_carries_alpha_from_the_interface(dp in 0.1f64..30.0, dm in 0.1f64..30.0,
                                                          lambda in 0.01f64..0.99, t in 0.01f64..10.0) {
        let m = InterfaceMedium::new(dp, dm, lambda).unwrap();
        let plus = half_line_mass(&m, t, 0.0, Side::Plus).unwrap();
        let minus = half_line_mass(&m, t, 0.0, Side::Minus).unwrap();
        prop_assert!((plus - alpha(dp, dm, lambda)).abs() < 1e-10);
        prop_assert!((plus + minus - 1.0).abs() < 1e-10);
    }

    #[test]
    fn exit_law_is_harmonic_in_the_scale_function(dp in 0.1f64..30.0, dm in 0.1f64..30.0, lambda in 0.05f64..0.95,
                                                  a in -3f64..-0.1, b in 0.1f64..3.0, u in 0.0f64..1.0) {
        let m = InterfaceMedium::new(dp, dm, lambda).unwrap();
        let x = a + u * (b - a);
        let stats = exit_stats_analytic(&m.profile(), a, x, b).unwrap();
        // B = x / sqrt(D) is alpha-skew, whose scale has slopes 1 - alpha and alpha
        let al = alpha(dp, dm, lambda);
        let s = |y: f64| if y > 0.0 { (1.0 - al) * y / dp.sqrt() } else { al * y / dm.sqrt() };
        let p_left = (s(b) - s(x)) / (s(b) - s(a));
        prop_assert!((stats.p_exit_left - p_left).abs() < 1e-10, "{} vs {}", stats.p_exit_left, p_left);
        prop_assert!((stats.p_exit_left + stats.p_exit_right - 1.0).abs() < 1e-12);
        prop_assert!(stats.mean_exit_time >= 0.0);
    }

    #[test]
    fn reflecting_walls_conserve_mass(dp in 0.2f64..10.0, dm in 0.2f64..10.0, x0 in -1.5f64..1.5) {
        let m = InterfaceMedium::conservative(dp, dm).unwrap();
        let grid = Grid::around_origin(-2.0, 2.0, 80).unwrap();
        let p = PdeProblem::new(m.profile(), grid, Boundary::Neumann, Boundary::Neumann).unwrap();
        let sol = solve_interface_pde(&p, &p.grid.delta(x0).unwrap(), 0.3, 5e-3, &[]).unwrap();
        prop_assert!(sol.max_step_mass_change < 1e-12);
        prop_assert!(sol.final_state().iter().all(|&u| u >= -1e-12));
    }

    #[test]
    fn networks_survive_a_text_round_trip(lengths in prop::collection::vec(1.0f64..5.0, 3),
                                          areas in prop::collection::vec(0.1f64..4.0, 3),
                                          ds in prop::collection::vec(0.1f64..4.0, 3)) {
        let text = format!(
            "out ROOT {} 0.5 {} {}\nleft out {} 0.2 {} {}\nright out {} 0.3 {} {}\n",
            lengths[0], areas[0], ds[0], lengths[1], areas[1], ds[1], lengths[2], areas[2], ds[2]
        );
        let net = RiverNetwork::parse(&text).unwrap();
        let again = RiverNetwork::parse(&net.to_text()).unwrap();
        prop_assert_eq!(net.to_text(), again.to_text());
        let law = net.junction_exit_law(0).unwrap();
        let total: f64 = (0..3).map(|i| areas[i] * ds[i]).sum();
        for (i, p) in law {
            prop_assert!((p - areas[i] * ds[i] / total).abs() < 1e-12);
        }
    }
}
