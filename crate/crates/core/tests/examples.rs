use cpere::analysis::critical::{estimate_critical_lambda, CriticalSearch};
use cpere::analysis::growth::g_rho;
use cpere::analysis::reports::{coupling_speed_report, hitting_bound_report};
use cpere::analysis::survival::{
    condition_block_curve, estimate_survival, local_survival_proxy, StartMode,
};
use cpere::background::{BackgroundKind, BackgroundSpec};
use cpere::blocks::{
    estimate_block_event, find_block_scale, percolation_survival, BlockEvent, BlockParams,
    ScaleLimits,
};
use cpere::engine::{
    coupled_bounds_cpdp, delayed_variant, first_containment_violation, phi_set, richardson,
    DelayMode, Layer, RunParams,
};
use cpere::graphical::{build_timeline, Rates};
use cpere::lattice::{build_box, EdgeSet, SiteSet};

fn origin(g: &cpere::lattice::GraphView) -> SiteSet {
    [g.origin()].into_iter().collect()
}

#[test]
fn pure_death_survival() {
    let g = build_box(1, 5).unwrap();
    let p = RunParams::new(&g, 0.0, 1.0, BackgroundSpec::frozen(1), 5.0, 31).unwrap();
    let e = estimate_survival(&p, &origin(&g), &StartMode::Full, 20_000, None).unwrap();
    assert!(e.within((-5.0f64).exp(), 3.0), "{e:?}");
}

#[test]
fn classical_cp_deep_supercritical() {
    let g = build_box(1, 200).unwrap();
    let p = RunParams::new(&g, 3.0, 1.0, BackgroundSpec::frozen(1), 50.0, 32).unwrap();
    let e = estimate_survival(&p, &origin(&g), &StartMode::Full, 1000, None).unwrap();
    assert!(e.p_hat > 0.5, "{e:?}");
}

#[test]
fn burn_in_start_runs() {
    let g = build_box(1, 20).unwrap();
    let spec = BackgroundSpec::new(BackgroundKind::Ising { beta: 0.2 }, 1).unwrap();
    let p = RunParams::new(&g, 2.0, 1.0, spec, 3.0, 3).unwrap();
    let a = estimate_survival(&p, &origin(&g), &StartMode::BurnIn, 50, None).unwrap();
    assert_eq!(
        a,
        estimate_survival(&p, &origin(&g), &StartMode::BurnIn, 50, None).unwrap()
    );
    assert!(estimate_survival(&p, &origin(&g), &StartMode::Stationary, 5, None).is_err());
}

#[test]
fn coupling_speed_merged_clock() {
    let spec = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
    let rows = coupling_speed_report(&spec, &[0.0, 0.5, 1.0, 2.0], 20_000, 41).unwrap();
    assert_eq!(rows[0].empirical.p_hat, 1.0);
    assert!((rows[2].exact - 0.1353).abs() < 1e-4);
    assert!((rows[3].exact - 0.0183).abs() < 1e-4);
    for r in &rows {
        assert!(r.within, "{r:?}");
    }
}

#[test]
fn hitting_bound_values_and_trend() {
    let rows = hitting_bound_report(1, 1.0, 0.1, &[5, 10, 15, 20], 5000, 42).unwrap();
    let g0 = 0.1 - 1.0 - 0.2f64.ln();
    assert!((g_rho(0.1, 1.0, 2, 0.0) - g0).abs() < 1e-15);
    let b10 = (-10.0 * g0).exp() / (1.0 - (-g0).exp());
    assert!((rows[1].bound - b10).abs() < 1e-15);
    assert!((1.0 - (-g0).exp() - 0.508).abs() < 1e-3);
    for w in rows.windows(2) {
        assert!(w[1].empirical.p_hat <= w[0].empirical.p_hat);
    }
    assert!(rows.iter().all(|r| r.within));
}

#[test]
fn phi_law_two_edge_clocks() {
    let g = build_box(1, 100).unwrap();
    let spec = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
    let t = 0.7;
    let mut hits = 0u64;
    let mut n = 0u64;
    for seed in 0..40 {
        let tl = build_timeline(&g, Rates::new(0.0, 0.0, 2.0).unwrap(), 1.0, seed).unwrap();
        let phi = phi_set(&spec, &g, &tl.view(), t).unwrap();
        // Every fourth interior site, so the sampled sites share no edge.
        for x in (-96..=96).step_by(4) {
            n += 1;
            hits += phi.contains(g.site_at(&[x]).unwrap()) as u64;
        }
    }
    let p = (1.0 - (-2.0f64 * t).exp()).powi(2);
    let e = cpere::analysis::estimate::Estimate::from_counts(hits, n, 0, 0, 0).unwrap();
    assert!(e.within(p, 3.0), "{e:?} vs {p}");
}

#[test]
fn upper_delayed_matches_richardson_before_s() {
    let g = build_box(1, 20).unwrap();
    let spec = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
    for seed in 0..50 {
        let p = RunParams::new(&g, 2.0, 1.0, spec, 4.0, seed).unwrap();
        let tl = p.timeline().unwrap();
        let c0 = origin(&g);
        let up = delayed_variant(
            DelayMode::SuppressRecoveriesAndBackground,
            1.5,
            &p,
            &c0,
            &EdgeSet::new(),
            &tl.view(),
        )
        .unwrap();
        let rich = richardson(&g, 2.0, &c0, &tl.view(), 4.0).unwrap();
        for t in [0.0, 0.4, 0.9, 1.49] {
            assert_eq!(up.sites_at(t), rich.sites_at(t));
        }
        let low = delayed_variant(
            DelayMode::SuppressArrows,
            1.5,
            &p,
            &c0,
            &EdgeSet::new(),
            &tl.view(),
        )
        .unwrap();
        let rec = tl
            .events()
            .iter()
            .find(|e| e.kind == cpere::graphical::EventKind::Recovery { site: g.origin() })
            .map(|e| e.t)
            .unwrap_or(f64::INFINITY);
        assert_eq!(low.sites_at(1.5).contains(g.origin()), rec > 1.5);
    }
}

#[test]
fn ising_sandwich_survival_ordering() {
    let g = build_box(1, 15).unwrap();
    let spec = BackgroundSpec::new(BackgroundKind::Ising { beta: 0.4 }, 1).unwrap();
    let rates = Rates::new(2.5, 1.0, spec.sandwich_rate()).unwrap();
    let mut alive = [0; 3];
    for seed in 0..300 {
        let p = RunParams::new(&g, 2.5, 1.0, spec, 5.0, seed).unwrap();
        let tl = build_timeline(&g, rates, 5.0, seed).unwrap();
        let tr = coupled_bounds_cpdp(&p, &origin(&g), &g.all_edges(), &tl.view()).unwrap();
        assert!(first_containment_violation(&tr[0], &tr[1], Layer::Sites).is_none());
        assert!(first_containment_violation(&tr[1], &tr[2], Layer::Sites).is_none());
        for (k, t) in tr.iter().enumerate() {
            alive[k] += t.survived() as u32;
        }
    }
    assert!(alive[0] <= alive[1] && alive[1] <= alive[2], "{alive:?}");
}

#[test]
fn proxy_death_clock() {
    let g = build_box(1, 5).unwrap();
    let p = RunParams::new(&g, 0.0, 0.5, BackgroundSpec::frozen(1), 4.0, 43).unwrap();
    let lp =
        local_survival_proxy(&p, g.origin(), &origin(&g), &StartMode::Full, 20_000, None).unwrap();
    assert!(
        lp.proxy.within((-0.5f64 * 2.0).exp(), 3.0),
        "{:?}",
        lp.proxy
    );
    assert!(
        lp.survival.within((-0.5f64 * 4.0).exp(), 3.0),
        "{:?}",
        lp.survival
    );
}

#[test]
fn condition_curve_trends() {
    let g = build_box(1, 40).unwrap();
    let sub = RunParams::new(&g, 0.5, 1.0, BackgroundSpec::frozen(1), 8.0, 44).unwrap();
    let c = condition_block_curve(&sub, 2, &[0.0, 2.0, 8.0], 400, None).unwrap();
    assert_eq!(c[0].1.p_hat, 1.0);
    assert!(c[2].1.p_hat < 0.05);
    let spec = BackgroundSpec::dynamical_percolation(3.0, 1.0, 1).unwrap();
    let sup = RunParams::new(&g, 4.0, 1.0, spec, 10.0, 45).unwrap();
    let last: Vec<f64> = [1, 2, 4, 8]
        .iter()
        .map(|&n| {
            condition_block_curve(&sup, n, &[10.0], 400, None).unwrap()[0]
                .1
                .p_hat
        })
        .collect();
    assert!(last.windows(2).all(|w| w[0] <= w[1] + 0.05), "{last:?}");
    assert!(last[3] > last[0]);
}

#[test]
fn block_event_lambda_zero_grid() {
    for n in [1u32, 2] {
        for t in [1.0, 2.0] {
            for r in [0.5, 1.0] {
                let p = BlockParams {
                    dim: 1,
                    lambda: 0.0,
                    r,
                    spec: BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap(),
                    box_half_width: None,
                };
                let e = estimate_block_event(BlockEvent::A1, n, 3, t, &p, 5000, 46, None).unwrap();
                let exact = (-r * (t + 1.0) * (2 * n + 1) as f64).exp();
                assert!(e.within(exact, 3.0), "n={n} T={t} r={r}: {e:?} vs {exact}");
            }
        }
    }
}

#[test]
fn block_events_supercritical() {
    let p = BlockParams {
        dim: 1,
        lambda: 5.0,
        r: 1.0,
        spec: BackgroundSpec::dynamical_percolation(4.0, 1.0, 1).unwrap(),
        box_half_width: None,
    };
    let a1: Vec<f64> = [5, 10, 15]
        .iter()
        .map(|&l| {
            estimate_block_event(BlockEvent::A1, 1, l, 5.0, &p, 400, 47, None)
                .unwrap()
                .p_hat
        })
        .collect();
    assert!(a1.windows(2).all(|w| w[0] <= w[1] + 0.05), "{a1:?}");
    for which in [BlockEvent::A2, BlockEvent::A3] {
        let e = estimate_block_event(which, 1, 5, 5.0, &p, 200, 48, None).unwrap();
        assert!(e.p_hat > 0.0, "{which:?} {e:?}");
    }
}

#[test]
fn block_scale_search() {
    let sup = BlockParams {
        dim: 1,
        lambda: 5.0,
        r: 1.0,
        spec: BackgroundSpec::dynamical_percolation(4.0, 1.0, 1).unwrap(),
        box_half_width: None,
    };
    let lim = ScaleLimits {
        max_n: 4,
        max_l: 8,
        max_t: 8.0,
    };
    let s = find_block_scale(&sup, 0.99, &lim, 100, 49).unwrap();
    assert!(s.success);
    let sub = BlockParams { lambda: 0.3, ..sup };
    let f = find_block_scale(
        &sub,
        0.2,
        &ScaleLimits {
            max_n: 2,
            max_l: 4,
            max_t: 4.0,
        },
        100,
        49,
    )
    .unwrap();
    assert!(!f.success);
    assert!(f.a1.p_hat.min(f.a2.p_hat) < 0.5);
}

#[test]
fn oriented_percolation_supercritical() {
    let e = percolation_survival(0.9, 1000, 100, 50).unwrap();
    assert!(e.p_hat > 0.5, "{e:?}");
}

#[test]
fn critical_bracket_slow_recovery() {
    let g = build_box(1, 60).unwrap();
    // Slow recovery needs a long horizon: (lambda, r, T) and (lambda / r, 1, r T) have the same law.
    let search = CriticalSearch {
        lo: 0.0,
        hi: 2.0,
        tol: 0.25,
        reps_per_probe: 200,
        max_batches: 2,
        ..Default::default()
    };
    let b = estimate_critical_lambda(
        &g,
        0.1,
        BackgroundSpec::frozen(1),
        &StartMode::Full,
        &origin(&g),
        200.0,
        &search,
        51,
    )
    .unwrap();
    assert!(b.lambda_hi <= 0.5, "{b:?}");
}

#[test]
fn dp_bracket_above_classical() {
    let g = build_box(1, 60).unwrap();
    let search = CriticalSearch {
        lo: 0.0,
        hi: 8.0,
        tol: 0.25,
        reps_per_probe: 200,
        max_batches: 2,
        ..Default::default()
    };
    let cp = estimate_critical_lambda(
        &g,
        1.0,
        BackgroundSpec::frozen(1),
        &StartMode::Full,
        &origin(&g),
        20.0,
        &search,
        52,
    )
    .unwrap();
    let dp = BackgroundSpec::dynamical_percolation(1.0, 1.0, 1).unwrap();
    let b = estimate_critical_lambda(
        &g,
        1.0,
        dp,
        &StartMode::Stationary,
        &origin(&g),
        20.0,
        &search,
        52,
    )
    .unwrap();
    assert!(b.lambda_lo >= cp.lambda_hi, "dp {b:?} cp {cp:?}");
}
