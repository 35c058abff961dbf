use proptest::prelude::*;

use super::*;
use crate::simulator::{terminal_broker_criterion, Feedback};

fn meta(delta: f64) -> SessionMeta<f64> {
    SessionMeta {
        delta,
        k_i: 1e-3,
        k_u: 1e-3,
        k_b: 1.2e-3,
    }
}

fn pen() -> Penalties<f64> {
    Penalties {
        a_b: 1.0,
        phi_b: 0.01,
    }
}

fn day(delta: f64, s: &[f64], v_i: &[f64], v_u: &[f64], close: f64) -> Session<f64> {
    Session {
        records: (0..s.len())
            .map(|j| Record {
                t: j as f64 * delta,
                s: s[j],
                v_i: v_i[j],
                v_u: v_u[j],
            })
            .collect(),
        close,
    }
}

fn baseline() -> ValidatedParams<f64> {
    ModelParams::baseline().validate().unwrap()
}

#[test]
fn silent_tape_earns_nothing() {
    let d = day(0.01, &[100.0, 101.0, 99.0], &[0.0; 3], &[0.0; 3], 98.0);
    for k in [
        StrategyConstants::new(0.0, 0.0, 0.0, 0.0),
        StrategyConstants::new(0.3, -2.0, 1.5, 0.7),
    ] {
        assert_eq!(backtest_day(&meta(0.01), &d, &k, &pen()).unwrap().p, 0.0);
    }
}

#[test]
fn full_externalisation_of_one_informed_trade() {
    let delta = 1e-3;
    let d = day(delta, &[100.0], &[1.0], &[0.0], 100.0);
    let k = StrategyConstants::new(0.0, 0.0, 1.0, 0.0);
    let r = backtest_day(&meta(delta), &d, &k, &pen()).unwrap();
    assert_eq!(r.q_b, 0.0);
    assert_eq!(r.q_i, 1.0);
    // (k_I − k_B)/Δ
    assert!((r.p - -0.2).abs() < 1e-10, "{r:?}");
}

#[test]
fn passive_broker_on_uninformed_flow() {
    let delta = 0.1;
    let d = day(
        delta,
        &[100.0, 101.0, 99.5],
        &[0.0; 3],
        &[0.5, -0.2, 0.3],
        100.5,
    );
    let r = backtest_day(&meta(delta), &d, &StrategyConstants::default(), &pen()).unwrap();
    // cash 0.5·100.005 − 0.2·100.998 + 0.3·99.503 = 59.6538, Q = −0.6,
    // penalties 0.36 and 0.01·(0.25 + 0.09 + 0.36)·0.1
    assert!((r.x_b - 59.6538).abs() < 1e-10);
    assert!((r.q_b - -0.6).abs() < 1e-14);
    assert!((r.p - -1.0069).abs() < 1e-10, "{r:?}");
}

#[test]
fn irregular_spacing_is_rejected() {
    let mut d = day(0.1, &[100.0; 3], &[0.1; 3], &[0.0; 3], 100.0);
    d.records[2].t = 0.25;
    let err = backtest_day(&meta(0.1), &d, &StrategyConstants::default(), &pen()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    let set = SessionSet {
        meta: meta(0.1),
        days: vec![d],
    };
    assert!(matches!(
        evaluate_p(&set, &StrategyConstants::default(), &pen()),
        Err(Error::Data(_))
    ));
    let empty = SessionSet {
        meta: meta(0.1),
        days: vec![],
    };
    assert!(empty.validate().is_err());
}

#[test]
fn constants_sign_constraints() {
    assert!(StrategyConstants::new(0.0, -5.0, 0.0, 0.0)
        .validate()
        .is_ok());
    for bad in [
        StrategyConstants::new(-1e-9, 0.0, 0.0, 0.0),
        StrategyConstants::new(0.0, 0.0, -1.0, 0.0),
        StrategyConstants::new(0.0, 0.0, 0.0, -0.1),
        StrategyConstants::new(f64::NAN, 0.0, 0.0, 0.0),
    ] {
        assert!(bad.validate().is_err());
    }
}

fn small_set(seed: u64) -> SessionSet<f64> {
    generate_sessions(&baseline(), 12, 1e-2, 100, seed).unwrap()
}

#[test]
fn one_day_and_duplicated_days() {
    let set = small_set(1);
    let k = StrategyConstants::new(0.03, -0.02, 1.0, 0.2);
    let one = SessionSet {
        meta: set.meta,
        days: vec![set.days[0].clone()],
    };
    let r1 = evaluate_p(&one, &k, &pen()).unwrap();
    assert_eq!(r1.p, r1.per_day[0]);

    let r = evaluate_p(&set, &k, &pen()).unwrap();
    let twice = SessionSet {
        meta: set.meta,
        days: set.days.iter().chain(&set.days).cloned().collect(),
    };
    let r2 = evaluate_p(&twice, &k, &pen()).unwrap();
    assert!((r2.p - r.p).abs() <= 1e-12 * r.p.abs().max(1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn p_ignores_day_order(perm in Just((0..12usize).collect::<Vec<_>>()).prop_shuffle()) {
        let set = small_set(2);
        let k = StrategyConstants::new(0.04, 0.01, 0.9, 0.3);
        let shuffled = SessionSet {
            meta: set.meta,
            days: perm.iter().map(|&i| set.days[i].clone()).collect(),
        };
        let a = evaluate_p(&set, &k, &pen()).unwrap();
        let b = evaluate_p(&shuffled, &k, &pen()).unwrap();
        prop_assert_eq!(a.p, b.p);
    }
}

#[test]
fn noiseless_market_has_no_client_flow() {
    let mut p = ModelParams::baseline();
    p.market.sigma_alpha = 0.0;
    p.flow.sigma_u = 0.0;
    let p = p.validate().unwrap();
    let set = generate_sessions(&p, 3, 1e-3, 50, 0).unwrap();
    for d in &set.days {
        assert!(d.records.iter().all(|r| r.v_i == 0.0 && r.v_u == 0.0));
    }
}

#[test]
fn informed_volume_is_centred() {
    let set = generate_sessions(&baseline(), 50, 1e-3, 1000, 4).unwrap();
    assert_eq!(set.n_days(), 50);
    assert!(set.days.iter().all(|d| d.records.len() == 1000));
    // volumes are autocorrelated within a day, so use day means as the samples
    let means: Vec<f64> = set
        .days
        .iter()
        .map(|d| d.records.iter().map(|r| r.v_i).sum::<f64>() / 1000.0)
        .collect();
    let (m, se) = mean_and_std_error(&means);
    assert!(m.abs() < 3.0 * se, "{m} {se}");
    assert!(set.validate().is_ok());
    assert_eq!(set.meta, meta(1e-3));
}

#[test]
fn generation_is_deterministic_per_seed() {
    let a = generate_sessions(&baseline(), 4, 1e-3, 200, 9).unwrap();
    let b = generate_sessions(&baseline(), 4, 1e-3, 200, 9).unwrap();
    let c = generate_sessions(&baseline(), 4, 1e-3, 200, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(generate_sessions(&baseline(), 4, 0.0, 200, 9).is_err());
}

#[test]
fn tape_files_round_trip() {
    let dir = tempdir();
    let path = dir.join("tape.csv");
    let set = generate_sessions(&baseline(), 3, 1e-3, 25, 5).unwrap();
    write_sessions(&set, &path).unwrap();
    assert!(meta_path(&path).exists());
    let back: SessionSet<f64> = read_sessions(&path).unwrap();
    assert_eq!(back, set);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("day,t,S,V_I,V_U\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 26);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn malformed_tapes_are_reported() {
    let dir = tempdir();
    let path = dir.join("bad.csv");
    let set = generate_sessions(&baseline(), 1, 1e-3, 3, 5).unwrap();
    write_sessions(&set, &path).unwrap();
    let good = std::fs::read_to_string(&path).unwrap();

    std::fs::write(&path, good.replacen("0,0,", "0,zero,", 1)).unwrap();
    assert!(matches!(
        read_sessions::<f64>(&path),
        Err(Error::Parse { line: 2, .. })
    ));

    let no_close: String = good.lines().take(4).map(|l| format!("{l}\n")).collect();
    std::fs::write(&path, no_close).unwrap();
    assert!(matches!(read_sessions::<f64>(&path), Err(Error::Data(_))));

    std::fs::write(&path, good.replace("day,t,S", "day,time,S")).unwrap();
    assert!(matches!(
        read_sessions::<f64>(&path),
        Err(Error::Parse { line: 1, .. })
    ));

    std::fs::remove_file(meta_path(&path)).unwrap();
    std::fs::write(&path, good).unwrap();
    assert!(matches!(read_sessions::<f64>(&path), Err(Error::Io(_))));
    std::fs::remove_dir_all(dir).unwrap();
}

fn tempdir() -> std::path::PathBuf {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static N: AtomicUsize = AtomicUsize::new(0);
    let d = std::env::temp_dir().join(format!(
        "brokerflow-cal-{}-{}",
        std::process::id(),
        N.fetch_add(1, Ordering::SeqCst)
    ));
    std::fs::create_dir_all(&d).unwrap();
    d
}

struct Bowl([f64; 4]);

impl Objective<f64> for Bowl {
    fn evaluate(&self, k: &StrategyConstants<f64>) -> f64 {
        -k.to_array()
            .iter()
            .zip(&self.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    }
}

#[test]
fn recovers_the_top_of_a_quadratic_bowl() {
    let target = [0.0035, -0.0021, 1.07, 0.19];
    let grid = GridSpec::default_for(1e-3);
    let r = optimize_objective(
        &Bowl(target),
        StrategyConstants::default(),
        Method::GridThenSimplex,
        &grid,
        &SimplexOptions::default(),
    )
    .unwrap();
    for (got, want) in r.best.to_array().iter().zip(&target) {
        assert!((got - want).abs() < 1e-4, "{:?}", r.best);
    }
    assert!(r.method.starts_with("grid(101871 candidates)+simplex("));
}

#[test]
fn simplex_alone_recovers_the_bowl_top() {
    let target = [0.5, -0.3, 1.2, 0.4];
    let r = optimize_objective(
        &Bowl(target),
        StrategyConstants::new(0.2, 0.0, 1.0, 0.1),
        Method::Simplex,
        &GridSpec::at(&StrategyConstants::new(0.2, 0.0, 1.0, 0.1)),
        &SimplexOptions::default(),
    )
    .unwrap();
    for (got, want) in r.best.to_array().iter().zip(&target) {
        assert!((got - want).abs() < 1e-4, "{:?}", r.best);
    }
}

#[test]
fn simplex_respects_the_sign_constraints() {
    // unconstrained optimum has c, h, f < 0
    let r = optimize_objective(
        &Bowl([-1.0, 0.5, -2.0, -0.5]),
        StrategyConstants::new(0.1, 0.0, 0.1, 0.1),
        Method::GridThenSimplex,
        &GridSpec::default_for(0.1),
        &SimplexOptions::default(),
    )
    .unwrap();
    assert!(r.trace.iter().all(|e| e.k.is_admissible()));
    let b = r.best;
    assert!(b.c.abs() < 1e-4 && b.h.abs() < 1e-4 && b.f.abs() < 1e-4 && (b.g - 0.5).abs() < 1e-4);
}

#[test]
fn collapsed_box_returns_the_initial_point() {
    let set = small_set(3);
    let init = StrategyConstants::new(0.02, 0.01, 1.0, 0.2);
    let r = optimize(
        &set,
        &pen(),
        init,
        Method::Grid,
        &GridSpec::at(&init),
        &SimplexOptions::default(),
    )
    .unwrap();
    assert_eq!(r.best, init);
    assert_eq!(r.trace.len(), 1);
    assert_eq!(r.p_best, evaluate_p(&set, &init, &pen()).unwrap().p);
}

#[test]
fn infeasible_box_is_an_optimisation_error() {
    let mut grid = GridSpec::default_for(1e-3);
    grid.c = Axis::new(-2.0, -1.0, 3);
    let err = optimize_objective(
        &Bowl([0.0; 4]),
        StrategyConstants::default(),
        Method::Grid,
        &grid,
        &SimplexOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::Opt(_)));
}

#[test]
fn bulk_screen_matches_direct_backtests() {
    let set = small_set(6);
    let obj = Backtest::new(&set, pen()).unwrap();
    let mut grid = GridSpec::default_for(1e-2);
    grid.c.n = 3;
    grid.g.n = 5;
    grid.h.n = 4;
    grid.f.n = 3;
    let cands = grid.candidates();
    assert_eq!(cands.len(), 180);
    let bulk = obj.evaluate_many(&cands);
    for (k, v) in cands.iter().zip(&bulk) {
        let direct = obj.evaluate(k);
        assert!(
            (v - direct).abs() < 1e-9 * direct.abs().max(1.0),
            "{k:?}: {v} vs {direct}"
        );
    }
}

#[test]
fn calibration_is_deterministic_and_self_consistent() {
    let set = small_set(7);
    let mut grid = GridSpec::default_for(1e-2);
    grid.h.n = 5;
    grid.f.n = 5;
    let run = || {
        optimize(
            &set,
            &pen(),
            StrategyConstants::default(),
            Method::GridThenSimplex,
            &grid,
            &SimplexOptions::default(),
        )
        .unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.trace.iter().all(|e| e.k.is_admissible()));
    assert!(a.trace.iter().all(|e| e.p <= a.p_best));
    assert_eq!(evaluate_p(&set, &a.best, &pen()).unwrap().p, a.p_best);
    let mut buf = Vec::new();
    a.write_trace_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap().lines().count(),
        a.trace.len() + 1
    );
}

/// Backtest P against the continuous one-day criterion of the same rule,
/// both driven by one fine exogenous path per day.
fn coupled_gap(delta: f64, days: u64) -> (f64, f64, f64) {
    let p = baseline();
    let sol = solve(&p);
    let fine = 1e-4;
    let stride = (delta / fine).round() as usize;
    let steps = (1.0 / fine).round() as usize;
    let fi = Feedback {
        own: sol.informed.inventory_decay,
        alpha: sol.informed.alpha_loading,
        ..Feedback::default()
    };
    let fb = Feedback {
        own: sol.broker.own_inventory,
        client: sol.broker.client_inventory_flow_form,
        informed: sol.broker.informed_flow,
        uninformed: sol.broker.uninformed_hedge,
        ..Feedback::default()
    };
    let k = StrategyConstants::theoretical(&sol.broker, delta);
    let mut backtest = Vec::new();
    let mut continuous = Vec::new();
    for d in 0..days {
        let path = exogenous_path(p.params(), fine, steps, Scheme::ExactOu, 99, d);
        continuous.push(terminal_broker_criterion(p.params(), &path, fine, &fi, &fb));
        let s = session_from_path(&path, stride, delta, |a, q| sol.informed.rate(a, q));
        let m = SessionMeta {
            delta,
            ..meta(delta)
        };
        backtest.push(
            backtest_day(&m, &s, &k, &Penalties::from_params(&p))
                .unwrap()
                .p,
        );
    }
    let gaps: Vec<f64> = backtest
        .iter()
        .zip(&continuous)
        .map(|(a, b)| (a - b).abs())
        .collect();
    let (mean_gap, _) = mean_and_std_error(&gaps);
    let (pb, se) = mean_and_std_error(&backtest);
    let (pc, _) = mean_and_std_error(&continuous);
    (mean_gap, pb - pc, se)
}

#[test]
fn backtest_converges_to_the_continuous_criterion() {
    let (gap_coarse, _, _) = coupled_gap(1e-2, 20);
    let (gap_fine, diff, se) = coupled_gap(1e-3, 20);
    assert!(gap_fine < gap_coarse, "{gap_fine} !< {gap_coarse}");
    // theoretical constants: interval P within 2 across-day std errors of
    // the continuous rule over one day
    assert!(diff.abs() < 2.0 * se, "{diff} vs {se}");
}
