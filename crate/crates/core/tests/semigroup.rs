use qnorm::norms::{NormQuery, OptimizerConfig};
use qnorm::semigroup::{contraction_time, excess, q_of_t, DepolarizingSemigroup};

fn scan(sg: &DepolarizingSemigroup, query: NormQuery, cfg: &OptimizerConfig) -> f64 {
    let mut t = 0.0;
    while excess(sg, t, query, cfg).unwrap() > cfg.tol_value {
        t += 1e-3;
    }
    t
}

#[test]
fn bisection_agrees_with_grid_scan() {
    let cfg = OptimizerConfig::default();
    let sg = DepolarizingSemigroup::new(2).unwrap();
    for q in [2.5, 4.0] {
        let query = NormQuery::new(2.0, q).unwrap();
        let t = contraction_time(&sg, query, &cfg, 20.0, 1e-4).unwrap();
        let s = scan(&sg, query, &cfg);
        assert!((t - s).abs() <= 2e-3, "q={q}: bisection {t}, scan {s}");
    }
}

#[test]
fn contraction_time_nondecreasing_in_q() {
    let cfg = OptimizerConfig::default();
    for d in [2, 3] {
        let sg = DepolarizingSemigroup::new(d).unwrap();
        let times: Vec<f64> = [2.0, 2.5, 3.0, 4.0, 6.0]
            .iter()
            .map(|&q| contraction_time(&sg, NormQuery::new(2.0, q).unwrap(), &cfg, 20.0, 1e-4).unwrap())
            .collect();
        assert_eq!(times[0], 0.0);
        assert!(times.windows(2).all(|w| w[1] >= w[0] - 1e-4), "d={d}: {times:?}");
    }
}

#[test]
fn q_of_t_round_trip() {
    let cfg = OptimizerConfig::default();
    let sg = DepolarizingSemigroup::new(2).unwrap();
    assert!((q_of_t(&sg, 0.0, &cfg).unwrap().q - 2.0).abs() < 1e-3);
    for t in [0.2, 0.5] {
        let r = q_of_t(&sg, t, &cfg).unwrap();
        assert!(!r.saturated);
        let back = contraction_time(&sg, NormQuery::new(2.0, r.q).unwrap(), &cfg, 20.0, 1e-4).unwrap();
        assert!((back - t).abs() <= 5e-3, "t={t}: q={} back={back}", r.q);
    }
}
