use lossnet::analytic::*;
use lossnet::*;
use proptest::prelude::*;

#[test]
fn reference_constants() {
    assert_eq!(fluid_reward(&ModelParams::reference(100)), 170.0);
    let c = window_constant(&Rates::REFERENCE);
    assert!((c - 31841.27).abs() < 0.01, "{c}");
}

#[test]
fn best_threshold_gap_grows_like_log_n() {
    // fitted against ln N by least squares, written out longhand
    let pts: Vec<(f64, f64)> = (4..=12)
        .map(|e| {
            let n = 1usize << e;
            let p = ModelParams::reference(n);
            ((n as f64).ln(), fluid_reward(&p) - best_threshold(&p).1)
        })
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let b =
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    assert!(b > 1.0, "slope {b}");
    let gaps: Vec<f64> = pts.iter().map(|p| p.1).collect();
    assert!(gaps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn best_threshold_agrees_with_simulation_ranking() {
    let p = ModelParams::reference(20);
    let rewards = threshold_rewards(&p);
    let (theta, best) = best_threshold(&p);
    assert_eq!(rewards[theta], best);
    assert!(rewards.iter().all(|&r| r <= best));
    assert!(best > rewards[0] && best > rewards[20]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_law_of_random_chains(birth in proptest::collection::vec(0.01f64..50.0, 1..40), scale in 0.01f64..50.0) {
        let m = birth.len();
        let mut b = birth.clone();
        b.push(0.0);
        let mut d: Vec<f64> = (0..=m).map(|i| scale * (i as f64 + 1.0)).collect();
        d[0] = 0.0;
        let spec = BirthDeathSpec::new(b, d).unwrap();
        let pi = stationary_distribution(&spec).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&x| x >= 0.0));
        let worst = spec.balance_residual(&pi).into_iter().fold(0.0, |a: f64, r| a.max(r.abs()));
        prop_assert!(worst < 1e-9);
    }

    #[test]
    fn hitting_probability_rises_with_start(n in 9usize..200) {
        let p = ModelParams::reference(n);
        let upper = p.sqrt_level();
        let hs: Vec<f64> = (1..=upper).map(|y| race_probability(&p, y, 1, upper).unwrap()).collect();
        prop_assert_eq!(hs[0], 0.0);
        prop_assert_eq!(hs[upper - 1], 1.0);
        prop_assert!(hs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn ruin_formula_matches_linear_solve(p_up in 0.05f64..0.95, a in -5i64..0, b in 1i64..8) {
        // a homogeneous chain on 0..=b-a with constant up/down rates
        let m = (b - a) as usize;
        let birth: Vec<f64> = (0..=m).map(|i| if i < m { p_up } else { 0.0 }).collect();
        let death: Vec<f64> = (0..=m).map(|i| if i > 0 { 1.0 - p_up } else { 0.0 }).collect();
        let spec = BirthDeathSpec::new(birth, death).unwrap();
        for y in a..=b {
            let closed = walk_ruin_prob(p_up, y, a, b).unwrap();
            let solved = hitting_probability(&spec, (y - a) as usize, 0, m).unwrap();
            prop_assert!((closed - solved).abs() < 1e-10, "{} vs {}", closed, solved);
        }
    }

    #[test]
    fn absorption_grows_with_the_window(n in 4usize..16, w1 in 0.0f64..1.0, dw in 0.0f64..1.0) {
        let p = ModelParams::reference(n);
        let a = transient_absorption(&p, 2, w1).unwrap();
        let b = transient_absorption(&p, 2, w1 + dw).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && b >= a - 1e-12);
    }

    #[test]
    fn no_threshold_beats_the_fluid_bound(n in 1usize..400) {
        let p = ModelParams::reference(n);
        let f = fluid_reward(&p);
        prop_assert!(threshold_rewards(&p).iter().all(|&r| r <= f + 1e-9));
    }
}
