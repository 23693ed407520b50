use proptest::prelude::*;

use rpolab::rollout::{gae, normalize_advantages, GaeConfig};

fn segment(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<bool>, f64)> {
    (
        proptest::collection::vec(-10.0f64..10.0, n),
        proptest::collection::vec(-10.0f64..10.0, n),
        proptest::collection::vec(proptest::bool::weighted(0.1), n),
        -10.0f64..10.0,
    )
}

proptest! {
    #[test]
    fn gae_is_linear_in_rewards(
        (r1, values, dones, boot) in segment(30),
        r2 in proptest::collection::vec(-10.0f64..10.0, 30),
        c in -3.0f64..3.0,
    ) {
        let cfg = GaeConfig::default();
        let zero = vec![0.0; 30];
        let base = gae(&zero, &values, &dones, boot, cfg);
        let a = gae(&r1, &values, &dones, boot, cfg);
        let b = gae(&r2, &values, &dones, boot, cfg);
        let mixed: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| x + c * y).collect();
        let m = gae(&mixed, &values, &dones, boot, cfg);
        for t in 0..30 {
            let expect = a[t] + c * (b[t] - base[t]);
            prop_assert!((m[t] - expect).abs() < 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn lambda_zero_gives_td_residuals((rewards, values, dones, boot) in segment(20)) {
        let adv = gae(&rewards, &values, &dones, boot, GaeConfig::new(0.9, 0.0).unwrap());
        for t in 0..20 {
            let next = if t + 1 < 20 { values[t + 1] } else { boot };
            let live = if dones[t] { 0.0 } else { 1.0 };
            let delta = rewards[t] + 0.9 * next * live - values[t];
            prop_assert!((adv[t] - delta).abs() < 1e-12);
        }
    }

    #[test]
    fn lambda_one_gives_discounted_return_minus_value((rewards, values, _dones, boot) in segment(20)) {
        let dones = vec![false; 20];
        let adv = gae(&rewards, &values, &dones, boot, GaeConfig::new(0.95, 1.0).unwrap());
        for t in 0..20 {
            let mut ret = 0.95f64.powi((20 - t) as i32) * boot;
            for (k, r) in rewards[t..].iter().enumerate() {
                ret += 0.95f64.powi(k as i32) * r;
            }
            prop_assert!((adv[t] - (ret - values[t])).abs() < 1e-9);
        }
    }

    #[test]
    fn normalization_is_idempotent(adv in proptest::collection::vec(-100.0f64..100.0, 2..64)) {
        let once = normalize_advantages(&adv).unwrap();
        prop_assume!(!once.degenerate);
        let n = adv.len() as f64;
        let mean = once.values.iter().sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        let twice = normalize_advantages(&once.values).unwrap();
        for (a, b) in once.values.iter().zip(&twice.values) {
            prop_assert!((a - b).abs() < 1e-7);
        }
    }
}

#[test]
fn constant_advantages_are_degenerate() {
    let out = normalize_advantages(&[3.0; 8]).unwrap();
    assert!(out.degenerate);
    assert!(out.values.iter().all(|v| *v == 0.0));
    assert!(normalize_advantages(&[1.0]).is_err());
}
