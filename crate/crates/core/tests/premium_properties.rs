use bowley_core::choquet::{choquet, Distortion, OutcomeSample};
use bowley_core::game::{farmer_risk, FarmerPreference};
use bowley_core::premium::{insurer_profit, premium, premium_gradients, CostModel, PremiumPrinciple};
use proptest::prelude::*;

/// Nonnegative payoffs on distinct, well-separated values.
fn payoffs() -> impl Strategy<Value = OutcomeSample> {
    (1usize..8, any::<u64>(), prop::collection::vec(0.1f64..1.0, 8)).prop_map(|(n, seed, w)| {
        let mut values: Vec<f64> = (0..n).map(|k| 0.5 + k as f64 * 1.25).collect();
        let mut state = seed | 1;
        for i in (1..n).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            values.swap(i, ((state >> 33) % (i as u64 + 1)) as usize);
        }
        let t: f64 = w[..n].iter().sum();
        OutcomeSample::new(values, w[..n].iter().map(|x| x / t).collect()).unwrap()
    })
}

fn principle() -> impl Strategy<Value = PremiumPrinciple> {
    prop_oneof![
        (0.0f64..3.0).prop_map(|theta| PremiumPrinciple::Expected { theta }),
        (0.0f64..3.0, 1.0f64..6.0).prop_map(|(theta, rho)| PremiumPrinciple::PowerDistortion { theta, rho }),
        prop::collection::vec(0.0f64..0.05, 1..30).prop_map(|inc| PremiumPrinciple::General {
            distortion: Distortion::knots(inc).unwrap()
        }),
    ]
}

fn bumped(p: &PremiumPrinciple, k: usize, d: f64) -> PremiumPrinciple {
    match p.clone() {
        PremiumPrinciple::Expected { theta } => PremiumPrinciple::Expected { theta: theta + d },
        PremiumPrinciple::PowerDistortion { theta, rho } if k == 0 => {
            PremiumPrinciple::PowerDistortion { theta: theta + d, rho }
        }
        PremiumPrinciple::PowerDistortion { theta, rho } => {
            PremiumPrinciple::PowerDistortion { theta, rho: rho + d }
        }
        PremiumPrinciple::General { distortion: Distortion::Knots(c) } => {
            let mut inc = c.increments().to_vec();
            inc[k] += d;
            PremiumPrinciple::General { distortion: Distortion::knots(inc).unwrap() }
        }
        other => other,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn expected_value_premium_is_loaded_mean(i in payoffs(), theta in 0.0f64..5.0) {
        let p = premium(&PremiumPrinciple::Expected { theta }, &i).unwrap();
        prop_assert!((p - (1.0 + theta) * i.mean()).abs() <= 1e-12 * (1.0 + p));
    }

    #[test]
    fn unit_power_is_the_expected_value_premium(i in payoffs(), theta in 0.0f64..5.0) {
        let a = premium(&PremiumPrinciple::PowerDistortion { theta, rho: 1.0 }, &i).unwrap();
        let b = premium(&PremiumPrinciple::Expected { theta }, &i).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b));
    }

    #[test]
    fn power_premium_grows_with_rho_and_theta(i in payoffs(), theta in 0.0f64..3.0, rho in 1.0f64..6.0, d in 0.0f64..2.0) {
        let base = premium(&PremiumPrinciple::PowerDistortion { theta, rho }, &i).unwrap();
        let more_rho = premium(&PremiumPrinciple::PowerDistortion { theta, rho: rho + d }, &i).unwrap();
        let more_theta = premium(&PremiumPrinciple::PowerDistortion { theta: theta + d, rho }, &i).unwrap();
        prop_assert!(more_rho >= base - 1e-12);
        prop_assert!(more_theta >= base - 1e-12);
        prop_assert!(base >= i.mean() - 1e-12);
    }

    #[test]
    fn profit_is_premium_less_loaded_cost(p in principle(), i in payoffs(), mu in 0.0f64..0.5) {
        let c = CostModel::new(mu).unwrap();
        let profit = insurer_profit(&p, &c, &i).unwrap();
        let want = premium(&p, &i).unwrap() - (1.0 + mu) * i.mean();
        prop_assert!((profit - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }

    #[test]
    fn gradients_match_central_differences(p in principle(), i in payoffs(), mu in 0.0f64..0.5) {
        let c = CostModel::new(mu).unwrap();
        let g = premium_gradients(&p, &c, &i).unwrap();
        let h = 1e-6;
        for (k, &want) in g.leader.iter().enumerate() {
            let fd = (premium(&bumped(&p, k, h), &i).unwrap() - premium(&bumped(&p, k, -h), &i).unwrap()) / (2.0 * h);
            prop_assert!((fd - want).abs() <= 1e-6 * (1.0 + want.abs()), "leader {k}: {fd} vs {want}");
        }
        for k in 0..i.len() {
            let at = |d: f64| {
                let mut v = i.values().to_vec();
                v[k] += d;
                let j = i.with_values(v).unwrap();
                (premium(&p, &j).unwrap(), insurer_profit(&p, &c, &j).unwrap())
            };
            let ((pu, fu), (pd, fdn)) = (at(h), at(-h));
            prop_assert!(((pu - pd) / (2.0 * h) - g.payoff[k]).abs() <= 1e-6 * (1.0 + g.payoff[k].abs()));
            prop_assert!(((fu - fdn) / (2.0 * h) - g.profit_payoff[k]).abs() <= 1e-6 * (1.0 + g.profit_payoff[k].abs()));
        }
    }

    #[test]
    fn farmer_objective_brackets(y in payoffs(), alpha in 0.05f64..0.95, theta in 0.0f64..2.0) {
        // no cover leaves the farmer's risk of the loss; full cover leaves
        // only the premium
        let f = FarmerPreference::cvar(alpha).unwrap();
        let p = PremiumPrinciple::Expected { theta };
        let none = y.with_values(vec![0.0; y.len()]).unwrap();
        let bare = farmer_risk(&f, &p, &y, &none).unwrap();
        prop_assert!((bare - choquet(f.distortion(), &y)).abs() <= 1e-12 * (1.0 + bare));
        let full = farmer_risk(&f, &p, &y, &y).unwrap();
        prop_assert!((full - (1.0 + theta) * y.mean()).abs() <= 1e-12 * (1.0 + full));
    }
}
