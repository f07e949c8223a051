//! Property tests across modules.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use weylsim_core::engine::{is_admissible, simulate_path, StepPolicy};
use weylsim_core::models::CoefficientModel;
use weylsim_core::roots::reflect_int;
use weylsim_core::seeding::{par_map_seeded, trajectory_seed};
use weylsim_core::sympoly::elementary_all;
use weylsim_core::{Family, RootSystem};

fn family() -> impl Strategy<Value = (Family, usize)> {
    prop_oneof![
        (2usize..7).prop_map(|n| (Family::A, n)),
        (2usize..6).prop_map(|n| (Family::B, n)),
        (3usize..6).prop_map(|n| (Family::D, n)),
    ]
}

proptest! {
    #[test]
    fn reflections_permute_the_roots((f, n) in family(), a in 0usize..64, b in 0usize..64) {
        let rs = RootSystem::build(f, n).unwrap();
        let roots = rs.roots();
        let (a, b) = (&roots[a % roots.len()], &roots[b % roots.len()]);
        let image = reflect_int(a, b).unwrap().expect("image is a root");
        prop_assert!(roots.contains(&image));
    }

    #[test]
    fn elementary_matches_the_generating_polynomial(v in prop::collection::vec(-20i64..20, 0..9), t in -3i64..4) {
        // prod (1 + v_i t) = sum e_n t^n
        let e = elementary_all(&v);
        let lhs: i64 = v.iter().map(|x| 1 + x * t).product();
        let rhs: i64 = e.iter().enumerate().map(|(n, c)| c * t.pow(n as u32)).sum();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn seeds_are_independent_of_worker_count(master in any::<u64>(), workers in 1usize..5) {
        let a = par_map_seeded(17, master, workers, |i, s| (i, s));
        let expected: Vec<(usize, u64)> = (0..17).map(|i| (i, trajectory_seed(master, i as u64))).collect();
        prop_assert_eq!(a, expected);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn paths_stay_in_the_closed_chamber(k in 0.05f64..1.5, seed in any::<u64>(), bessel in any::<bool>()) {
        let (rs, model, x0) = if bessel {
            (RootSystem::build(Family::B, 2).unwrap(), CoefficientModel::bessel_b(k, 0.5 * k, 2).unwrap(), vec![0.3, 0.6])
        } else {
            (RootSystem::build(Family::A, 3).unwrap(), CoefficientModel::dyson(k, 3).unwrap(), vec![-0.2, 0.0, 0.2])
        };
        let policy = StepPolicy::with_dt_max(1e-3);
        let mut ok = true;
        let mut obs = |_t: f64, x: &[f64], _dt: f64| ok &= is_admissible(&model, &rs, x, policy.wall_tol);
        simulate_path(&model, &rs, &x0, 0.5, &policy, &mut ChaCha8Rng::seed_from_u64(seed), &mut obs).unwrap();
        prop_assert!(ok);
    }
}
