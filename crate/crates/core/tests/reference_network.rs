//! The built-in 3-user, 6-channel network and the published allocations on it.

use robust_iwf::{
    check_uniqueness, is_equilibrium, normalized_interference, orthogonality_index, run_iwfa,
    social_utility, table1_scenario, user_utility, IterationConfig, Profile, Scenario, Schedule,
    Uncertainty,
};
use robust_iwf_validation as oracle;

fn nested_gain(scn: &Scenario) -> Vec<Vec<Vec<f64>>> {
    let (m, k) = (scn.num_users(), scn.num_channels());
    (0..m)
        .map(|j| {
            (0..m)
                .map(|i| (0..k).map(|c| scn.gain(j, i, c)).collect())
                .collect()
        })
        .collect()
}

fn nested_noise(scn: &Scenario) -> Vec<Vec<f64>> {
    (0..scn.num_users())
        .map(|i| (0..scn.num_channels()).map(|c| scn.noise(i, c)).collect())
        .collect()
}

fn rows(p: &Profile) -> Vec<Vec<f64>> {
    p.rows().map(|r| r.to_vec()).collect()
}

/// Published nominal equilibrium allocation.
fn ne_profile() -> Profile {
    Profile::from_rows(vec![
        vec![0.44, 0.1, 0.0, 0.45, 0.0, 0.0],
        vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
        vec![0.0, 0.0059, 0.3049, 0.0, 0.32, 0.37],
    ])
    .unwrap()
}

/// Published robust equilibrium allocation at eps = 3.
fn rne_profile() -> Profile {
    Profile::from_rows(vec![
        vec![0.5, 0.0, 0.0, 0.5, 0.0, 0.0],
        vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.5],
    ])
    .unwrap()
}

#[test]
fn published_constants() {
    let scn = table1_scenario();
    assert_eq!((scn.num_users(), scn.num_channels()), (3, 6));
    assert_eq!(scn.gain(0, 0, 0), 20.52);
    assert_eq!(scn.noise(1, 0), 8.24);
    assert_eq!(scn.p_max(), &[1.0, 1.0, 1.0]);
    assert!(scn.p_mask().iter().all(|m| *m == 0.5));
}

#[test]
fn interference_at_published_equilibrium_matches_term_by_term_sum() {
    let scn = table1_scenario();
    let p = ne_profile();
    for user in 0..3 {
        let got = normalized_interference(&scn, &p, user).unwrap();
        let want = oracle::normalized_interference(
            &nested_gain(&scn),
            &nested_noise(&scn),
            &rows(&p),
            user,
        );
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-14 * w.abs(), "user {user}: {g} vs {w}");
        }
    }
}

#[test]
fn orthogonality_of_published_allocations() {
    // channels 2 and 3 are shared at the nominal equilibrium
    assert!((orthogonality_index(&ne_profile(), 1e-3) - 4.0 / 6.0).abs() < 1e-15);
    assert_eq!(orthogonality_index(&rne_profile(), 1e-3), 1.0);
}

#[test]
fn utilities_at_published_allocations_match_direct_evaluation() {
    let scn = table1_scenario();
    let (gain, noise) = (nested_gain(&scn), nested_noise(&scn));
    let robust = Uncertainty::worst_case_uniform(3, 6, 3.0).unwrap();
    let nominal = Uncertainty::nominal(3, 6);
    for (profile, unc, inflate) in [(rne_profile(), &robust, 4.0), (ne_profile(), &nominal, 1.0)] {
        let mut total = 0.0;
        for user in 0..3 {
            let s: Vec<f64> = oracle::normalized_interference(&gain, &noise, &rows(&profile), user)
                .iter()
                .map(|v| v * inflate)
                .collect();
            let want = oracle::rate(&s, profile.row(user));
            let got = user_utility(&scn, &profile, user, unc).unwrap();
            assert!((got - want).abs() < 1e-12);
            total += want;
        }
        assert!((social_utility(&scn, &profile, unc).unwrap() - total).abs() < 1e-12);
    }
}

/// Largest gain any user can get by deviating from `profile`, measured with
/// the exhaustive grid search.
fn best_deviation_gain(scn: &Scenario, profile: &Profile, inflate: f64) -> f64 {
    let (gain, noise) = (nested_gain(scn), nested_noise(scn));
    (0..3)
        .map(|user| {
            let s: Vec<f64> = oracle::normalized_interference(&gain, &noise, &rows(profile), user)
                .iter()
                .map(|v| v * inflate)
                .collect();
            oracle::grid_max_rate(&s, 1.0, scn.p_mask(), 1e-3) - oracle::rate(&s, profile.row(user))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn published_robust_allocation_is_not_a_fixed_point_of_this_network() {
    // a grid allocation beats the published one by a clear margin, so no
    // tolerance can make it an equilibrium
    let scn = table1_scenario();
    let unc = Uncertainty::worst_case_uniform(3, 6, 3.0).unwrap();
    assert!(best_deviation_gain(&scn, &rne_profile(), 4.0) > 1e-2);
    assert!(!is_equilibrium(&scn, &unc, &rne_profile(), 1e-6));
}

#[test]
fn solved_profiles_admit_no_profitable_grid_deviation() {
    let scn = table1_scenario();
    for eps in [0.0, 3.0] {
        let unc = Uncertainty::worst_case_uniform(3, 6, eps).unwrap();
        let rep = run_iwfa(&scn, &unc, &IterationConfig::new(Schedule::Sequential)).unwrap();
        assert!(rep.converged);
        assert!(best_deviation_gain(&scn, &rep.profile, 1.0 + eps) <= 1e-6);
    }
}

#[test]
fn nominal_uniqueness_fails() {
    // lhs >= min(mean entry sum of the symmetric part, largest entry); both
    // lower bounds exceed one on some channel
    let scn = table1_scenario();
    let mut witnessed = false;
    for k in 0..6 {
        let s: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| {
                        if i == j {
                            0.0
                        } else {
                            scn.gain(j, i, k) / scn.gain(i, i, k)
                        }
                    })
                    .collect()
            })
            .collect();
        let rayleigh: f64 = s.iter().flatten().sum::<f64>() / 3.0;
        let largest = s.iter().flatten().fold(0.0f64, |m, v| m.max(*v));
        if rayleigh.min(largest) > 1.0 {
            witnessed = true;
        }
    }
    assert!(witnessed);
    let rep = check_uniqueness(&scn, &Uncertainty::nominal(3, 6)).unwrap();
    assert_eq!(rep.uniqueness_holds, Some(false));
}
