mod common;

use absorbing_games::io::{model_to_toml, parse_model};
use absorbing_games::model::{induced_chain, product_strategy};
use absorbing_games::{CorrelatedStrategy, Error, GameModel, StationaryProfile};
use common::*;
use proptest::prelude::*;

#[test]
fn geometric_fixture_is_valid() {
    let m = fixture("geometric");
    assert_eq!(m.state_count(), 2);
    assert_eq!(m.kernel(0, 0), &[0.75, 0.25]);
    assert_eq!(m.reward(0, 0, 1), 1.0);
}

#[test]
fn reward_on_absorbing_state_is_rejected() {
    let mut d = fixture("geometric").description();
    d.reward[0][1][0] = 1.0;
    assert!(matches!(GameModel::new(d), Err(Error::AbsorbingViolation { .. })));
}

#[test]
fn short_row_is_rejected() {
    let mut d = fixture("geometric").description();
    d.kernel[0][0] = vec![0.65, 0.25];
    assert!(matches!(GameModel::new(d), Err(Error::NonStochasticRow { .. })));
}

#[test]
fn empty_action_set_is_rejected() {
    let mut d = fixture("geometric").description();
    d.admissible[0][0].clear();
    d.kernel[0].clear();
    d.reward[0][0].clear();
    d.cost[0][0][0].clear();
    assert!(matches!(GameModel::new(d), Err(Error::EmptyActionSet { player: 0, .. })));
}

#[test]
fn bad_initial_distribution_is_rejected() {
    let mut d = fixture("geometric").description();
    d.eta = vec![0.5, 0.4];
    assert!(matches!(GameModel::new(d), Err(Error::BadDistribution(_))));
}

#[test]
fn uniform_pennies_product_is_quarter() {
    let m = fixture("matching_pennies");
    let joint = product_strategy(&m, &StationaryProfile::uniform(&m)).unwrap();
    assert_eq!(joint.get(0), &[0.25; 4]);
}

#[test]
fn deterministic_product_is_point_mass() {
    let m = fixture("matching_pennies");
    let profile = StationaryProfile::deterministic(&m, &[vec![1, 0], vec![0, 0]]).unwrap();
    let joint = product_strategy(&m, &profile).unwrap();
    assert_eq!(joint.get(0), &[0.0, 0.0, 1.0, 0.0]);
}

#[test]
fn single_player_product_is_identity() {
    let m = fixture("constrained_single");
    let profile = StationaryProfile::new(&m, vec![vec![vec![0.3, 0.7], vec![1.0]]]).unwrap();
    let joint = product_strategy(&m, &profile).unwrap();
    assert_eq!(joint.get(0), &[0.3, 0.7]);
}

#[test]
fn profile_for_another_model_is_rejected() {
    let m = fixture("matching_pennies");
    let other = fixture("geometric");
    let profile = StationaryProfile::uniform(&other);
    assert!(matches!(product_strategy(&m, &profile), Err(Error::ProfileModelMismatch(_))));
}

#[test]
fn induced_chains() {
    let g3 = fixture("geometric");
    let chain = induced_chain(&g3, &CorrelatedStrategy::uniform(&g3)).unwrap();
    assert_eq!(chain.row(0).iter().copied().collect::<Vec<_>>(), vec![0.75, 0.25]);
    assert_eq!(chain.row(1).iter().copied().collect::<Vec<_>>(), vec![0.0, 1.0]);

    let g2 = fixture("matching_pennies");
    let mut r = rng(2);
    let chain = induced_chain(&g2, &CorrelatedStrategy::random(&g2, &mut r)).unwrap();
    assert!((chain[(0, 1)] - 1.0).abs() <= 1e-12);

    let g0 = fixture("absorbed_start");
    let chain = induced_chain(&g0, &CorrelatedStrategy::uniform(&g0)).unwrap();
    assert_eq!(chain, nalgebra::DMatrix::identity(2, 2));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn serialization_round_trips(seed in any::<u64>()) {
        let m = random_absorbing(&mut rng(seed), DESK);
        let back = parse_model(&model_to_toml(&m).unwrap()).unwrap().into_absorbing().unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn induced_rows_are_stochastic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_absorbing(&mut r, DESK);
        let chain = induced_chain(&m, &CorrelatedStrategy::random(&m, &mut r)).unwrap();
        for x in 0..m.state_count() {
            prop_assert!((chain.row(x).sum() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn product_is_a_valid_correlated_strategy(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = random_absorbing(&mut r, DESK);
        let profile = StationaryProfile::random(&m, &mut r);
        let joint = product_strategy(&m, &profile).unwrap();
        prop_assert!(CorrelatedStrategy::new(&m, joint.states().to_vec()).is_ok());
        for x in 0..m.state_count() {
            for ja in 0..m.joint_count(x) {
                prop_assert!((joint.get(x)[ja] - joint_prob(&m, &profile, x, ja)).abs() <= 1e-15);
            }
        }
    }
}
