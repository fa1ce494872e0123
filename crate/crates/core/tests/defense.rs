mod common;

use advrl::attack::{build_meta_mdp, AttackConstraints, AttackerObjective, Interaction, MetaBuildOptions, Surface};
use advrl::defense::{
    build_meta_game, defense_backward_induction, enumerate_defense_oracle, solve_zero_sum_tbsg, weak_stackelberg_value,
    DefenseSolution, BR_TOLERANCE, DEFENSE_ORACLE_LIMIT,
};
use advrl::mdp::{backward_induction, value_iteration, TabularPomdp};
use advrl::planner::{plan_attack, DEFAULT_EPSILON};
use advrl::sim::exact_values;
use advrl::Error;
use common::*;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const NON_OBS: [Surface; 3] = [Surface::State, Surface::Action, Surface::Reward];

fn observable(rng: &mut ChaCha8Rng, finite: bool, max: usize) -> TabularPomdp {
    let mut shape = if finite {
        Shape::small_finite(rng, max, 3)
    } else {
        Shape::small_discounted(rng, max)
    };
    shape.fully_observable = true;
    shape.obs = shape.states;
    random_model(rng, &shape)
}

fn some_surfaces(rng: &mut ChaCha8Rng) -> Vec<Surface> {
    NON_OBS.into_iter().filter(|_| rng.random_bool(0.5)).collect()
}

fn zero_sum_defense(model: &TabularPomdp, c: &AttackConstraints) -> DefenseSolution {
    let g = AttackerObjective::NegateReward;
    if model.horizon().is_some() {
        defense_backward_induction(model, c, &g, true, BR_TOLERANCE).unwrap()
    } else {
        let game = build_meta_game(model, c, &g, MetaBuildOptions::default()).unwrap();
        solve_zero_sum_tbsg(&game, 1e-12).unwrap()
    }
}

/// Victim value of `victim` against the attacker's optimal zero-sum attack.
fn worst_case(model: &TabularPomdp, victim: &advrl::mdp::VictimPolicy, c: &AttackConstraints) -> f64 {
    let g = AttackerObjective::NegateReward;
    let inter = Interaction::new(model, victim, c, &g).unwrap();
    let meta = build_meta_mdp(&inter, MetaBuildOptions::default()).unwrap();
    -plan_attack(&meta, DEFAULT_EPSILON).unwrap().objective_value
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn robustness_floor(seed in any::<u64>(), finite in any::<bool>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, finite, 3);
        let surfaces = some_surfaces(&mut rng);
        let c = random_constraints(&mut rng, &model, &surfaces, 0.5);
        let sol = zero_sum_defense(&model, &c);
        let g = AttackerObjective::NegateReward;
        let inter = Interaction::new(&model, &sol.victim_policy, &c, &g).unwrap();
        let meta = build_meta_mdp(&inter, MetaBuildOptions::default()).unwrap();
        for _ in 0..10 {
            let attack = random_attack_policy(&mut rng, &inter, &meta);
            let (v1, _) = exact_values(&inter, &attack).unwrap();
            prop_assert!(v1 >= sol.victim_value - 1e-8, "{v1} < {}", sol.victim_value);
        }
        // The reported response attains the floor.
        let (v1, _) = exact_values(&inter, &sol.attacker_response).unwrap();
        close(v1, sol.victim_value, 1e-7).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn zero_sum_value_equals_worst_case_of_defense(seed in any::<u64>(), finite in any::<bool>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, finite, 3);
        let surfaces = some_surfaces(&mut rng);
        let c = random_constraints(&mut rng, &model, &surfaces, 0.5);
        let sol = zero_sum_defense(&model, &c);
        let attacked = worst_case(&model, &sol.victim_policy, &c);
        close(attacked, sol.victim_value, 1e-7).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn defense_is_at_least_as_secure_as_clean_policy(seed in any::<u64>(), finite in any::<bool>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, finite, 3);
        let surfaces = some_surfaces(&mut rng);
        let c = random_constraints(&mut rng, &model, &surfaces, 0.5);
        let sol = zero_sum_defense(&model, &c);
        let clean = if finite {
            backward_induction(&model).unwrap().1
        } else {
            value_iteration(&model, 1e-12).unwrap().1
        };
        let naive = worst_case(&model, &clean, &c);
        prop_assert!(sol.victim_value >= naive - 1e-7, "defense {} < clean-under-attack {naive}", sol.victim_value);
    }

    #[test]
    fn wider_constraints_lower_the_defense_value(seed in any::<u64>(), finite in any::<bool>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, finite, 3);
        let surfaces = some_surfaces(&mut rng);
        let narrow = random_constraints(&mut rng, &model, &surfaces, 0.3);
        let mut wide = widen(&mut rng, &model, &narrow, 0.3);
        if wide.toggles().get(Surface::Observation) {
            wide = narrow.clone();
        }
        let a = zero_sum_defense(&model, &narrow).victim_value;
        let b = zero_sum_defense(&model, &wide).victim_value;
        prop_assert!(b <= a + 1e-7, "narrow {a} < wide {b}");
    }

    #[test]
    fn general_path_with_negated_reward_matches_zero_sum_path(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, true, 3);
        let surfaces = some_surfaces(&mut rng);
        let c = random_constraints(&mut rng, &model, &surfaces, 0.5);
        let g = AttackerObjective::NegateReward;
        let zs = defense_backward_induction(&model, &c, &g, true, BR_TOLERANCE).unwrap();
        let gs = defense_backward_induction(&model, &c, &g, false, BR_TOLERANCE).unwrap();
        close(zs.victim_value, gs.victim_value, 1e-9).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn general_sum_recursion_is_feasible_and_self_consistent(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, true, 2);
        let surfaces = some_surfaces(&mut rng);
        let c = random_constraints(&mut rng, &model, &surfaces, 0.5);
        let g = random_teaching(&mut rng, &model);
        let dp = defense_backward_induction(&model, &c, &g, false, BR_TOLERANCE).unwrap();
        let (v1, v2) = weak_stackelberg_value(&model, &dp.victim_policy, &c, &g, BR_TOLERANCE).unwrap();
        close(v1, dp.victim_value, 1e-9).map_err(TestCaseError::fail)?;
        close(v2, dp.attacker_value, 1e-9).map_err(TestCaseError::fail)?;
        match enumerate_defense_oracle(&model, &c, &g, DEFENSE_ORACLE_LIMIT) {
            Ok(oracle) => prop_assert!(oracle >= dp.victim_value - 1e-9),
            Err(Error::TooLarge { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn zero_sum_recursion_matches_oracle(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let model = observable(&mut rng, true, 2);
        let surfaces = some_surfaces(&mut rng);
        let c = random_constraints(&mut rng, &model, &surfaces, 0.5);
        let g = AttackerObjective::NegateReward;
        let dp = defense_backward_induction(&model, &c, &g, true, BR_TOLERANCE).unwrap();
        match enumerate_defense_oracle(&model, &c, &g, DEFENSE_ORACLE_LIMIT) {
            Ok(oracle) => close(dp.victim_value, oracle, 1e-10).map_err(TestCaseError::fail)?,
            Err(Error::TooLarge { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }
}

#[test]
fn scope_refusals() {
    let mut rng = rng(41);
    let mut shape = Shape::small_finite(&mut rng, 3, 2);
    shape.fully_observable = false;
    shape.obs = 2;
    let model = random_model(&mut rng, &shape);
    let c = random_constraints(&mut rng, &model, &[Surface::Action], 0.5);
    let g = AttackerObjective::NegateReward;
    let err = defense_backward_induction(&model, &c, &g, true, BR_TOLERANCE).unwrap_err();
    assert!(matches!(err, Error::NotFullyObservable | Error::PartiallyObservable), "{err}");

    let model = observable(&mut rng, true, 3);
    let c = random_constraints(&mut rng, &model, &[Surface::Observation], 0.5);
    let err = defense_backward_induction(&model, &c, &g, true, BR_TOLERANCE).unwrap_err();
    assert!(err.is_scope_refusal(), "{err}");
}

#[test]
fn defense_json_round_trip() {
    let mut rng = rng(42);
    let model = observable(&mut rng, true, 3);
    let c = random_constraints(&mut rng, &model, &NON_OBS, 0.5);
    let sol = zero_sum_defense(&model, &c);
    let back = DefenseSolution::from_json(&sol.to_json(), model.n_actions()).unwrap();
    assert_eq!(back.to_json(), sol.to_json());
}
