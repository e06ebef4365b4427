mod support;

use chefs_core::engine::{ActionSpec, MatchState, NUM_ACTIONS, OBS_LEN};
use proptest::prelude::*;
use support::{oracle_mask, random_states};

#[test]
fn mask_matches_subset_enumeration() {
    let states = random_states(10_000, 2024);
    let mut mismatches = Vec::new();
    for (i, (state, player)) in states.iter().enumerate() {
        let want = oracle_mask(state, *player);
        let got = state.legal_action_mask(*player);
        if got.0 != want {
            mismatches.push(i);
        }
    }
    assert!(mismatches.is_empty(), "{} mismatching states, first {:?}", mismatches.len(), &mismatches[..mismatches.len().min(5)]);
}

#[test]
fn oracle_covers_passing_and_joker_cases() {
    let states = random_states(10_000, 2024);
    let masks: Vec<_> = states.iter().map(|(s, p)| oracle_mask(s, *p)).collect();
    assert!(masks.iter().any(|m| !m[199]), "no forced lead sampled");
    assert!(masks.iter().any(|m| m[198]), "no joker-only discard sampled");
    assert!(masks.iter().any(|m| m.iter().filter(|&&b| b).count() == 1), "no pass-only state sampled");
    assert!(states.iter().any(|(s, _)| s.board_cards().iter().any(|c| c.is_joker()) && !s.is_board_cleared()));
}

proptest! {
    #[test]
    fn index_roundtrip(i in 0usize..NUM_ACTIONS) {
        let spec = ActionSpec::from_index(i).unwrap();
        prop_assert_eq!(spec.index(), i);
        if let ActionSpec::Discard { value, qty, jokers } = spec {
            prop_assert!((1..=11).contains(&value));
            prop_assert!(qty >= 1 && qty <= value);
            prop_assert!(jokers <= 2);
        }
    }

    #[test]
    fn observation_is_bounded(seed in any::<u64>(), steps in 0usize..80) {
        let mut state = MatchState::deal(seed);
        for k in 0..steps {
            if state.is_over() {
                break;
            }
            let p = state.turn();
            let legal = state.legal_action_mask(p).legal_indices();
            state.apply_action(p, legal[(seed as usize ^ k) % legal.len()]).unwrap();
        }
        for p in 0..4 {
            let obs = state.encode_observation(p);
            prop_assert_eq!(obs.as_slice().len(), OBS_LEN);
            prop_assert!(obs.as_slice().iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
        prop_assert_eq!(state.card_total(), 68);
    }

    #[test]
    fn illegal_actions_leave_the_state_alone(seed in any::<u64>(), action in 0usize..NUM_ACTIONS) {
        let mut state = MatchState::deal(seed);
        let p = state.turn();
        if !state.legal_action_mask(p).is_legal(action) {
            let before = state.clone();
            prop_assert!(state.apply_action(p, action).is_err());
            prop_assert_eq!(state, before);
        }
    }
}
