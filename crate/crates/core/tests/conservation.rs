mod support;

use support::play_random_game;

const GAMES: u64 = 1000;

#[test]
fn deck_is_conserved_and_games_are_reproducible() {
    let mut turns = 0;
    for seed in 0..GAMES {
        let first = play_random_game(seed);
        assert_eq!(first.partition_failures, 0, "game {seed} lost or duplicated cards");
        let again = play_random_game(seed);
        assert!(first.log == again.log, "game {seed} did not replay bit for bit");
        turns += first.turns;
    }
    assert!(turns > 0);
}

#[test]
fn different_seeds_give_different_games() {
    assert_ne!(play_random_game(1).log, play_random_game(2).log);
}
