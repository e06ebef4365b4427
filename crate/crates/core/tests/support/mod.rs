//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the code it checks except to read state.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::{Arc, Mutex};

use chefs_core::agents::{Player, RandomAgent};
use chefs_core::engine::{full_deck, Card, Hand, MatchState, NUM_ACTIONS, NUM_PLAYERS};
use chefs_core::eventlog::EventLog;
use chefs_core::nn::{Activation, Mlp};
use chefs_core::replay::{Experience, PriorityBuffer, SampleMode};
use chefs_core::table::Table;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

const JOKER_FACE: u8 = 12;

// ---------------------------------------------------------------------------
// Legal moves

/// Slot of a discard of `qty` cards of `value` plus `jokers` jokers, written
/// out from the layout rule rather than taken from the engine.
fn discard_slot(value: u8, qty: u8, jokers: u8) -> usize {
    let (v, q, j) = (value as usize, qty as usize, jokers as usize);
    let mut slot = 0;
    for face in 1..v {
        slot += 3 * face;
    }
    slot + 3 * (q - 1) + j
}

/// Mask built by enumerating every sub-multiset of the hand and keeping the
/// ones that form a legal set.
pub fn oracle_mask(state: &MatchState, player: usize) -> [bool; NUM_ACTIONS] {
    let mut mask = [false; NUM_ACTIONS];
    if state.is_over() || state.is_finished(player) {
        return mask;
    }
    let mut held = [0u8; 13];
    for c in state.hand(player).cards() {
        held[c.face() as usize] += 1;
    }
    let board = state.board_cards();
    let cleared = board.is_empty();
    let top = board.iter().map(|c| c.face()).filter(|&f| f != JOKER_FACE).min().unwrap_or(JOKER_FACE);

    let mut pick = [0u8; 13];
    enumerate(&held, 1, &mut pick, &mut |pick| {
        let faces: Vec<u8> = (1..=11u8).filter(|&f| pick[f as usize] > 0).collect();
        let jokers = pick[JOKER_FACE as usize];
        match faces[..] {
            [] if jokers > 0 && jokers == held[JOKER_FACE as usize] => mask[198] = true,
            [value] => {
                let qty = pick[value as usize];
                if cleared || (value < top && (qty + jokers) as usize >= board.len()) {
                    mask[discard_slot(value, qty, jokers)] = true;
                }
            }
            _ => {}
        }
    });

    // Passing is free except on a cleared board when everyone else still in
    // the match has already passed: then the last of them must lead.
    let others_all_passed = state.passes_since_discard() as usize + 1 >= state.active_players();
    mask[199] = !(cleared && others_all_passed);
    mask
}

fn enumerate(held: &[u8; 13], face: usize, pick: &mut [u8; 13], visit: &mut impl FnMut(&[u8; 13])) {
    if face == 13 {
        visit(pick);
        return;
    }
    for n in 0..=held[face] {
        pick[face] = n;
        enumerate(held, face + 1, pick, visit);
    }
    pick[face] = 0;
}

/// `count` positions: half sampled from random playouts (at the player to
/// move), half built from random partial hands and random boards.
pub fn random_states(count: usize, seed: u64) -> Vec<(MatchState, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count / 2 {
        let mut state = MatchState::deal(rng.gen());
        while !state.is_over() && out.len() < count / 2 {
            let p = state.turn();
            if rng.gen_bool(0.3) {
                out.push((state.clone(), p));
            }
            let legal = state.legal_action_mask(p).legal_indices();
            state.apply_action(p, *legal.choose(&mut rng).unwrap()).unwrap();
        }
    }
    while out.len() < count {
        out.push((synthetic_state(&mut rng), 0));
    }
    out
}

fn synthetic_state(rng: &mut ChaCha8Rng) -> MatchState {
    let mut deck = full_deck();
    deck.shuffle(rng);
    let mut hands: [Hand; NUM_PLAYERS] = Default::default();
    let mut at = 0;
    for (p, hand) in hands.iter_mut().enumerate() {
        let n = if p == 0 { rng.gen_range(1..=17) } else { rng.gen_range(0..=17) };
        *hand = Hand::from_cards(deck[at..at + n].iter().copied());
        at += n;
    }
    let rest = &deck[at..];
    let state = MatchState::from_hands(hands, 0, rng.gen());
    if rest.is_empty() || rng.gen_bool(0.25) {
        return state;
    }
    let mut pile: BTreeMap<u8, u8> = BTreeMap::new();
    for c in rest {
        *pile.entry(c.face()).or_default() += 1;
    }
    let pile_jokers = pile.remove(&JOKER_FACE).unwrap_or(0);
    let mut board = Vec::new();
    let faces: Vec<(u8, u8)> = pile.into_iter().collect();
    if faces.is_empty() || rng.gen_bool(0.05) {
        if pile_jokers == 0 {
            return state;
        }
        board.extend(std::iter::repeat(Card::JOKER).take(rng.gen_range(1..=pile_jokers) as usize));
    } else {
        let (face, n) = faces[rng.gen_range(0..faces.len())];
        let qty = rng.gen_range(1..=n);
        board.extend(std::iter::repeat(Card::new(face).unwrap()).take(qty as usize));
        board.extend(std::iter::repeat(Card::JOKER).take(rng.gen_range(0..=pile_jokers) as usize));
    }
    state.with_board(board, Some(rng.gen_range(1..NUM_PLAYERS)))
}

// ---------------------------------------------------------------------------
// Card conservation and determinism

/// Whether hands, board and discard pile together are exactly the deck.
pub fn partition_holds(state: &MatchState) -> bool {
    let mut seen = [0usize; 13];
    for p in 0..NUM_PLAYERS {
        for c in state.hand(p).cards() {
            seen[c.face() as usize] += 1;
        }
    }
    for c in state.board_cards().iter().chain(state.discard_pile()) {
        seen[c.face() as usize] += 1;
    }
    let mut want = [0usize; 13];
    for v in 1..=11 {
        want[v] = v;
    }
    want[JOKER_FACE as usize] = 2;
    seen == want
}

#[derive(Clone, Default)]
struct SharedBuf(Arc<Mutex<Vec<u8>>>);

impl Write for SharedBuf {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.lock().unwrap().extend_from_slice(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

pub struct PlayedGame {
    pub log: Vec<u8>,
    pub turns: usize,
    /// Turns after which the card partition did not hold.
    pub partition_failures: usize,
}

/// One game of four random agents, logging every turn and checking the card
/// partition after each of them.
pub fn play_random_game(seed: u64) -> PlayedGame {
    let ids = ["p0", "p1", "p2", "p3"].map(String::from);
    let mut table = Table::new(format!("g{seed}"), seed, ids, seed);
    let mut agents: Vec<RandomAgent> = (0..NUM_PLAYERS as u64).map(|i| RandomAgent::new(seed * 4 + i)).collect();
    let buf = SharedBuf::default();
    let mut log = EventLog::to_writer(Box::new(buf.clone()));
    let mut game = PlayedGame {
        log: Vec::new(),
        turns: 0,
        partition_failures: 0,
    };
    if !partition_holds(table.state()) {
        game.partition_failures += 1;
    }
    loop {
        let Some(seat) = table.to_act() else {
            table.start_next_match().unwrap();
            if !partition_holds(table.state()) {
                game.partition_failures += 1;
            }
            continue;
        };
        let action = agents[seat].select_action(seat, &table.observation(seat), &table.mask(seat)).unwrap();
        let outcome = table.apply(seat, action).unwrap();
        log.write(&outcome.record).unwrap();
        game.turns += 1;
        if !partition_holds(table.state()) {
            game.partition_failures += 1;
        }
        if outcome.game_over.is_some() {
            break;
        }
    }
    log.flush().unwrap();
    drop(log);
    game.log = std::mem::take(&mut *buf.0.lock().unwrap());
    game
}

// ---------------------------------------------------------------------------
// Gradients

const FD_STEP: f64 = 1e-5;
/// Below this magnitude both gradients count as zero and the error is taken
/// as absolute.
const GRAD_FLOOR: f64 = 1e-6;

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Max relative error between backpropagated and central-difference
/// gradients of `L = c · f(x)` for one random network, over every parameter
/// and every input coordinate.
pub fn gradient_check(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden_acts = [Activation::Relu, Activation::Tanh, Activation::Linear];
    let out_acts = [Activation::Linear, Activation::Tanh, Activation::Softmax];
    let layers = rng.gen_range(1..=3);
    let mut dims = vec![rng.gen_range(4..=64)];
    for _ in 0..layers {
        dims.push(rng.gen_range(4..=64));
    }
    dims.push(rng.gen_range(2..=8));
    let specs: Vec<(usize, usize, Activation)> = dims
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i + 2 == dims.len() {
                *out_acts.choose(&mut rng).unwrap()
            } else {
                *hidden_acts.choose(&mut rng).unwrap()
            };
            (w[0], w[1], act)
        })
        .collect();
    let mut net = Mlp::from_spec(&specs, rng.gen());
    let mut params = net.params();
    for p in params.iter_mut() {
        *p += rng.gen_range(-0.3..0.3);
    }
    net.set_params(&params).unwrap();
    let x: Vec<f64> = (0..dims[0]).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let c: Vec<f64> = (0..*dims.last().unwrap()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let loss = |net: &Mlp, x: &[f64]| -> f64 { net.forward(x).unwrap().iter().zip(&c).map(|(y, c)| y * c).sum() };

    net.forward_train(&x).unwrap();
    let (grads, input_grad) = net.backward(&c).unwrap();
    let analytic: Vec<f64> = grads.iter().collect();

    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for (i, &a) in analytic.iter().enumerate() {
        let mut p = params.clone();
        p[i] = params[i] + FD_STEP;
        probe.set_params(&p).unwrap();
        let up = loss(&probe, &x);
        p[i] = params[i] - FD_STEP;
        probe.set_params(&p).unwrap();
        let down = loss(&probe, &x);
        worst = worst.max(relative_error(a, (up - down) / (2.0 * FD_STEP)));
    }
    for (i, &a) in input_grad.iter().enumerate() {
        let mut xp = x.clone();
        xp[i] = x[i] + FD_STEP;
        let up = loss(&net, &xp);
        xp[i] = x[i] - FD_STEP;
        let down = loss(&net, &xp);
        worst = worst.max(relative_error(a, (up - down) / (2.0 * FD_STEP)));
    }
    worst
}

// ---------------------------------------------------------------------------
// Replay sampling

pub const DRAWS: usize = 100_000;

fn experience(opponent: &str) -> Experience {
    Experience {
        observation: vec![0.0; 28],
        action_index: 199,
        reward: 0.0,
        next_observation: vec![0.0; 28],
        next_mask: None,
        terminal: false,
        opponent_id: opponent.to_string(),
    }
}

pub struct ChiSquareOutcome {
    pub entries: usize,
    pub per_p: f64,
    pub copper_p: f64,
}

fn chi_square_p(counts: &[usize], expected_probs: &[f64], draws: usize) -> f64 {
    let stat: f64 = counts
        .iter()
        .zip(expected_probs)
        .map(|(&o, &p)| {
            let e = p * draws as f64;
            (o as f64 - e).powi(2) / e
        })
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

/// Fills a buffer past its capacity with random priorities and opponents,
/// rewrites some priorities through TD errors, then compares 100,000 draws
/// in each mode with masses computed here from the raw inputs.
pub fn replay_chi_square(seed: u64) -> ChiSquareOutcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let capacity = rng.gen_range(5..=40);
    let pushes = capacity + rng.gen_range(0..=capacity);
    let exponent = rng.gen_range(0.0..1.5);
    let eps = 1e-3;
    let opponents = ["a", "b", "c", "d"];
    let weights: Vec<f64> = opponents.iter().map(|_| rng.gen_range(0.25..4.0)).collect();

    let mut buffer = PriorityBuffer::with_params(capacity, exponent, eps);
    for (name, &w) in opponents.iter().zip(&weights).skip(1) {
        buffer.set_opponent_weight(name, w).unwrap();
    }
    // Per pushed id: (raw priority, opponent index).
    let mut raw: Vec<(f64, usize)> = Vec::new();
    for _ in 0..pushes {
        let opp = rng.gen_range(0..opponents.len());
        let prio = rng.gen_range(0.0..5.0);
        buffer.push(experience(opponents[opp]), prio);
        raw.push((prio, opp));
    }
    let live: Vec<u64> = buffer.ids().collect();
    let updated: Vec<u64> = live.iter().copied().filter(|_| rng.gen_bool(0.4)).collect();
    let tds: Vec<f64> = updated.iter().map(|_| rng.gen_range(-4.0..4.0)).collect();
    buffer.update_priorities(&updated, &tds);
    for (&id, &td) in updated.iter().zip(&tds) {
        raw[id as usize].0 = td.abs();
    }

    let weight_of = |opp: usize| if opp == 0 { 1.0 } else { weights[opp] };
    let base: Vec<f64> = live.iter().map(|&id| (raw[id as usize].0 + eps).powf(exponent)).collect();
    let copper: Vec<f64> = live
        .iter()
        .zip(&base)
        .map(|(&id, &m)| m * weight_of(raw[id as usize].1))
        .collect();
    let normalise = |v: &[f64]| {
        let total: f64 = v.iter().sum();
        v.iter().map(|x| x / total).collect::<Vec<_>>()
    };

    let mut draw_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut tally = |mode: SampleMode, buffer: &mut PriorityBuffer| {
        let mut counts = vec![0usize; live.len()];
        let batch = buffer.sample(DRAWS, mode, &mut draw_rng).unwrap();
        for id in batch.ids {
            counts[live.iter().position(|&l| l == id).expect("sampled a live id")] += 1;
        }
        counts
    };
    let per_counts = tally(SampleMode::Per, &mut buffer);
    let copper_counts = tally(SampleMode::Copper, &mut buffer);
    ChiSquareOutcome {
        entries: live.len(),
        per_p: chi_square_p(&per_counts, &normalise(&base), DRAWS),
        copper_p: chi_square_p(&copper_counts, &normalise(&copper), DRAWS),
    }
}
