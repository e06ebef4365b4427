//! Rules engine for the four-player Chef's Hat card-shedding game.
//!
//! The deck holds `v` copies of every face `v` in `1..=11` plus two jokers,
//! 68 cards in total, so each of the four players is dealt exactly 17. Lower
//! faces are stronger: a discard must be strictly lower than the face on top
//! of the board and must contain at least as many cards as the set it beats.
//! Jokers are wildcards that join a discard of any face.
//!
//! Every discrete action lives in a fixed 200-slot table:
//!
//! ```text
//! index = 3 * (v*(v-1)/2 + (q-1)) + j    for v in 1..=11, q in 1..=v, j in 0..=2
//! 198   = discard every held joker on its own
//! 199   = pass
//! ```

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_PLAYERS: usize = 4;
pub const NUM_ACTIONS: usize = 200;
pub const HAND_SIZE: usize = 17;
pub const BOARD_SLOTS: usize = 11;
pub const OBS_LEN: usize = HAND_SIZE + BOARD_SLOTS;
pub const DECK_SIZE: usize = 68;
pub const MAX_FACE: u8 = 11;
pub const MAX_JOKERS: u8 = 2;
/// Face value of the joker; also the board-top sentinel of a cleared board.
pub const JOKER: u8 = 12;
pub const CLEARED: u8 = 12;
pub const JOKER_ONLY_INDEX: usize = 198;
pub const PASS_INDEX: usize = 199;
/// Points needed to end a game.
pub const WINNING_SCORE: u32 = 9;
/// Points for finishing first, second, third and fourth.
pub const POSITION_POINTS: [u32; NUM_PLAYERS] = [3, 2, 1, 0];

const OBS_SCALE: f64 = 13.0;

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Card(u8);

impl Card {
    pub const JOKER: Card = Card(JOKER);

    pub fn new(face: u8) -> Option<Card> {
        (1..=JOKER).contains(&face).then_some(Card(face))
    }

    pub fn face(self) -> u8 {
        self.0
    }

    pub fn is_joker(self) -> bool {
        self.0 == JOKER
    }
}

/// The full 68-card deck in canonical order.
pub fn full_deck() -> Vec<Card> {
    let mut deck = Vec::with_capacity(DECK_SIZE);
    for v in 1..=MAX_FACE {
        deck.extend(std::iter::repeat(Card(v)).take(v as usize));
    }
    deck.extend([Card::JOKER; MAX_JOKERS as usize]);
    deck
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActionSpec {
    Discard { value: u8, qty: u8, jokers: u8 },
    /// Discard every held joker as a set on its own.
    JokerOnly,
    Pass,
}

impl ActionSpec {
    pub fn from_index(index: usize) -> Result<ActionSpec> {
        match index {
            PASS_INDEX => Ok(ActionSpec::Pass),
            JOKER_ONLY_INDEX => Ok(ActionSpec::JokerOnly),
            i if i < JOKER_ONLY_INDEX => {
                let jokers = (i % 3) as u8;
                let t = i / 3;
                // t = v(v-1)/2 + (q-1) with 0 <= q-1 < v
                let mut v = 1usize;
                while (v + 1) * v / 2 <= t {
                    v += 1;
                }
                let qty = (t - v * (v - 1) / 2 + 1) as u8;
                Ok(ActionSpec::Discard {
                    value: v as u8,
                    qty,
                    jokers,
                })
            }
            i => Err(Error::InvalidActionIndex(i)),
        }
    }

    pub fn index(self) -> usize {
        match self {
            ActionSpec::Discard { value, qty, jokers } => {
                let (v, q, j) = (value as usize, qty as usize, jokers as usize);
                3 * (v * (v - 1) / 2 + (q - 1)) + j
            }
            ActionSpec::JokerOnly => JOKER_ONLY_INDEX,
            ActionSpec::Pass => PASS_INDEX,
        }
    }

    pub fn is_pass(self) -> bool {
        matches!(self, ActionSpec::Pass)
    }
}

/// Multiset of cards held by one player, stored as per-face counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Hand {
    counts: [u8; 13],
}

impl Hand {
    pub fn from_cards(cards: impl IntoIterator<Item = Card>) -> Hand {
        let mut hand = Hand::default();
        for c in cards {
            hand.counts[c.face() as usize] += 1;
        }
        hand
    }

    pub fn count(&self, face: u8) -> u8 {
        self.counts[face as usize]
    }

    pub fn jokers(&self) -> u8 {
        self.counts[JOKER as usize]
    }

    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Faces in ascending order, jokers last.
    pub fn faces(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len());
        for face in 1..=JOKER {
            out.extend(std::iter::repeat(face).take(self.counts[face as usize] as usize));
        }
        out
    }

    pub fn cards(&self) -> Vec<Card> {
        self.faces().into_iter().map(Card).collect()
    }

    fn remove(&mut self, face: u8, n: u8) {
        self.counts[face as usize] -= n;
    }
}

/// Legal-action mask over the 200-slot action table.
#[derive(Clone, PartialEq, Eq)]
pub struct ActionMask(pub [bool; NUM_ACTIONS]);

impl ActionMask {
    pub fn none() -> Self {
        ActionMask([false; NUM_ACTIONS])
    }

    pub fn is_legal(&self, index: usize) -> bool {
        self.0.get(index).copied().unwrap_or(false)
    }

    pub fn legal_indices(&self) -> Vec<usize> {
        (0..NUM_ACTIONS).filter(|&i| self.0[i]).collect()
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

impl std::fmt::Debug for ActionMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_tuple("ActionMask").field(&self.legal_indices()).finish()
    }
}

/// Fixed-length state vector seen by one player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Faces held, recovered from the hand half of the encoding.
    pub fn hand_faces(&self) -> Vec<u8> {
        self.0[..HAND_SIZE]
            .iter()
            .map(|x| (x * OBS_SCALE).round() as u8)
            .filter(|&f| f > 0)
            .collect()
    }
}

/// What happened on one applied turn.
#[derive(Clone, Debug, PartialEq)]
pub struct TurnEvent {
    pub player: usize,
    pub index: usize,
    pub action: ActionSpec,
    pub board_cleared: bool,
    /// Finishing position (0-based) if this action emptied the player's hand.
    pub finished_position: Option<usize>,
    pub match_over: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MatchState {
    hands: [Hand; NUM_PLAYERS],
    /// Active set on the board: faces first, jokers last.
    board: Vec<Card>,
    board_top: u8,
    discard_pile: Vec<Card>,
    turn: usize,
    passes_since_discard: u8,
    last_discarder: Option<usize>,
    finished_order: Vec<usize>,
    turn_no: u32,
    seed: u64,
}

impl MatchState {
    /// Shuffles a fresh deck with `seed`, deals 17 cards each and picks the
    /// opening player with the same generator.
    pub fn deal(seed: u64) -> MatchState {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut deck = full_deck();
        deck.shuffle(&mut rng);
        let hands = std::array::from_fn(|p| {
            Hand::from_cards(deck[p * HAND_SIZE..(p + 1) * HAND_SIZE].iter().copied())
        });
        let turn = rng.gen_range(0..NUM_PLAYERS);
        MatchState::from_hands(hands, turn, seed)
    }

    /// A match starting from explicit hands on a cleared board. Cards not in
    /// any hand are placed on the discard pile so the deck stays complete.
    pub fn from_hands(hands: [Hand; NUM_PLAYERS], turn: usize, seed: u64) -> MatchState {
        let mut remaining = Hand::from_cards(full_deck());
        for hand in &hands {
            for face in 1..=JOKER {
                let n = hand.count(face);
                assert!(remaining.count(face) >= n, "hands exceed the deck for face {face}");
                remaining.remove(face, n);
            }
        }
        let mut state = MatchState {
            hands,
            board: Vec::new(),
            board_top: CLEARED,
            discard_pile: remaining.cards(),
            turn,
            passes_since_discard: 0,
            last_discarder: None,
            finished_order: Vec::new(),
            turn_no: 0,
            seed,
        };
        state.record_empty_hands();
        if !state.is_over() && state.is_finished(turn) {
            state.turn = state.next_active(turn);
        }
        state
    }

    /// Puts an explicit set on the board, as if `discarder` had just played it.
    pub fn with_board(mut self, board: Vec<Card>, discarder: Option<usize>) -> MatchState {
        let mut pile = Hand::from_cards(self.discard_pile.iter().copied());
        for c in &board {
            assert!(pile.count(c.face()) > 0, "board card {c:?} not available");
            pile.remove(c.face(), 1);
        }
        self.discard_pile = pile.cards();
        self.discard_pile.extend(self.board.drain(..));
        self.board_top = board
            .iter()
            .map(|c| c.face())
            .min()
            .unwrap_or(CLEARED);
        self.board = board;
        self.board.sort();
        self.last_discarder = discarder;
        self.passes_since_discard = 0;
        self
    }

    pub fn hand(&self, player: usize) -> &Hand {
        &self.hands[player]
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn turn_no(&self) -> u32 {
        self.turn_no
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn board_top(&self) -> u8 {
        self.board_top
    }

    pub fn board_count(&self) -> usize {
        self.board.len()
    }

    pub fn board_cards(&self) -> &[Card] {
        &self.board
    }

    pub fn is_board_cleared(&self) -> bool {
        self.board.is_empty()
    }

    pub fn discard_pile(&self) -> &[Card] {
        &self.discard_pile
    }

    pub fn passes_since_discard(&self) -> u8 {
        self.passes_since_discard
    }

    pub fn last_discarder(&self) -> Option<usize> {
        self.last_discarder
    }

    pub fn finished_order(&self) -> &[usize] {
        &self.finished_order
    }

    pub fn is_finished(&self, player: usize) -> bool {
        self.finished_order.contains(&player)
    }

    pub fn is_over(&self) -> bool {
        self.finished_order.len() == NUM_PLAYERS
    }

    pub fn active_players(&self) -> usize {
        NUM_PLAYERS - self.finished_order.len()
    }

    /// Total cards across hands, board and discard pile; always 68.
    pub fn card_total(&self) -> usize {
        self.hands.iter().map(Hand::len).sum::<usize>() + self.board.len() + self.discard_pile.len()
    }

    /// Board slots as faces: slot 0 holds the top face, the rest hold the
    /// remaining cards of the active set. A cleared board is `[12, 0, ..]`.
    pub fn board_slots(&self) -> [u8; BOARD_SLOTS] {
        let mut slots = [0u8; BOARD_SLOTS];
        if self.board.is_empty() {
            slots[0] = CLEARED;
        } else {
            for (slot, card) in slots.iter_mut().zip(&self.board) {
                *slot = card.face();
            }
        }
        slots
    }

    /// Whether `action` is playable by `player` from this state. Ignores
    /// whose turn it is.
    pub fn is_playable(&self, player: usize, action: ActionSpec) -> bool {
        let hand = &self.hands[player];
        match action {
            ActionSpec::Pass => !self.board.is_empty() || self.cleared_pass_allowed(),
            ActionSpec::JokerOnly => hand.jokers() > 0,
            ActionSpec::Discard { value, qty, jokers } => {
                if hand.count(value) < qty || hand.jokers() < jokers {
                    return false;
                }
                self.board.is_empty()
                    || (value < self.board_top && (qty + jokers) as usize >= self.board.len())
            }
        }
    }

    /// On a cleared board the last active player of a full round of passes
    /// has to discard, so passing can never cycle forever.
    fn cleared_pass_allowed(&self) -> bool {
        (self.passes_since_discard as usize) + 1 < self.active_players()
    }

    pub fn legal_action_mask(&self, player: usize) -> ActionMask {
        let mut mask = ActionMask::none();
        if self.is_over() || self.is_finished(player) {
            return mask;
        }
        let hand = &self.hands[player];
        let held_jokers = hand.jokers().min(MAX_JOKERS);
        for value in 1..=MAX_FACE {
            let held = hand.count(value);
            if held == 0 || (!self.board.is_empty() && value >= self.board_top) {
                continue;
            }
            for qty in 1..=held.min(value) {
                for jokers in 0..=held_jokers {
                    if self.board.is_empty() || (qty + jokers) as usize >= self.board.len() {
                        mask.0[ActionSpec::Discard { value, qty, jokers }.index()] = true;
                    }
                }
            }
        }
        mask.0[JOKER_ONLY_INDEX] = hand.jokers() > 0;
        mask.0[PASS_INDEX] = self.is_playable(player, ActionSpec::Pass);
        mask
    }

    /// Applies `index` for `player`. On error the state is left untouched.
    pub fn apply_action(&mut self, player: usize, index: usize) -> Result<TurnEvent> {
        let action = ActionSpec::from_index(index)?;
        if self.is_over() {
            return Err(Error::MatchOver);
        }
        if player != self.turn {
            return Err(Error::OutOfTurn {
                player,
                turn: self.turn,
            });
        }
        if !self.is_playable(player, action) {
            return Err(Error::IllegalAction { player, index });
        }

        self.turn_no += 1;
        let mut event = TurnEvent {
            player,
            index,
            action,
            board_cleared: false,
            finished_position: None,
            match_over: false,
        };

        match action {
            ActionSpec::Pass => {
                self.passes_since_discard += 1;
                if !self.board.is_empty() && self.everyone_passed() {
                    let leader = match self.last_discarder {
                        Some(d) if !self.is_finished(d) => d,
                        Some(d) => self.next_active(d),
                        None => self.next_active(player),
                    };
                    self.clear_board();
                    event.board_cleared = true;
                    self.turn = leader;
                } else {
                    self.turn = self.next_active(player);
                }
            }
            ActionSpec::JokerOnly | ActionSpec::Discard { .. } => {
                let (value, qty, jokers) = match action {
                    ActionSpec::Discard { value, qty, jokers } => (value, qty, jokers),
                    _ => (JOKER, 0, self.hands[player].jokers()),
                };
                self.discard_pile.append(&mut self.board);
                self.hands[player].remove(value, qty);
                self.hands[player].remove(JOKER, jokers);
                self.board
                    .extend(std::iter::repeat(Card(value)).take(qty as usize));
                self.board.extend(std::iter::repeat(Card::JOKER).take(jokers as usize));
                self.board_top = value;
                self.passes_since_discard = 0;
                self.last_discarder = Some(player);

                if self.hands[player].is_empty() {
                    event.finished_position = Some(self.finished_order.len());
                    self.finished_order.push(player);
                    if self.finished_order.len() == NUM_PLAYERS - 1 {
                        let last = (0..NUM_PLAYERS)
                            .find(|p| !self.finished_order.contains(p))
                            .expect("one player left");
                        self.finished_order.push(last);
                    }
                }
                if self.is_over() {
                    event.match_over = true;
                } else {
                    self.turn = self.next_active(player);
                }
            }
        }
        Ok(event)
    }

    fn everyone_passed(&self) -> bool {
        let needed = match self.last_discarder {
            Some(d) if !self.is_finished(d) => self.active_players() - 1,
            _ => self.active_players(),
        };
        self.passes_since_discard as usize >= needed
    }

    fn clear_board(&mut self) {
        self.discard_pile.append(&mut self.board);
        self.board_top = CLEARED;
        self.passes_since_discard = 0;
        self.last_discarder = None;
    }

    fn next_active(&self, from: usize) -> usize {
        (1..=NUM_PLAYERS)
            .map(|k| (from + k) % NUM_PLAYERS)
            .find(|&p| !self.is_finished(p))
            .unwrap_or(from)
    }

    fn record_empty_hands(&mut self) {
        for p in 0..NUM_PLAYERS {
            if self.hands[p].is_empty() && !self.finished_order.contains(&p) {
                self.finished_order.push(p);
            }
        }
        if self.finished_order.len() == NUM_PLAYERS - 1 {
            let last = (0..NUM_PLAYERS)
                .find(|p| !self.finished_order.contains(p))
                .expect("one player left");
            self.finished_order.push(last);
        }
    }

    pub fn encode_observation(&self, player: usize) -> Observation {
        let mut values = vec![0.0; OBS_LEN];
        for (slot, face) in values.iter_mut().zip(self.hands[player].faces()) {
            *slot = face as f64 / OBS_SCALE;
        }
        for (slot, face) in values[HAND_SIZE..].iter_mut().zip(self.board_slots()) {
            *slot = face as f64 / OBS_SCALE;
        }
        Observation(values)
    }
}

/// Points for each player given a complete finishing order.
pub fn score_match(finished_order: &[usize]) -> Result<[u32; NUM_PLAYERS]> {
    let mut seen = [false; NUM_PLAYERS];
    if finished_order.len() != NUM_PLAYERS {
        return Err(Error::IncompleteOrder(finished_order.to_vec()));
    }
    let mut points = [0; NUM_PLAYERS];
    for (pos, &p) in finished_order.iter().enumerate() {
        if p >= NUM_PLAYERS || seen[p] {
            return Err(Error::IncompleteOrder(finished_order.to_vec()));
        }
        seen[p] = true;
        points[p] = POSITION_POINTS[pos];
    }
    Ok(points)
}

/// A sequence of matches played until someone reaches the winning score.
#[derive(Clone, Debug)]
pub struct GameState {
    pub player_ids: [String; NUM_PLAYERS],
    scores: [u32; NUM_PLAYERS],
    matches_played: u32,
    last_order: Option<Vec<usize>>,
    current: Option<MatchState>,
}

impl GameState {
    pub fn new(player_ids: [String; NUM_PLAYERS]) -> GameState {
        GameState {
            player_ids,
            scores: [0; NUM_PLAYERS],
            matches_played: 0,
            last_order: None,
            current: None,
        }
    }

    pub fn scores(&self) -> [u32; NUM_PLAYERS] {
        self.scores
    }

    pub fn matches_played(&self) -> u32 {
        self.matches_played
    }

    pub fn last_match_order(&self) -> Option<&[usize]> {
        self.last_order.as_deref()
    }

    pub fn current_match(&self) -> Option<&MatchState> {
        self.current.as_ref()
    }

    pub fn current_match_mut(&mut self) -> Option<&mut MatchState> {
        self.current.as_mut()
    }

    /// Deals the next match. Any unfinished match in progress is discarded.
    pub fn deal(&mut self, seed: u64) -> &mut MatchState {
        self.current.insert(MatchState::deal(seed))
    }

    /// Scores the finished current match and adds the points to the totals.
    pub fn finish_match(&mut self) -> Result<[u32; NUM_PLAYERS]> {
        let order = self
            .current
            .as_ref()
            .map(|m| m.finished_order().to_vec())
            .unwrap_or_default();
        let points = score_match(&order)?;
        for (s, p) in self.scores.iter_mut().zip(points) {
            *s += p;
        }
        self.matches_played += 1;
        self.last_order = Some(order);
        Ok(points)
    }

    /// `(true, winner)` once any player holds at least 9 points. Ties on the
    /// top score go to whoever finished better in the last match.
    pub fn is_game_over(&self) -> (bool, Option<usize>) {
        is_game_over(&self.scores, self.last_order.as_deref())
    }
}

pub fn is_game_over(scores: &[u32; NUM_PLAYERS], last_order: Option<&[usize]>) -> (bool, Option<usize>) {
    let best = *scores.iter().max().expect("four scores");
    if best < WINNING_SCORE {
        return (false, None);
    }
    let leaders: Vec<usize> = (0..NUM_PLAYERS).filter(|&p| scores[p] == best).collect();
    let winner = match last_order {
        Some(order) if leaders.len() > 1 => order
            .iter()
            .copied()
            .find(|p| leaders.contains(p))
            .unwrap_or(leaders[0]),
        _ => leaders[0],
    };
    (true, Some(winner))
}
