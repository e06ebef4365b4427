//! Similarity predictor: an MLP that reads a window of an opponent's recent
//! (board, action) pairs and classifies its agency, competence and
//! communion on a five-point scale.
//!
//! No human-labelled corpus ships with the crate. [`synthetic_histories`]
//! produces one by letting scripted policies play and tagging each policy's
//! windows with a fixed trait label.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{Player, ScriptedAgent, ScriptedStyle};
use crate::engine::{ActionSpec, MatchState, BOARD_SLOTS, MAX_FACE, MAX_JOKERS, NUM_PLAYERS};
use crate::error::{Error, Result};
use crate::nn::{Activation, Gradients, Mlp, Optimizer};
use crate::rivalry::TraitProfile;

pub const STEP_FEATURES: usize = BOARD_SLOTS + 4;
pub const NUM_CLASSES: usize = 5;
pub const NUM_HEADS: usize = 3;
pub const WINDOW_GRID: [usize; 4] = [3, 5, 10, 15];
pub const LAYER_GRID: [usize; 3] = [1, 2, 3];
pub const UNIT_GRID: [usize; 7] = [16, 32, 64, 128, 256, 512, 1024];
pub const MIN_DATASET: usize = 100;
pub const TRAIN_FRACTION: f64 = 0.7;

/// One turn of a player: board faces before the action, and the action.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionStep {
    pub board: [u8; BOARD_SLOTS],
    pub action: usize,
}

/// Encodes one step as 15 values in [0, 1]. A joker-only discard is encoded
/// as the highest value with both jokers and no regular cards.
pub fn encode_step(step: &ActionStep, out: &mut Vec<f64>) {
    out.extend(step.board.iter().map(|&f| f as f64 / 13.0));
    match ActionSpec::from_index(step.action) {
        Ok(ActionSpec::Discard { value, qty, jokers }) => out.extend([
            value as f64 / MAX_FACE as f64,
            qty as f64 / MAX_FACE as f64,
            jokers as f64 / MAX_JOKERS as f64,
            0.0,
        ]),
        Ok(ActionSpec::JokerOnly) => out.extend([1.0, 0.0, 1.0, 0.0]),
        Ok(ActionSpec::Pass) | Err(_) => out.extend([0.0, 0.0, 0.0, 1.0]),
    }
}

/// Last `n` steps of `history`, flattened, zero-padded on the left.
pub fn build_window(history: &[ActionStep], n: usize) -> Vec<f64> {
    let take = history.len().min(n);
    let mut out = vec![0.0; (n - take) * STEP_FEATURES];
    out.reserve(take * STEP_FEATURES);
    for step in &history[history.len() - take..] {
        encode_step(step, &mut out);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledWindow {
    pub window: Vec<f64>,
    /// Agency, competence and communion classes, each in 1..=5.
    pub labels: [u8; NUM_HEADS],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredictorConfig {
    pub window: usize,
    pub layers: usize,
    pub units: usize,
    /// Collapse the three labels into their rounded mean and predict it with
    /// a single head; the profile then repeats that class on every axis.
    pub single_head: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            window: 5,
            layers: 2,
            units: 64,
            single_head: false,
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

impl PredictorConfig {
    pub fn label(&self) -> String {
        format!("w{}-l{}-u{}", self.window, self.layers, self.units)
    }

    pub fn in_grid(&self) -> bool {
        WINDOW_GRID.contains(&self.window) && LAYER_GRID.contains(&self.layers) && UNIT_GRID.contains(&self.units)
    }

    pub fn input_len(&self) -> usize {
        self.window * STEP_FEATURES
    }

    fn heads(&self) -> usize {
        if self.single_head {
            1
        } else {
            NUM_HEADS
        }
    }
}

/// Every configuration of the search space, window-major.
pub fn config_grid(base: &PredictorConfig) -> Vec<PredictorConfig> {
    let mut out = Vec::with_capacity(WINDOW_GRID.len() * LAYER_GRID.len() * UNIT_GRID.len());
    for &window in &WINDOW_GRID {
        for &layers in &LAYER_GRID {
            for &units in &UNIT_GRID {
                out.push(PredictorConfig {
                    window,
                    layers,
                    units,
                    ..base.clone()
                });
            }
        }
    }
    out
}

fn class_to_unit(c: u8) -> f64 {
    (c as f64 - 1.0) / 4.0
}

fn targets(labels: &[u8; NUM_HEADS], single_head: bool) -> Vec<usize> {
    if single_head {
        let mean = labels.iter().map(|&c| c as f64).sum::<f64>() / NUM_HEADS as f64;
        vec![mean.round() as usize - 1]
    } else {
        labels.iter().map(|&c| c as usize - 1).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityPredictor {
    pub config: PredictorConfig,
    model: Mlp,
}

impl SimilarityPredictor {
    pub fn new(config: PredictorConfig, seed: u64) -> SimilarityPredictor {
        let mut dims = vec![config.input_len()];
        dims.extend(std::iter::repeat(config.units).take(config.layers));
        dims.push(config.heads() * NUM_CLASSES);
        let model = Mlp::new(&dims, Activation::Relu, Activation::Linear, seed);
        SimilarityPredictor { config, model }
    }

    pub fn model(&self) -> &Mlp {
        &self.model
    }

    /// Most likely class (1..=5) per head.
    pub fn classify(&self, window: &[f64]) -> Result<Vec<u8>> {
        if window.len() != self.config.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.config.input_len(),
                got: window.len(),
            });
        }
        let logits = self.model.forward(window)?;
        Ok(logits
            .chunks(NUM_CLASSES)
            .map(|head| {
                let mut best = 0;
                for (i, &v) in head.iter().enumerate() {
                    if v > head[best] {
                        best = i;
                    }
                }
                best as u8 + 1
            })
            .collect())
    }

    pub fn predict(&self, window: &[f64]) -> Result<TraitProfile> {
        let classes = self.classify(window)?;
        Ok(match classes[..] {
            [c] => TraitProfile::new(class_to_unit(c), class_to_unit(c), class_to_unit(c)),
            [a, b, c] => TraitProfile::new(class_to_unit(a), class_to_unit(b), class_to_unit(c)),
            _ => unreachable!("one or three heads"),
        })
    }

    pub fn predict_history(&self, history: &[ActionStep]) -> Result<TraitProfile> {
        self.predict(&build_window(history, self.config.window))
    }

    /// Sum of per-head cross-entropy over a minibatch, gradients averaged.
    fn train_batch(&mut self, opt: &mut Optimizer, batch: &[&LabeledWindow]) -> Result<f64> {
        let mut grads = Gradients::zeros_like(&self.model);
        let n = batch.len() as f64;
        let mut loss = 0.0;
        for item in batch {
            let cache = self.model.forward_with_cache(&item.window)?;
            let mut upstream = cache.output().to_vec();
            for (h, &t) in targets(&item.labels, self.config.single_head).iter().enumerate() {
                let head = &mut upstream[h * NUM_CLASSES..(h + 1) * NUM_CLASSES];
                crate::nn::softmax_in_place(head);
                loss -= head[t].max(1e-300).ln() / n;
                head[t] -= 1.0;
                head.iter_mut().for_each(|g| *g /= n);
            }
            self.model.backward_into(&cache, &upstream, &mut grads)?;
        }
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss);
        }
        opt.step(&mut self.model, &grads)?;
        Ok(loss)
    }

    /// Mean over heads of the fraction of windows classified correctly.
    pub fn accuracy(&self, data: &[LabeledWindow]) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::DegenerateDataset("no windows to evaluate".into()));
        }
        let heads = self.config.heads();
        let mut correct = 0usize;
        for item in data {
            let want = targets(&item.labels, self.config.single_head);
            let got = self.classify(&item.window)?;
            correct += want.iter().zip(&got).filter(|(w, g)| **w + 1 == **g as usize).count();
        }
        Ok(correct as f64 / (data.len() * heads) as f64)
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.save_weights(dir.join("predictor.bin"))?;
        let path = dir.join("predictor.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self.config)?).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<SimilarityPredictor> {
        let dir = dir.as_ref();
        let path = dir.join("predictor.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let config: PredictorConfig = serde_json::from_str(&text)?;
        let mut p = SimilarityPredictor::new(config, 0);
        p.model.load_into(dir.join("predictor.bin"))?;
        Ok(p)
    }
}

fn validate(dataset: &[LabeledWindow], config: &PredictorConfig) -> Result<()> {
    if dataset.len() < MIN_DATASET {
        return Err(Error::DegenerateDataset(format!(
            "{} windows, at least {MIN_DATASET} needed",
            dataset.len()
        )));
    }
    for item in dataset {
        if item.window.len() != config.input_len() {
            return Err(Error::DimensionMismatch {
                expected: config.input_len(),
                got: item.window.len(),
            });
        }
        if item.labels.iter().any(|c| !(1..=5).contains(c)) {
            return Err(Error::InvalidRecord(format!("labels {:?} outside 1..=5", item.labels)));
        }
    }
    Ok(())
}

/// Seeded 70/30 split.
pub fn split(dataset: &[LabeledWindow], seed: u64) -> (Vec<LabeledWindow>, Vec<LabeledWindow>) {
    let mut shuffled = dataset.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = (dataset.len() as f64 * TRAIN_FRACTION).round() as usize;
    let test = shuffled.split_off(cut);
    (shuffled, test)
}

/// Trains on a seeded 70% split and returns the held-out accuracy.
pub fn train_predictor(
    dataset: &[LabeledWindow],
    config: &PredictorConfig,
    seed: u64,
) -> Result<(SimilarityPredictor, f64)> {
    validate(dataset, config)?;
    let (train, test) = split(dataset, seed);
    let mut predictor = SimilarityPredictor::new(config.clone(), seed);
    let mut opt = Optimizer::adam(config.learning_rate, &predictor.model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba7c);
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size.max(1)) {
            let batch: Vec<&LabeledWindow> = chunk.iter().map(|&i| &train[i]).collect();
            predictor.train_batch(&mut opt, &batch)?;
        }
    }
    let acc = predictor.accuracy(&test)?;
    Ok((predictor, acc))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub config: String,
    pub run: u32,
    pub accuracy: f64,
}

pub fn write_scores_csv(rows: &[ScoreRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<scores>", e))?;
    Ok(())
}

/// Seeded repeated runs of one configuration.
pub fn evaluate_config(dataset: &[LabeledWindow], config: &PredictorConfig, runs: u32, seed: u64) -> Result<Vec<ScoreRow>> {
    (0..runs)
        .map(|run| {
            let (_, accuracy) = train_predictor(dataset, config, seed.wrapping_add(run as u64))?;
            Ok(ScoreRow {
                config: config.label(),
                run,
                accuracy,
            })
        })
        .collect()
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: PredictorConfig,
    pub best_accuracy: f64,
    pub scores: Vec<ScoreRow>,
}

/// Exhaustive search over `configs`. Each entry's windows are rebuilt from
/// `histories` at that configuration's length. Ties keep the earlier entry,
/// and the default architecture is evaluated first so it wins every tie.
pub fn hyper_search(
    histories: &[LabeledHistory],
    configs: &[PredictorConfig],
    runs: u32,
    seed: u64,
) -> Result<SearchOutcome> {
    let default = PredictorConfig::default();
    let mut ordered: Vec<PredictorConfig> = configs.iter().filter(|c| c.label() == default.label()).cloned().collect();
    ordered.extend(configs.iter().filter(|c| c.label() != default.label()).cloned());
    let mut scores = Vec::new();
    let mut best: Option<(PredictorConfig, f64)> = None;
    for config in ordered {
        let data = windows_from_histories(histories, config.window);
        let rows = evaluate_config(&data, &config, runs, seed)?;
        let (mean, _) = mean_std(&rows.iter().map(|r| r.accuracy).collect::<Vec<_>>());
        if best.as_ref().map_or(true, |(_, b)| mean > *b) {
            best = Some((config.clone(), mean));
        }
        scores.extend(rows);
    }
    let (best, best_accuracy) = best.ok_or_else(|| Error::DegenerateDataset("empty search space".into()))?;
    Ok(SearchOutcome {
        best,
        best_accuracy,
        scores,
    })
}

/// Fixed trait classes attached to each scripted policy in the synthetic
/// corpus: the aggressive player is highly competent and cold, the
/// conservative one warm and less assertive, the random one lacks any
/// organised strategy.
pub fn style_labels(style: ScriptedStyle) -> [u8; NUM_HEADS] {
    match style {
        ScriptedStyle::Aggressive => [4, 5, 1],
        ScriptedStyle::Conservative => [4, 2, 4],
        ScriptedStyle::Random => [1, 3, 3],
    }
}

/// A player's full action sequence in one match, with its labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledHistory {
    pub steps: Vec<ActionStep>,
    pub labels: [u8; NUM_HEADS],
}

/// One labelled window per turn: the player's history up to and including
/// that turn.
pub fn windows_from_histories(histories: &[LabeledHistory], n: usize) -> Vec<LabeledWindow> {
    let mut out = Vec::new();
    for h in histories {
        for end in 1..=h.steps.len() {
            out.push(LabeledWindow {
                window: build_window(&h.steps[..end], n),
                labels: h.labels,
            });
        }
    }
    out
}

/// Plays `matches` matches of scripted policies. Every match seats one of
/// each style plus a fourth drawn at random, in shuffled seats.
pub fn synthetic_histories(matches: usize, seed: u64) -> Result<Vec<LabeledHistory>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(matches * NUM_PLAYERS);
    for m in 0..matches {
        let mut styles = ScriptedStyle::ALL.to_vec();
        styles.push(*ScriptedStyle::ALL.choose(&mut rng).expect("non-empty"));
        styles.shuffle(&mut rng);
        let mut agents: Vec<ScriptedAgent> = styles
            .iter()
            .enumerate()
            .map(|(i, &s)| ScriptedAgent::new(s, seed ^ ((m * NUM_PLAYERS + i) as u64 + 1).wrapping_mul(0x9e37)))
            .collect();
        let mut state = MatchState::deal(rng.gen());
        let mut steps: [Vec<ActionStep>; NUM_PLAYERS] = Default::default();
        while !state.is_over() {
            let p = state.turn();
            let board = state.board_slots();
            let mask = state.legal_action_mask(p);
            let action = agents[p].select_action(p, &state.encode_observation(p), &mask)?;
            state.apply_action(p, action)?;
            steps[p].push(ActionStep { board, action });
        }
        for (p, s) in steps.into_iter().enumerate() {
            out.push(LabeledHistory {
                steps: s,
                labels: style_labels(styles[p]),
            });
        }
    }
    Ok(out)
}

/// Same windows with labels drawn uniformly from the five classes; a leak
/// check, since nothing in a window then predicts its label.
pub fn label_shuffled_control(dataset: &[LabeledWindow], seed: u64) -> Vec<LabeledWindow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    dataset
        .iter()
        .map(|w| LabeledWindow {
            window: w.window.clone(),
            labels: [rng.gen_range(1..=5), rng.gen_range(1..=5), rng.gen_range(1..=5)],
        })
        .collect()
}

pub fn write_dataset(dataset: &[LabeledWindow], mut out: impl Write) -> Result<()> {
    for item in dataset {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n").map_err(|e| Error::io("<dataset>", e))?;
    }
    Ok(())
}

pub fn read_dataset(reader: impl BufRead) -> Result<Vec<LabeledWindow>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<dataset>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
