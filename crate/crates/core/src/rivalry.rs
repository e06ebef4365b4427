//! Rivalry arithmetic and the per-game tracker a rival agent runs.
//!
//! Rivalry is the mean of three factors between two players: trait distance
//! `S`, competitiveness `C` and relative performance `P`. Humans get their
//! traits and competitiveness from questionnaires; agents estimate the
//! opponent's traits with the similarity predictor and use the mean
//! introspective confidence of their own actions as competitiveness.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{BOARD_SLOTS, NUM_PLAYERS};
use crate::error::{Error, Result};
use crate::predictor::{ActionStep, SimilarityPredictor};

pub const DEFAULT_REWARD_WEIGHT: f64 = 0.2;
/// Scale of relative performance: per-game averages lie in [0, 3].
pub const PERFORMANCE_SCALE: f64 = 15.0;
/// Competitiveness used before an agent has rated any of its own actions.
pub const NEUTRAL_COMPETITIVENESS: f64 = 0.5;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraitProfile {
    pub agency: f64,
    pub competence: f64,
    pub communion: f64,
}

impl TraitProfile {
    pub const fn new(agency: f64, competence: f64, communion: f64) -> TraitProfile {
        TraitProfile {
            agency,
            competence,
            communion,
        }
    }

    pub const NEUTRAL: TraitProfile = TraitProfile::new(0.5, 0.5, 0.5);

    pub fn as_array(&self) -> [f64; 3] {
        [self.agency, self.competence, self.communion]
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|x| (0.0..=1.0).contains(x))
    }
}

impl Default for TraitProfile {
    fn default() -> Self {
        TraitProfile::NEUTRAL
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RivalryReport {
    pub similarity: f64,
    pub competitiveness: f64,
    pub relative_performance: f64,
    pub rivalry: f64,
    pub reward_weight: f64,
}

impl RivalryReport {
    pub fn new(similarity: f64, competitiveness: f64, relative_performance: f64) -> RivalryReport {
        RivalryReport {
            similarity,
            competitiveness,
            relative_performance,
            rivalry: rivalry_score(similarity, competitiveness, relative_performance),
            reward_weight: DEFAULT_REWARD_WEIGHT,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Item {
    Ambition,
    Courage,
    Decisiveness,
    Aggressiveness,
    Intelligence,
    Innovation,
    Organization,
    Compassion,
    Affection,
    Emotional,
    Sensitiveness,
    Competitiveness,
    Creativity,
}

impl Item {
    pub fn name(self) -> &'static str {
        match self {
            Item::Ambition => "ambition",
            Item::Courage => "courage",
            Item::Decisiveness => "decisiveness",
            Item::Aggressiveness => "aggressiveness",
            Item::Intelligence => "intelligence",
            Item::Innovation => "innovation",
            Item::Organization => "organization",
            Item::Compassion => "compassion",
            Item::Affection => "affection",
            Item::Emotional => "emotional",
            Item::Sensitiveness => "sensitiveness",
            Item::Competitiveness => "competitiveness",
            Item::Creativity => "creativity",
        }
    }
}

pub const COMPETENCE_ITEMS: [Item; 4] = [Item::Ambition, Item::Courage, Item::Decisiveness, Item::Aggressiveness];
pub const AGENCY_ITEMS: [Item; 4] = [Item::Intelligence, Item::Innovation, Item::Organization, Item::Compassion];
// Compassion counts towards both agency and communion.
pub const COMMUNION_ITEMS: [Item; 4] = [Item::Compassion, Item::Affection, Item::Emotional, Item::Sensitiveness];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireRecord {
    pub respondent_id: String,
    /// `self` or the name of the rated opponent.
    pub subject: String,
    pub item: Item,
    pub likert: u8,
}

pub fn parse_questionnaire(reader: impl Read) -> Result<Vec<QuestionnaireRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let record: QuestionnaireRecord = row?;
        if !(1..=5).contains(&record.likert) {
            return Err(Error::InvalidRecord(format!(
                "likert {} for {} outside 1..=5",
                record.likert,
                record.item.name()
            )));
        }
        out.push(record);
    }
    Ok(out)
}

pub fn read_questionnaire(path: impl AsRef<Path>) -> Result<Vec<QuestionnaireRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_questionnaire(file)
}

/// Maps a Likert mean in [1, 5] onto [0, 1].
pub fn normalize_likert(x: f64) -> f64 {
    (x - 1.0) / 4.0
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedTraits {
    pub profile: TraitProfile,
    pub competitiveness: f64,
}

/// Aggregates one subject's ratings. Repeated items (several respondents)
/// are averaged before bundling.
pub fn aggregate_traits(records: &[QuestionnaireRecord]) -> Result<AggregatedTraits> {
    let mut sums: BTreeMap<Item, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = sums.entry(r.item).or_default();
        e.0 += r.likert as f64;
        e.1 += 1;
    }
    let item = |it: Item| -> Result<f64> {
        sums.get(&it)
            .map(|(s, n)| s / *n as f64)
            .ok_or_else(|| Error::MissingItem(it.name().to_string()))
    };
    let bundle = |items: &[Item]| -> Result<f64> {
        let mut total = 0.0;
        for &it in items {
            total += item(it)?;
        }
        Ok(normalize_likert(total / items.len() as f64))
    };
    let profile = TraitProfile {
        agency: bundle(&AGENCY_ITEMS)?,
        competence: bundle(&COMPETENCE_ITEMS)?,
        communion: bundle(&COMMUNION_ITEMS)?,
    };
    Ok(AggregatedTraits {
        profile,
        competitiveness: normalize_likert(item(Item::Competitiveness)?),
    })
}

/// Ratings grouped by subject, each aggregated.
pub fn aggregate_by_subject(records: &[QuestionnaireRecord]) -> Result<BTreeMap<String, AggregatedTraits>> {
    let mut groups: BTreeMap<String, Vec<QuestionnaireRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.subject.clone()).or_default().push(r.clone());
    }
    groups
        .into_iter()
        .map(|(subject, recs)| Ok((subject, aggregate_traits(&recs)?)))
        .collect()
}

fn normalized_distance(a: &TraitProfile, b: &TraitProfile) -> f64 {
    let sq: f64 = a
        .as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    sq.sqrt() / 3f64.sqrt()
}

/// Trait distance seen from the human side, scaled into [0, 1].
pub fn similarity_human(traits_h: &TraitProfile, traits_a: &TraitProfile) -> f64 {
    normalized_distance(traits_h, traits_a)
}

/// Trait distance seen from the agent side: predicted opponent profile
/// against the agent's own.
pub fn similarity_agent(predicted: &TraitProfile, own: &TraitProfile) -> f64 {
    normalized_distance(predicted, own)
}

pub fn relative_performance(points_self: f64, points_other: f64) -> f64 {
    (points_self - points_other) / PERFORMANCE_SCALE
}

pub fn rivalry_score(s: f64, c: f64, p: f64) -> f64 {
    (s + c + p) / 3.0
}

/// Mean introspective confidence over the actions taken so far.
pub fn competitiveness_agent(ic_values: &[f64]) -> Result<f64> {
    if ic_values.is_empty() {
        return Err(Error::EmptyHistory);
    }
    Ok(ic_values.iter().sum::<f64>() / ic_values.len() as f64)
}

pub fn modulate_reward(r_o: f64, r_h: f64, w: f64) -> f64 {
    r_o + w * r_h
}

/// Rivalry of a human towards an agent from questionnaire data and the
/// per-game average scores of both.
pub fn human_rivalry(
    human: &AggregatedTraits,
    agent_as_rated: &TraitProfile,
    points_h: f64,
    points_a: f64,
) -> RivalryReport {
    RivalryReport::new(
        similarity_human(&human.profile, agent_as_rated),
        human.competitiveness,
        relative_performance(points_h, points_a),
    )
}

/// One row of a per-action rivalry trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub game: u64,
    pub r#match: u32,
    pub action_no: u32,
    pub opponent: String,
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "P")]
    pub p: f64,
    #[serde(rename = "R")]
    pub r: f64,
}

pub fn write_trace_csv(rows: &[TraceRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io("<trace>", e))?;
    Ok(())
}

pub fn read_trace_csv(reader: impl Read) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Per-game rivalry state of one agent towards its three opponents.
///
/// Every turn of an opponent refreshes that opponent's rivalry and appends a
/// trace row. Relative performance uses the per-game average of match points
/// so far, and is zero before the first match has been scored.
#[derive(Clone, Debug)]
pub struct RivalryTracker {
    own_traits: TraitProfile,
    predictor: Option<SimilarityPredictor>,
    own_seat: usize,
    player_ids: [String; NUM_PLAYERS],
    game_no: u64,
    histories: [Vec<ActionStep>; NUM_PLAYERS],
    action_counts: [u32; NUM_PLAYERS],
    confidences: Vec<f64>,
    points: [u32; NUM_PLAYERS],
    matches: u32,
    latest: [Option<RivalryReport>; NUM_PLAYERS],
    trace: Vec<TraceRow>,
}

impl RivalryTracker {
    pub fn new(own_traits: TraitProfile, predictor: Option<SimilarityPredictor>) -> RivalryTracker {
        RivalryTracker {
            own_traits,
            predictor,
            own_seat: 0,
            player_ids: Default::default(),
            game_no: 0,
            histories: Default::default(),
            action_counts: [0; NUM_PLAYERS],
            confidences: Vec::new(),
            points: [0; NUM_PLAYERS],
            matches: 0,
            latest: [None; NUM_PLAYERS],
            trace: Vec::new(),
        }
    }

    pub fn own_traits(&self) -> &TraitProfile {
        &self.own_traits
    }

    pub fn predictor(&self) -> Option<&SimilarityPredictor> {
        self.predictor.as_ref()
    }

    pub fn begin_game(&mut self, game_no: u64, player_ids: [String; NUM_PLAYERS], own_seat: usize) {
        self.game_no = game_no;
        self.player_ids = player_ids;
        self.own_seat = own_seat;
        self.histories = Default::default();
        self.action_counts = [0; NUM_PLAYERS];
        self.confidences.clear();
        self.points = [0; NUM_PLAYERS];
        self.matches = 0;
        self.latest = [None; NUM_PLAYERS];
    }

    pub fn own_seat(&self) -> usize {
        self.own_seat
    }

    pub fn seat_of(&self, player_id: &str) -> Option<usize> {
        self.player_ids.iter().position(|p| p == player_id)
    }

    pub fn record_confidence(&mut self, ic: f64) {
        self.confidences.push(ic.clamp(0.0, 1.0));
    }

    pub fn competitiveness(&self) -> f64 {
        competitiveness_agent(&self.confidences).unwrap_or(NEUTRAL_COMPETITIVENESS)
    }

    fn average_points(&self, seat: usize) -> f64 {
        if self.matches == 0 {
            0.0
        } else {
            self.points[seat] as f64 / self.matches as f64
        }
    }

    /// Predicted profile of an opponent from its recent actions. Without a
    /// predictor the opponent is assumed to share the agent's own traits.
    pub fn predicted_traits(&self, seat: usize) -> TraitProfile {
        match &self.predictor {
            Some(p) => p.predict_history(&self.histories[seat]).unwrap_or(self.own_traits),
            None => self.own_traits,
        }
    }

    /// Records an opponent turn and refreshes its rivalry. Own turns only
    /// extend the own history.
    pub fn observe_turn(
        &mut self,
        match_no: u32,
        actor: usize,
        board_before: [u8; BOARD_SLOTS],
        action: usize,
    ) -> Option<TraceRow> {
        self.histories[actor].push(ActionStep { board: board_before, action });
        if actor == self.own_seat {
            return None;
        }
        let s = similarity_agent(&self.predicted_traits(actor), &self.own_traits);
        let c = self.competitiveness();
        let p = relative_performance(self.average_points(self.own_seat), self.average_points(actor));
        let report = RivalryReport::new(s, c, p);
        self.latest[actor] = Some(report);
        self.action_counts[actor] += 1;
        let row = TraceRow {
            game: self.game_no,
            r#match: match_no,
            action_no: self.action_counts[actor],
            opponent: self.player_ids[actor].clone(),
            s,
            c,
            p,
            r: report.rivalry,
        };
        self.trace.push(row.clone());
        Some(row)
    }

    pub fn end_match(&mut self, points: &[u32; NUM_PLAYERS]) {
        for (acc, p) in self.points.iter_mut().zip(points) {
            *acc += p;
        }
        self.matches += 1;
    }

    pub fn latest(&self, seat: usize) -> Option<RivalryReport> {
        self.latest[seat]
    }

    /// Current rivalry towards `seat`, zero before it has acted.
    pub fn rivalry_towards(&self, seat: usize) -> f64 {
        self.latest[seat].map_or(0.0, |r| r.rivalry)
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<TraceRow> {
        std::mem::take(&mut self.trace)
    }
}
