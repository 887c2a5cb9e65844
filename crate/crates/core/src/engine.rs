//! The turn-based state machine: legality, placement acceptance, turn
//! alternation, step accounting and the JSON-lines event log.

use std::io::{BufRead, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{Action, BinId, Constraint, ObjectId, Objects, PlayerId};
use crate::error::{EngineError, ParseError, PuzzleError};
use crate::knowledge::{KnowledgeEvent, KnowledgeGraph};
use crate::puzzle::{PuzzleFile, PuzzleInstance};
use crate::verifier::ErrorLabel;

/// Which communicative actions a player may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpaceConfig {
    ProvideAndSeek,
    ProvideOnly,
    SeekOnly,
    None,
}

impl ActionSpaceConfig {
    pub const ALL: [ActionSpaceConfig; 4] = [
        ActionSpaceConfig::ProvideAndSeek,
        ActionSpaceConfig::ProvideOnly,
        ActionSpaceConfig::SeekOnly,
        ActionSpaceConfig::None,
    ];

    /// May share without being asked.
    pub fn can_provide(self) -> bool {
        matches!(
            self,
            ActionSpaceConfig::ProvideAndSeek | ActionSpaceConfig::ProvideOnly
        )
    }

    pub fn can_seek(self) -> bool {
        matches!(
            self,
            ActionSpaceConfig::ProvideAndSeek | ActionSpaceConfig::SeekOnly
        )
    }

    /// May share at all (proactively or in answer to an ask).
    pub fn can_share(self) -> bool {
        self != ActionSpaceConfig::None
    }

    pub fn name(self) -> &'static str {
        match self {
            ActionSpaceConfig::ProvideAndSeek => "provide_and_seek",
            ActionSpaceConfig::ProvideOnly => "provide_only",
            ActionSpaceConfig::SeekOnly => "seek_only",
            ActionSpaceConfig::None => "none",
        }
    }

    /// Short name used on the command line.
    pub fn short_name(self) -> &'static str {
        match self {
            ActionSpaceConfig::ProvideAndSeek => "both",
            ActionSpaceConfig::ProvideOnly => "provide",
            ActionSpaceConfig::SeekOnly => "seek",
            ActionSpaceConfig::None => "none",
        }
    }
}

impl std::fmt::Display for ActionSpaceConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActionSpaceConfig {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ActionSpaceConfig::ALL
            .into_iter()
            .find(|c| c.name() == s || c.short_name() == s)
            .ok_or_else(|| ParseError::Malformed(format!("unknown config `{s}`")))
    }
}

/// Why the engine refuses an action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    ObjectNotInSource,
    SourceUnreachable,
    DestUnreachable,
    SourceEqualsDest,
    /// The object already sits in a destination bin.
    ObjectLocked,
    /// The player's configuration does not allow this communicative action.
    NotPermitted,
    /// Sharing a constraint the player does not hold.
    ConstraintNotHeld,
}

impl Violation {
    pub fn label(self) -> ErrorLabel {
        match self {
            Violation::ObjectNotInSource => ErrorLabel::ObjNotInSource,
            Violation::SourceUnreachable | Violation::ObjectLocked => ErrorLabel::SourceUnreachable,
            Violation::DestUnreachable => ErrorLabel::DestUnreachable,
            Violation::SourceEqualsDest => ErrorLabel::SourceEqualsDest,
            Violation::NotPermitted | Violation::ConstraintNotHeld => ErrorLabel::FormatFollowing,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameStatus {
    Running,
    Solved,
    LimitReached,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    RejectedPlacement,
    /// A chosen action the engine refused; the turn is still consumed.
    IllegalNoOp {
        labels: Vec<ErrorLabel>,
    },
}

/// Best-of-n bookkeeping attached by the harness.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnMeta {
    pub candidates: Vec<String>,
    pub chosen: Option<usize>,
    pub corrected: bool,
    /// Verifier failure labels per candidate, in candidate order.
    pub candidate_labels: Vec<Vec<ErrorLabel>>,
    /// Post-hoc error labels of the executed action.
    pub labels: Vec<ErrorLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TurnRecord {
    /// 1-based index of the consumed step.
    pub step: u32,
    pub actor: PlayerId,
    /// `None` when the chosen output did not parse.
    pub action: Option<Action>,
    pub outcome: Outcome,
    pub meta: Option<TurnMeta>,
}

impl TurnRecord {
    pub fn knowledge_event(&self) -> Option<KnowledgeEvent> {
        match (self.action?, &self.outcome) {
            (Action::Share(c), Outcome::Accepted) => Some(KnowledgeEvent::ConstraintShared(c)),
            (Action::Move { object, to, .. }, Outcome::Accepted) => {
                Some(KnowledgeEvent::MoveAccepted { object, to })
            }
            (Action::Move { object, to, .. }, Outcome::RejectedPlacement) => {
                Some(KnowledgeEvent::MoveRejected { object, to })
            }
            _ => None,
        }
    }

    pub fn to_wire(&self, objects: &Objects) -> TurnRecordWire {
        TurnRecordWire {
            step: self.step,
            actor: self.actor,
            action: self.action.map(|a| objects.action_text(&a)),
            outcome: self.outcome.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn from_wire(w: &TurnRecordWire, objects: &Objects) -> Result<TurnRecord, ParseError> {
        Ok(TurnRecord {
            step: w.step,
            actor: w.actor,
            action: w
                .action
                .as_deref()
                .map(|t| objects.parse_action(t))
                .transpose()?,
            outcome: w.outcome.clone(),
            meta: w.meta.clone(),
        })
    }
}

/// Serialized form of a [`TurnRecord`] with the action in canonical text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecordWire {
    pub step: u32,
    pub actor: PlayerId,
    pub action: Option<String>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<TurnMeta>,
}

/// What one player sees when it is about to act.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Observation {
    pub player: PlayerId,
    pub config: ActionSpaceConfig,
    pub partner_config: ActionSpaceConfig,
    pub objects: Objects,
    pub placements: Vec<BinId>,
    pub own_constraints: Vec<Constraint>,
    pub history: Vec<TurnRecord>,
    pub pending_ask: Option<(PlayerId, ObjectId)>,
    pub step_count: u32,
    pub step_limit: u32,
}

impl Observation {
    pub fn n_objects(&self) -> usize {
        self.placements.len()
    }

    /// Own constraints plus every public event in the history.
    pub fn knowledge(&self) -> KnowledgeGraph {
        let events: Vec<KnowledgeEvent> = self
            .history
            .iter()
            .filter_map(TurnRecord::knowledge_event)
            .collect();
        KnowledgeGraph::from_events(
            self.n_objects(),
            &self.own_constraints,
            self.player,
            &events,
        )
    }

    /// Knowledge both players provably share: communicated constraints and board events.
    pub fn public_knowledge(&self) -> KnowledgeGraph {
        public_knowledge(self.n_objects(), &self.history)
    }

    pub fn is_placed(&self, o: ObjectId) -> bool {
        self.placements[o.index()].is_destination()
    }

    /// Constraints this player has already shared.
    pub fn shared_by(&self, p: PlayerId) -> Vec<Constraint> {
        shared_constraints(&self.history, Some(p))
    }

    /// Affordance-legal actions: reachable moves of unlocked objects, shares
    /// the configuration permits, asks about unplaced objects, and pass.
    pub fn legal_actions(&self) -> Vec<Action> {
        let mut out = Vec::new();
        let player = self.player;
        for o in self.objects.ids() {
            let from = self.placements[o.index()];
            if !player.reaches(from) || from.is_destination() {
                continue;
            }
            for to in BinId::ALL {
                if to != from && player.reaches(to) {
                    out.push(Action::Move {
                        object: o,
                        from,
                        to,
                    });
                }
            }
        }
        for c in &self.own_constraints {
            let answering = self.partner_ask().is_some_and(|o| c.involves(o));
            if self.config.can_provide() || (self.config.can_share() && answering) {
                out.push(Action::Share(*c));
            }
        }
        if self.config.can_seek() {
            for o in self.objects.ids() {
                if !self.is_placed(o) {
                    out.push(Action::Ask(o));
                }
            }
        }
        out.push(Action::Pass);
        out
    }

    /// The partner's unanswered ask, if any.
    pub fn partner_ask(&self) -> Option<ObjectId> {
        match self.pending_ask {
            Some((asker, o)) if asker != self.player => Some(o),
            _ => None,
        }
    }
}

pub fn public_knowledge(n_objects: usize, history: &[TurnRecord]) -> KnowledgeGraph {
    let events: Vec<KnowledgeEvent> = history
        .iter()
        .filter_map(TurnRecord::knowledge_event)
        .collect();
    KnowledgeGraph::from_events(n_objects, &[], PlayerId::P1, &events)
}

/// Accepted shares in the history, optionally restricted to one actor.
pub fn shared_constraints(history: &[TurnRecord], by: Option<PlayerId>) -> Vec<Constraint> {
    history
        .iter()
        .filter(|r| by.is_none_or(|p| r.actor == p) && r.outcome == Outcome::Accepted)
        .filter_map(|r| match r.action {
            Some(Action::Share(c)) => Some(c),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GameState {
    pub puzzle: Arc<PuzzleInstance>,
    pub configs: [ActionSpaceConfig; 2],
    pub placements: Vec<BinId>,
    pub turn: PlayerId,
    pub step_count: u32,
    pub step_limit: u32,
    pub history: Vec<TurnRecord>,
    pub pending_ask: Option<(PlayerId, ObjectId)>,
    pub status: GameStatus,
}

impl GameState {
    pub fn new(
        puzzle: Arc<PuzzleInstance>,
        configs: [ActionSpaceConfig; 2],
        step_limit: u32,
    ) -> GameState {
        let placements = puzzle.initial.clone();
        let mut s = GameState {
            puzzle,
            configs,
            placements,
            turn: PlayerId::P1,
            step_count: 0,
            step_limit,
            history: Vec::new(),
            pending_ask: None,
            status: GameStatus::Running,
        };
        s.status = s.compute_status();
        s
    }

    pub fn config(&self, p: PlayerId) -> ActionSpaceConfig {
        self.configs[p.index()]
    }

    pub fn objects(&self) -> &Objects {
        &self.puzzle.objects
    }

    pub fn location(&self, o: ObjectId) -> BinId {
        self.placements[o.index()]
    }

    pub fn is_placed(&self, o: ObjectId) -> bool {
        self.location(o).is_destination()
    }

    pub fn is_terminal(&self) -> GameStatus {
        self.status
    }

    /// Fraction of objects sitting in their goal bin.
    pub fn subgoal_fraction(&self) -> f64 {
        let n = self.placements.len();
        if n == 0 {
            return 0.0;
        }
        let placed = (0..n)
            .filter(|&i| self.placements[i].is_destination())
            .count();
        placed as f64 / n as f64
    }

    fn compute_status(&self) -> GameStatus {
        if self.placements.iter().all(|b| b.is_destination()) {
            GameStatus::Solved
        } else if self.step_count >= self.step_limit {
            GameStatus::LimitReached
        } else {
            GameStatus::Running
        }
    }

    /// Every reason `player` may not take `action` now; empty means legal.
    pub fn violations(&self, player: PlayerId, action: &Action) -> Vec<Violation> {
        let mut v = Vec::new();
        let config = self.config(player);
        match *action {
            Action::Move { object, from, to } => {
                if object.index() >= self.placements.len() || self.location(object) != from {
                    v.push(Violation::ObjectNotInSource);
                }
                if !player.reaches(from) {
                    v.push(Violation::SourceUnreachable);
                } else if from.is_destination() {
                    v.push(Violation::ObjectLocked);
                }
                if !player.reaches(to) {
                    v.push(Violation::DestUnreachable);
                }
                if from == to {
                    v.push(Violation::SourceEqualsDest);
                }
            }
            Action::Share(c) => {
                if !self.puzzle.holdings(player).contains(&c) {
                    v.push(Violation::ConstraintNotHeld);
                }
                let answering = matches!(self.pending_ask,
                    Some((asker, o)) if asker != player && c.involves(o));
                if !(config.can_provide() || (config.can_share() && answering)) {
                    v.push(Violation::NotPermitted);
                }
            }
            Action::Ask(o) => {
                if o.index() >= self.placements.len() {
                    v.push(Violation::ObjectNotInSource);
                }
                if !config.can_seek() {
                    v.push(Violation::NotPermitted);
                }
            }
            Action::Pass => {}
        }
        v
    }

    /// Actions offered to `player`: reachable moves, permitted shares of own
    /// holdings, asks about unplaced objects, and pass.
    pub fn legal_actions(&self, player: PlayerId) -> Result<Vec<Action>, EngineError> {
        if player != self.turn {
            return Err(EngineError::NotYourTurn(player));
        }
        Ok(self.observation(player).legal_actions())
    }

    fn precheck(&self) -> Result<(), EngineError> {
        if self.status != GameStatus::Running {
            return Err(EngineError::GameOver);
        }
        Ok(())
    }

    /// Executes `action` for the player to move. Illegal actions are refused
    /// without consuming a step.
    pub fn apply(&mut self, action: Action) -> Result<Outcome, EngineError> {
        self.apply_with(action, None)
    }

    pub fn apply_with(
        &mut self,
        action: Action,
        meta: Option<TurnMeta>,
    ) -> Result<Outcome, EngineError> {
        self.precheck()?;
        let player = self.turn;
        let v = self.violations(player, &action);
        if !v.is_empty() {
            return Err(EngineError::Illegal(v));
        }
        let outcome = match action {
            Action::Move { object, to, .. } => {
                if !to.is_destination() || self.puzzle.goal_of(object) == to {
                    self.placements[object.index()] = to;
                    Outcome::Accepted
                } else {
                    Outcome::RejectedPlacement
                }
            }
            Action::Share(c) => {
                if let Some((asker, o)) = self.pending_ask {
                    if asker != player && c.involves(o) {
                        self.pending_ask = None;
                    }
                }
                Outcome::Accepted
            }
            Action::Ask(o) => {
                self.pending_ask = Some((player, o));
                Outcome::Accepted
            }
            Action::Pass => Outcome::Accepted,
        };
        self.consume(Some(action), outcome.clone(), meta);
        Ok(outcome)
    }

    /// Records a chosen action the engine would refuse (or an unparseable
    /// one) as a no-op that still consumes the turn.
    pub fn forfeit(
        &mut self,
        attempted: Option<Action>,
        labels: Vec<ErrorLabel>,
        meta: Option<TurnMeta>,
    ) -> Result<Outcome, EngineError> {
        self.precheck()?;
        let outcome = Outcome::IllegalNoOp { labels };
        self.consume(attempted, outcome.clone(), meta);
        Ok(outcome)
    }

    fn consume(&mut self, action: Option<Action>, outcome: Outcome, meta: Option<TurnMeta>) {
        self.step_count += 1;
        self.history.push(TurnRecord {
            step: self.step_count,
            actor: self.turn,
            action,
            outcome,
            meta,
        });
        self.turn = self.turn.other();
        self.status = self.compute_status();
    }

    pub fn observation(&self, player: PlayerId) -> Observation {
        Observation {
            player,
            config: self.config(player),
            partner_config: self.config(player.other()),
            objects: self.objects().clone(),
            placements: self.placements.clone(),
            own_constraints: self.puzzle.holdings(player),
            history: self.history.clone(),
            pending_ask: self.pending_ask,
            step_count: self.step_count,
            step_limit: self.step_limit,
        }
    }

    pub fn knowledge(&self, player: PlayerId) -> KnowledgeGraph {
        self.observation(player).knowledge()
    }

    /// Canonical serialized snapshot, used to compare replays bit for bit.
    pub fn snapshot(&self) -> StateSnapshot {
        let objs = self.objects();
        StateSnapshot {
            configs: self.configs,
            placements: objs
                .ids()
                .map(|o| (objs.name(o).to_string(), self.location(o)))
                .collect(),
            turn: self.turn,
            step_count: self.step_count,
            step_limit: self.step_limit,
            history: self.history.iter().map(|r| r.to_wire(objs)).collect(),
            pending_ask: self.pending_ask.map(|(p, o)| (p, objs.name(o).to_string())),
            status: self.status,
        }
    }
}

pub fn new_game(
    puzzle: Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
    step_limit: u32,
) -> GameState {
    GameState::new(puzzle, configs, step_limit)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub configs: [ActionSpaceConfig; 2],
    pub placements: Vec<(String, BinId)>,
    pub turn: PlayerId,
    pub step_count: u32,
    pub step_limit: u32,
    pub history: Vec<TurnRecordWire>,
    pub pending_ask: Option<(PlayerId, String)>,
    pub status: GameStatus,
}

/// First line of an event log.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LogHeader {
    pub puzzle: PuzzleFile,
    pub configs: [ActionSpaceConfig; 2],
    pub step_limit: u32,
}

/// Writes the header and every TurnRecord as JSON lines.
pub fn write_event_log(mut w: impl Write, state: &GameState) -> Result<(), PuzzleError> {
    let header = LogHeader {
        puzzle: PuzzleFile::from(state.puzzle.as_ref()),
        configs: state.configs,
        step_limit: state.step_limit,
    };
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for r in &state.history {
        serde_json::to_writer(&mut w, &r.to_wire(state.objects()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Rebuilds a game by re-applying the logged actions; every recorded
/// outcome must be reproduced.
pub fn replay_event_log(r: impl BufRead) -> Result<GameState, PuzzleError> {
    let mut lines = r.lines();
    let first = lines
        .next()
        .ok_or_else(|| PuzzleError::Invalid("empty event log".into()))??;
    let header: LogHeader = serde_json::from_str(&first)?;
    let puzzle = Arc::new(PuzzleInstance::try_from(header.puzzle)?);
    let mut state = GameState::new(puzzle, header.configs, header.step_limit);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: TurnRecordWire = serde_json::from_str(&line)?;
        let rec = TurnRecord::from_wire(&wire, state.objects())?;
        replay_record(&mut state, &rec).map_err(PuzzleError::Invalid)?;
    }
    Ok(state)
}

/// Applies one recorded turn and checks it reproduces.
pub fn replay_record(state: &mut GameState, rec: &TurnRecord) -> Result<(), String> {
    if rec.actor != state.turn || rec.step != state.step_count + 1 {
        return Err(format!("step {} out of order", rec.step));
    }
    let got = match &rec.outcome {
        Outcome::IllegalNoOp { labels } => {
            state.forfeit(rec.action, labels.clone(), rec.meta.clone())
        }
        _ => {
            let action = rec
                .action
                .ok_or_else(|| format!("step {} has no action", rec.step))?;
            state.apply_with(action, rec.meta.clone())
        }
    }
    .map_err(|e| format!("step {}: {e}", rec.step))?;
    if got != rec.outcome {
        return Err(format!(
            "step {}: outcome {:?} differs from log {:?}",
            rec.step, got, rec.outcome
        ));
    }
    Ok(())
}
