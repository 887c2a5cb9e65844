//! Human-vs-agent sessions: a practice game followed by a fixed game list,
//! with the human seated as p1. Every event is appended to a per-session
//! JSON-lines log, and replaying the logs restores all sessions.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::agents::{GreedyAgent, Policy};
use crate::domain::{Action, PlayerId};
use crate::engine::{
    replay_record, ActionSpaceConfig, GameState, GameStatus, Outcome, TurnRecord, TurnRecordWire,
};
use crate::error::{EngineError, SessionError};
use crate::harness::play_turn;
use crate::protocol;
use crate::puzzle::{generate_puzzle, PuzzleFile, PuzzleInstance};
use crate::verifier::VerifierStack;

pub const HUMAN: PlayerId = PlayerId::P1;
pub const HUMAN_CONFIG: ActionSpaceConfig = ActionSpaceConfig::ProvideAndSeek;
pub const SURVEY_QUESTIONS: usize = 3;

/// A named sequence of games; entry 0 is the practice game.
#[derive(Clone, Debug)]
pub struct GameList {
    pub id: String,
    pub games: Vec<Arc<PuzzleInstance>>,
}

impl GameList {
    /// A 4-object practice game, then three games each of 4, 5 and 6 objects.
    pub fn standard(id: &str, seed: u64) -> GameList {
        let sizes = std::iter::once(4).chain([4, 5, 6].into_iter().flat_map(|n| [n; 3]));
        let games = (seed..)
            .zip(sizes)
            .map(|(s, n)| Arc::new(generate_puzzle(n, s).expect("standard sizes generate")))
            .collect();
        GameList {
            id: id.to_string(),
            games,
        }
    }
}

/// Agent side of every session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSettings {
    pub config: ActionSpaceConfig,
    pub stack: VerifierStack,
    pub n_samples: usize,
    pub step_limit: u32,
}

impl Default for AgentSettings {
    fn default() -> AgentSettings {
        AgentSettings {
            config: ActionSpaceConfig::ProvideAndSeek,
            stack: VerifierStack::Reasoning,
            n_samples: 4,
            step_limit: crate::DEFAULT_STEP_LIMIT,
        }
    }
}

/// Log entries, one JSON object per line.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum LogEvent {
    Created {
        session_id: String,
        participant: String,
        list_id: String,
        total_games: usize,
        agent: AgentSettings,
    },
    GameStarted {
        index: usize,
        puzzle: PuzzleFile,
    },
    Turn {
        index: usize,
        record: TurnRecordWire,
    },
    Feedback {
        index: usize,
        answers: Vec<u8>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexEntry {
    session_id: String,
    participant: String,
    list_id: String,
}

struct Session {
    id: String,
    participant: String,
    list_id: String,
    total_games: usize,
    agent: AgentSettings,
    policy: Box<dyn Policy>,
    index: usize,
    game: GameState,
    feedback: BTreeMap<usize, Vec<u8>>,
    complete: bool,
    log: PathBuf,
}

/// One line of the action history as the human sees it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub step: u32,
    pub actor: PlayerId,
    pub action: Option<String>,
    /// `accepted`, `rejected` or `invalid`.
    pub outcome: String,
}

impl HistoryEntry {
    fn of(r: &TurnRecord, g: &GameState) -> HistoryEntry {
        HistoryEntry {
            step: r.step,
            actor: r.actor,
            action: r.action.map(|a| g.objects().action_text(&a)),
            outcome: match r.outcome {
                Outcome::Accepted => "accepted",
                Outcome::RejectedPlacement => "rejected",
                Outcome::IllegalNoOp { .. } => "invalid",
            }
            .to_string(),
        }
    }
}

/// Everything the human client may see; never the agent's constraints or settings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateView {
    pub session_id: String,
    pub game_index: usize,
    pub total_games: usize,
    pub practice: bool,
    pub status: GameStatus,
    pub step_count: u32,
    pub step_limit: u32,
    pub your_turn: bool,
    pub board: BTreeMap<String, String>,
    pub your_constraints: Vec<String>,
    pub askable_objects: Vec<String>,
    pub history: Vec<HistoryEntry>,
    pub awaiting_feedback: bool,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmitResult {
    pub turns: Vec<HistoryEntry>,
    pub state: StateView,
}

pub type AgentFactory = dyn Fn(&str) -> Box<dyn Policy> + Send + Sync;

impl Session {
    fn view(&self) -> StateView {
        let g = &self.game;
        let objs = g.objects();
        let terminal = g.status != GameStatus::Running;
        StateView {
            session_id: self.id.clone(),
            game_index: self.index,
            total_games: self.total_games,
            practice: self.index == 0,
            status: g.status,
            step_count: g.step_count,
            step_limit: g.step_limit,
            your_turn: !self.complete && !terminal && g.turn == HUMAN,
            board: objs
                .ids()
                .map(|o| (objs.name(o).to_string(), g.location(o).name().to_string()))
                .collect(),
            your_constraints: g
                .puzzle
                .holdings(HUMAN)
                .iter()
                .map(|c| objs.constraint_text(c))
                .collect(),
            askable_objects: objs
                .ids()
                .filter(|&o| !g.is_placed(o))
                .map(|o| objs.name(o).to_string())
                .collect(),
            history: g.history.iter().map(|r| HistoryEntry::of(r, g)).collect(),
            awaiting_feedback: !self.complete
                && terminal
                && !self.feedback.contains_key(&self.index),
            complete: self.complete,
        }
    }

    fn append(&self, e: &LogEvent) -> Result<(), SessionError> {
        append_line(&self.log, e)
    }
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), SessionError> {
    let mut line = serde_json::to_string(value)?;
    line.push('\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    // One write per event keeps appends whole.
    f.write_all(line.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn new_game(puzzle: Arc<PuzzleInstance>, agent: &AgentSettings) -> GameState {
    GameState::new(puzzle, [HUMAN_CONFIG, agent.config], agent.step_limit)
}

pub struct SessionManager {
    root: PathBuf,
    lists: HashMap<String, GameList>,
    agent: AgentSettings,
    factory: Box<AgentFactory>,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    counter: Mutex<u64>,
}

impl SessionManager {
    /// A manager with the greedy agent; sessions found under `root` are restored.
    pub fn open(
        root: &Path,
        lists: Vec<GameList>,
        agent: AgentSettings,
    ) -> Result<SessionManager, SessionError> {
        Self::with_agent(root, lists, agent, Box::new(|_| Box::new(GreedyAgent)))
    }

    pub fn with_agent(
        root: &Path,
        lists: Vec<GameList>,
        agent: AgentSettings,
        factory: Box<AgentFactory>,
    ) -> Result<SessionManager, SessionError> {
        fs::create_dir_all(root.join("sessions"))?;
        let mgr = SessionManager {
            root: root.to_path_buf(),
            lists: lists.into_iter().map(|l| (l.id.clone(), l)).collect(),
            agent,
            factory,
            sessions: Mutex::new(HashMap::new()),
            counter: Mutex::new(0),
        };
        mgr.recover()?;
        Ok(mgr)
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.jsonl")
    }

    fn log_path(&self, id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{id}.jsonl"))
    }

    fn recover(&self) -> Result<(), SessionError> {
        let path = self.index_path();
        if !path.exists() {
            return Ok(());
        }
        let mut max = 0;
        for line in BufReader::new(File::open(&path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry = serde_json::from_str(&line)?;
            if let Some(n) = entry
                .session_id
                .strip_prefix('s')
                .and_then(|n| n.parse::<u64>().ok())
            {
                max = max.max(n);
            }
            let session = self.replay(&entry.session_id)?;
            self.sessions
                .lock()
                .unwrap()
                .insert(entry.session_id.clone(), Arc::new(Mutex::new(session)));
        }
        *self.counter.lock().unwrap() = max;
        Ok(())
    }

    /// Rebuilds one session from its log.
    fn replay(&self, id: &str) -> Result<Session, SessionError> {
        let log = self.log_path(id);
        let mut session: Option<Session> = None;
        for (n, line) in BufReader::new(File::open(&log)?).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: LogEvent = serde_json::from_str(&line)
                .map_err(|e| SessionError::Corrupt(format!("line {}: {e}", n + 1)))?;
            match (event, session.as_mut()) {
                (
                    LogEvent::Created {
                        session_id,
                        participant,
                        list_id,
                        total_games,
                        agent,
                    },
                    None,
                ) => {
                    let policy = (self.factory)(&session_id);
                    session = Some(Session {
                        id: session_id,
                        participant,
                        list_id,
                        total_games,
                        agent,
                        policy,
                        index: 0,
                        game: new_game(Arc::new(PuzzleInstance::fixture_p0()), &agent),
                        feedback: BTreeMap::new(),
                        complete: false,
                        log: log.clone(),
                    });
                }
                (LogEvent::GameStarted { index, puzzle }, Some(s)) => {
                    let p = PuzzleInstance::try_from(puzzle)
                        .map_err(|e| SessionError::Corrupt(e.to_string()))?;
                    s.index = index;
                    s.game = new_game(Arc::new(p), &s.agent);
                }
                (LogEvent::Turn { index, record }, Some(s)) if index == s.index => {
                    let r = TurnRecord::from_wire(&record, s.game.objects())?;
                    replay_record(&mut s.game, &r).map_err(SessionError::Corrupt)?;
                }
                (LogEvent::Feedback { index, answers }, Some(s)) => {
                    s.feedback.insert(index, answers);
                    if index + 1 >= s.total_games {
                        s.complete = true;
                    }
                }
                _ => {
                    return Err(SessionError::Corrupt(format!(
                        "unexpected event on line {}",
                        n + 1
                    )))
                }
            }
        }
        session.ok_or_else(|| SessionError::Corrupt(format!("empty log for {id}")))
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, SessionError> {
        self.sessions
            .lock()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| SessionError::NotFound(id.to_string()))
    }

    pub fn create_session(
        &self,
        list_id: &str,
        participant: &str,
    ) -> Result<StateView, SessionError> {
        let list = self
            .lists
            .get(list_id)
            .ok_or_else(|| SessionError::NotFound(format!("game list {list_id}")))?;
        let id = {
            let mut c = self.counter.lock().unwrap();
            *c += 1;
            format!("s{:06}", *c)
        };
        let puzzle = list.games[0].clone();
        let session = Session {
            id: id.clone(),
            participant: participant.to_string(),
            list_id: list_id.to_string(),
            total_games: list.games.len(),
            agent: self.agent,
            policy: (self.factory)(&id),
            index: 0,
            game: new_game(puzzle.clone(), &self.agent),
            feedback: BTreeMap::new(),
            complete: false,
            log: self.log_path(&id),
        };
        session.append(&LogEvent::Created {
            session_id: id.clone(),
            participant: session.participant.clone(),
            list_id: session.list_id.clone(),
            total_games: session.total_games,
            agent: self.agent,
        })?;
        session.append(&LogEvent::GameStarted {
            index: 0,
            puzzle: PuzzleFile::from(puzzle.as_ref()),
        })?;
        append_line(
            &self.index_path(),
            &IndexEntry {
                session_id: id.clone(),
                participant: session.participant.clone(),
                list_id: session.list_id.clone(),
            },
        )?;
        let view = session.view();
        self.sessions
            .lock()
            .unwrap()
            .insert(id, Arc::new(Mutex::new(session)));
        Ok(view)
    }

    pub fn get_state(&self, id: &str) -> Result<StateView, SessionError> {
        Ok(self.get(id)?.lock().unwrap().view())
    }

    pub fn get_history(&self, id: &str) -> Result<Vec<HistoryEntry>, SessionError> {
        Ok(self.get_state(id)?.history)
    }

    /// Applies the human's action, then lets the agent move. Affordance
    /// errors are refused without using a step.
    pub fn submit_action(&self, id: &str, text: &str) -> Result<SubmitResult, SessionError> {
        let handle = self.get(id)?;
        let mut s = handle.lock().unwrap();
        if s.complete || s.game.status != GameStatus::Running {
            return Err(SessionError::PreconditionFailed(
                "game is not running".into(),
            ));
        }
        if s.game.turn != HUMAN {
            return Err(SessionError::TurnViolation);
        }
        let action = parse_human(s.game.objects(), text)?;
        match s.game.apply(action) {
            Ok(_) => {}
            Err(EngineError::Illegal(v)) => return Err(SessionError::Illegal(v)),
            Err(e) => return Err(SessionError::PreconditionFailed(e.to_string())),
        }
        let first = s.game.history.len() - 1;
        if s.game.status == GameStatus::Running {
            let agent = s.agent;
            let Session { game, policy, .. } = &mut *s;
            if play_turn(game, policy.as_mut(), agent.stack, agent.n_samples).is_err() {
                game.apply(Action::Pass).expect("pass is always legal");
            }
        }
        for r in s.game.history[first..].iter() {
            s.append(&LogEvent::Turn {
                index: s.index,
                record: r.to_wire(s.game.objects()),
            })?;
        }
        let turns = s.game.history[first..]
            .iter()
            .map(|r| HistoryEntry::of(r, &s.game))
            .collect();
        Ok(SubmitResult {
            turns,
            state: s.view(),
        })
    }

    /// Stores the three survey answers (1 to 5) and moves to the next game.
    pub fn submit_feedback(&self, id: &str, answers: &[u8]) -> Result<StateView, SessionError> {
        let handle = self.get(id)?;
        let mut s = handle.lock().unwrap();
        if s.complete || s.game.status == GameStatus::Running {
            return Err(SessionError::PreconditionFailed(
                "feedback is only taken after a game ends".into(),
            ));
        }
        if answers.len() != SURVEY_QUESTIONS || answers.iter().any(|a| !(1..=5).contains(a)) {
            return Err(SessionError::PreconditionFailed(
                "three answers between 1 and 5 are required".into(),
            ));
        }
        let index = s.index;
        s.append(&LogEvent::Feedback {
            index,
            answers: answers.to_vec(),
        })?;
        s.feedback.insert(index, answers.to_vec());
        if index + 1 >= s.total_games {
            s.complete = true;
        } else {
            let list = self
                .lists
                .get(&s.list_id)
                .ok_or_else(|| SessionError::NotFound(format!("game list {}", s.list_id)))?;
            let puzzle = list.games[index + 1].clone();
            s.append(&LogEvent::GameStarted {
                index: index + 1,
                puzzle: PuzzleFile::from(puzzle.as_ref()),
            })?;
            s.index = index + 1;
            s.game = new_game(puzzle, &s.agent);
            s.policy = (self.factory)(&s.id);
        }
        Ok(s.view())
    }

    pub fn session_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.lock().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Canonical snapshot of a session's current game, for recovery checks.
    pub fn snapshot(&self, id: &str) -> Result<String, SessionError> {
        let handle = self.get(id)?;
        let s = handle.lock().unwrap();
        Ok(serde_json::to_string(&(
            s.index,
            s.complete,
            &s.feedback,
            s.game.snapshot(),
        ))?)
    }
}

/// Humans may send bare canonical text or the envelope.
fn parse_human(objects: &crate::domain::Objects, text: &str) -> Result<Action, SessionError> {
    if text.contains("<ACTION>") {
        Ok(protocol::parse_action(objects, text)?)
    } else {
        Ok(objects.parse_action(text)?)
    }
}
