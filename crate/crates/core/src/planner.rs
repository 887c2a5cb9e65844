//! Perspective-taking joint planner.
//!
//! Each turn's candidates come only from the acting player's knowledge (own
//! constraints, shared constraints, board events), so a plan is something the
//! two players could actually carry out. Breadth-first search gives the
//! minimum step count; a depth-bounded forward graph gives near-optimal
//! alternatives.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet, VecDeque};
use std::rc::Rc;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{sort_actions, GuessMode, View};
use crate::domain::{Action, BinId, Constraint, ObjectId, Objects, PlayerId};
use crate::engine::{replay_record, ActionSpaceConfig, GameState, GameStatus, Outcome, TurnRecord};
use crate::error::{HarnessError, PlanError};
use crate::knowledge::{ClosureResult, KnowledgeGraph, Provenance};
use crate::puzzle::{PuzzleFile, PuzzleInstance};
use crate::DEFAULT_STEP_LIMIT;

/// Upper bound on explored states per search.
const NODE_CAP: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrajectoryStep {
    pub actor: PlayerId,
    pub action: Action,
    pub rationale: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub puzzle: Arc<PuzzleInstance>,
    pub configs: [ActionSpaceConfig; 2],
    pub steps: Vec<TrajectoryStep>,
    pub status: GameStatus,
}

impl Trajectory {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }

    /// Runs the actions through the engine; fails on any illegal step.
    pub fn replay(&self, step_limit: u32) -> Result<GameState, HarnessError> {
        let mut g = GameState::new(self.puzzle.clone(), self.configs, step_limit);
        for (i, s) in self.steps.iter().enumerate() {
            if g.turn != s.actor {
                return Err(HarnessError::Replay(format!(
                    "step {} acted out of turn",
                    i + 1
                )));
            }
            g.apply(s.action)
                .map_err(|e| HarnessError::Replay(format!("step {}: {e}", i + 1)))?;
        }
        if g.status != self.status {
            return Err(HarnessError::Replay(format!(
                "final status {:?} differs from recorded {:?}",
                g.status, self.status
            )));
        }
        Ok(g)
    }

    /// Number of rejected placements along the trajectory.
    pub fn rejections(&self) -> usize {
        match self.replay(u32::MAX) {
            Ok(g) => g
                .history
                .iter()
                .filter(|r| r.outcome == Outcome::RejectedPlacement)
                .count(),
            Err(_) => 0,
        }
    }

    pub fn to_file(&self) -> TrajectoryFile {
        let objs = &self.puzzle.objects;
        TrajectoryFile {
            puzzle: PuzzleFile::from(self.puzzle.as_ref()),
            configs: self.configs,
            steps: self
                .steps
                .iter()
                .map(|s| StepFile {
                    actor: s.actor,
                    action: objs.action_text(&s.action),
                    rationale: s.rationale.clone(),
                })
                .collect(),
            status: self.status,
        }
    }

    pub fn from_file(f: TrajectoryFile) -> Result<Trajectory, HarnessError> {
        let puzzle = Arc::new(PuzzleInstance::try_from(f.puzzle)?);
        let steps = f
            .steps
            .iter()
            .map(|s| {
                Ok(TrajectoryStep {
                    actor: s.actor,
                    action: puzzle.objects.parse_action(&s.action)?,
                    rationale: s.rationale.clone(),
                })
            })
            .collect::<Result<Vec<_>, HarnessError>>()?;
        Ok(Trajectory {
            puzzle,
            configs: f.configs,
            steps,
            status: f.status,
        })
    }
}

/// One trajectory per JSON line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub puzzle: PuzzleFile,
    pub configs: [ActionSpaceConfig; 2],
    pub steps: Vec<StepFile>,
    pub status: GameStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepFile {
    pub actor: PlayerId,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

/// Compact search state. Knowledge is a function of the shared-constraint
/// mask, the placed objects and the rejections, so it is not stored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
struct Node {
    /// Three bits per object: index into `BinId::ALL`.
    loc: u32,
    /// Four bits per object: rejected destination bins.
    rejected: u32,
    shared: u16,
    /// 0 = none, else 1 + player * 8 + object.
    pending: u8,
    turn: u8,
    last_pass: bool,
}

fn bin_index(b: BinId) -> u32 {
    BinId::ALL.iter().position(|x| *x == b).unwrap() as u32
}

impl Node {
    fn location(&self, o: usize) -> BinId {
        BinId::ALL[((self.loc >> (3 * o)) & 7) as usize]
    }

    fn set_location(&mut self, o: usize, b: BinId) {
        self.loc = (self.loc & !(7 << (3 * o))) | (bin_index(b) << (3 * o));
    }

    fn placed_mask(&self, n: usize) -> u8 {
        (0..n)
            .filter(|&o| self.location(o).is_destination())
            .fold(0, |m, o| m | (1 << o))
    }

    fn turn(&self) -> PlayerId {
        PlayerId::BOTH[self.turn as usize]
    }

    fn pending(&self) -> Option<(PlayerId, ObjectId)> {
        (self.pending != 0).then(|| {
            let v = self.pending - 1;
            (PlayerId::BOTH[(v / 8) as usize], ObjectId(v % 8))
        })
    }

    fn solved(&self, n: usize) -> bool {
        (0..n).all(|o| self.location(o).is_destination())
    }
}

type ClosureKey = (u16, u8, u32);

/// Successor generation with memoized knowledge closures.
struct Expander<'p> {
    puzzle: &'p PuzzleInstance,
    configs: [ActionSpaceConfig; 2],
    mode: GuessMode,
    constraints: Vec<Constraint>,
    holdings: [u16; 2],
    own: [Vec<Constraint>; 2],
    cache: RefCell<HashMap<ClosureKey, Rc<ClosureResult>>>,
}

impl<'p> Expander<'p> {
    fn new(puzzle: &'p PuzzleInstance, configs: [ActionSpaceConfig; 2], mode: GuessMode) -> Self {
        Expander {
            puzzle,
            configs,
            mode,
            constraints: puzzle.constraints(),
            holdings: [
                puzzle.holding_mask(PlayerId::P1),
                puzzle.holding_mask(PlayerId::P2),
            ],
            own: [puzzle.holdings(PlayerId::P1), puzzle.holdings(PlayerId::P2)],
            cache: RefCell::new(HashMap::new()),
        }
    }

    fn n(&self) -> usize {
        self.puzzle.n_objects()
    }

    fn start(&self) -> Node {
        let mut node = Node {
            loc: 0,
            rejected: 0,
            shared: 0,
            pending: 0,
            turn: 0,
            last_pass: false,
        };
        for (o, b) in self.puzzle.initial.iter().enumerate() {
            node.set_location(o, *b);
        }
        node
    }

    fn closure(&self, cmask: u16, placed: u8, rejected: u32) -> Rc<ClosureResult> {
        let key = (cmask, placed, rejected);
        if let Some(c) = self.cache.borrow().get(&key) {
            return c.clone();
        }
        let n = self.n();
        let mut kg = KnowledgeGraph::new(n);
        for (i, c) in self.constraints.iter().enumerate() {
            if cmask & (1 << i) != 0 {
                kg.add_constraint(c, Provenance::Own);
            }
        }
        for o in 0..n {
            let id = ObjectId(o as u8);
            if placed & (1 << o) != 0 {
                kg.add_constraint(
                    &Constraint::in_bin(id, self.puzzle.goal_of(id)).unwrap(),
                    Provenance::Observed,
                );
            }
            for b in BinId::DESTINATIONS {
                if rejected & (1 << (4 * o + b.dest_code().unwrap() as usize)) != 0 {
                    kg.add_negative(id, b);
                }
            }
        }
        let c = Rc::new(kg.expand());
        self.cache.borrow_mut().insert(key, c.clone());
        c
    }

    /// Candidate actions for the player to move, in tie-break order.
    fn candidates(&self, node: &Node) -> Vec<Action> {
        let n = self.n();
        let actor = node.turn();
        let placed = node.placed_mask(n);
        let knowledge = self.closure(
            self.holdings[actor.index()] | node.shared,
            placed,
            node.rejected,
        );
        let public = self.closure(node.shared, placed, node.rejected);
        let placements: Vec<BinId> = (0..n).map(|o| node.location(o)).collect();
        let view = View {
            player: actor,
            config: self.configs[actor.index()],
            partner_config: self.configs[actor.other().index()],
            placements: &placements,
            own: &self.own[actor.index()],
            knowledge: &knowledge,
            public: &public,
            pending_ask: node.pending(),
        };
        let mut out = view.productive();
        out.extend(view.useful_shares());
        out.extend(view.useful_asks());
        if view.guess_gate_open() {
            out.extend(view.guesses(self.mode, &|o| self.puzzle.goal_of(o)));
        }
        if !node.last_pass {
            out.push(Action::Pass);
        }
        sort_actions(&self.puzzle.objects, &mut out);
        out
    }

    fn step(&self, node: &Node, action: &Action) -> Node {
        let mut next = *node;
        let actor = node.turn();
        next.turn ^= 1;
        next.last_pass = false;
        match *action {
            Action::Move { object, to, .. } => {
                let o = object.index();
                if !to.is_destination() || self.puzzle.goal_of(object) == to {
                    next.set_location(o, to);
                } else {
                    next.rejected |= 1 << (4 * o + to.dest_code().unwrap() as usize);
                }
            }
            Action::Share(c) => {
                let i = self.puzzle.constraint_index(&c).expect("held constraint");
                next.shared |= 1 << i;
                if let Some((asker, o)) = node.pending() {
                    if asker != actor && c.involves(o) {
                        next.pending = 0;
                    }
                }
            }
            Action::Ask(o) => next.pending = 1 + actor.index() as u8 * 8 + o.0,
            Action::Pass => next.last_pass = true,
        }
        next
    }
}

/// Minimum-step joint plan with lucky guesses. Ties resolve toward
/// move, share, ask, pass, then canonical text, at the earliest step.
pub fn plan_optimal(
    puzzle: &Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
) -> Result<Trajectory, PlanError> {
    plan_optimal_within(puzzle, configs, DEFAULT_STEP_LIMIT)
}

pub fn plan_optimal_within(
    puzzle: &Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
    max_steps: u32,
) -> Result<Trajectory, PlanError> {
    let ex = Expander::new(puzzle, configs, GuessMode::Lucky);
    let n = ex.n();
    let start = ex.start();
    let mut nodes = vec![(start, usize::MAX, Action::Pass, 0u32)];
    let mut seen: HashSet<Node> = HashSet::from([start]);
    let mut queue = VecDeque::from([0usize]);
    while let Some(i) = queue.pop_front() {
        let (node, _, _, depth) = nodes[i];
        if node.solved(n) {
            return Ok(build(puzzle, configs, &nodes, i));
        }
        if depth >= max_steps || nodes.len() > NODE_CAP {
            continue;
        }
        for a in ex.candidates(&node) {
            let next = ex.step(&node, &a);
            if seen.insert(next) {
                nodes.push((next, i, a, depth + 1));
                queue.push_back(nodes.len() - 1);
            }
        }
    }
    Err(PlanError::Unsolvable(max_steps))
}

fn build(
    puzzle: &Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
    nodes: &[(Node, usize, Action, u32)],
    mut i: usize,
) -> Trajectory {
    let mut rev = Vec::new();
    while nodes[i].1 != usize::MAX {
        let (_, parent, action, _) = nodes[i];
        rev.push((nodes[parent].0.turn(), action));
        i = parent;
    }
    rev.reverse();
    with_rationales(puzzle, configs, rev)
}

fn with_rationales(
    puzzle: &Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
    steps: Vec<(PlayerId, Action)>,
) -> Trajectory {
    let mut g = GameState::new(puzzle.clone(), configs, u32::MAX);
    let mut out = Vec::with_capacity(steps.len());
    for (actor, action) in steps {
        let obs = g.observation(actor);
        let rationale = rationale(&obs, &action);
        g.apply(action).expect("planner actions are legal");
        out.push(TrajectoryStep {
            actor,
            action,
            rationale: Some(rationale),
        });
    }
    Trajectory {
        puzzle: puzzle.clone(),
        configs,
        steps: out,
        status: if g.status == GameStatus::Solved {
            GameStatus::Solved
        } else {
            GameStatus::Running
        },
    }
}

/// A short templated explanation of why a knowledge-grounded action was taken.
pub fn rationale(obs: &crate::engine::Observation, action: &Action) -> String {
    let objs: &Objects = &obs.objects;
    let k = obs.knowledge().expand();
    match *action {
        Action::Move { object, to, .. } if to.is_destination() => {
            let name = objs.name(object);
            if k.is_known(object) {
                format!("{name} belongs in {to}, which I can reach.")
            } else {
                format!(
                    "{name} could be in {}; I will try {to}.",
                    k.candidates(object)
                )
            }
        }
        Action::Move { object, .. } => format!(
            "{} must go to {}, on my partner's side, so I hand it over through common.",
            objs.name(object),
            k.candidates(object)
        ),
        Action::Share(c) => match obs.partner_ask() {
            Some(o) if c.involves(o) => format!(
                "My partner asked about {}; {} answers that.",
                objs.name(o),
                objs.constraint_text(&c)
            ),
            _ => format!("My partner does not know {} yet.", objs.constraint_text(&c)),
        },
        Action::Ask(o) => format!(
            "I cannot tell where {} goes; my partner may know.",
            objs.name(o)
        ),
        Action::Pass => "Nothing useful to do this turn.".to_string(),
    }
}

/// Up to `k` distinct solving trajectories within `slack` steps of the optimum,
/// sampled with a seeded generator. Guesses may fail here, so trajectories for
/// guessing configurations can include rejected placements.
pub fn plan_near_optimal(
    puzzle: &Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
    slack: u32,
    k: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, PlanError> {
    let ex = Expander::new(puzzle, configs, GuessMode::Full);
    let n = ex.n();
    let start = ex.start();

    // Forward layers until the first solved node fixes the optimum.
    let mut index: HashMap<Node, usize> = HashMap::from([(start, 0)]);
    let mut nodes = vec![start];
    let mut edges: Vec<Vec<(Action, usize)>> = vec![Vec::new()];
    let mut layer = vec![0usize];
    let mut depth = 0u32;
    let mut bound: Option<u32> = None;
    while !layer.is_empty() {
        if bound.is_none() && layer.iter().any(|&i| nodes[i].solved(n)) {
            bound = Some(depth + slack);
        }
        if bound.is_some_and(|b| depth >= b)
            || depth >= DEFAULT_STEP_LIMIT
            || nodes.len() > NODE_CAP
        {
            break;
        }
        let mut next_layer = Vec::new();
        for &i in &layer {
            let node = nodes[i];
            if node.solved(n) {
                continue;
            }
            for a in ex.candidates(&node) {
                let next = ex.step(&node, &a);
                let j = *index.entry(next).or_insert_with(|| {
                    nodes.push(next);
                    edges.push(Vec::new());
                    next_layer.push(nodes.len() - 1);
                    nodes.len() - 1
                });
                edges[i].push((a, j));
            }
        }
        layer = next_layer;
        depth += 1;
    }
    let Some(bound) = bound else {
        return Err(PlanError::Unsolvable(depth));
    };

    // Distance to a solved node over the explored graph.
    let mut dist = vec![u32::MAX; nodes.len()];
    for (i, node) in nodes.iter().enumerate() {
        if node.solved(n) {
            dist[i] = 0;
        }
    }
    loop {
        let mut changed = false;
        for i in 0..nodes.len() {
            for &(_, j) in &edges[i] {
                if dist[j] != u32::MAX && dist[j] + 1 < dist[i] {
                    dist[i] = dist[j] + 1;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found: Vec<Vec<(PlayerId, Action)>> = Vec::new();
    let attempts = k.saturating_mul(8).max(8);
    for attempt in 0..attempts {
        if found.len() >= k {
            break;
        }
        let prefer = match attempt {
            0 => Some(crate::domain::ActionKind::Share),
            1 => Some(crate::domain::ActionKind::Ask),
            _ => None,
        };
        let mut i = 0usize;
        let mut t = 0u32;
        let mut path = Vec::new();
        while !nodes[i].solved(n) {
            let ok: Vec<&(Action, usize)> = edges[i]
                .iter()
                .filter(|(_, j)| dist[*j] != u32::MAX && t + 1 + dist[*j] <= bound)
                .collect();
            let preferred: Vec<&(Action, usize)> = match prefer {
                Some(kind) => ok
                    .iter()
                    .copied()
                    .filter(|(a, _)| a.kind() == kind)
                    .collect(),
                None => Vec::new(),
            };
            let pool = if preferred.is_empty() {
                &ok
            } else {
                &preferred
            };
            let &&(a, j) = pool.choose(&mut rng).expect("a solving edge exists");
            path.push((nodes[i].turn(), a));
            i = j;
            t += 1;
        }
        if !found.contains(&path) {
            found.push(path);
        }
    }
    Ok(found
        .into_iter()
        .map(|p| with_rationales(puzzle, configs, p))
        .collect())
}

/// Replays a trajectory as TurnRecords, checking each outcome.
pub fn trajectory_records(t: &Trajectory) -> Result<Vec<TurnRecord>, HarnessError> {
    let g = t.replay(u32::MAX)?;
    let mut check = GameState::new(t.puzzle.clone(), t.configs, u32::MAX);
    for r in &g.history {
        replay_record(&mut check, r).map_err(HarnessError::Replay)?;
    }
    Ok(g.history)
}
