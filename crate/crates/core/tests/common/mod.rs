//! Brute-force oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashMap;
use std::sync::Arc;

use einstein_core::domain::{relation_between, BinSet};
use einstein_core::engine::{replay_record, Outcome};
use einstein_core::harness::EpisodeRecord;
use einstein_core::knowledge::Provenance;
use einstein_core::verifier::TurnContext;
use einstein_core::{
    Action, ActionSpaceConfig, BinId, Constraint, GameState, GameStatus, KnowledgeGraph, ObjectId,
    PuzzleInstance, Relation, TurnRecord,
};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Every assignment of `n` objects to destination bins, object 0 in the low bits.
pub fn assignments(n: usize) -> impl Iterator<Item = Vec<BinId>> {
    (0..4usize.pow(n as u32)).map(move |code| {
        (0..n)
            .map(|o| BinId::DESTINATIONS[(code >> (2 * o)) & 3])
            .collect()
    })
}

/// Assignments satisfying every constraint.
pub fn satisfying(n: usize, constraints: &[Constraint]) -> Vec<Vec<BinId>> {
    assignments(n)
        .filter(|a| constraints.iter().all(|c| c.holds_in(a)))
        .collect()
}

fn provides(c: ActionSpaceConfig) -> bool {
    matches!(
        c,
        ActionSpaceConfig::ProvideAndSeek | ActionSpaceConfig::ProvideOnly
    )
}

fn seeks(c: ActionSpaceConfig) -> bool {
    matches!(
        c,
        ActionSpaceConfig::ProvideAndSeek | ActionSpaceConfig::SeekOnly
    )
}

fn answers(c: ActionSpaceConfig) -> bool {
    c != ActionSpaceConfig::None
}

pub struct Oracle {
    puzzle: Arc<PuzzleInstance>,
    configs: [ActionSpaceConfig; 2],
    assignments: Vec<Vec<BinId>>,
    failed: HashMap<String, u32>,
}

/// What the board and the log say, independent of who is looking.
struct Public {
    shared: Vec<Constraint>,
    accepted: Vec<(ObjectId, BinId)>,
    rejected: Vec<(ObjectId, BinId)>,
}

impl Oracle {
    pub fn new(puzzle: Arc<PuzzleInstance>, configs: [ActionSpaceConfig; 2]) -> Oracle {
        let n = puzzle.n_objects();
        let assignments = assignments(n).collect();
        Oracle {
            puzzle,
            configs,
            assignments,
            failed: HashMap::new(),
        }
    }

    fn public(g: &GameState) -> Public {
        let mut p = Public {
            shared: Vec::new(),
            accepted: Vec::new(),
            rejected: Vec::new(),
        };
        for r in &g.history {
            match (r.action, &r.outcome) {
                (Some(Action::Share(c)), Outcome::Accepted) => p.shared.push(c),
                (Some(Action::Move { object, to, .. }), Outcome::Accepted)
                    if to.is_destination() =>
                {
                    p.accepted.push((object, to))
                }
                (Some(Action::Move { object, to, .. }), Outcome::RejectedPlacement) => {
                    p.rejected.push((object, to))
                }
                _ => {}
            }
        }
        p
    }

    /// Per-object candidate bins given extra private constraints.
    fn candidates(&self, public: &Public, private: &[Constraint]) -> Vec<BinSet> {
        let n = self.puzzle.n_objects();
        let mut out = vec![BinSet::EMPTY; n];
        for a in &self.assignments {
            let ok = public.shared.iter().chain(private).all(|c| c.holds_in(a))
                && public.accepted.iter().all(|&(o, b)| a[o.index()] == b)
                && public.rejected.iter().all(|&(o, b)| a[o.index()] != b);
            if ok {
                for o in 0..n {
                    out[o].insert(a[o]);
                }
            }
        }
        out
    }

    fn entailed_publicly(&self, public: &Public, c: &Constraint) -> bool {
        self.assignments.iter().all(|a| {
            let ok = public.shared.iter().all(|s| s.holds_in(a))
                && public.accepted.iter().all(|&(o, b)| a[o.index()] == b)
                && public.rejected.iter().all(|&(o, b)| a[o.index()] != b);
            !ok || c.holds_in(a)
        })
    }

    fn moves(&self, g: &GameState) -> Vec<Action> {
        let actor = g.turn;
        let me = self.configs[actor.index()];
        let partner = self.configs[actor.other().index()];
        let public = Self::public(g);
        let own = self.puzzle.holdings(actor);
        let cands = self.candidates(&public, &own);
        let n = self.puzzle.n_objects();
        let near: Vec<BinId> = BinId::DESTINATIONS
            .into_iter()
            .filter(|&b| actor.reaches(b))
            .collect();
        let mut out = Vec::new();
        let mut productive = 0;
        for o in 0..n {
            let id = ObjectId(o as u8);
            let from = g.placements[o];
            if from.is_destination() || !actor.reaches(from) {
                continue;
            }
            if let Some(goal) = cands[o].only() {
                if actor.reaches(goal) {
                    out.push(Action::Move {
                        object: id,
                        from,
                        to: goal,
                    });
                    productive += 1;
                }
            }
            if from == actor.area()
                && !cands[o].is_empty()
                && cands[o].iter().all(|b| !near.contains(&b))
            {
                out.push(Action::Move {
                    object: id,
                    from,
                    to: BinId::Common,
                });
                productive += 1;
            }
        }
        let asked = match g.pending_ask {
            Some((who, o)) if who != actor => Some(o),
            _ => None,
        };
        for c in &own {
            let allowed = provides(me) || answers(me) && asked.is_some_and(|o| c.involves(o));
            if allowed && !self.entailed_publicly(&public, c) {
                out.push(Action::Share(*c));
            }
        }
        if seeks(me) && answers(partner) {
            for o in 0..n {
                let mine = g.pending_ask == Some((actor, ObjectId(o as u8)));
                if !g.placements[o].is_destination() && cands[o].len() > 1 && !mine {
                    out.push(Action::Ask(ObjectId(o as u8)));
                }
            }
        }
        let info_can_arrive = provides(partner) || seeks(me) && answers(partner);
        if productive == 0 && !info_can_arrive {
            for o in 0..n {
                let id = ObjectId(o as u8);
                let from = g.placements[o];
                if from.is_destination() || !actor.reaches(from) || cands[o].len() <= 1 {
                    continue;
                }
                let goal = self.puzzle.goal_of(id);
                if actor.reaches(goal) {
                    out.push(Action::Move {
                        object: id,
                        from,
                        to: goal,
                    });
                } else if from != BinId::Common {
                    out.push(Action::Move {
                        object: id,
                        from,
                        to: BinId::Common,
                    });
                }
            }
        }
        let last_pass = g
            .history
            .last()
            .is_some_and(|r| r.action == Some(Action::Pass));
        if !last_pass {
            out.push(Action::Pass);
        }
        out
    }

    fn key(g: &GameState) -> String {
        let public = Self::public(g);
        let mut shared: Vec<String> = public.shared.iter().map(|c| format!("{c:?}")).collect();
        shared.sort();
        shared.dedup();
        let mut rejected: Vec<String> = public.rejected.iter().map(|r| format!("{r:?}")).collect();
        rejected.sort();
        rejected.dedup();
        let last_pass = g
            .history
            .last()
            .is_some_and(|r| r.action == Some(Action::Pass));
        format!(
            "{:?}|{rejected:?}|{shared:?}|{:?}|{:?}|{last_pass}",
            g.placements, g.pending_ask, g.turn
        )
    }

    fn dfs(&mut self, g: &GameState, remaining: u32) -> bool {
        if g.status == GameStatus::Solved {
            return true;
        }
        if remaining == 0 {
            return false;
        }
        let key = Self::key(g);
        if self.failed.get(&key).is_some_and(|&r| r >= remaining) {
            return false;
        }
        for a in self.moves(g) {
            let mut next = g.clone();
            next.apply(a).expect("oracle proposes legal actions");
            if self.dfs(&next, remaining - 1) {
                return true;
            }
        }
        self.failed.insert(key, remaining);
        false
    }

    pub fn optimal_length(&mut self, max: u32) -> Option<u32> {
        let g = GameState::new(self.puzzle.clone(), self.configs, u32::MAX);
        (0..=max).find(|&d| self.dfs(&g, d))
    }
}

pub const RELS: [Relation; 4] = [
    Relation::SameBin,
    Relation::SameRow,
    Relation::SameCol,
    Relation::SameDiag,
];

/// A random knowledge state: constraints plus negative bins per object.
#[derive(Debug)]
pub struct State {
    pub n: usize,
    pub constraints: Vec<Constraint>,
    pub negatives: Vec<Vec<BinId>>,
}

pub fn random_state(rng: &mut ChaCha8Rng) -> State {
    let n = rng.random_range(2..=6);
    // Most states are drawn around a hidden assignment so they stay consistent.
    let truth: Option<Vec<BinId>> = rng.random_bool(0.7).then(|| {
        (0..n)
            .map(|_| *BinId::DESTINATIONS.choose(rng).unwrap())
            .collect()
    });
    let mut constraints = Vec::new();
    for _ in 0..rng.random_range(0..=n + 2) {
        let a = rng.random_range(0..n);
        let mut b = rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let rel = match &truth {
            Some(t) => relation_between(t[a], t[b]).unwrap(),
            None => *RELS.choose(rng).unwrap(),
        };
        constraints.push(Constraint::pair(ObjectId(a as u8), ObjectId(b as u8), rel).unwrap());
    }
    for _ in 0..rng.random_range(0..=2) {
        let o = rng.random_range(0..n);
        let bin = match &truth {
            Some(t) => t[o],
            None => *BinId::DESTINATIONS.choose(rng).unwrap(),
        };
        constraints.push(Constraint::in_bin(ObjectId(o as u8), bin).unwrap());
    }
    let mut negatives = vec![Vec::new(); n];
    for _ in 0..rng.random_range(0..=2 * n) {
        let o = rng.random_range(0..n);
        let bin = *BinId::DESTINATIONS.choose(rng).unwrap();
        if truth.as_ref().is_some_and(|t| t[o] == bin) {
            continue;
        }
        negatives[o].push(bin);
    }
    State {
        n,
        constraints,
        negatives,
    }
}

pub fn graph(s: &State) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new(s.n);
    for c in &s.constraints {
        kg.add_constraint(c, Provenance::Communicated);
    }
    for (o, negs) in s.negatives.iter().enumerate() {
        for &b in negs {
            kg.add_negative(ObjectId(o as u8), b);
        }
    }
    kg
}

/// Every assignment of objects to destination bins that satisfies the state.
/// Every assignment of objects to destination bins that satisfies the state.
pub fn state_satisfying(s: &State) -> Vec<Vec<BinId>> {
    let mut out = Vec::new();
    for code in 0..4usize.pow(s.n as u32) {
        let a: Vec<BinId> = (0..s.n)
            .map(|o| BinId::DESTINATIONS[(code >> (2 * o)) & 3])
            .collect();
        let ok = s.constraints.iter().all(|c| c.holds_in(&a))
            && (0..s.n).all(|o| !s.negatives[o].contains(&a[o]));
        if ok {
            out.push(a);
        }
    }
    out
}

pub fn projection(sat: &[Vec<BinId>], o: usize) -> BinSet {
    let mut set = BinSet::EMPTY;
    for a in sat {
        set.insert(a[o]);
    }
    set
}

pub fn random_constraint(rng: &mut ChaCha8Rng, n: usize) -> Constraint {
    let a = rng.random_range(0..n);
    if rng.random_bool(0.3) {
        return Constraint::in_bin(ObjectId(a as u8), *BinId::DESTINATIONS.choose(rng).unwrap())
            .unwrap();
    }
    let mut b = rng.random_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    Constraint::pair(
        ObjectId(a as u8),
        ObjectId(b as u8),
        *RELS.choose(rng).unwrap(),
    )
    .unwrap()
}

/// Whether some accepted move was speculative, a blind placement or a
/// hand-over of an object whose side is unknown, taken while the guess gate
/// was closed. The planner never plays such moves.
pub fn speculated(r: &EpisodeRecord) -> Result<bool, String> {
    let puzzle = Arc::new(PuzzleInstance::try_from(r.puzzle.clone()).map_err(|e| e.to_string())?);
    let mut g = GameState::new(puzzle.clone(), r.configs, r.step_limit);
    let mut found = false;
    for w in &r.turns {
        let rec = TurnRecord::from_wire(w, &puzzle.objects).map_err(|e| e.to_string())?;
        if let (Some(a @ Action::Move { .. }), Outcome::Accepted) = (rec.action, &rec.outcome) {
            let ctx = TurnContext::new(&g);
            let v = ctx.view();
            found |= !v.is_productive(&a) && !v.guess_gate_open();
        }
        replay_record(&mut g, &rec)?;
    }
    Ok(found)
}
