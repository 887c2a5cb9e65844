//! Scripted policies: the greedy planner agent, its noisy variant and a
//! fixed-text policy for tests.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::candidates::{sort_actions, Closures};
use crate::domain::{Action, ObjectId, Objects};
use crate::engine::Observation;
use crate::error::PolicyError;
use crate::protocol;

/// Something that proposes raw action texts for the player to move.
pub trait Policy: Send {
    /// Up to `n_samples` raw outputs in preference order.
    fn propose(&mut self, obs: &Observation, n_samples: usize) -> Result<Vec<String>, PolicyError>;

    fn name(&self) -> String;
}

/// One step of the online greedy agent.
///
/// Priority: answer the partner's pending ask, then place deduced objects,
/// hand over objects bound for the far side, share, ask, guess when no
/// information can arrive, and finally pass.
pub fn planner_agent_step(obs: &Observation) -> Action {
    let cl = Closures::of(obs);
    let v = cl.view(obs);
    let objs = &obs.objects;
    let first = |mut acts: Vec<Action>| {
        sort_actions(objs, &mut acts);
        acts.into_iter().next()
    };
    if let Some(a) = first(v.answering_shares()) {
        return a;
    }
    if let Some(a) = first(v.deduced_placements()) {
        return a;
    }
    if let Some(a) = first(v.handovers()) {
        return a;
    }
    if let Some(a) = first(v.useful_shares()) {
        return a;
    }
    let asks = v.useful_asks();
    if let Some(a) = asks.iter().min_by_key(|a| match a {
        Action::Ask(o) => (asked_count(obs, *o), o.0),
        _ => (usize::MAX, u8::MAX),
    }) {
        return *a;
    }
    if v.guess_gate_open() {
        if let Some(a) = v.first_guess() {
            return a;
        }
    }
    Action::Pass
}

fn asked_count(obs: &Observation, o: ObjectId) -> usize {
    obs.history
        .iter()
        .filter(|r| r.actor == obs.player && r.action == Some(Action::Ask(o)))
        .count()
}

/// The scripted guess on its own: first uncertain reachable object, first
/// candidate bin in reach, else hand it over.
pub fn guessing_policy(obs: &Observation) -> Option<Action> {
    let cl = Closures::of(obs);
    cl.view(obs).first_guess()
}

fn envelope(objects: &Objects, a: &Action) -> String {
    protocol::format_output(objects, a, None)
}

#[derive(Clone, Debug, Default)]
pub struct GreedyAgent;

impl Policy for GreedyAgent {
    fn propose(&mut self, obs: &Observation, _n: usize) -> Result<Vec<String>, PolicyError> {
        Ok(vec![envelope(&obs.objects, &planner_agent_step(obs))])
    }

    fn name(&self) -> String {
        "greedy".into()
    }
}

/// The greedy agent where every sample is, with probability `noise`, replaced
/// by a uniformly random affordance-legal action.
#[derive(Clone, Debug)]
pub struct NoisyAgent {
    pub noise: f64,
    rng: ChaCha8Rng,
}

impl NoisyAgent {
    pub fn new(noise: f64, seed: u64) -> NoisyAgent {
        NoisyAgent {
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for NoisyAgent {
    fn propose(&mut self, obs: &Observation, n: usize) -> Result<Vec<String>, PolicyError> {
        let greedy = planner_agent_step(obs);
        let legal = obs.legal_actions();
        Ok((0..n.max(1))
            .map(|_| {
                let a = if self.rng.random_bool(self.noise) {
                    *legal.choose(&mut self.rng).unwrap_or(&Action::Pass)
                } else {
                    greedy
                };
                envelope(&obs.objects, &a)
            })
            .collect())
    }

    fn name(&self) -> String {
        format!("noisy({})", self.noise)
    }
}

/// Always returns the same text.
#[derive(Clone, Debug)]
pub struct FixedPolicy(pub String);

impl Policy for FixedPolicy {
    fn propose(&mut self, _obs: &Observation, n: usize) -> Result<Vec<String>, PolicyError> {
        Ok(vec![self.0.clone(); n.max(1)])
    }

    fn name(&self) -> String {
        format!("fixed({})", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{BinId, PlayerId};
    use crate::engine::{ActionSpaceConfig, GameState, GameStatus};
    use crate::puzzle::PuzzleInstance;
    use std::sync::Arc;
    use ActionSpaceConfig as C;
    use BinId::*;

    fn game(cfg: ActionSpaceConfig) -> GameState {
        GameState::new(Arc::new(PuzzleInstance::fixture_p0()), [cfg; 2], 30)
    }

    #[test]
    fn greedy_p0_examples() {
        let mut g = game(C::ProvideAndSeek);
        let a = planner_agent_step(&g.observation(PlayerId::P1));
        assert_eq!(
            a,
            Action::Move {
                object: ObjectId(0),
                from: AreaP1,
                to: BottomLeft
            }
        );
        g.apply(a).unwrap();
        // p2 has a productive handover; it takes it before sharing.
        let a = planner_agent_step(&g.observation(PlayerId::P2));
        assert_eq!(
            a,
            Action::Move {
                object: ObjectId(1),
                from: AreaP2,
                to: Common
            }
        );
    }

    #[test]
    fn greedy_solves_p0_in_every_config() {
        for c1 in C::ALL {
            for c2 in C::ALL {
                let mut g = GameState::new(Arc::new(PuzzleInstance::fixture_p0()), [c1, c2], 30);
                while g.status == GameStatus::Running {
                    let a = planner_agent_step(&g.observation(g.turn));
                    g.apply(a).unwrap();
                }
                assert_eq!(g.status, GameStatus::Solved, "{c1} / {c2}");
            }
        }
    }

    #[test]
    fn none_config_with_nothing_left_passes() {
        let mut g = game(C::None);
        g.apply(Action::Move {
            object: ObjectId(0),
            from: AreaP1,
            to: BottomLeft,
        })
        .unwrap();
        // p2: B in area_p2 is pinned to bottom_right, so it hands over.
        g.apply(Action::Move {
            object: ObjectId(1),
            from: AreaP2,
            to: Common,
        })
        .unwrap();
        g.apply(Action::Pass).unwrap();
        // p2 now owns nothing movable.
        assert_eq!(
            planner_agent_step(&g.observation(PlayerId::P2)),
            Action::Pass
        );
    }

    #[test]
    fn noisy_agent_is_seeded() {
        let g = game(C::ProvideAndSeek);
        let obs = g.observation(PlayerId::P1);
        let a = NoisyAgent::new(0.5, 9).propose(&obs, 4).unwrap();
        let b = NoisyAgent::new(0.5, 9).propose(&obs, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 4);
        let clean = NoisyAgent::new(0.0, 1).propose(&obs, 2).unwrap();
        assert_eq!(clean[0], "<ACTION>move(A, area_p1, bottom_left)</ACTION>");
    }
}
