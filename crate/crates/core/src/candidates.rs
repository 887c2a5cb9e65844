//! Knowledge-grounded action candidates for one player.
//!
//! The planner, the greedy agent and the reasoning verifier all judge
//! actions with these rules, so a planner trajectory is by construction
//! something the verifiers accept.

use crate::domain::{Action, BinId, Constraint, ObjectId, Objects, PlayerId};
use crate::engine::{ActionSpaceConfig, Observation};
use crate::knowledge::ClosureResult;

/// Everything one player can base a decision on.
#[derive(Clone, Copy, Debug)]
pub struct View<'a> {
    pub player: PlayerId,
    pub config: ActionSpaceConfig,
    pub partner_config: ActionSpaceConfig,
    pub placements: &'a [BinId],
    pub own: &'a [Constraint],
    /// Closure of the player's own knowledge.
    pub knowledge: &'a ClosureResult,
    /// Closure of what has been communicated plus board events.
    pub public: &'a ClosureResult,
    pub pending_ask: Option<(PlayerId, ObjectId)>,
}

/// How guess moves are generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GuessMode {
    /// Never guess.
    Off,
    /// Guess only the true goal (or hand over when it is across the table).
    Lucky,
    /// Every candidate bin in reach, plus handing an uncertain object over.
    Full,
}

/// Owned closures for building a [`View`] from an observation.
#[derive(Clone, Debug)]
pub struct Closures {
    pub knowledge: ClosureResult,
    pub public: ClosureResult,
}

impl Closures {
    pub fn of(obs: &Observation) -> Closures {
        Closures {
            knowledge: obs.knowledge().expand(),
            public: obs.public_knowledge().expand(),
        }
    }

    pub fn view<'a>(&'a self, obs: &'a Observation) -> View<'a> {
        View {
            player: obs.player,
            config: obs.config,
            partner_config: obs.partner_config,
            placements: &obs.placements,
            own: &obs.own_constraints,
            knowledge: &self.knowledge,
            public: &self.public,
            pending_ask: obs.pending_ask,
        }
    }
}

/// Whether new facts can still reach `config`'s player from its partner.
pub fn info_can_flow(config: ActionSpaceConfig, partner: ActionSpaceConfig) -> bool {
    partner.can_provide() || config.can_seek() && partner.can_share()
}

impl<'a> View<'a> {
    fn ids(&self) -> impl Iterator<Item = ObjectId> {
        (0..self.placements.len() as u8).map(ObjectId)
    }

    fn location(&self, o: ObjectId) -> BinId {
        self.placements[o.index()]
    }

    fn movable(&self, o: ObjectId) -> bool {
        let at = self.location(o);
        !at.is_destination() && self.player.reaches(at)
    }

    pub fn partner_ask(&self) -> Option<ObjectId> {
        match self.pending_ask {
            Some((asker, o)) if asker != self.player => Some(o),
            _ => None,
        }
    }

    pub fn own_ask(&self) -> Option<ObjectId> {
        match self.pending_ask {
            Some((asker, o)) if asker == self.player => Some(o),
            _ => None,
        }
    }

    /// Reachable unplaced objects whose goal is known and within reach.
    pub fn deduced_placements(&self) -> Vec<Action> {
        self.ids()
            .filter(|&o| self.movable(o))
            .filter_map(|o| {
                let goal = self.knowledge.candidates(o).only()?;
                self.player.reaches(goal).then_some(Action::Move {
                    object: o,
                    from: self.location(o),
                    to: goal,
                })
            })
            .collect()
    }

    /// Objects in the player's own area that can only belong across the table.
    pub fn handovers(&self) -> Vec<Action> {
        let area = self.player.area();
        self.ids()
            .filter(|&o| self.location(o) == area)
            .filter(|&o| {
                let c = self.knowledge.candidates(o);
                !c.is_empty() && c.intersection(self.player.near_bins()).is_empty()
            })
            .map(|o| Action::Move {
                object: o,
                from: area,
                to: BinId::Common,
            })
            .collect()
    }

    /// Deduced placements followed by handovers.
    pub fn productive(&self) -> Vec<Action> {
        let mut out = self.deduced_placements();
        out.extend(self.handovers());
        out
    }

    pub fn is_productive(&self, action: &Action) -> bool {
        self.productive().contains(action)
    }

    /// Whether the configuration lets the player share `c` right now.
    pub fn share_permitted(&self, c: &Constraint) -> bool {
        self.config.can_provide()
            || self.config.can_share() && self.partner_ask().is_some_and(|o| c.involves(o))
    }

    /// Own constraints the player may share that public knowledge does not entail.
    pub fn useful_shares(&self) -> Vec<Action> {
        let mut cs: Vec<Constraint> = self
            .own
            .iter()
            .copied()
            .filter(|c| self.share_permitted(c) && !self.public.entails(c))
            .collect();
        cs.sort();
        cs.dedup();
        cs.into_iter().map(Action::Share).collect()
    }

    /// Useful shares that answer the partner's pending ask.
    pub fn answering_shares(&self) -> Vec<Action> {
        match self.partner_ask() {
            Some(o) => self
                .useful_shares()
                .into_iter()
                .filter(|a| matches!(a, Action::Share(c) if c.involves(o)))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Asks about unplaced objects with an unknown goal, when the partner can answer.
    pub fn useful_asks(&self) -> Vec<Action> {
        if !self.config.can_seek() || !self.partner_config.can_share() {
            return Vec::new();
        }
        self.ids()
            .filter(|&o| !self.location(o).is_destination())
            .filter(|&o| self.knowledge.candidates(o).len() > 1)
            .filter(|&o| self.own_ask() != Some(o))
            .map(Action::Ask)
            .collect()
    }

    /// Guessing is a last resort: nothing productive and no information can arrive.
    pub fn guess_gate_open(&self) -> bool {
        self.productive().is_empty() && !info_can_flow(self.config, self.partner_config)
    }

    fn uncertain_movable(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.ids()
            .filter(|&o| self.movable(o) && self.knowledge.candidates(o).len() > 1)
    }

    /// Guess moves under `mode`, ignoring the gate. `goal` gives the ground
    /// truth for lucky guesses.
    pub fn guesses(&self, mode: GuessMode, goal: &dyn Fn(ObjectId) -> BinId) -> Vec<Action> {
        let mut out = Vec::new();
        if mode == GuessMode::Off {
            return out;
        }
        let near = self.player.near_bins();
        for o in self.uncertain_movable() {
            let from = self.location(o);
            let cands = self.knowledge.candidates(o);
            let handover = Action::Move {
                object: o,
                from,
                to: BinId::Common,
            };
            match mode {
                GuessMode::Lucky => {
                    let g = goal(o);
                    if self.player.reaches(g) {
                        out.push(Action::Move {
                            object: o,
                            from,
                            to: g,
                        });
                    } else if from != BinId::Common {
                        out.push(handover);
                    }
                }
                GuessMode::Full => {
                    for b in cands.intersection(near).iter() {
                        out.push(Action::Move {
                            object: o,
                            from,
                            to: b,
                        });
                    }
                    if from != BinId::Common && !cands.difference(near).is_empty() {
                        out.push(handover);
                    }
                }
                GuessMode::Off => {}
            }
        }
        out
    }

    /// The scripted guess: first uncertain object, first candidate bin in reach,
    /// else hand it over.
    pub fn first_guess(&self) -> Option<Action> {
        let near = self.player.near_bins();
        for o in self.uncertain_movable() {
            let from = self.location(o);
            if let Some(b) = self
                .knowledge
                .candidates(o)
                .intersection(near)
                .iter()
                .next()
            {
                return Some(Action::Move {
                    object: o,
                    from,
                    to: b,
                });
            }
            if from != BinId::Common {
                return Some(Action::Move {
                    object: o,
                    from,
                    to: BinId::Common,
                });
            }
        }
        None
    }

    /// A destination move of an object whose goal the player does not know.
    pub fn is_blind_guess(&self, action: &Action) -> bool {
        matches!(*action, Action::Move { object, to, .. }
            if to.is_destination() && self.knowledge.candidates(object).len() > 1)
    }
}

/// Sort key: action kind priority, then canonical text.
pub fn order_key(objects: &Objects, a: &Action) -> (u8, String) {
    (a.priority(), objects.action_text(a))
}

pub fn sort_actions(objects: &Objects, actions: &mut Vec<Action>) {
    actions.sort_by_cached_key(|a| order_key(objects, a));
    actions.dedup();
}
