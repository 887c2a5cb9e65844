//! Per-player knowledge: a labeled graph over objects and the four
//! destination bins, expanded to a fixpoint by relation composition.
//!
//! Nodes `0..n` are objects, nodes `n..n+4` are the bins TL, TR, BL, BR.
//! Bin-bin edges come from geometry and are never removed. Rejected
//! placements are kept as per-object negative sets beside the graph.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{BinId, BinSet, Constraint, ObjectId, Objects, PlayerId, Relation};
use crate::error::InferenceError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Geometry,
    Own,
    Communicated,
    Observed,
}

/// Something a player learns during play.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KnowledgeEvent {
    ConstraintShared(Constraint),
    MoveAccepted { object: ObjectId, to: BinId },
    MoveRejected { object: ObjectId, to: BinId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnowledgeGraph {
    n_objects: usize,
    edges: Vec<Option<(Relation, Provenance)>>,
    negatives: Vec<BinSet>,
    consistent: bool,
}

impl KnowledgeGraph {
    /// Geometry only: no object edges, no negatives.
    pub fn new(n_objects: usize) -> KnowledgeGraph {
        let nodes = n_objects + 4;
        let mut kg = KnowledgeGraph {
            n_objects,
            edges: vec![None; nodes * nodes],
            negatives: vec![BinSet::EMPTY; n_objects],
            consistent: true,
        };
        for x in BinId::DESTINATIONS {
            for y in BinId::DESTINATIONS {
                if x != y {
                    let r = crate::domain::relation_between(x, y).unwrap();
                    let (i, j) = (kg.bin_node(x), kg.bin_node(y));
                    kg.edges[i * nodes + j] = Some((r, Provenance::Geometry));
                }
            }
        }
        kg
    }

    /// Seeded with a player's own constraints. `_player` is kept for symmetry
    /// with observation-driven construction; reach does not affect knowledge.
    pub fn init(n_objects: usize, own: &[Constraint], _player: PlayerId) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::new(n_objects);
        for c in own {
            kg.add_constraint(c, Provenance::Own);
        }
        kg
    }

    pub fn n_objects(&self) -> usize {
        self.n_objects
    }

    pub fn is_consistent(&self) -> bool {
        self.consistent
    }

    pub fn negatives(&self, o: ObjectId) -> BinSet {
        self.negatives[o.index()]
    }

    fn nodes(&self) -> usize {
        self.n_objects + 4
    }

    fn bin_node(&self, b: BinId) -> usize {
        self.n_objects + b.dest_code().expect("destination bin") as usize
    }

    pub fn edge(&self, x: usize, y: usize) -> Option<(Relation, Provenance)> {
        self.edges[x * self.nodes() + y]
    }

    fn set_edge(&mut self, x: usize, y: usize, rel: Relation, prov: Provenance) {
        if x == y {
            if rel != Relation::SameBin {
                self.consistent = false;
            }
            return;
        }
        let n = self.nodes();
        match self.edges[x * n + y] {
            Some((r, _)) if r != rel => self.consistent = false,
            Some(_) => {}
            None => {
                self.edges[x * n + y] = Some((rel, prov));
                self.edges[y * n + x] = Some((rel, prov));
            }
        }
    }

    /// Adds a positive edge; a conflicting relation marks the graph inconsistent.
    pub fn add_constraint(&mut self, c: &Constraint, prov: Provenance) {
        match *c {
            Constraint::Pair { a, b, rel } => self.set_edge(a.index(), b.index(), rel, prov),
            Constraint::InBin { object, bin } => {
                let bn = self.bin_node(bin);
                self.set_edge(object.index(), bn, Relation::SameBin, prov)
            }
        }
    }

    pub fn assimilate(&mut self, event: &KnowledgeEvent) {
        match *event {
            KnowledgeEvent::ConstraintShared(c) => {
                self.add_constraint(&c, Provenance::Communicated)
            }
            KnowledgeEvent::MoveAccepted { object, to } if to.is_destination() => {
                let bn = self.bin_node(to);
                self.set_edge(object.index(), bn, Relation::SameBin, Provenance::Observed);
            }
            KnowledgeEvent::MoveAccepted { .. } => {}
            KnowledgeEvent::MoveRejected { object, to } => {
                self.negatives[object.index()].insert(to);
            }
        }
    }

    pub fn add_negative(&mut self, o: ObjectId, bin: BinId) {
        self.negatives[o.index()].insert(bin);
    }

    /// Fixpoint of one-step composition, then candidate bins per object.
    pub fn expand(&self) -> ClosureResult {
        let n = self.nodes();
        let mut rel: Vec<Option<Relation>> = self.edges.iter().map(|e| e.map(|(r, _)| r)).collect();
        let mut consistent = self.consistent;
        loop {
            let mut changed = false;
            for y in 0..n {
                for x in 0..n {
                    let Some(r1) = rel[x * n + y] else { continue };
                    for z in 0..n {
                        let Some(r2) = rel[y * n + z] else { continue };
                        let r = r1.compose(r2);
                        if x == z {
                            if r != Relation::SameBin {
                                consistent = false;
                            }
                            continue;
                        }
                        match rel[x * n + z] {
                            None => {
                                rel[x * n + z] = Some(r);
                                rel[z * n + x] = Some(r);
                                changed = true;
                            }
                            Some(existing) if existing != r => consistent = false,
                            Some(_) => {}
                        }
                    }
                }
            }
            if !changed {
                break;
            }
        }

        let no = self.n_objects;
        let mut candidates = vec![BinSet::EMPTY; no];
        if consistent {
            for (o, c) in candidates.iter_mut().enumerate() {
                *c = self.candidates_for(o, &rel);
                consistent &= !c.is_empty();
            }
        }
        if !consistent {
            candidates.iter_mut().for_each(|c| *c = BinSet::EMPTY);
        }
        ClosureResult {
            n_objects: no,
            relations: rel,
            consistent,
            candidates,
        }
    }

    fn candidates_for(&self, o: usize, rel: &[Option<Relation>]) -> BinSet {
        let n = self.nodes();
        // Anchored: any edge to a bin fixes the position.
        for b in BinId::DESTINATIONS {
            if let Some(r) = rel[o * n + self.bin_node(b)] {
                let pos = r.apply(b);
                return if self.negatives[o].contains(pos) {
                    BinSet::EMPTY
                } else {
                    BinSet::single(pos)
                };
            }
        }
        // Unanchored: the component moves rigidly; try every position of `o`
        // and keep those no member's negatives rule out.
        let mut out = BinSet::EMPTY;
        'pos: for p in BinId::DESTINATIONS {
            for m in 0..self.n_objects {
                let r = if m == o {
                    Relation::SameBin
                } else {
                    match rel[o * n + m] {
                        Some(r) => r,
                        None => continue,
                    }
                };
                if self.negatives[m].contains(r.apply(p)) {
                    continue 'pos;
                }
            }
            out.insert(p);
        }
        out
    }

    /// The single candidate bin, if the closure pins one.
    pub fn goal_of(&self, o: ObjectId) -> Result<Option<BinId>, InferenceError> {
        self.expand().goal_of(o)
    }

    pub fn entails(&self, c: &Constraint) -> bool {
        self.expand().entails(c)
    }

    /// Builds a player's knowledge from its own constraints and the public log.
    pub fn from_events<'a>(
        n_objects: usize,
        own: &[Constraint],
        player: PlayerId,
        events: impl IntoIterator<Item = &'a KnowledgeEvent>,
    ) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::init(n_objects, own, player);
        for e in events {
            kg.assimilate(e);
        }
        kg
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClosureResult {
    n_objects: usize,
    relations: Vec<Option<Relation>>,
    pub consistent: bool,
    pub candidates: Vec<BinSet>,
}

impl ClosureResult {
    fn nodes(&self) -> usize {
        self.n_objects + 4
    }

    pub fn relation(&self, x: usize, y: usize) -> Option<Relation> {
        self.relations[x * self.nodes() + y]
    }

    pub fn object_relation(&self, a: ObjectId, b: ObjectId) -> Option<Relation> {
        if a == b {
            return Some(Relation::SameBin);
        }
        self.relation(a.index(), b.index())
    }

    pub fn candidates(&self, o: ObjectId) -> BinSet {
        self.candidates[o.index()]
    }

    pub fn goal_of(&self, o: ObjectId) -> Result<Option<BinId>, InferenceError> {
        if !self.consistent {
            return Err(InferenceError::InconsistentKnowledge);
        }
        Ok(self.candidates(o).only())
    }

    pub fn is_known(&self, o: ObjectId) -> bool {
        self.candidates(o).len() == 1
    }

    /// True iff `c` holds in every configuration compatible with the knowledge
    /// (vacuously true when inconsistent).
    pub fn entails(&self, c: &Constraint) -> bool {
        if !self.consistent {
            return true;
        }
        match *c {
            Constraint::InBin { object, bin } => self.candidates(object).only() == Some(bin),
            Constraint::Pair { a, b, rel } => {
                if let Some(r) = self.object_relation(a, b) {
                    return r == rel;
                }
                // Different components vary independently, so the relation is
                // fixed only when both positions are.
                match (self.candidates(a).only(), self.candidates(b).only()) {
                    (Some(x), Some(y)) => crate::domain::relation_between(x, y).ok() == Some(rel),
                    _ => false,
                }
            }
        }
    }

    /// Closed object edges and candidate sets as canonical text, for golden files.
    pub fn dump(&self, objects: &Objects) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "consistent: {}", self.consistent);
        let no = self.n_objects;
        for i in 0..no {
            for j in i + 1..no {
                if let Some(r) = self.relation(i, j) {
                    let c = Constraint::pair(ObjectId(i as u8), ObjectId(j as u8), r).unwrap();
                    let _ = writeln!(out, "{}", objects.constraint_text(&c));
                }
            }
            for b in BinId::DESTINATIONS {
                if self.relation(i, no + b.dest_code().unwrap() as usize) == Some(Relation::SameBin)
                {
                    let c = Constraint::in_bin(ObjectId(i as u8), b).unwrap();
                    let _ = writeln!(out, "{}", objects.constraint_text(&c));
                }
            }
        }
        for o in objects.ids() {
            let _ = writeln!(
                out,
                "candidates({}) = {}",
                objects.name(o),
                self.candidates(o)
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::puzzle::PuzzleInstance;
    use BinId::*;

    fn pair(a: u8, b: u8, r: Relation) -> Constraint {
        Constraint::pair(ObjectId(a), ObjectId(b), r).unwrap()
    }

    fn set(bins: &[BinId]) -> BinSet {
        bins.iter()
            .fold(BinSet::EMPTY, |s, b| s.union(BinSet::single(*b)))
    }

    #[test]
    fn init_p0() {
        let p = PuzzleInstance::fixture_p0();
        let kg2 = KnowledgeGraph::init(2, &p.holdings(PlayerId::P2), PlayerId::P2);
        let c = kg2.expand();
        assert_eq!(c.candidates(ObjectId(0)), BinSet::ALL);
        assert_eq!(c.candidates(ObjectId(1)), BinSet::ALL);
        let kg1 = KnowledgeGraph::init(2, &p.holdings(PlayerId::P1), PlayerId::P1);
        assert_eq!(kg1.goal_of(ObjectId(0)).unwrap(), Some(BottomLeft));
        assert_eq!(kg1.goal_of(ObjectId(1)).unwrap(), None);
        let empty = KnowledgeGraph::init(3, &[], PlayerId::P1).expand();
        assert!(empty.candidates.iter().all(|c| *c == BinSet::ALL));
    }

    #[test]
    fn assimilate_examples() {
        let p = PuzzleInstance::fixture_p0();
        let mut kg = KnowledgeGraph::init(2, &p.holdings(PlayerId::P2), PlayerId::P2);
        kg.assimilate(&KnowledgeEvent::MoveAccepted {
            object: ObjectId(0),
            to: BottomLeft,
        });
        assert_eq!(kg.expand().candidates(ObjectId(1)), set(&[BottomRight]));

        let mut kg = KnowledgeGraph::new(2);
        kg.assimilate(&KnowledgeEvent::MoveRejected {
            object: ObjectId(1),
            to: TopLeft,
        });
        assert_eq!(kg.expand().candidates(ObjectId(1)).len(), 3);

        let mut kg = KnowledgeGraph::init(2, &[pair(0, 1, Relation::SameRow)], PlayerId::P1);
        kg.assimilate(&KnowledgeEvent::ConstraintShared(pair(
            0,
            1,
            Relation::SameCol,
        )));
        assert!(!kg.is_consistent());
        assert!(!kg.expand().consistent);
    }

    #[test]
    fn expand_three_objects() {
        let own = [
            pair(0, 1, Relation::SameRow),
            pair(1, 2, Relation::SameCol),
            Constraint::in_bin(ObjectId(0), TopLeft).unwrap(),
        ];
        let c = KnowledgeGraph::init(3, &own, PlayerId::P1).expand();
        assert!(c.consistent);
        assert_eq!(c.candidates(ObjectId(0)).only(), Some(TopLeft));
        assert_eq!(c.candidates(ObjectId(1)).only(), Some(TopRight));
        assert_eq!(c.candidates(ObjectId(2)).only(), Some(BottomRight));
        assert_eq!(
            c.object_relation(ObjectId(0), ObjectId(2)),
            Some(Relation::SameDiag)
        );
        assert!(c.entails(&pair(0, 2, Relation::SameDiag)));
        assert!(c.entails(&Constraint::in_bin(ObjectId(0), TopLeft).unwrap()));
        assert!(!KnowledgeGraph::new(2).entails(&pair(0, 1, Relation::SameRow)));
    }

    #[test]
    fn negatives_propagate_through_component() {
        let mut kg = KnowledgeGraph::init(2, &[pair(0, 1, Relation::SameRow)], PlayerId::P1);
        kg.add_negative(ObjectId(0), TopLeft);
        kg.add_negative(ObjectId(0), TopRight);
        let c = kg.expand();
        assert_eq!(c.candidates(ObjectId(0)), set(&[BottomLeft, BottomRight]));
        assert_eq!(c.candidates(ObjectId(1)), set(&[BottomLeft, BottomRight]));
    }

    #[test]
    fn three_rejections_pin_the_last_bin() {
        let mut kg = KnowledgeGraph::new(2);
        for b in [TopLeft, TopRight, BottomLeft] {
            kg.add_negative(ObjectId(1), b);
        }
        assert_eq!(kg.goal_of(ObjectId(1)).unwrap(), Some(BottomRight));
    }

    #[test]
    fn inconsistent_goal_of_errors() {
        let mut kg = KnowledgeGraph::new(1);
        kg.add_constraint(
            &Constraint::in_bin(ObjectId(0), TopLeft).unwrap(),
            Provenance::Own,
        );
        kg.add_negative(ObjectId(0), TopLeft);
        assert_eq!(
            kg.goal_of(ObjectId(0)),
            Err(InferenceError::InconsistentKnowledge)
        );
    }

    #[test]
    fn cycle_contradiction_detected() {
        let own = [
            pair(0, 1, Relation::SameRow),
            pair(1, 2, Relation::SameRow),
            pair(0, 2, Relation::SameRow),
        ];
        assert!(
            !KnowledgeGraph::init(3, &own, PlayerId::P1)
                .expand()
                .consistent
        );
    }

    #[test]
    fn expand_is_idempotent() {
        let own = [
            pair(0, 1, Relation::SameRow),
            pair(1, 2, Relation::SameDiag),
        ];
        let c1 = KnowledgeGraph::init(3, &own, PlayerId::P1).expand();
        let mut kg = KnowledgeGraph::new(3);
        for i in 0..3u8 {
            for j in i + 1..3 {
                if let Some(r) = c1.object_relation(ObjectId(i), ObjectId(j)) {
                    kg.add_constraint(&pair(i, j, r), Provenance::Own);
                }
            }
        }
        assert_eq!(kg.expand().relations, c1.relations);
    }

    #[test]
    fn dump_is_canonical() {
        let objs = Objects::letters(2);
        let kg = KnowledgeGraph::init(
            2,
            &[
                pair(0, 1, Relation::SameRow),
                Constraint::in_bin(ObjectId(0), BottomLeft).unwrap(),
            ],
            PlayerId::P1,
        );
        let d = kg.expand().dump(&objs);
        assert_eq!(
            d,
            "consistent: true\nsame_row(A,B)\nin_bin(A,bottom_left)\nin_bin(B,bottom_right)\n\
             candidates(A) = {bottom_left}\ncandidates(B) = {bottom_right}\n"
        );
    }
}
