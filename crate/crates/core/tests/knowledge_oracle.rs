//! The knowledge closure against brute-force enumeration of every assignment.

mod common;

use common::{graph, projection, random_constraint, random_state, state_satisfying};
use einstein_core::domain::relation_between;
use einstein_core::knowledge::{KnowledgeEvent, Provenance};
use einstein_core::{BinId, Constraint, ObjectId};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn closure_matches_enumeration_on_500_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(20240611);
    let mut inconsistent = 0;
    for i in 0..500 {
        let s = random_state(&mut rng);
        let sat = state_satisfying(&s);
        let cl = graph(&s).expand();
        assert_eq!(cl.consistent, !sat.is_empty(), "state {i}: {s:?}");
        if sat.is_empty() {
            inconsistent += 1;
        }
        for o in 0..s.n {
            let id = ObjectId(o as u8);
            let expect = projection(&sat, o);
            assert_eq!(cl.candidates(id), expect, "state {i}, object {o}: {s:?}");
            match cl.goal_of(id) {
                Ok(g) => assert_eq!(g, expect.only(), "state {i}"),
                Err(_) => assert!(sat.is_empty()),
            }
            // Soundness of derived edges.
            for m in 0..s.n {
                if let Some(r) = cl.object_relation(id, ObjectId(m as u8)) {
                    assert!(
                        sat.iter()
                            .all(|a| relation_between(a[o], a[m]).unwrap() == r),
                        "state {i}: derived {o}-{m} {r:?} fails somewhere"
                    );
                }
            }
        }
        if !sat.is_empty() {
            for _ in 0..5 {
                let c = random_constraint(&mut rng, s.n);
                let holds_everywhere = sat.iter().all(|a| c.holds_in(a));
                assert_eq!(cl.entails(&c), holds_everywhere, "state {i}, {c:?}");
            }
        }
    }
    // The sample must exercise both outcomes.
    assert!(
        inconsistent > 20 && inconsistent < 400,
        "{inconsistent} inconsistent states"
    );
}

#[test]
fn expand_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let s = random_state(&mut rng);
        let cl = graph(&s).expand();
        if !cl.consistent {
            continue;
        }
        // Feed every derived object relation back in as a constraint.
        let mut kg = graph(&s);
        for a in 0..s.n {
            for b in a + 1..s.n {
                if let Some(r) = cl.object_relation(ObjectId(a as u8), ObjectId(b as u8)) {
                    kg.add_constraint(
                        &Constraint::pair(ObjectId(a as u8), ObjectId(b as u8), r).unwrap(),
                        Provenance::Own,
                    );
                }
            }
        }
        assert_eq!(kg.expand(), cl);
    }
}

#[test]
fn assimilation_never_grows_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..300 {
        let s = random_state(&mut rng);
        let mut kg = graph(&s);
        let before = kg.expand();
        let o = ObjectId(rng.random_range(0..s.n) as u8);
        let bin = *BinId::DESTINATIONS.choose(&mut rng).unwrap();
        let event = match rng.random_range(0..3) {
            0 => KnowledgeEvent::ConstraintShared(random_constraint(&mut rng, s.n)),
            1 => KnowledgeEvent::MoveAccepted { object: o, to: bin },
            _ => KnowledgeEvent::MoveRejected { object: o, to: bin },
        };
        kg.assimilate(&event);
        let after = kg.expand();
        for i in 0..s.n {
            let id = ObjectId(i as u8);
            assert!(
                after.candidates(id).is_subset(before.candidates(id)),
                "{event:?}"
            );
        }
    }
}
