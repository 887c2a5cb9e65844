//! Environment-based verifiers, best-of-n selection and the error taxonomy.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::candidates::{Closures, View};
use crate::domain::{Action, BinId};
use crate::engine::{shared_constraints, GameState, Observation, Outcome};
use crate::error::ParseError;
use crate::protocol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorLabel {
    FormatFollowing,
    ObjNotInSource,
    SourceUnreachable,
    DestUnreachable,
    SourceEqualsDest,
    RedundantShare,
    NoShareAfterSeek,
    WrongShareAfterSeek,
    SeekKnownObject,
    WrongRuleUnderstanding,
    WrongRandomGuess,
}

impl ErrorLabel {
    pub const ALL: [ErrorLabel; 11] = [
        ErrorLabel::FormatFollowing,
        ErrorLabel::ObjNotInSource,
        ErrorLabel::SourceUnreachable,
        ErrorLabel::DestUnreachable,
        ErrorLabel::SourceEqualsDest,
        ErrorLabel::RedundantShare,
        ErrorLabel::NoShareAfterSeek,
        ErrorLabel::WrongShareAfterSeek,
        ErrorLabel::SeekKnownObject,
        ErrorLabel::WrongRuleUnderstanding,
        ErrorLabel::WrongRandomGuess,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorLabel::FormatFollowing => "format_following",
            ErrorLabel::ObjNotInSource => "obj_not_in_source",
            ErrorLabel::SourceUnreachable => "source_unreachable",
            ErrorLabel::DestUnreachable => "dest_unreachable",
            ErrorLabel::SourceEqualsDest => "source_equals_dest",
            ErrorLabel::RedundantShare => "redundant_share",
            ErrorLabel::NoShareAfterSeek => "no_share_after_seek",
            ErrorLabel::WrongShareAfterSeek => "wrong_share_after_seek",
            ErrorLabel::SeekKnownObject => "seek_known_object",
            ErrorLabel::WrongRuleUnderstanding => "wrong_rule_understanding",
            ErrorLabel::WrongRandomGuess => "wrong_random_guess",
        }
    }

    /// Action type whose count is the second denominator in the error table.
    pub fn relevant_kind(self) -> crate::domain::ActionKind {
        use crate::domain::ActionKind;
        match self {
            ErrorLabel::RedundantShare | ErrorLabel::WrongShareAfterSeek => ActionKind::Share,
            ErrorLabel::NoShareAfterSeek | ErrorLabel::SeekKnownObject => ActionKind::Ask,
            _ => ActionKind::Move,
        }
    }
}

impl fmt::Display for ErrorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifierStack {
    None,
    Affordance,
    Communication,
    Reasoning,
}

impl VerifierStack {
    pub const ALL: [VerifierStack; 4] = [
        VerifierStack::None,
        VerifierStack::Affordance,
        VerifierStack::Communication,
        VerifierStack::Reasoning,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VerifierStack::None => "none",
            VerifierStack::Affordance => "affordance",
            VerifierStack::Communication => "communication",
            VerifierStack::Reasoning => "reasoning",
        }
    }

    pub fn is_active(self) -> bool {
        self != VerifierStack::None
    }
}

impl fmt::Display for VerifierStack {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for VerifierStack {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VerifierStack::ALL
            .into_iter()
            .find(|v| v.name() == s.trim())
            .ok_or_else(|| ParseError::Malformed(format!("unknown verifier `{}`", s.trim())))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub labels: Vec<ErrorLabel>,
}

impl Verdict {
    pub fn pass(&self) -> bool {
        self.labels.is_empty()
    }

    fn from_labels(mut labels: Vec<ErrorLabel>) -> Verdict {
        labels.sort();
        labels.dedup();
        Verdict { labels }
    }
}

/// Everything the verifiers need about one turn, computed once.
pub struct TurnContext<'a> {
    pub state: &'a GameState,
    pub obs: Observation,
    pub closures: Closures,
}

impl<'a> TurnContext<'a> {
    pub fn new(state: &'a GameState) -> TurnContext<'a> {
        let obs = state.observation(state.turn);
        let closures = Closures::of(&obs);
        TurnContext {
            state,
            obs,
            closures,
        }
    }

    pub fn view(&self) -> View<'_> {
        self.closures.view(&self.obs)
    }

    /// Physical executability, mirroring the engine's legality check.
    pub fn verify_affordance(&self, action: &Action) -> Verdict {
        Verdict::from_labels(
            self.state
                .violations(self.state.turn, action)
                .into_iter()
                .map(|v| v.label())
                .collect(),
        )
    }

    /// Redundant communication judged against the dialogue history.
    pub fn verify_communication(&self, action: &Action) -> Verdict {
        let mut labels = Vec::new();
        match *action {
            Action::Share(c) => {
                if shared_constraints(&self.obs.history, None).contains(&c) {
                    labels.push(ErrorLabel::RedundantShare);
                }
            }
            Action::Ask(o) => {
                let placed = o.index() < self.obs.n_objects() && self.obs.is_placed(o);
                if placed || self.view().own_ask() == Some(o) {
                    labels.push(ErrorLabel::SeekKnownObject);
                }
            }
            _ => {}
        }
        Verdict::from_labels(labels)
    }

    /// Consistency with what the actor knows.
    pub fn verify_reasoning(&self, action: &Action) -> Verdict {
        let v = self.view();
        let k = v.knowledge;
        let mut labels = Vec::new();
        if !k.consistent {
            return Verdict::default();
        }
        match *action {
            Action::Move { object, from, to } if object.index() < self.obs.n_objects() => {
                let cands = k.candidates(object);
                if to.is_destination() {
                    if !cands.contains(to) {
                        labels.push(ErrorLabel::WrongRuleUnderstanding);
                    } else if v.is_blind_guess(action) && !v.productive().is_empty() {
                        labels.push(ErrorLabel::WrongRandomGuess);
                    }
                } else {
                    let known = cands.len() == 1;
                    let backwards = from == BinId::Common && to == v.player.area();
                    if backwards || known && !v.handovers().contains(action) {
                        labels.push(ErrorLabel::WrongRuleUnderstanding);
                    }
                }
            }
            Action::Ask(o) if o.index() < self.obs.n_objects() => {
                if k.is_known(o) {
                    labels.push(ErrorLabel::SeekKnownObject);
                }
            }
            Action::Share(c) if v.public.entails(&c) => labels.push(ErrorLabel::RedundantShare),
            _ => {}
        }
        Verdict::from_labels(labels)
    }

    /// The configured stack; each level includes the ones below it, except
    /// that `communication` runs the communication check alone.
    pub fn verify(&self, stack: VerifierStack, action: &Action) -> Verdict {
        let mut labels = Vec::new();
        match stack {
            VerifierStack::None => {}
            VerifierStack::Affordance => labels.extend(self.verify_affordance(action).labels),
            VerifierStack::Communication => labels.extend(self.verify_communication(action).labels),
            VerifierStack::Reasoning => {
                labels.extend(self.verify_affordance(action).labels);
                labels.extend(self.verify_communication(action).labels);
                labels.extend(self.verify_reasoning(action).labels);
            }
        }
        Verdict::from_labels(labels)
    }

    /// The full post-hoc label set for an executed (or attempted) action.
    /// `action` is `None` when the output did not parse.
    pub fn classify_errors(
        &self,
        action: Option<&Action>,
        outcome: Option<&Outcome>,
    ) -> Vec<ErrorLabel> {
        let Some(action) = action else {
            return vec![ErrorLabel::FormatFollowing];
        };
        let mut labels = self.verify(VerifierStack::Reasoning, action).labels;
        let v = self.view();
        if let Some(asked) = v.partner_ask() {
            let answered = matches!(action, Action::Share(c) if c.involves(asked));
            if !answered && !v.answering_shares().is_empty() {
                labels.push(ErrorLabel::NoShareAfterSeek);
            }
            if matches!(action, Action::Share(c) if !c.involves(asked)) {
                labels.push(ErrorLabel::WrongShareAfterSeek);
            }
        }
        if outcome == Some(&Outcome::RejectedPlacement) && v.is_blind_guess(action) {
            labels.push(ErrorLabel::WrongRandomGuess);
        }
        Verdict::from_labels(labels).labels
    }
}

/// Result of filtering sampled candidates.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Selection {
    /// The action to execute, `None` if the chosen text did not parse.
    pub action: Option<Action>,
    /// Index of the chosen candidate; `None` for the pass fallback.
    pub chosen: Option<usize>,
    pub corrected: bool,
    pub candidate_labels: Vec<Vec<ErrorLabel>>,
    /// Whether the engine will accept the action; otherwise it becomes a no-op.
    pub legal: bool,
}

/// Picks the first candidate passing `stack`. If all fail, falls back to the
/// first affordance-legal candidate, then to pass. Without a verifier the
/// first sample is taken as is.
pub fn best_of_n(ctx: &TurnContext<'_>, candidates: &[String], stack: VerifierStack) -> Selection {
    let objects = ctx.state.objects();
    let parsed: Vec<Result<Action, ParseError>> = candidates
        .iter()
        .map(|t| protocol::parse_action(objects, t))
        .collect();

    if !stack.is_active() {
        let first = parsed.first().cloned();
        let (action, labels) = match first {
            Some(Ok(a)) => (Some(a), ctx.verify_affordance(&a).labels),
            Some(Err(_)) => (None, vec![ErrorLabel::FormatFollowing]),
            None => (Some(Action::Pass), Vec::new()),
        };
        let legal = action.is_some() && labels.is_empty();
        return Selection {
            action,
            chosen: (!candidates.is_empty()).then_some(0),
            corrected: false,
            candidate_labels: vec![labels],
            legal,
        };
    }

    let mut candidate_labels = Vec::with_capacity(parsed.len());
    for (i, p) in parsed.iter().enumerate() {
        let labels = match p {
            Ok(a) => ctx.verify(stack, a).labels,
            Err(_) => vec![ErrorLabel::FormatFollowing],
        };
        let ok = labels.is_empty();
        candidate_labels.push(labels);
        if ok {
            return Selection {
                action: parsed[i].clone().ok(),
                chosen: Some(i),
                corrected: i > 0,
                candidate_labels,
                legal: true,
            };
        }
    }
    let fallback = parsed
        .iter()
        .position(|p| matches!(p, Ok(a) if ctx.verify_affordance(a).pass()));
    Selection {
        action: Some(fallback.map_or(Action::Pass, |i| parsed[i].clone().unwrap())),
        chosen: fallback,
        corrected: true,
        candidate_labels,
        legal: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Constraint, ObjectId, PlayerId, Relation};
    use crate::engine::ActionSpaceConfig;
    use crate::puzzle::PuzzleInstance;
    use std::sync::Arc;
    use BinId::*;

    fn game() -> GameState {
        GameState::new(
            Arc::new(PuzzleInstance::fixture_p0()),
            [ActionSpaceConfig::ProvideAndSeek; 2],
            30,
        )
    }

    fn mv(o: u8, from: BinId, to: BinId) -> Action {
        Action::Move {
            object: ObjectId(o),
            from,
            to,
        }
    }

    fn rule() -> Constraint {
        Constraint::pair(ObjectId(0), ObjectId(1), Relation::SameRow).unwrap()
    }

    #[test]
    fn affordance_examples() {
        let g = game();
        let ctx = TurnContext::new(&g);
        assert_eq!(
            ctx.verify_affordance(&mv(0, AreaP1, TopLeft)).labels,
            vec![ErrorLabel::DestUnreachable]
        );
        assert!(ctx
            .verify_affordance(&mv(0, Common, Common))
            .labels
            .contains(&ErrorLabel::SourceEqualsDest));
        assert!(ctx.verify_affordance(&mv(0, AreaP1, BottomLeft)).pass());
    }

    #[test]
    fn communication_examples() {
        let mut g = game();
        g.apply(mv(0, AreaP1, BottomLeft)).unwrap();
        let ctx = TurnContext::new(&g);
        assert!(ctx.verify_communication(&Action::Share(rule())).pass());
        g.apply(Action::Share(rule())).unwrap();
        g.apply(Action::Pass).unwrap();
        let ctx = TurnContext::new(&g);
        assert_eq!(
            ctx.verify_communication(&Action::Share(rule())).labels,
            vec![ErrorLabel::RedundantShare]
        );
        g.apply(Action::Pass).unwrap();
        let ctx = TurnContext::new(&g);
        assert_eq!(
            ctx.verify_communication(&Action::Ask(ObjectId(0))).labels,
            vec![ErrorLabel::SeekKnownObject]
        );
    }

    #[test]
    fn reasoning_examples() {
        let mut g = game();
        g.apply(mv(0, AreaP1, BottomLeft)).unwrap();
        g.apply(Action::Share(rule())).unwrap();
        // p1 now knows B -> bottom_right.
        let ctx = TurnContext::new(&g);
        assert_eq!(
            ctx.verify_reasoning(&mv(1, Common, BottomLeft)).labels,
            vec![ErrorLabel::WrongRuleUnderstanding]
        );
        assert_eq!(
            ctx.verify_reasoning(&Action::Ask(ObjectId(1))).labels,
            vec![ErrorLabel::SeekKnownObject]
        );

        let mut g = GameState::new(
            Arc::new(PuzzleInstance::fixture_p0()),
            [ActionSpaceConfig::None; 2],
            30,
        );
        g.apply(mv(0, AreaP1, BottomLeft)).unwrap();
        g.apply(mv(1, AreaP2, Common)).unwrap();
        let ctx = TurnContext::new(&g);
        assert!(ctx.verify_reasoning(&mv(1, Common, BottomLeft)).pass());
    }

    #[test]
    fn best_of_n_examples() {
        let g = game();
        let ctx = TurnContext::new(&g);
        let good = "<ACTION>move(A, area_p1, bottom_left)</ACTION>".to_string();
        let sel = best_of_n(
            &ctx,
            &["move(B)".into(), good.clone()],
            VerifierStack::Reasoning,
        );
        assert_eq!((sel.chosen, sel.corrected), (Some(1), true));
        assert_eq!(sel.candidate_labels[0], vec![ErrorLabel::FormatFollowing]);

        let sel = best_of_n(&ctx, &vec![good.clone(); 4], VerifierStack::Reasoning);
        assert_eq!((sel.chosen, sel.corrected), (Some(0), false));

        let bad = "<ACTION>move(A, area_p1, top_left)</ACTION>".to_string();
        let sel = best_of_n(&ctx, &vec![bad.clone(); 4], VerifierStack::Reasoning);
        assert_eq!(
            (sel.action, sel.chosen, sel.corrected),
            (Some(Action::Pass), None, true)
        );
        assert_eq!(sel.candidate_labels.len(), 4);

        let sel = best_of_n(&ctx, &[bad], VerifierStack::None);
        assert!(!sel.legal);
        assert!(!sel.corrected);
    }

    #[test]
    fn classify_seek_labels() {
        let mut g = game();
        g.apply(Action::Ask(ObjectId(1))).unwrap();
        let ctx = TurnContext::new(&g);
        assert_eq!(ctx.state.turn, PlayerId::P2);
        assert_eq!(
            ctx.classify_errors(Some(&Action::Pass), None),
            vec![ErrorLabel::NoShareAfterSeek]
        );
        assert!(ctx
            .classify_errors(Some(&Action::Share(rule())), None)
            .is_empty());
    }

    #[test]
    fn stack_names() {
        for s in VerifierStack::ALL {
            assert_eq!(s.name().parse::<VerifierStack>().unwrap(), s);
        }
    }
}
