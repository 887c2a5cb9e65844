//! Text protocol for external policies: the `<THINK>`/`<ACTION>` envelope,
//! observation prompts and per-configuration instructions.

use std::fmt::Write as _;

use crate::domain::{Action, BinId, Objects};
use crate::engine::{ActionSpaceConfig, Observation, Outcome};
use crate::error::ParseError;

const ACTION_OPEN: &str = "<ACTION>";
const ACTION_CLOSE: &str = "</ACTION>";
const THINK_OPEN: &str = "<THINK>";
const THINK_CLOSE: &str = "</THINK>";

/// Parses a policy output: an optional THINK block and exactly one ACTION block.
pub fn parse_action(objects: &Objects, text: &str) -> Result<Action, ParseError> {
    let body = strip_think(text);
    let n = body.matches(ACTION_OPEN).count();
    if n != 1 || body.matches(ACTION_CLOSE).count() != 1 {
        return Err(ParseError::ActionBlocks(n));
    }
    let start = body.find(ACTION_OPEN).unwrap() + ACTION_OPEN.len();
    let end = body.find(ACTION_CLOSE).unwrap();
    if end < start {
        return Err(ParseError::Malformed(text.trim().to_string()));
    }
    objects.parse_action(&body[start..end])
}

fn strip_think(text: &str) -> String {
    let mut out = text.to_string();
    while let Some(s) = out.find(THINK_OPEN) {
        match out[s..].find(THINK_CLOSE) {
            Some(e) => out.replace_range(s..s + e + THINK_CLOSE.len(), ""),
            None => break,
        }
    }
    out
}

/// Wraps an action (and optional rationale) in the envelope.
pub fn format_output(objects: &Objects, action: &Action, rationale: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(r) = rationale {
        let _ = write!(s, "{THINK_OPEN}{r}{THINK_CLOSE}");
    }
    let _ = write!(
        s,
        "{ACTION_OPEN}{}{ACTION_CLOSE}",
        objects.action_text(action)
    );
    s
}

/// Game rules and the actions this configuration allows.
pub fn system_prompt(config: ActionSpaceConfig) -> String {
    let mut s = String::from(
        "You are one of two players placing objects into four bins on a shared table: \
         top_left, top_right, bottom_left, bottom_right. Player p1 sits at the bottom and \
         reaches bottom_left, bottom_right, area_p1 and common. Player p2 sits at the top and \
         reaches top_left, top_right, area_p2 and common. Each player privately holds part of \
         the constraints that fix every object's bin; relations are exclusive (same_row means \
         same row but a different bin). A placement into a wrong bin is rejected and costs a turn.\n\
         Actions:\n  move(OBJ, FROM, TO)\n",
    );
    if config.can_provide() {
        s.push_str("  share(CONSTRAINT)  share one of your constraints\n");
    } else if config.can_share() {
        s.push_str(
            "  share(CONSTRAINT)  only to answer your partner's ask about an object in it\n",
        );
    }
    if config.can_seek() {
        s.push_str("  ask(OBJ)  ask your partner about an object\n");
    }
    s.push_str("  pass\nReply as <THINK>reasoning</THINK><ACTION>action</ACTION>; the THINK block is optional.");
    s
}

/// Deterministic prompt text for one observation.
pub fn render_observation_text(obs: &Observation) -> String {
    let objs = &obs.objects;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "You are {}. Step {}/{}.",
        obs.player, obs.step_count, obs.step_limit
    );
    let _ = writeln!(s, "Board:");
    for bin in BinId::ALL {
        let here: Vec<&str> = objs
            .ids()
            .filter(|&o| obs.placements[o.index()] == bin)
            .map(|o| objs.name(o))
            .collect();
        let _ = writeln!(s, "  {bin}: [{}]", here.join(", "));
    }
    let _ = writeln!(s, "Your constraints:");
    for c in &obs.own_constraints {
        let _ = writeln!(s, "  {}", objs.constraint_text(c));
    }
    let _ = writeln!(s, "History:");
    if obs.history.is_empty() {
        let _ = writeln!(s, "  (none)");
    }
    for r in &obs.history {
        let action = r
            .action
            .map_or_else(|| "(unreadable)".to_string(), |a| objs.action_text(&a));
        let outcome = match r.outcome {
            Outcome::Accepted => "ok",
            Outcome::RejectedPlacement => "rejected",
            Outcome::IllegalNoOp { .. } => "invalid",
        };
        let _ = writeln!(s, "  {}. {}: {} [{}]", r.step, r.actor, action, outcome);
    }
    if let Some(o) = obs.partner_ask() {
        let _ = writeln!(s, "Your partner asked about {}.", objs.name(o));
    }
    let _ = write!(
        s,
        "Choose one action: move(OBJ, FROM, TO), {}{}pass.",
        if obs.config.can_share() {
            "share(CONSTRAINT), "
        } else {
            ""
        },
        if obs.config.can_seek() {
            "ask(OBJ), "
        } else {
            ""
        },
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ObjectId;
    use crate::engine::GameState;
    use crate::puzzle::PuzzleInstance;
    use crate::PlayerId;
    use std::sync::Arc;

    #[test]
    fn envelope_examples() {
        let objs = Objects::letters(2);
        assert_eq!(
            parse_action(
                &objs,
                "<THINK>B must be right of A</THINK><ACTION>move(B, common, bottom_right)</ACTION>"
            )
            .unwrap(),
            Action::Move {
                object: ObjectId(1),
                from: BinId::Common,
                to: BinId::BottomRight
            }
        );
        assert_eq!(
            parse_action(&objs, "<ACTION>pass</ACTION>").unwrap(),
            Action::Pass
        );
        assert!(parse_action(&objs, "move(B)").is_err());
        assert_eq!(
            parse_action(&objs, "<ACTION>pass</ACTION><ACTION>pass</ACTION>"),
            Err(ParseError::ActionBlocks(2))
        );
        assert!(parse_action(&objs, "<ACTION>move(C, common, top_left)</ACTION>").is_err());
        let a = Action::Ask(ObjectId(0));
        assert_eq!(
            parse_action(&objs, &format_output(&objs, &a, Some("why"))).unwrap(),
            a
        );
    }

    #[test]
    fn observation_text_is_stable_and_private() {
        let g = GameState::new(
            Arc::new(PuzzleInstance::fixture_p0()),
            [ActionSpaceConfig::ProvideAndSeek; 2],
            30,
        );
        let obs = g.observation(PlayerId::P1);
        let t = render_observation_text(&obs);
        assert_eq!(t, render_observation_text(&obs));
        assert_eq!(t.matches("in_bin(A,bottom_left)").count(), 1);
        assert!(!t.contains("same_row(A,B)"));
    }
}
