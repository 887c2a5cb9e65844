//! Chat-format training data from planner trajectories.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::engine::GameState;
use crate::error::HarnessError;
use crate::planner::Trajectory;
use crate::protocol;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftSample {
    pub messages: Vec<Message>,
}

fn msg(role: &str, content: String) -> Message {
    Message {
        role: role.to_string(),
        content,
    }
}

/// One sample per turn of every trajectory, in order. A trajectory that does
/// not replay cleanly is rejected with its index.
pub fn export_sft(
    trajectories: &[Trajectory],
    with_rationale: bool,
) -> Result<Vec<SftSample>, HarnessError> {
    let mut out = Vec::new();
    for (i, t) in trajectories.iter().enumerate() {
        t.replay(u32::MAX)
            .map_err(|e| HarnessError::Replay(format!("trajectory {i}: {e}")))?;
        let mut g = GameState::new(t.puzzle.clone(), t.configs, u32::MAX);
        for s in &t.steps {
            let obs = g.observation(s.actor);
            let rationale = if with_rationale {
                s.rationale.as_deref()
            } else {
                None
            };
            out.push(SftSample {
                messages: vec![
                    msg("system", protocol::system_prompt(obs.config)),
                    msg("user", protocol::render_observation_text(&obs)),
                    msg(
                        "assistant",
                        protocol::format_output(&obs.objects, &s.action, rationale),
                    ),
                ],
            });
            g.apply(s.action)
                .map_err(|e| HarnessError::Replay(format!("trajectory {i}: {e}")))?;
        }
    }
    Ok(out)
}

pub fn write_sft(mut w: impl Write, samples: &[SftSample]) -> Result<(), HarnessError> {
    for s in samples {
        serde_json::to_writer(&mut w, s)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
