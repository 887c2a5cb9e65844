//! External policies reached over a line-delimited stdio bridge or HTTP.
//!
//! Request: `{"game_id": .., "observation_text": .., "system_text": .., "n_samples": 4}`.
//! Response: a JSON array of raw output texts. A timeout yields empty
//! outputs, which then fail to parse like any malformed reply.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::agents::Policy;
use crate::engine::Observation;
use crate::error::PolicyError;
use crate::protocol;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRequest {
    pub game_id: String,
    pub observation_text: String,
    pub system_text: String,
    pub n_samples: usize,
}

impl PolicyRequest {
    pub fn new(game_id: &str, obs: &Observation, n_samples: usize) -> PolicyRequest {
        PolicyRequest {
            game_id: game_id.to_string(),
            observation_text: protocol::render_observation_text(obs),
            system_text: protocol::system_prompt(obs.config),
            n_samples,
        }
    }
}

fn timed_out(n: usize) -> Vec<String> {
    vec![String::new(); n.max(1)]
}

/// A child process answering one JSON request line with one JSON array line.
pub struct StdioPolicy {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
    game_id: String,
}

impl StdioPolicy {
    pub fn spawn(
        program: &str,
        args: &[String],
        timeout: Duration,
        game_id: &str,
    ) -> Result<StdioPolicy, PolicyError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(StdioPolicy {
            child,
            stdin,
            lines: rx,
            timeout,
            game_id: game_id.to_string(),
        })
    }
}

impl Policy for StdioPolicy {
    fn propose(&mut self, obs: &Observation, n: usize) -> Result<Vec<String>, PolicyError> {
        let req = PolicyRequest::new(&self.game_id, obs, n);
        let line =
            serde_json::to_string(&req).map_err(|e| PolicyError::Transport(e.to_string()))?;
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| PolicyError::Transport(e.to_string()))?;
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(reply)) => {
                serde_json::from_str(&reply).map_err(|e| PolicyError::Transport(e.to_string()))
            }
            Ok(Err(e)) => Err(PolicyError::Transport(e.to_string())),
            Err(mpsc::RecvTimeoutError::Timeout) => Ok(timed_out(n)),
            Err(mpsc::RecvTimeoutError::Disconnected) => Err(PolicyError::Transport(
                "policy process closed its output".into(),
            )),
        }
    }

    fn name(&self) -> String {
        "stdio".into()
    }
}

impl Drop for StdioPolicy {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// POSTs each request to a local endpoint.
pub struct HttpPolicy {
    url: String,
    agent: ureq::Agent,
    game_id: String,
}

impl HttpPolicy {
    pub fn new(url: &str, timeout: Duration, game_id: &str) -> HttpPolicy {
        HttpPolicy {
            url: url.to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
            game_id: game_id.to_string(),
        }
    }
}

impl Policy for HttpPolicy {
    fn propose(&mut self, obs: &Observation, n: usize) -> Result<Vec<String>, PolicyError> {
        let req = PolicyRequest::new(&self.game_id, obs, n);
        let body =
            serde_json::to_string(&req).map_err(|e| PolicyError::Transport(e.to_string()))?;
        let resp = self
            .agent
            .post(&self.url)
            .set("content-type", "application/json")
            .send_string(&body);
        match resp {
            Ok(r) => {
                let text = r
                    .into_string()
                    .map_err(|e| PolicyError::Transport(e.to_string()))?;
                serde_json::from_str(&text).map_err(|e| PolicyError::Transport(e.to_string()))
            }
            Err(ureq::Error::Transport(t)) if is_timeout(&t) => Ok(timed_out(n)),
            Err(e) => Err(PolicyError::Transport(e.to_string())),
        }
    }

    fn name(&self) -> String {
        format!("http({})", self.url)
    }
}

fn is_timeout(t: &ureq::Transport) -> bool {
    use std::error::Error;
    let mut src: Option<&(dyn Error + 'static)> = t.source();
    while let Some(e) = src {
        if let Some(io) = e.downcast_ref::<std::io::Error>() {
            return matches!(
                io.kind(),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock
            );
        }
        src = e.source();
    }
    t.to_string().contains("timed out")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{ActionSpaceConfig, GameState};
    use crate::puzzle::PuzzleInstance;
    use crate::PlayerId;
    use std::io::Read;
    use std::net::TcpListener;
    use std::sync::Arc;

    fn obs() -> Observation {
        GameState::new(
            Arc::new(PuzzleInstance::fixture_p0()),
            [ActionSpaceConfig::ProvideAndSeek; 2],
            30,
        )
        .observation(PlayerId::P1)
    }

    #[test]
    fn stdio_bridge_round_trip() {
        let script = r#"while read line; do echo '["<ACTION>pass</ACTION>","x"]'; done"#;
        let mut p = StdioPolicy::spawn(
            "sh",
            &["-c".into(), script.into()],
            Duration::from_secs(5),
            "g1",
        )
        .unwrap();
        let out = p.propose(&obs(), 2).unwrap();
        assert_eq!(
            out,
            vec!["<ACTION>pass</ACTION>".to_string(), "x".to_string()]
        );
    }

    #[test]
    fn stdio_timeout_gives_empty_outputs() {
        let mut p = StdioPolicy::spawn(
            "sh",
            &["-c".into(), "sleep 5".into()],
            Duration::from_millis(100),
            "g",
        )
        .unwrap();
        assert_eq!(p.propose(&obs(), 3).unwrap(), vec![String::new(); 3]);
    }

    #[test]
    fn http_round_trip() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let server = thread::spawn(move || {
            let (mut s, _) = listener.accept().unwrap();
            let mut buf = [0u8; 16384];
            let mut got = Vec::new();
            // Read until the JSON body is complete.
            loop {
                let n = s.read(&mut buf).unwrap();
                got.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&got);
                if n == 0 || text.contains("\"n_samples\"") && text.trim_end().ends_with('}') {
                    break;
                }
            }
            let body = r#"["<ACTION>ask(B)</ACTION>"]"#;
            write!(
                s,
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            )
            .unwrap();
            String::from_utf8_lossy(&got).to_string()
        });
        let mut p = HttpPolicy::new(&format!("http://{addr}/act"), Duration::from_secs(5), "g7");
        let out = p.propose(&obs(), 1).unwrap();
        assert_eq!(out, vec!["<ACTION>ask(B)</ACTION>".to_string()]);
        let req = server.join().unwrap();
        assert!(req.contains("\"game_id\":\"g7\""));
    }

    #[test]
    fn http_refused_is_transport_error() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        drop(listener);
        let mut p = HttpPolicy::new(&format!("http://{addr}/act"), Duration::from_secs(1), "g");
        assert!(p.propose(&obs(), 1).is_err());
    }
}
