//! Client for a remote generation service.
//!
//! The backend trait stays model-agnostic: anything that accepts a prompted
//! input and returns scored target candidates can sit behind it. This client
//! speaks a minimal JSON protocol — POST `{base}/v1/generate` with
//! `{input, strategy, beam_width}`, answered by `{candidates: [{target,
//! score}]}` — and retries transient failures a couple of times before
//! giving up, since a flaky model server should degrade one request, not
//! crash a replay.

use std::time::Duration;

use precept_core::backend::{Backend, BackendError, Candidate, DecodeConfig};
use serde::Deserialize;

/// How many times one request is attempted in total.
const ATTEMPTS: u32 = 3;
/// Sleep before the second and third attempts.
const BACKOFF: [Duration; 2] = [Duration::from_millis(25), Duration::from_millis(100)];

pub struct RemoteBackend {
    agent: ureq::Agent,
    base: String,
}

#[derive(Deserialize)]
struct GenerateResponse {
    candidates: Vec<Candidate>,
}

impl RemoteBackend {
    pub fn new(base: impl Into<String>) -> Self {
        let base = base.into().trim_end_matches('/').to_string();
        let agent = ureq::AgentBuilder::new()
            .timeout_connect(Duration::from_secs(2))
            .timeout(Duration::from_secs(30))
            .build();
        RemoteBackend { agent, base }
    }

    fn endpoint(&self) -> String {
        format!("{}/v1/generate", self.base)
    }
}

impl Backend for RemoteBackend {
    fn identity(&self) -> String {
        format!("remote:{}", self.base)
    }

    fn analyze_raw(
        &self,
        input: &str,
        config: &DecodeConfig,
    ) -> Result<Vec<Candidate>, BackendError> {
        if input.is_empty() {
            return Err(BackendError::EmptyInput);
        }
        let body = serde_json::json!({
            "input": input,
            "strategy": config.strategy.to_string(),
            "beam_width": config.effective_width(),
        });
        let transport = |message: String| BackendError::Transport {
            backend: self.identity(),
            message,
        };

        let mut last = transport("no attempts made".to_string());
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                std::thread::sleep(BACKOFF[attempt as usize - 1]);
            }
            match self.agent.post(&self.endpoint()).send_json(body.clone()) {
                Ok(response) => {
                    return response
                        .into_json::<GenerateResponse>()
                        .map(|r| r.candidates)
                        .map_err(|err| BackendError::MalformedResponse {
                            backend: self.identity(),
                            message: err.to_string(),
                        });
                }
                // Server-side failures may be transient; client-side status
                // codes mean the request itself is wrong and a retry would
                // only repeat it.
                Err(ureq::Error::Status(code, _)) if code >= 500 => {
                    last = transport(format!("server returned status {code}"));
                }
                Err(ureq::Error::Status(code, _)) => {
                    return Err(transport(format!("server returned status {code}")));
                }
                Err(ureq::Error::Transport(err)) => {
                    last = transport(err.to_string());
                }
            }
        }
        Err(last)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicU32, Ordering};
    use std::sync::Arc;

    /// A scripted generation server: each request pops the next canned
    /// (status, body) response.
    fn stub_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicU32>) {
        let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
        let port = server.server_addr().to_ip().unwrap().port();
        let hits = Arc::new(AtomicU32::new(0));
        let hits_inner = hits.clone();
        std::thread::spawn(move || {
            for (status, body) in responses {
                let Ok(mut request) = server.recv() else { return };
                hits_inner.fetch_add(1, Ordering::SeqCst);
                let mut buf = String::new();
                request.as_reader().read_to_string(&mut buf).ok();
                let response =
                    tiny_http::Response::from_string(body).with_status_code(status);
                request.respond(response).ok();
            }
        });
        (format!("http://127.0.0.1:{port}"), hits)
    }

    #[test]
    fn parses_candidates_from_a_healthy_server() {
        let (base, _) = stub_server(vec![(
            200,
            r#"{"candidates":[{"target":"INSERT 3 COMMENT u://a","score":0.9}]}"#.to_string(),
        )]);
        let backend = RemoteBackend::new(&base);
        let cands = backend
            .analyze_raw("task\ncode", &DecodeConfig::greedy())
            .unwrap();
        assert_eq!(cands, vec![Candidate::new("INSERT 3 COMMENT u://a", 0.9)]);
    }

    #[test]
    fn retries_through_transient_server_errors() {
        let (base, hits) = stub_server(vec![
            (500, "busy".to_string()),
            (200, r#"{"candidates":[]}"#.to_string()),
        ]);
        let backend = RemoteBackend::new(&base);
        let cands = backend
            .analyze_raw("task\ncode", &DecodeConfig::greedy())
            .unwrap();
        assert!(cands.is_empty());
        assert_eq!(hits.load(Ordering::SeqCst), 2);
    }

    #[test]
    fn client_errors_fail_without_retry() {
        let (base, hits) = stub_server(vec![
            (400, "bad request".to_string()),
            (200, r#"{"candidates":[]}"#.to_string()),
        ]);
        let backend = RemoteBackend::new(&base);
        let err = backend
            .analyze_raw("task\ncode", &DecodeConfig::greedy())
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport { .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn persistent_failure_exhausts_attempts_then_errors() {
        let (base, hits) = stub_server(vec![
            (503, "down".to_string()),
            (503, "down".to_string()),
            (503, "down".to_string()),
        ]);
        let backend = RemoteBackend::new(&base);
        let err = backend
            .analyze_raw("task\ncode", &DecodeConfig::greedy())
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport { .. }));
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn non_json_body_is_a_malformed_response() {
        let (base, _) = stub_server(vec![(200, "<html>oops</html>".to_string())]);
        let backend = RemoteBackend::new(&base);
        let err = backend
            .analyze_raw("task\ncode", &DecodeConfig::greedy())
            .unwrap_err();
        assert!(matches!(err, BackendError::MalformedResponse { .. }));
    }

    #[test]
    fn unreachable_host_reports_transport_error() {
        // Port 1 on localhost is essentially never listening.
        let backend = RemoteBackend::new("http://127.0.0.1:1");
        let err = backend
            .analyze_raw("task\ncode", &DecodeConfig::greedy())
            .unwrap_err();
        assert!(matches!(err, BackendError::Transport { .. }));
    }
}
