//! A backend that replays canned responses, for tests and demos.

use std::sync::Mutex;

use super::{Backend, GatewayError, GenerationRequest};

/// Returns its responses in order and then keeps repeating the last one. Every
/// request is recorded.
#[derive(Debug, Default)]
pub struct ScriptedBackend {
    script: Mutex<Script>,
}

#[derive(Debug, Default)]
struct Script {
    responses: Vec<Result<String, GatewayError>>,
    next: usize,
    seen: Vec<GenerationRequest>,
}

impl ScriptedBackend {
    pub fn new<S: Into<String>>(responses: impl IntoIterator<Item = S>) -> Self {
        Self::with_results(responses.into_iter().map(|r| Ok(r.into())))
    }

    pub fn with_results(results: impl IntoIterator<Item = Result<String, GatewayError>>) -> Self {
        ScriptedBackend {
            script: Mutex::new(Script { responses: results.into_iter().collect(), next: 0, seen: Vec::new() }),
        }
    }

    pub fn requests(&self) -> Vec<GenerationRequest> {
        self.script.lock().unwrap().seen.clone()
    }

    pub fn calls(&self) -> usize {
        self.script.lock().unwrap().seen.len()
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let mut s = self.script.lock().unwrap();
        s.seen.push(request.clone());
        if s.responses.is_empty() {
            return Err(GatewayError::Protocol { backend: request.backend_id.clone(), detail: "script is empty".into() });
        }
        let i = s.next.min(s.responses.len() - 1);
        s.next += 1;
        s.responses[i].clone()
    }
}
