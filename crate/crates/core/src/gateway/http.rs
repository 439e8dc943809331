//! A backend that forwards prompts to an HTTP endpoint.
//!
//! The request body is `{"prompt", "stage", "seed"}`. The response may be a JSON
//! object with a `text` (or `output`, `completion`) string field, or plain text.

use std::time::Duration;

use serde_json::{json, Value};

use super::{Backend, GatewayError, GenerationRequest};

#[derive(Debug)]
pub struct HttpBackend {
    id: String,
    endpoint: String,
    timeout: Duration,
    auth_env: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(id: &str, endpoint: impl Into<String>, timeout: Duration, auth_env: Option<String>) -> Self {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .expect("http client builds");
        HttpBackend { id: id.to_string(), endpoint: endpoint.into(), timeout, auth_env, client }
    }

    fn extract(&self, body: &str) -> Result<String, GatewayError> {
        match serde_json::from_str::<Value>(body) {
            Ok(Value::Object(map)) => ["text", "output", "completion"]
                .iter()
                .find_map(|k| map.get(*k).and_then(Value::as_str))
                .map(str::to_string)
                .ok_or_else(|| GatewayError::Protocol {
                    backend: self.id.clone(),
                    detail: "response object has no text field".into(),
                }),
            Ok(Value::String(s)) => Ok(s),
            _ => Ok(body.to_string()),
        }
    }
}

impl Backend for HttpBackend {
    fn complete(&self, request: &GenerationRequest) -> Result<String, GatewayError> {
        let mut call = self.client.post(&self.endpoint).json(&json!({
            "prompt": request.rendered_prompt,
            "stage": request.stage.number(),
            "seed": request.seed,
        }));
        if let Some(var) = &self.auth_env {
            if let Ok(token) = std::env::var(var) {
                call = call.bearer_auth(token);
            }
        }
        let response = call.send().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout { backend: self.id.clone(), after: self.timeout }
            } else {
                GatewayError::Unreachable { backend: self.id.clone(), detail: e.to_string() }
            }
        })?;
        let status = response.status();
        let body = response.text().map_err(|e| {
            if e.is_timeout() {
                GatewayError::Timeout { backend: self.id.clone(), after: self.timeout }
            } else {
                GatewayError::Protocol { backend: self.id.clone(), detail: e.to_string() }
            }
        })?;
        if !status.is_success() {
            let body: String = body.chars().take(500).collect();
            return Err(GatewayError::Status { backend: self.id.clone(), status: status.as_u16(), body });
        }
        self.extract(&body)
    }
}
