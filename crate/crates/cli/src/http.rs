//! Blocking client for OpenAI-style chat-completion endpoints.

use std::time::Duration;

use serde_json::{json, Value};

use checklist_core::proposal::{ChatClient, ChatRequest, TransportError};

pub struct HttpChatClient {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    token: Option<String>,
}

impl HttpChatClient {
    pub fn new(url: &str, model: &str, token: Option<String>, timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder().timeout(timeout).build().map_err(|e| e.to_string())?;
        Ok(HttpChatClient { client, url: url.to_owned(), model: model.to_owned(), token })
    }

    fn body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let mut body = json!({"model": self.model, "messages": messages, "temperature": request.temperature});
        if let Some(m) = request.max_tokens {
            body["max_tokens"] = json!(m);
        }
        body
    }
}

fn failure(message: String, retryable: bool) -> TransportError {
    TransportError { message, retryable }
}

/// The first choice's message text.
pub fn extract_content(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.get("choices")?.get(0)?.get("message")?.get("content")?.as_str().map(str::to_owned)
}

impl ChatClient for HttpChatClient {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut rb = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(self.body(request).to_string());
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let resp = rb.send().map_err(|e| failure(e.to_string(), e.is_timeout() || e.is_connect() || e.is_request()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| failure(e.to_string(), true))?;
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            return Err(failure(format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()), retryable));
        }
        extract_content(&text).ok_or_else(|| failure("response has no choices[0].message.content".into(), false))
    }
}
