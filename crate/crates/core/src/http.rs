//! Blocking JSON-over-HTTP helper shared by the remote embedder and the chat backend.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct HttpFailure {
    pub status: Option<u16>,
    pub message: String,
}

pub(crate) fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(
    agent: &Agent,
    url: &str,
    bearer: Option<&str>,
    body: &B,
) -> Result<R, HttpFailure> {
    let mut req = agent.post(url).header("Content-Type", "application/json");
    if let Some(token) = bearer {
        req = req.header("Authorization", format!("Bearer {token}"));
    }
    let mut resp = req.send_json(body).map_err(|e| HttpFailure {
        status: None,
        message: e.to_string(),
    })?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        let text = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(HttpFailure {
            status: Some(status),
            message: text,
        });
    }
    resp.body_mut().read_json::<R>().map_err(|e| HttpFailure {
        status: Some(status),
        message: format!("malformed response body: {e}"),
    })
}
