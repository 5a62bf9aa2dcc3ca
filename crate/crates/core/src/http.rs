//! Blocking JSON-over-HTTP transport shared by the remote backend, the
//! summarizer and the image-text classifier clients.

use std::time::Duration;

use crate::error::{Error, Result};

const MAX_RESPONSE_BYTES: u64 = 512 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct JsonEndpoint {
    url: String,
    agent: ureq::Agent,
}

impl JsonEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { url: url.into(), agent }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// POSTs a serialized JSON body and returns the raw response body.
    pub fn post(&self, body: &str) -> Result<String> {
        let mut resp = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(body)
            .map_err(|e| self.classify(e))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| self.classify(e))?;
        match status {
            200..=299 => Ok(text),
            502..=504 => Err(Error::EndpointUnavailable(format!(
                "{} answered HTTP {status}",
                self.url
            ))),
            _ => Err(Error::BadResponse(format!(
                "{} answered HTTP {status}: {}",
                self.url,
                truncate(&text, 200)
            ))),
        }
    }

    fn classify(&self, err: ureq::Error) -> Error {
        match err {
            ureq::Error::Timeout(_) => Error::Timeout(self.url.clone()),
            ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => Error::Timeout(self.url.clone()),
            other => Error::EndpointUnavailable(format!("{}: {other}", self.url)),
        }
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
