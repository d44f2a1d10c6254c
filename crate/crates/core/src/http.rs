//! Minimal blocking JSON-over-HTTP client shared by annotators and
//! HTTP connectors.

use std::time::Duration;

#[derive(Debug, Clone, PartialEq)]
pub enum HttpFailure {
    Timeout,
    Transport(String),
}

/// POSTs `body` and returns the status code and response text. Non-2xx
/// statuses are returned, not treated as errors.
pub fn post_json(url: &str, body: &str, timeout: Duration) -> Result<(u16, String), HttpFailure> {
    let config = ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build();
    let agent = ureq::Agent::new_with_config(config);
    let mut response = agent.post(url).header("content-type", "application/json").send(body).map_err(classify)?;
    let status = response.status().as_u16();
    let text = response.body_mut().with_config().limit(1 << 30).read_to_string().map_err(classify)?;
    Ok((status, text))
}

fn classify(err: ureq::Error) -> HttpFailure {
    match err {
        ureq::Error::Timeout(_) => HttpFailure::Timeout,
        ureq::Error::Io(e) if e.kind() == std::io::ErrorKind::TimedOut => HttpFailure::Timeout,
        other => HttpFailure::Transport(other.to_string()),
    }
}
