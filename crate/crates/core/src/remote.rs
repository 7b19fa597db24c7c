//! Blocking HTTP transport for remote oracle and embedding services.

use std::io::Read;
use std::time::Duration;

use crate::error::OracleError;

/// POSTs `body` as `application/octet-stream` and returns the reply body.
/// Transport failures and non-2xx statuses map to [`OracleError::Transport`].
pub fn post_bytes(url: &str, body: &[u8], timeout: Duration) -> Result<Vec<u8>, OracleError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let mut resp = agent
        .post(url)
        .header("Content-Type", "application/octet-stream")
        .send(body)
        .map_err(|e| OracleError::Transport(format!("{url}: {e}")))?;
    let status = resp.status().as_u16();
    let mut out = Vec::new();
    resp.body_mut()
        .with_config()
        .limit(1 << 30)
        .reader()
        .read_to_end(&mut out)
        .map_err(|e| OracleError::Transport(format!("{url}: reading reply: {e}")))?;
    if !(200..300).contains(&status) {
        return Err(OracleError::Transport(format!(
            "{url}: HTTP {status}: {}",
            String::from_utf8_lossy(&out[..out.len().min(200)])
        )));
    }
    Ok(out)
}
