use std::time::Duration;

use super::{parse_record_line, DetectionSet, Detector, DetectorError};
use crate::dataset::ImageBuffer;

/// Environment variable holding the per-request timeout in milliseconds.
pub const TIMEOUT_ENV: &str = "TRANSPLANT_BENCH_HTTP_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
const DEFAULT_ATTEMPTS: u32 = 3;

/// Client for an inference service exposing `POST /detect`.
///
/// The request body is the PNG-encoded image, `case_id` goes in the query
/// string, and the response is one exchange record. Requests are retried on
/// transport errors and 5xx answers; detection is idempotent.
#[derive(Debug, Clone)]
pub struct HttpDetector {
    base_url: String,
    agent: ureq::Agent,
    attempts: u32,
    backoff: Duration,
}

impl HttpDetector {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::AgentBuilder::new().timeout(timeout).build();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            agent,
            attempts: DEFAULT_ATTEMPTS,
            backoff: Duration::from_millis(100),
        }
    }

    /// Reads the timeout from [`TIMEOUT_ENV`], falling back to 30 s.
    pub fn from_env(base_url: impl Into<String>) -> Self {
        let ms = std::env::var(TIMEOUT_ENV)
            .ok()
            .and_then(|v| v.trim().parse().ok())
            .unwrap_or(DEFAULT_TIMEOUT_MS);
        Self::new(base_url, Duration::from_millis(ms))
    }

    pub fn with_attempts(mut self, attempts: u32, backoff: Duration) -> Self {
        self.attempts = attempts.max(1);
        self.backoff = backoff;
        self
    }

    fn post_once(&self, body: &[u8], case_id: &str) -> Result<String, (bool, DetectorError)> {
        let url = format!("{}/detect", self.base_url);
        match self
            .agent
            .post(&url)
            .query("case_id", case_id)
            .set("Content-Type", "image/png")
            .send_bytes(body)
        {
            Ok(resp) => resp
                .into_string()
                .map_err(|e| (true, DetectorError::Unavailable(e.to_string()))),
            Err(ureq::Error::Status(status, resp)) => {
                let body = resp.into_string().unwrap_or_default();
                Err((status >= 500, DetectorError::Status { status, body }))
            }
            Err(ureq::Error::Transport(t)) => Err((true, DetectorError::Unavailable(t.to_string()))),
        }
    }
}

impl Detector for HttpDetector {
    fn detector_id(&self) -> String {
        format!("http:{}", self.base_url)
    }

    fn detect(&self, image: &ImageBuffer, case_id: &str) -> Result<DetectionSet, DetectorError> {
        let png = image.encode_png();
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            match self.post_once(&png, case_id) {
                Ok(text) => break text,
                Err((retryable, err)) => {
                    if !retryable || attempt >= self.attempts {
                        return Err(err);
                    }
                    std::thread::sleep(self.backoff * attempt);
                }
            }
        };
        let record = parse_record_line(text.trim(), 1).map_err(|e| DetectorError::Protocol(e.to_string()))?;
        if record.case_id != case_id {
            return Err(DetectorError::Protocol(format!(
                "asked for case {case_id}, service answered for {}",
                record.case_id
            )));
        }
        let (set, rejected) = record.into_set();
        if let Some((i, reason)) = rejected.first() {
            return Err(DetectorError::Protocol(format!("detection {i} invalid: {reason}")));
        }
        Ok(set)
    }
}
