use std::thread;
use std::time::Duration;

/// Outcome of a single attempt.
#[derive(Debug)]
pub enum Attempt<T> {
    Done(T),
    /// Transient; try again if attempts remain.
    Retry(String),
    /// Permanent; stop immediately.
    Fail(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
}

impl RetryPolicy {
    /// 3 attempts, 250 ms doubling backoff.
    pub fn embedding() -> Self {
        RetryPolicy {
            max_attempts: 3,
            initial_backoff: Duration::from_millis(250),
        }
    }

    /// First try plus up to 3 retries.
    pub fn generation() -> Self {
        RetryPolicy {
            max_attempts: 4,
            initial_backoff: Duration::from_millis(250),
        }
    }

    pub fn immediate(max_attempts: u32) -> Self {
        RetryPolicy {
            max_attempts,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Runs `op` until it succeeds, fails permanently, or attempts run out.
    /// Errors carry the number of attempts made and the last message.
    pub fn run<T>(&self, mut op: impl FnMut() -> Attempt<T>) -> Result<T, (u32, String)> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 0;
        loop {
            attempt += 1;
            match op() {
                Attempt::Done(value) => return Ok(value),
                Attempt::Fail(message) => return Err((attempt, message)),
                Attempt::Retry(message) if attempt >= self.max_attempts.max(1) => {
                    return Err((attempt, message));
                }
                Attempt::Retry(message) => {
                    tracing::debug!(attempt, %message, "retrying");
                    if !backoff.is_zero() {
                        thread::sleep(backoff);
                    }
                    backoff *= 2;
                }
            }
        }
    }
}

/// 408, 429 and 5xx are transient, other statuses permanent; transport
/// failures are transient.
pub(crate) fn classify_http<T>(err: ureq::Error) -> Attempt<T> {
    match err {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            let message = format!("HTTP {code}: {}", body.chars().take(200).collect::<String>());
            if code == 408 || code == 429 || code >= 500 {
                Attempt::Retry(message)
            } else {
                Attempt::Fail(message)
            }
        }
        ureq::Error::Transport(t) => Attempt::Retry(format!("transport: {t}")),
    }
}
