//! Shared plumbing for inference-service clients: error classification,
//! exponential backoff and a bounded parallel map.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Connection failures, timeouts, 429 and 5xx responses.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend rejected request: {0}")]
    Rejected(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("backend gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: String },
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }

    pub(crate) fn from_reqwest(e: reqwest::Error) -> BackendError {
        if e.is_timeout() || e.is_connect() || e.is_request() {
            BackendError::Transient(e.to_string())
        } else if e.is_decode() {
            BackendError::Malformed(e.to_string())
        } else {
            BackendError::Rejected(e.to_string())
        }
    }

    pub(crate) fn from_status(status: reqwest::StatusCode, body: &str) -> BackendError {
        let msg = format!("HTTP {status}: {}", body.chars().take(200).collect::<String>());
        if status.as_u16() == 429 || status.is_server_error() {
            BackendError::Transient(msg)
        } else {
            BackendError::Rejected(msg)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 4,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            max_retries: 0,
            base_delay_ms: 0,
            max_delay_ms: 0,
        }
    }

    /// Delay before retry number `retry` (0-based): base * 2^retry, capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }

    /// Runs `op` until it succeeds, fails permanently, or retries run out.
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let mut retry = 0;
        loop {
            match op() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_transient() => {
                    if retry >= self.max_retries {
                        return Err(BackendError::Exhausted {
                            attempts: retry + 1,
                            last: e.to_string(),
                        });
                    }
                    let d = self.delay(retry);
                    log::debug!("retrying after {d:?}: {e}");
                    if !d.is_zero() {
                        std::thread::sleep(d);
                    }
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Applies `f` to every item on at most `max_inflight` threads.
///
/// Results come back in input order. Once any call fails, workers stop
/// taking new items; items never attempted are `None`.
pub fn bounded_map<T, R, E, F>(items: &[T], max_inflight: usize, f: F) -> Vec<Option<Result<R, E>>>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync,
{
    let workers = max_inflight.max(1).min(items.len().max(1));
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<R, E>>>> =
        Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::Acquire) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::AcqRel);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                if r.is_err() {
                    stop.store(true, Ordering::Release);
                }
                slots.lock().expect("result slots poisoned")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("result slots poisoned")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::Cell;

    #[test]
    fn backoff_doubles_and_caps() {
        let p = RetryPolicy {
            max_retries: 10,
            base_delay_ms: 100,
            max_delay_ms: 1000,
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(3), Duration::from_millis(800));
        assert_eq!(p.delay(4), Duration::from_millis(1000));
        assert_eq!(p.delay(60), Duration::from_millis(1000));
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let calls = Cell::new(0);
        let p = RetryPolicy { max_retries: 3, ..RetryPolicy::none() };
        let r = p.run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(BackendError::Transient("503".into()))
            } else {
                Ok(7)
            }
        });
        assert_eq!(r, Ok(7));
        assert_eq!(calls.get(), 3);
    }

    #[test]
    fn gives_up_and_does_not_retry_permanent() {
        let calls = Cell::new(0);
        let p = RetryPolicy { max_retries: 2, ..RetryPolicy::none() };
        let r: Result<(), _> = p.run(|| {
            calls.set(calls.get() + 1);
            Err(BackendError::Transient("down".into()))
        });
        assert!(matches!(r, Err(BackendError::Exhausted { attempts: 3, .. })));
        assert_eq!(calls.get(), 3);

        calls.set(0);
        let r: Result<(), _> = p.run(|| {
            calls.set(calls.get() + 1);
            Err(BackendError::Malformed("{".into()))
        });
        assert!(matches!(r, Err(BackendError::Malformed(_))));
        assert_eq!(calls.get(), 1);
    }

    #[test]
    fn bounded_map_preserves_order() {
        let items: Vec<u32> = (0..100).collect();
        let out = bounded_map(&items, 8, |_, &x| Ok::<_, ()>(x * 2));
        let vals: Vec<u32> = out.into_iter().map(|r| r.unwrap().unwrap()).collect();
        assert_eq!(vals, items.iter().map(|x| x * 2).collect::<Vec<_>>());
        assert!(bounded_map(&[] as &[u32], 4, |_, &x| Ok::<_, ()>(x)).is_empty());
    }

    #[test]
    fn bounded_map_stops_after_failure() {
        let items: Vec<u32> = (0..1000).collect();
        let out = bounded_map(&items, 1, |_, &x| if x == 10 { Err(x) } else { Ok(x) });
        assert_eq!(out[10], Some(Err(10)));
        assert!(out[11..].iter().all(Option::is_none));
        assert!(out[..10].iter().all(|r| matches!(r, Some(Ok(_)))));
    }
}
