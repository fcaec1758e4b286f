//! Retrying, caching gateway in front of a [`Transport`].
//!
//! Transcript files are line-delimited JSON, one object per request:
//!
//! ```json
//! {"key":"<sha256 hex>","request":{...},"completions":["...", "..."]}
//! ```
//!
//! The first record for a key wins when a file holds duplicates.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmError, Transport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayMode {
    /// Call the transport; cache in memory only.
    Live,
    /// Serve from the transcript when possible, otherwise call the
    /// transport and append the answer to the transcript.
    Record,
    /// Serve only from the transcript; never touch the transport.
    Replay,
}

impl GatewayMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GatewayMode::Live => "live",
            GatewayMode::Record => "record",
            GatewayMode::Replay => "replay",
        }
    }
}

impl FromStr for GatewayMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(GatewayMode::Live),
            "record" => Ok(GatewayMode::Record),
            "replay" => Ok(GatewayMode::Replay),
            other => Err(format!("unknown mode {other:?} (expected live, record or replay)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 4,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Delay before retry number `attempt` (0-based): `base * 2^attempt`,
    /// capped at `max_delay`.
    pub fn delay(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub mode: GatewayMode,
    pub transcript: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            mode: GatewayMode::Live,
            transcript: None,
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub key: String,
    pub request: CompletionRequest,
    pub completions: Vec<String>,
}

/// Counting semaphore bounding concurrent transport calls.
struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.max {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Thread-safe completion gateway. Identical requests are answered from the
/// cache, so a transcript recorded once replays bit-identically.
pub struct Gateway {
    mode: GatewayMode,
    transport: Option<Arc<dyn Transport>>,
    retry: RetryPolicy,
    limiter: Limiter,
    cache: RwLock<HashMap<String, Vec<String>>>,
    transcript_path: Option<PathBuf>,
    writer: Mutex<Option<File>>,
    transport_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("mode", &self.mode)
            .field("transcript", &self.transcript_path)
            .finish_non_exhaustive()
    }
}

impl Gateway {
    /// Live gateway with default retry policy and no transcript.
    pub fn live(transport: Arc<dyn Transport>) -> Self {
        Self::new(GatewayConfig::default(), Some(transport)).expect("live gateway needs no file")
    }

    pub fn new(config: GatewayConfig, transport: Option<Arc<dyn Transport>>) -> Result<Self, LlmError> {
        let mut cache = HashMap::new();
        let mut writer = None;
        match config.mode {
            GatewayMode::Live => {
                if transport.is_none() {
                    return Err(LlmError::InvalidRequest("live mode needs a transport".into()));
                }
            }
            GatewayMode::Record => {
                let path = config
                    .transcript
                    .as_ref()
                    .ok_or_else(|| LlmError::InvalidRequest("record mode needs a transcript path".into()))?;
                if transport.is_none() {
                    return Err(LlmError::InvalidRequest("record mode needs a transport".into()));
                }
                if path.exists() {
                    cache = load_transcript(path)?;
                }
                let file = OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| transcript_error(path, e.to_string()))?;
                writer = Some(file);
            }
            GatewayMode::Replay => {
                let path = config
                    .transcript
                    .as_ref()
                    .ok_or_else(|| LlmError::InvalidRequest("replay mode needs a transcript path".into()))?;
                cache = load_transcript(path)?;
            }
        }
        Ok(Self {
            mode: config.mode,
            transport,
            retry: config.retry,
            limiter: Limiter::new(config.max_in_flight),
            cache: RwLock::new(cache),
            transcript_path: config.transcript,
            writer: Mutex::new(writer),
            transport_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    /// Calls made to the transport, counting every retry.
    pub fn transport_calls(&self) -> u64 {
        self.transport_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    /// Returns exactly `req.n_samples` completions.
    pub fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        if req.n_samples == 0 {
            return Err(LlmError::InvalidRequest("n_samples must be at least 1".into()));
        }
        let key = req.cache_key();
        if let Some(hit) = self.cache.read().unwrap_or_else(|e| e.into_inner()).get(&key) {
            self.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        if self.mode == GatewayMode::Replay {
            return Err(LlmError::CacheMiss(key));
        }
        let transport = self
            .transport
            .as_ref()
            .ok_or_else(|| LlmError::InvalidRequest("no transport configured".into()))?;

        let completions = if transport.supports_n() {
            let mut out = self.call_with_retry(transport.as_ref(), req)?;
            if out.len() < req.n_samples as usize {
                return Err(LlmError::WrongSampleCount {
                    expected: req.n_samples,
                    got: out.len(),
                });
            }
            out.truncate(req.n_samples as usize);
            out
        } else {
            let single = CompletionRequest {
                n_samples: 1,
                ..req.clone()
            };
            let mut out = Vec::with_capacity(req.n_samples as usize);
            for _ in 0..req.n_samples {
                let mut one = self.call_with_retry(transport.as_ref(), &single)?;
                if one.is_empty() {
                    return Err(LlmError::WrongSampleCount { expected: 1, got: 0 });
                }
                out.push(one.swap_remove(0));
            }
            out
        };

        let mut cache = self.cache.write().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = cache.get(&key) {
            // A concurrent caller won the race; keep the first answer.
            return Ok(existing.clone());
        }
        cache.insert(key.clone(), completions.clone());
        drop(cache);
        self.append(TranscriptRecord {
            key,
            request: req.clone(),
            completions: completions.clone(),
        })?;
        Ok(completions)
    }

    fn call_with_retry(&self, transport: &dyn Transport, req: &CompletionRequest) -> Result<Vec<String>, LlmError> {
        let mut attempt = 0;
        loop {
            let result = {
                let _permit = self.limiter.acquire();
                self.transport_calls.fetch_add(1, Ordering::Relaxed);
                transport.complete(req)
            };
            match result {
                Ok(out) => return Ok(out),
                Err(e) if e.transient && attempt < self.retry.max_retries => {
                    let delay = self.retry.delay(attempt);
                    tracing::warn!(attempt, ?delay, error = %e, "transient transport failure, retrying");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                Err(e) => {
                    return Err(LlmError::Transport {
                        attempts: attempt + 1,
                        source: e,
                    })
                }
            }
        }
    }

    fn append(&self, record: TranscriptRecord) -> Result<(), LlmError> {
        let mut guard = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let Some(file) = guard.as_mut() else {
            return Ok(());
        };
        let path = self.transcript_path.as_deref().unwrap_or(Path::new(""));
        let mut line = serde_json::to_string(&record).map_err(|e| transcript_error(path, e.to_string()))?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| transcript_error(path, e.to_string()))
    }
}

fn transcript_error(path: &Path, message: String) -> LlmError {
    LlmError::Transcript {
        path: path.display().to_string(),
        message,
    }
}

/// Reads a transcript file into a key → completions map.
pub fn load_transcript(path: &Path) -> Result<HashMap<String, Vec<String>>, LlmError> {
    let file = File::open(path).map_err(|e| transcript_error(path, e.to_string()))?;
    let mut out = HashMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| transcript_error(path, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord =
            serde_json::from_str(&line).map_err(|e| transcript_error(path, format!("line {}: {e}", i + 1)))?;
        out.entry(record.key).or_insert(record.completions);
    }
    Ok(out)
}
