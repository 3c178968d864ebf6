//! Rate-limited downloads of sensor history and regulatory hourly PM2.5
//! into the ingest file schemas.
//!
//! Downloads only ever land on disk; a JSON manifest in the output
//! directory records every window so an interrupted job can be re-run and
//! will skip what already completed.

mod clock;
mod sources;
mod transport;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, Datelike, TimeDelta, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::schema;
use crate::time::format_timestamp;
use crate::{Error, Result};

pub use clock::{Clock, ManualClock, RateLimiter, SystemClock};
pub use sources::{
    aqs_request, parse_aqs, parse_sensor_history, sensor_history_request, split_site_id, AQS_API_BASE,
    AQS_PM25_PARAM, SENSOR_API_BASE,
};
pub use transport::{HttpTransport, RecordingTransport, ReplayTransport, Request, Response, Transport};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    SensorApi,
    AqsApi,
}

impl Source {
    fn dir(&self) -> &'static str {
        match self {
            Source::SensorApi => "sensor",
            Source::AqsApi => "aqs",
        }
    }

    pub fn default_base_url(&self) -> &'static str {
        match self {
            Source::SensorApi => SENSOR_API_BASE,
            Source::AqsApi => AQS_API_BASE,
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::SensorApi => "sensor_api",
            Source::AqsApi => "aqs_api",
        })
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "sensor_api" | "sensor" | "purpleair" => Ok(Source::SensorApi),
            "aqs_api" | "aqs" => Ok(Source::AqsApi),
            other => Err(Error::InvalidArgument(format!("unknown source `{other}`"))),
        }
    }
}

/// API credentials, read from the environment only.
#[derive(Clone)]
pub enum Credentials {
    Sensor { api_key: String },
    Aqs { email: String, key: String },
}

impl fmt::Debug for Credentials {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Credentials::Sensor { .. } => f.write_str("Credentials::Sensor { api_key: <redacted> }"),
            Credentials::Aqs { .. } => f.write_str("Credentials::Aqs { <redacted> }"),
        }
    }
}

impl Credentials {
    pub fn from_env(source: Source) -> Result<Self> {
        let var = |name: &str| {
            std::env::var(name)
                .ok()
                .filter(|v| !v.trim().is_empty())
                .ok_or_else(|| Error::Credential(format!("environment variable {name} is not set")))
        };
        match source {
            Source::SensorApi => Ok(Credentials::Sensor {
                api_key: var("SENSOR_API_KEY")?,
            }),
            Source::AqsApi => Ok(Credentials::Aqs {
                email: var("AQS_EMAIL")?,
                key: var("AQS_KEY")?,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchJob {
    pub source: Source,
    pub ids: Vec<String>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    /// Length of one request window.
    pub window_hours: i64,
    pub rate_limit_per_minute: u32,
    pub concurrency: usize,
    pub base_url: String,
}

impl FetchJob {
    pub fn new(source: Source, ids: Vec<String>, start: DateTime<Utc>, end: DateTime<Utc>) -> Self {
        FetchJob {
            source,
            ids,
            start,
            end,
            window_hours: match source {
                Source::SensorApi => 24 * 5,
                Source::AqsApi => 24 * 30,
            },
            rate_limit_per_minute: match source {
                Source::SensorApi => 30,
                Source::AqsApi => 10,
            },
            concurrency: 4,
            base_url: source.default_base_url().to_string(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start >= self.end {
            return Err(Error::InvalidArgument("fetch range needs start < end".into()));
        }
        if self.window_hours <= 0 {
            return Err(Error::InvalidArgument("window length must be positive".into()));
        }
        if self.rate_limit_per_minute == 0 || self.concurrency == 0 {
            return Err(Error::InvalidArgument("rate limit and concurrency must be positive".into()));
        }
        Ok(())
    }

    /// `[start, end)` split into windows of `window_hours` (the last one
    /// short). AQS windows additionally break at year boundaries, since
    /// that API rejects multi-year requests.
    pub fn windows(&self) -> Vec<(DateTime<Utc>, DateTime<Utc>)> {
        let step = TimeDelta::hours(self.window_hours);
        let mut out = Vec::new();
        let mut s = self.start;
        while s < self.end {
            let mut e = (s + step).min(self.end);
            if self.source == Source::AqsApi {
                let next_year = Utc
                    .with_ymd_and_hms(s.year() + 1, 1, 1, 0, 0, 0)
                    .single()
                    .expect("valid new-year instant");
                e = e.min(next_year);
            }
            out.push((s, e));
            s = e;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub factor: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 1000,
            factor: 2,
        }
    }
}

impl RetryPolicy {
    /// Delay after failed attempt `attempt` (1-based): 1, 2, 4, 8 s by default.
    pub fn delay(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.base_delay_ms * (self.factor as u64).pow(attempt.saturating_sub(1)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub status: WindowStatus,
    /// Relative to the output directory.
    pub file: Option<String>,
    pub rows: usize,
    pub attempts: u32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub id: String,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: Source,
    pub ids: Vec<String>,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub window_hours: i64,
    /// Requests sent during the run that wrote this manifest.
    pub requests: usize,
    pub retries: usize,
    pub windows: Vec<WindowEntry>,
    /// Ids with at least one failed window.
    pub incomplete: Vec<String>,
    /// Failed windows and windows that returned no rows.
    pub gaps: Vec<Gap>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Output files of completed windows, in manifest order.
    pub fn files(&self, out_dir: &Path) -> Vec<PathBuf> {
        self.windows
            .iter()
            .filter(|w| w.status == WindowStatus::Complete)
            .filter_map(|w| w.file.as_ref().map(|f| out_dir.join(f)))
            .collect()
    }
}

fn safe_component(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn window_file(source: Source, id: &str, start: DateTime<Utc>, end: DateTime<Utc>) -> String {
    format!(
        "{}/{}/{}_{}.csv",
        source.dir(),
        safe_component(id),
        start.format("%Y%m%dT%H%M%SZ"),
        end.format("%Y%m%dT%H%M%SZ")
    )
}

enum Attempted {
    Body(String, u32),
    Failed(String, u32),
}

pub struct Fetcher {
    transport: Arc<dyn Transport>,
    clock: Arc<dyn Clock>,
    pub retry: RetryPolicy,
}

#[derive(Default)]
struct Counters {
    requests: usize,
    retries: usize,
}

impl Fetcher {
    pub fn new(transport: Arc<dyn Transport>, clock: Arc<dyn Clock>) -> Self {
        Fetcher {
            transport,
            clock,
            retry: RetryPolicy::default(),
        }
    }

    /// Live HTTP with a 60 s request timeout and the system clock.
    pub fn http() -> Result<Self> {
        Ok(Self::new(
            Arc::new(HttpTransport::new(Duration::from_secs(60))?),
            Arc::new(SystemClock::default()),
        ))
    }

    fn send(&self, req: &Request, limiter: &RateLimiter, counters: &Mutex<Counters>) -> Result<Attempted> {
        let mut last_error = String::new();
        for attempt in 1..=self.retry.max_attempts {
            limiter.acquire(self.clock.as_ref());
            counters.lock().expect("counter lock").requests += 1;
            let retry_after = match self.transport.get(req) {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(Attempted::Body(resp.body, attempt)),
                Ok(resp) if resp.status == 401 || resp.status == 403 => {
                    return Err(Error::Credential(format!(
                        "HTTP {} from {}; check the API credentials",
                        resp.status, req.url
                    )))
                }
                Ok(resp) if resp.status == 429 || resp.status >= 500 => {
                    last_error = format!("HTTP {}", resp.status);
                    resp.retry_after_s.map(Duration::from_secs)
                }
                Ok(resp) => {
                    let snippet: String = resp.body.chars().take(200).collect();
                    return Ok(Attempted::Failed(format!("HTTP {}: {snippet}", resp.status), attempt));
                }
                Err(e) => {
                    last_error = e.to_string();
                    None
                }
            };
            if attempt < self.retry.max_attempts {
                counters.lock().expect("counter lock").retries += 1;
                let delay = self.retry.delay(attempt).max(retry_after.unwrap_or_default());
                log::debug!("{} failed ({last_error}); retrying in {delay:?}", req.url);
                self.clock.sleep(delay);
            }
        }
        Ok(Attempted::Failed(
            format!("gave up after {} attempts: {last_error}", self.retry.max_attempts),
            self.retry.max_attempts,
        ))
    }

    fn fetch_window(
        &self,
        job: &FetchJob,
        creds: &Credentials,
        out_dir: &Path,
        (id, start, end): (&str, DateTime<Utc>, DateTime<Utc>),
        limiter: &RateLimiter,
        counters: &Mutex<Counters>,
    ) -> Result<WindowEntry> {
        let req = match job.source {
            Source::SensorApi => sensor_history_request(&job.base_url, id, start, end, creds),
            Source::AqsApi => aqs_request(&job.base_url, id, start, end, creds)?,
        };
        let mut entry = WindowEntry {
            id: id.to_string(),
            start,
            end,
            status: WindowStatus::Failed,
            file: None,
            rows: 0,
            attempts: 0,
            error: None,
        };
        let (body, attempts) = match self.send(&req, limiter, counters)? {
            Attempted::Body(b, n) => (b, n),
            Attempted::Failed(e, n) => {
                entry.attempts = n;
                entry.error = Some(e);
                return Ok(entry);
            }
        };
        entry.attempts = attempts;
        let rel = window_file(job.source, id, start, end);
        let path = out_dir.join(&rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let written = match job.source {
            Source::SensorApi => parse_sensor_history(id, &body, start, end)
                .and_then(|recs| schema::write_raw(&path, &recs).map(|_| recs.len())),
            Source::AqsApi => {
                parse_aqs(id, &body, start, end).and_then(|recs| schema::write_reference(&path, &recs).map(|_| recs.len()))
            }
        };
        match written {
            Ok(rows) => {
                entry.status = WindowStatus::Complete;
                entry.file = Some(rel);
                entry.rows = rows;
            }
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => entry.error = Some(e.to_string()),
        }
        Ok(entry)
    }

    /// Runs `job`, writing one file per id and window plus the manifest.
    /// Windows already complete in an existing manifest (with their file
    /// still present) are not requested again. A 401/403 aborts the job.
    pub fn run(&self, job: &FetchJob, creds: &Credentials, out_dir: &Path) -> Result<Manifest> {
        job.validate()?;
        std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let manifest_path = out_dir.join(MANIFEST_FILE);
        let previous: BTreeMap<(String, DateTime<Utc>, DateTime<Utc>), WindowEntry> = match manifest_path.exists() {
            true => Manifest::read(&manifest_path)?
                .windows
                .into_iter()
                .filter(|w| w.status == WindowStatus::Complete)
                .filter(|w| w.file.as_ref().is_some_and(|f| out_dir.join(f).exists()))
                .map(|w| ((w.id.clone(), w.start, w.end), w))
                .collect(),
            false => BTreeMap::new(),
        };

        let mut done = BTreeMap::new();
        let mut queue = VecDeque::new();
        for id in &job.ids {
            for (s, e) in job.windows() {
                let key = (id.clone(), s, e);
                match previous.get(&key) {
                    Some(w) => {
                        done.insert(key, w.clone());
                    }
                    None => queue.push_back(key),
                }
            }
        }

        let limiter = RateLimiter::new(job.rate_limit_per_minute);
        let counters = Mutex::new(Counters::default());
        let queue = Mutex::new(queue);
        let results = Mutex::new(done);
        let fatal: Mutex<Option<Error>> = Mutex::new(None);
        let workers = job.concurrency.min(queue.lock().expect("queue").len()).max(1);
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if fatal.lock().expect("fatal lock").is_some() {
                        return;
                    }
                    let Some(key) = queue.lock().expect("queue lock").pop_front() else {
                        return;
                    };
                    match self.fetch_window(job, creds, out_dir, (&key.0, key.1, key.2), &limiter, &counters) {
                        Ok(entry) => {
                            results.lock().expect("results lock").insert(key, entry);
                        }
                        Err(e) => {
                            fatal.lock().expect("fatal lock").get_or_insert(e);
                            return;
                        }
                    }
                });
            }
        });
        if let Some(e) = fatal.into_inner().expect("fatal lock") {
            return Err(e);
        }

        let windows: Vec<WindowEntry> = results.into_inner().expect("results lock").into_values().collect();
        let mut incomplete: Vec<String> = windows
            .iter()
            .filter(|w| w.status == WindowStatus::Failed)
            .map(|w| w.id.clone())
            .collect();
        incomplete.dedup();
        let gaps = windows
            .iter()
            .filter_map(|w| {
                let reason = match (w.status, w.rows) {
                    (WindowStatus::Failed, _) => w.error.clone().unwrap_or_else(|| "failed".into()),
                    (WindowStatus::Complete, 0) => "no rows returned".into(),
                    _ => return None,
                };
                Some(Gap {
                    id: w.id.clone(),
                    start: w.start,
                    end: w.end,
                    reason,
                })
            })
            .collect();
        let counters = counters.into_inner().expect("counter lock");
        let manifest = Manifest {
            source: job.source,
            ids: job.ids.clone(),
            start: job.start,
            end: job.end,
            window_hours: job.window_hours,
            requests: counters.requests,
            retries: counters.retries,
            windows,
            incomplete,
            gaps,
        };
        manifest.write(&manifest_path)?;
        log::info!(
            "{}: {} requests, {} retries, {} windows, {} incomplete ids ({} to {})",
            job.source,
            manifest.requests,
            manifest.retries,
            manifest.windows.len(),
            manifest.incomplete.len(),
            format_timestamp(&job.start),
            format_timestamp(&job.end)
        );
        Ok(manifest)
    }
}

/// Sensor history for `job.ids` in the raw ingest schema.
pub fn fetch_sensor_history(fetcher: &Fetcher, job: &FetchJob, creds: &Credentials, out_dir: &Path) -> Result<Manifest> {
    if job.source != Source::SensorApi {
        return Err(Error::InvalidArgument("fetch_sensor_history needs a sensor_api job".into()));
    }
    fetcher.run(job, creds, out_dir)
}

/// Hourly regulatory PM2.5 for AQS site ids in the reference schema.
pub fn fetch_reference_hourly(fetcher: &Fetcher, job: &FetchJob, creds: &Credentials, out_dir: &Path) -> Result<Manifest> {
    if job.source != Source::AqsApi {
        return Err(Error::InvalidArgument("fetch_reference_hourly needs an aqs_api job".into()));
    }
    fetcher.run(job, creds, out_dir)
}
