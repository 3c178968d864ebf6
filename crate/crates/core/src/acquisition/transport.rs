use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Query parameters that carry secrets; never written to recordings.
const SECRET_PARAMS: [&str; 2] = ["email", "key"];

#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub url: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
}

impl Request {
    /// URL plus query string with secret parameters redacted: the lookup
    /// key for recorded responses.
    pub fn fingerprint(&self) -> String {
        let pairs: Vec<(&str, &str)> = self
            .query
            .iter()
            .map(|(k, v)| {
                let v = if SECRET_PARAMS.contains(&k.as_str()) { "REDACTED" } else { v.as_str() };
                (k.as_str(), v)
            })
            .collect();
        match url::Url::parse_with_params(&self.url, &pairs) {
            Ok(u) => u.to_string(),
            Err(_) => self.url.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Response {
    pub status: u16,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_after_s: Option<u64>,
}

/// One HTTP GET. `Err` means the request never produced a response
/// (connection failure, timeout) and is retried like a 5xx.
pub trait Transport: Send + Sync {
    fn get(&self, request: &Request) -> Result<Response>;
}

pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("driftwatch/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        Ok(HttpTransport { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, request: &Request) -> Result<Response> {
        let pairs: Vec<(&str, &str)> = request.query.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
        let url = url::Url::parse_with_params(&request.url, &pairs)
            .map_err(|e| Error::InvalidArgument(format!("bad URL {}: {e}", request.url)))?;
        let mut builder = self.client.get(url);
        for (k, v) in &request.headers {
            builder = builder.header(k, v);
        }
        let resp = builder.send().map_err(|e| Error::Http(e.without_url().to_string()))?;
        let status = resp.status().as_u16();
        let retry_after_s = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse().ok());
        let body = resp.text().map_err(|e| Error::Http(e.without_url().to_string()))?;
        Ok(Response {
            status,
            body,
            retry_after_s,
        })
    }
}

/// Serves responses recorded earlier, keyed by request fingerprint. Each
/// key holds a queue so retried requests can replay a failure then a
/// success.
#[derive(Default)]
pub struct ReplayTransport {
    responses: Mutex<BTreeMap<String, Vec<Response>>>,
    calls: AtomicUsize,
}

impl ReplayTransport {
    pub fn new(responses: BTreeMap<String, Vec<Response>>) -> Self {
        ReplayTransport {
            responses: Mutex::new(responses),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(serde_json::from_str(&text)?))
    }

    pub fn push(&self, fingerprint: impl Into<String>, response: Response) {
        self.responses
            .lock()
            .expect("replay lock")
            .entry(fingerprint.into())
            .or_default()
            .push(response);
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ReplayTransport {
    fn get(&self, request: &Request) -> Result<Response> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = request.fingerprint();
        let mut map = self.responses.lock().expect("replay lock");
        match map.get_mut(&key) {
            // The last response for a key is sticky.
            Some(queue) if queue.len() > 1 => Ok(queue.remove(0)),
            Some(queue) if queue.len() == 1 => Ok(queue[0].clone()),
            _ => Err(Error::Http(format!("no recorded response for {key}"))),
        }
    }
}

/// Wraps a transport and keeps every response for later replay.
pub struct RecordingTransport<T> {
    inner: T,
    log: Mutex<BTreeMap<String, Vec<Response>>>,
}

impl<T: Transport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        RecordingTransport {
            inner,
            log: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&*self.log.lock().expect("record lock"))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

impl<T: Transport> Transport for RecordingTransport<T> {
    fn get(&self, request: &Request) -> Result<Response> {
        let resp = self.inner.get(request)?;
        self.log
            .lock()
            .expect("record lock")
            .entry(request.fingerprint())
            .or_default()
            .push(resp.clone());
        Ok(resp)
    }
}
