use std::collections::HashMap;
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};

use super::cache::Cache;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Blocking GET. Implementations return non-2xx responses as `Ok` so the
/// caller can inspect the body; only transport failures are errors.
pub trait Transport: Send + Sync {
    fn get(&self, url: &str, query: &[(String, String)]) -> Result<HttpResponse>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        UreqTransport::new(Duration::from_secs(300))
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str, query: &[(String, String)]) -> Result<HttpResponse> {
        let net_err = |e: ureq::Error| Error::Network {
            url: url.to_string(),
            retryable: true,
            message: e.to_string(),
        };
        let mut resp = self
            .agent
            .get(url)
            .query_pairs(query.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .call()
            .map_err(net_err)?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(1 << 30)
            .read_to_vec()
            .map_err(net_err)?;
        Ok(HttpResponse { status, body })
    }
}

/// Caps concurrent requests per host.
#[derive(Debug)]
pub struct HostLimiter {
    max_in_flight: usize,
    in_flight: Mutex<HashMap<String, usize>>,
    freed: Condvar,
}

pub struct LimiterGuard<'a> {
    limiter: &'a HostLimiter,
    host: String,
}

impl HostLimiter {
    pub fn new(max_in_flight: usize) -> Self {
        HostLimiter {
            max_in_flight: max_in_flight.max(1),
            in_flight: Mutex::new(HashMap::new()),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self, host: &str) -> LimiterGuard<'_> {
        let mut map = self.in_flight.lock().unwrap();
        while map.get(host).copied().unwrap_or(0) >= self.max_in_flight {
            map = self.freed.wait(map).unwrap();
        }
        *map.entry(host.to_string()).or_insert(0) += 1;
        LimiterGuard {
            limiter: self,
            host: host.to_string(),
        }
    }
}

impl Drop for LimiterGuard<'_> {
    fn drop(&mut self) {
        let mut map = self.limiter.in_flight.lock().unwrap();
        if let Some(n) = map.get_mut(&self.host) {
            *n -= 1;
        }
        self.limiter.freed.notify_all();
    }
}

fn host_of(url: &str) -> &str {
    let rest = url.split_once("://").map_or(url, |(_, r)| r);
    rest.split('/').next().unwrap_or(rest)
}

/// Shared client for the PVGIS and Open-Meteo endpoints: per-host request
/// limiting, retry of transient failures and the response cache.
pub struct ApiClient {
    transport: Arc<dyn Transport>,
    limiter: HostLimiter,
    cache: Option<Cache>,
    max_attempts: u32,
    backoff: Duration,
}

impl ApiClient {
    pub fn new(transport: Arc<dyn Transport>, cache: Option<Cache>) -> Self {
        ApiClient {
            transport,
            limiter: HostLimiter::new(2),
            cache,
            max_attempts: 3,
            backoff: Duration::from_secs(2),
        }
    }

    /// Client backed by real HTTP.
    pub fn live(cache: Option<Cache>) -> Self {
        ApiClient::new(Arc::new(UreqTransport::default()), cache)
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = HostLimiter::new(n);
        self
    }

    pub fn with_retry(mut self, max_attempts: u32, backoff: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.backoff = backoff;
        self
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    /// Returns the body of a successful response, from cache when present.
    /// Non-success responses are handed to `classify` to build the error and
    /// are never cached.
    pub(crate) fn get_body(
        &self,
        url: &str,
        query: &[(String, String)],
        classify: impl Fn(u16, &[u8]) -> Error,
    ) -> Result<Vec<u8>> {
        let key = Cache::key(url, query);
        if let Some(cache) = &self.cache {
            if let Some(body) = cache.read(&key)? {
                debug!("cache hit {key} for {url}");
                return Ok(body);
            }
        }
        let mut attempt = 0;
        let body = loop {
            attempt += 1;
            let result = {
                let _slot = self.limiter.acquire(host_of(url));
                self.transport.get(url, query)
            };
            let err = match result {
                Ok(resp) if (200..300).contains(&resp.status) => break resp.body,
                Ok(resp) if resp.status == 429 || resp.status >= 500 => Error::Network {
                    url: url.to_string(),
                    retryable: true,
                    message: format!("HTTP {}", resp.status),
                },
                Ok(resp) => return Err(classify(resp.status, &resp.body)),
                Err(e) => e,
            };
            if !err.is_retryable() || attempt >= self.max_attempts {
                return Err(err);
            }
            warn!("attempt {attempt} for {url} failed: {err}; retrying");
            thread::sleep(self.backoff * attempt);
        };
        if let Some(cache) = &self.cache {
            cache.write(&key, &body)?;
        }
        Ok(body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Slow {
        current: AtomicUsize,
        peak: AtomicUsize,
    }

    impl Transport for Slow {
        fn get(&self, _url: &str, _q: &[(String, String)]) -> Result<HttpResponse> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            thread::sleep(Duration::from_millis(20));
            self.current.fetch_sub(1, Ordering::SeqCst);
            Ok(HttpResponse {
                status: 200,
                body: b"{}".to_vec(),
            })
        }
    }

    #[test]
    fn limiter_caps_in_flight_requests() {
        let transport = Arc::new(Slow {
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let client = Arc::new(ApiClient::new(transport.clone(), None));
        let handles: Vec<_> = (0..8)
            .map(|i| {
                let client = client.clone();
                thread::spawn(move || {
                    let q = vec![("i".to_string(), i.to_string())];
                    client
                        .get_body("https://example.org/x", &q, |_, _| Error::Checksum)
                        .unwrap()
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(transport.peak.load(Ordering::SeqCst) <= 2);
    }

    struct Flaky {
        calls: AtomicUsize,
        status: u16,
    }

    impl Transport for Flaky {
        fn get(&self, _url: &str, _q: &[(String, String)]) -> Result<HttpResponse> {
            self.calls.fetch_add(1, Ordering::SeqCst);
            Ok(HttpResponse {
                status: self.status,
                body: Vec::new(),
            })
        }
    }

    #[test]
    fn retries_only_transient_failures() {
        let t = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            status: 503,
        });
        let client = ApiClient::new(t.clone(), None).with_retry(3, Duration::ZERO);
        let err = client.get_body("https://h/x", &[], |_, _| Error::Checksum).unwrap_err();
        assert!(err.is_retryable());
        assert_eq!(t.calls.load(Ordering::SeqCst), 3);

        let t = Arc::new(Flaky {
            calls: AtomicUsize::new(0),
            status: 400,
        });
        let client = ApiClient::new(t.clone(), None).with_retry(3, Duration::ZERO);
        let err = client.get_body("https://h/x", &[], |_, _| Error::Checksum).unwrap_err();
        assert!(matches!(err, Error::Checksum));
        assert_eq!(t.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn host_extraction() {
        assert_eq!(
            host_of("https://re.jrc.ec.europa.eu/api/v5_2/seriescalc"),
            "re.jrc.ec.europa.eu"
        );
    }
}
