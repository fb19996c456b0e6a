//! Minimal blocking HTTP transport shared by the LLM backend and the
//! literature client. Everything above this layer treats bodies as text.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use crate::error::TransportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub query: Vec<(String, String)>,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        HttpRequest { method: Method::Get, url: url.into(), query: Vec::new(), headers: Vec::new(), body: None }
    }

    pub fn post(url: impl Into<String>, body: String) -> Self {
        HttpRequest { method: Method::Post, url: url.into(), query: Vec::new(), headers: Vec::new(), body: Some(body) }
    }

    pub fn query(mut self, key: &str, value: impl Into<String>) -> Self {
        self.query.push((key.to_string(), value.into()));
        self
    }

    pub fn header(mut self, key: &str, value: impl Into<String>) -> Self {
        self.headers.push((key.to_string(), value.into()));
        self
    }
}

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

pub trait HttpTransport: Send + Sync {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError>;
}

/// `ureq`-backed transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        UreqTransport { agent }
    }
}

impl HttpTransport for UreqTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        let err = |e: ureq::Error| TransportError(format!("{}: {e}", request.url));
        let mut response = match request.method {
            Method::Get => {
                let mut req = self.agent.get(&request.url);
                for (k, v) in &request.query {
                    req = req.query(k, v);
                }
                for (k, v) in &request.headers {
                    req = req.header(k, v);
                }
                req.call().map_err(err)?
            }
            Method::Post => {
                let mut req = self.agent.post(&request.url);
                for (k, v) in &request.query {
                    req = req.query(k, v);
                }
                for (k, v) in &request.headers {
                    req = req.header(k, v);
                }
                req.send(request.body.as_deref().unwrap_or("")).map_err(err)?
            }
        };
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(err)?;
        Ok(HttpResponse { status, body })
    }
}

/// Wraps a transport and counts requests that reach it.
pub struct CountingTransport {
    inner: Arc<dyn HttpTransport>,
    count: AtomicU64,
}

impl CountingTransport {
    pub fn new(inner: Arc<dyn HttpTransport>) -> Self {
        CountingTransport { inner, count: AtomicU64::new(0) }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::SeqCst)
    }
}

impl HttpTransport for CountingTransport {
    fn send(&self, request: &HttpRequest) -> Result<HttpResponse, TransportError> {
        self.count.fetch_add(1, Ordering::SeqCst);
        self.inner.send(request)
    }
}
