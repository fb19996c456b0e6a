//! Provider-agnostic completion entry point: render, call, retry, truncate.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::LlmError;
use crate::llm::backend::{Backend, CompletionRequest};
use crate::llm::template::{Bindings, PromptLibrary};
use crate::llm::Llm;
use crate::rng::{stream_rng, Stream};

#[derive(Debug, Clone)]
pub struct Completion {
    pub text: String,
    pub latency: Duration,
    pub backend_id: String,
    /// 1-based attempt that succeeded.
    pub attempt: u32,
}

/// Bounded exponential backoff with jitter.
#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { attempts: 3, base_delay: Duration::from_millis(500), max_delay: Duration::from_secs(8) }
    }
}

impl RetryPolicy {
    /// Delay before retry number `failed` (1-based count of failures so far).
    fn delay(&self, failed: u32, rng: &mut ChaCha8Rng) -> Duration {
        let exp = self.base_delay.saturating_mul(1 << (failed - 1).min(16));
        let capped = exp.min(self.max_delay);
        let jitter_ms = capped.as_millis() as u64 / 2;
        let jitter = if jitter_ms > 0 { rng.random_range(0..=jitter_ms) } else { 0 };
        capped + Duration::from_millis(jitter)
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    library: PromptLibrary,
    policy: RetryPolicy,
    max_response_chars: usize,
    jitter: Mutex<ChaCha8Rng>,
    calls: AtomicU64,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>, library: PromptLibrary, policy: RetryPolicy, seed: u64) -> Self {
        Gateway {
            backend,
            library,
            policy,
            max_response_chars: 65_536,
            jitter: Mutex::new(stream_rng(seed, Stream::Retry)),
            calls: AtomicU64::new(0),
        }
    }

    pub fn with_max_response_chars(mut self, cap: usize) -> Self {
        self.max_response_chars = cap;
        self
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    /// Number of backend calls made (including failed attempts).
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn retry_position(&self) -> u128 {
        self.jitter.lock().unwrap_or_else(|e| e.into_inner()).get_word_pos()
    }

    pub fn set_retry_position(&self, pos: u128) {
        self.jitter.lock().unwrap_or_else(|e| e.into_inner()).set_word_pos(pos);
    }
}

fn truncate_chars(mut text: String, cap: usize) -> String {
    if let Some((idx, _)) = text.char_indices().nth(cap) {
        text.truncate(idx);
    }
    text
}

impl Llm for Gateway {
    fn complete(&self, asset_name: &str, bindings: &Bindings) -> Result<Completion, LlmError> {
        let asset = self.library.asset(asset_name)?;
        let prompt = asset.render(bindings)?;
        let request = CompletionRequest { asset: &asset.name, role: asset.role, prompt: &prompt };
        let attempts = self.policy.attempts.max(1);
        let started = Instant::now();
        let mut last = String::new();
        for attempt in 1..=attempts {
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(&request) {
                Ok(text) => {
                    return Ok(Completion {
                        text: truncate_chars(text, self.max_response_chars),
                        latency: started.elapsed(),
                        backend_id: self.backend.id().to_string(),
                        attempt,
                    })
                }
                Err(e) => {
                    log::warn!("completion `{asset_name}` attempt {attempt}/{attempts} failed: {e}");
                    last = e.0;
                    if attempt < attempts {
                        let delay = {
                            let mut rng = self.jitter.lock().unwrap_or_else(|e| e.into_inner());
                            self.policy.delay(attempt, &mut rng)
                        };
                        if !delay.is_zero() {
                            std::thread::sleep(delay);
                        }
                    }
                }
            }
        }
        Err(LlmError::BackendUnavailable { attempts, last })
    }

    fn library(&self) -> &PromptLibrary {
        &self.library
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::backend::{Script, ScriptReply, ScriptedBackend};
    use crate::llm::template::{bindings, PromptAsset, Role};

    fn library() -> PromptLibrary {
        let mut lib = PromptLibrary::default();
        lib.insert(PromptAsset::new("ask", Role::Optimizer, "Q: {task_description}"));
        lib
    }

    fn no_wait() -> RetryPolicy {
        RetryPolicy { attempts: 3, base_delay: Duration::ZERO, max_delay: Duration::ZERO }
    }

    fn gateway(script: Script) -> Gateway {
        Gateway::new(Arc::new(ScriptedBackend::new(script)), library(), no_wait(), 1)
    }

    #[test]
    fn returns_queued_replies_in_order() {
        let g = gateway(Script::queue(["A", "B"]));
        let b = bindings([("task_description", "t")]);
        assert_eq!(g.complete("ask", &b).unwrap().text, "A");
        assert_eq!(g.complete("ask", &b).unwrap().text, "B");
    }

    #[test]
    fn missing_binding_is_reported_before_any_call() {
        let g = gateway(Script::queue(["A"]));
        let err = g.complete("ask", &Bindings::new()).unwrap_err();
        assert!(matches!(err, LlmError::TemplateBindingMissing { ref placeholder, .. } if placeholder == "task_description"));
        assert_eq!(g.calls(), 0);
    }

    #[test]
    fn two_transport_failures_then_success_is_attempt_three() {
        let script = Script {
            queue: vec![
                ScriptReply::Error { error: "reset".into() },
                ScriptReply::Error { error: "reset".into() },
                ScriptReply::Text("ok".into()),
            ],
            ..Script::default()
        };
        let g = gateway(script);
        let c = g.complete("ask", &bindings([("task_description", "t")])).unwrap();
        assert_eq!(c.attempt, 3);
        assert_eq!(c.text, "ok");
        assert_eq!(c.backend_id, "scripted");
    }

    #[test]
    fn exhausted_retries_are_backend_unavailable() {
        let script = Script { queue: vec![ScriptReply::Error { error: "down".into() }; 3], ..Script::default() };
        let g = gateway(script);
        let err = g.complete("ask", &bindings([("task_description", "t")])).unwrap_err();
        assert!(matches!(err, LlmError::BackendUnavailable { attempts: 3, .. }));
    }

    #[test]
    fn responses_are_truncated() {
        let g = gateway(Script::queue(["héllo world"])).with_max_response_chars(5);
        let c = g.complete("ask", &bindings([("task_description", "t")])).unwrap();
        assert_eq!(c.text, "héllo");
    }

    #[test]
    fn backoff_grows_and_is_capped() {
        let policy = RetryPolicy { attempts: 5, base_delay: Duration::from_millis(100), max_delay: Duration::from_millis(300) };
        let mut rng = stream_rng(0, Stream::Retry);
        let d1 = policy.delay(1, &mut rng);
        let d3 = policy.delay(3, &mut rng);
        assert!(d1 >= Duration::from_millis(100) && d1 <= Duration::from_millis(150));
        assert!(d3 >= Duration::from_millis(300) && d3 <= Duration::from_millis(450));
    }
}
