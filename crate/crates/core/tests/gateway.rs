use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use webplan_core::llm::{
    CompletionRequest, Gateway, GatewayConfig, GatewayMode, LlmError, Message, RetryPolicy, Transport, TransportError,
};

/// Echoes the user text with a call counter; can fail the first calls.
#[derive(Default)]
struct Stub {
    calls: AtomicUsize,
    fail_first: usize,
    transient: bool,
    no_n: bool,
    sleep: Option<Duration>,
    in_flight: AtomicUsize,
    peak: Mutex<usize>,
    seen_n: Mutex<Vec<u32>>,
}

impl Transport for Stub {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, TransportError> {
        let call = self.calls.fetch_add(1, Ordering::SeqCst);
        self.seen_n.lock().unwrap().push(req.n_samples);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        {
            let mut peak = self.peak.lock().unwrap();
            *peak = (*peak).max(now);
        }
        if let Some(d) = self.sleep {
            thread::sleep(d);
        }
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        if call < self.fail_first {
            return Err(if self.transient {
                TransportError::transient("503")
            } else {
                TransportError::permanent("401")
            });
        }
        let text = req.messages.last().map(|m| m.text.clone()).unwrap_or_default();
        Ok((0..req.n_samples).map(|i| format!("{text}#{call}.{i}")).collect())
    }

    fn supports_n(&self) -> bool {
        !self.no_n
    }
}

fn request(text: &str, n: u32) -> CompletionRequest {
    CompletionRequest {
        messages: vec![Message::system("sys"), Message::user(text)],
        temperature: 1.0,
        n_samples: n,
        max_tokens: 64,
        model_name: "stub".into(),
    }
}

fn config(mode: GatewayMode, path: Option<std::path::PathBuf>) -> GatewayConfig {
    GatewayConfig {
        mode,
        transcript: path,
        retry: RetryPolicy::no_delay(3),
        ..GatewayConfig::default()
    }
}

#[test]
fn replay_reproduces_recording_without_network() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let stub = Arc::new(Stub::default());
    let rec = Gateway::new(config(GatewayMode::Record, Some(path.clone())), Some(stub.clone())).unwrap();
    let a = rec.complete(&request("a", 3)).unwrap();
    let b = rec.complete(&request("b", 1)).unwrap();
    assert_eq!(stub.calls.load(Ordering::SeqCst), 2);

    let counting = Arc::new(Stub::default());
    let rep = Gateway::new(config(GatewayMode::Replay, Some(path.clone())), Some(counting.clone())).unwrap();
    assert_eq!(rep.complete(&request("a", 3)).unwrap(), a);
    assert_eq!(rep.complete(&request("b", 1)).unwrap(), b);
    assert_eq!(counting.calls.load(Ordering::SeqCst), 0);
    assert_eq!(rep.transport_calls(), 0);
    assert_eq!(rep.cache_hits(), 2);

    let rep = Gateway::new(config(GatewayMode::Replay, Some(path)), None).unwrap();
    assert!(matches!(rep.complete(&request("c", 1)), Err(LlmError::CacheMiss(_))));
    // Any change to the request is a different key.
    let mut hotter = request("a", 3);
    hotter.temperature = 0.5;
    assert!(matches!(rep.complete(&hotter), Err(LlmError::CacheMiss(_))));
}

#[test]
fn recording_appends_to_an_existing_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let stub = Arc::new(Stub::default());
    let first = Gateway::new(config(GatewayMode::Record, Some(path.clone())), Some(stub.clone())).unwrap();
    let a = first.complete(&request("a", 1)).unwrap();
    drop(first);

    let second = Gateway::new(config(GatewayMode::Record, Some(path.clone())), Some(stub.clone())).unwrap();
    assert_eq!(second.complete(&request("a", 1)).unwrap(), a);
    second.complete(&request("b", 1)).unwrap();
    assert_eq!(stub.calls.load(Ordering::SeqCst), 2);
    let lines = std::fs::read_to_string(&path).unwrap().lines().count();
    assert_eq!(lines, 2);
}

#[test]
fn live_mode_caches_identical_requests() {
    let stub = Arc::new(Stub::default());
    let gw = Gateway::new(config(GatewayMode::Live, None), Some(stub.clone())).unwrap();
    let a = gw.complete(&request("a", 2)).unwrap();
    assert_eq!(gw.complete(&request("a", 2)).unwrap(), a);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn transient_failures_are_retried() {
    let stub = Arc::new(Stub {
        fail_first: 2,
        transient: true,
        ..Stub::default()
    });
    let gw = Gateway::new(config(GatewayMode::Live, None), Some(stub.clone())).unwrap();
    assert_eq!(gw.complete(&request("a", 1)).unwrap().len(), 1);
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
}

#[test]
fn retries_give_up_after_the_budget() {
    let stub = Arc::new(Stub {
        fail_first: 100,
        transient: true,
        ..Stub::default()
    });
    let gw = Gateway::new(config(GatewayMode::Live, None), Some(stub.clone())).unwrap();
    match gw.complete(&request("a", 1)) {
        Err(LlmError::Transport { attempts, source }) => {
            assert_eq!(attempts, 4);
            assert!(source.transient);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(stub.calls.load(Ordering::SeqCst), 4);
}

#[test]
fn permanent_failures_are_not_retried() {
    let stub = Arc::new(Stub {
        fail_first: 1,
        ..Stub::default()
    });
    let gw = Gateway::new(config(GatewayMode::Live, None), Some(stub.clone())).unwrap();
    assert!(matches!(
        gw.complete(&request("a", 1)),
        Err(LlmError::Transport { attempts: 1, .. })
    ));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn providers_without_n_get_sequential_single_samples() {
    let stub = Arc::new(Stub {
        no_n: true,
        ..Stub::default()
    });
    let gw = Gateway::new(config(GatewayMode::Live, None), Some(stub.clone())).unwrap();
    let out = gw.complete(&request("a", 4)).unwrap();
    assert_eq!(out.len(), 4);
    assert_eq!(*stub.seen_n.lock().unwrap(), vec![1, 1, 1, 1]);
}

#[test]
fn zero_samples_is_rejected() {
    let gw = Gateway::new(config(GatewayMode::Live, None), Some(Arc::new(Stub::default()))).unwrap();
    assert!(matches!(
        gw.complete(&request("a", 0)),
        Err(LlmError::InvalidRequest(_))
    ));
}

#[test]
fn in_flight_calls_are_bounded() {
    let stub = Arc::new(Stub {
        sleep: Some(Duration::from_millis(20)),
        ..Stub::default()
    });
    let cfg = GatewayConfig {
        max_in_flight: 2,
        ..config(GatewayMode::Live, None)
    };
    let gw = Arc::new(Gateway::new(cfg, Some(stub.clone())).unwrap());
    thread::scope(|s| {
        for i in 0..8 {
            let gw = gw.clone();
            s.spawn(move || gw.complete(&request(&format!("q{i}"), 1)).unwrap());
        }
    });
    assert_eq!(stub.calls.load(Ordering::SeqCst), 8);
    assert!(*stub.peak.lock().unwrap() <= 2);
}

#[test]
fn modes_require_their_inputs() {
    assert!(Gateway::new(config(GatewayMode::Live, None), None).is_err());
    assert!(Gateway::new(config(GatewayMode::Record, None), Some(Arc::new(Stub::default()))).is_err());
    assert!(Gateway::new(config(GatewayMode::Replay, None), None).is_err());
}
