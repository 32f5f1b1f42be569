mod common;

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::routing::get;
use axum::{Json, Router};
use bkd_core::beacon::{fetch_pulse, router, serve, spawn_appender, BeaconClient};
use bkd_core::{verify_chain, BeaconError, Pulse, PulseStore};
use common::*;
use tokio::sync::oneshot;

struct TestServer {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl TestServer {
    fn start(app: impl FnOnce() -> Router + Send + 'static) -> Self {
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let (stop, stop_rx) = oneshot::channel::<()>();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, app())
                    .with_graceful_shutdown(async move {
                        let _ = stop_rx.await;
                    })
                    .await
                    .unwrap();
            });
        });
        let addr = addr_rx.recv().unwrap();
        Self {
            addr,
            stop: Some(stop),
            thread: Some(thread),
        }
    }

    fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for TestServer {
    fn drop(&mut self) {
        if let Some(s) = self.stop.take() {
            let _ = s.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn served_chain(len: usize, seed: u64) -> (Arc<PulseStore>, TestServer) {
    let store = Arc::new(random_store(&mut rng(seed), len));
    let s = Arc::clone(&store);
    (store, TestServer::start(move || router(s)))
}

#[test]
fn fetch_by_index_and_latest() {
    let (store, server) = served_chain(10, 1);
    let p3 = fetch_pulse(&server.url(), Some(3)).unwrap();
    assert_eq!(p3, store.get(3).unwrap());
    p3.self_check().unwrap();
    let last = fetch_pulse(&server.url(), None).unwrap();
    assert_eq!(last.index, 9);
}

#[test]
fn missing_index_is_not_found() {
    let (_store, server) = served_chain(10, 2);
    assert!(matches!(
        fetch_pulse(&server.url(), Some(99)),
        Err(BeaconError::NotFound(99))
    ));
}

#[test]
fn empty_beacon_has_no_last_pulse() {
    let server = TestServer::start(|| router(Arc::new(PulseStore::new())));
    assert!(matches!(
        fetch_pulse(&server.url(), None),
        Err(BeaconError::NotFound(_))
    ));
}

#[test]
fn chain_range_and_full_store() {
    let (store, server) = served_chain(25, 3);
    let client = BeaconClient::new(&server.url());
    let range = client.fetch_chain(5, 9).unwrap();
    assert_eq!(range, store.range(5, 9));
    let copy = client.fetch_store().unwrap();
    assert_eq!(copy.snapshot(), store.snapshot());
    assert!(matches!(
        client.fetch_chain(30, 40),
        Err(BeaconError::NotFound(30))
    ));
}

#[test]
fn raw_json_matches_wire_format() {
    let (store, server) = served_chain(4, 4);
    let body = ureq::get(&format!("{}/pulse/2", server.url()))
        .call()
        .unwrap()
        .body_mut()
        .read_to_string()
        .unwrap();
    let v: serde_json::Value = serde_json::from_str(&body).unwrap();
    let p = store.get(2).unwrap();
    assert_eq!(v["version"], "bkd-1");
    assert_eq!(v["index"], 2);
    assert_eq!(v["timestamp"], p.timestamp);
    assert_eq!(v["randOut"], hex::encode(p.rand_out));
    assert_eq!(v["prevHash"], hex::encode(p.prev_hash));
    assert_eq!(v["chainHash"], hex::encode(p.chain_hash));
}

fn corrupt_hex_digit(h: &mut String, at: usize) {
    let c = h.as_bytes()[at];
    let replacement = if c == b'0' { "1" } else { "0" };
    h.replace_range(at..at + 1, replacement);
}

#[test]
fn corrupted_chain_hash_is_rejected_by_client() {
    let store = random_store(&mut rng(5), 10);
    let mut v = serde_json::to_value(store.get(3).unwrap()).unwrap();
    let mut h = v["chainHash"].as_str().unwrap().to_owned();
    corrupt_hex_digit(&mut h, 17);
    v["chainHash"] = h.into();
    let bad: Pulse = serde_json::from_value(v.clone()).unwrap();
    assert_ne!(bad.chain_hash, chain_hash_oracle(&bad));

    let server = TestServer::start(move || {
        let v = v.clone();
        Router::new().route("/pulse/{i}", get(move || async move { Json(v) }))
    });
    assert!(matches!(
        fetch_pulse(&server.url(), Some(3)),
        Err(BeaconError::PulseIntegrity { index: 3 })
    ));
}

#[test]
fn tampered_served_range_is_rejected() {
    let store = random_store(&mut rng(6), 10);
    let mut pulses = store.range(0, 9);
    pulses[4].rand_out[0] ^= 1;
    let server = TestServer::start(move || {
        let pulses = pulses.clone();
        Router::new().route("/chain", get(move || async move { Json(pulses) }))
    });
    let err = BeaconClient::new(&server.url())
        .fetch_chain(0, 9)
        .unwrap_err();
    assert!(matches!(err, BeaconError::InvalidChain(v) if v.first_bad_index() == Some(4)));
}

#[test]
fn unreachable_endpoint() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    drop(listener);
    assert!(matches!(
        fetch_pulse(&format!("http://{addr}"), None),
        Err(BeaconError::Unreachable(_))
    ));
}

#[test]
fn serve_with_appender_grows_a_valid_chain() {
    let store = Arc::new(PulseStore::new());
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (stop, stop_rx) = oneshot::channel::<()>();
    let s = Arc::clone(&store);
    let handle = std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let appender = spawn_appender(Arc::clone(&s), Duration::from_millis(20), rng(7));
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            addr_tx.send(listener.local_addr().unwrap()).unwrap();
            serve(listener, s, async move {
                let _ = stop_rx.await;
            })
            .await
            .unwrap();
            appender.abort();
        });
    });
    let url = format!("http://{}", addr_rx.recv().unwrap());
    std::thread::sleep(Duration::from_millis(300));
    let tip = fetch_pulse(&url, None).unwrap();
    assert!(tip.index >= 3, "only {} pulses after 300ms", tip.index + 1);
    let copy = BeaconClient::new(&url).fetch_store().unwrap();
    assert!(verify_chain(&copy.snapshot()).unwrap().ok());
    stop.send(()).unwrap();
    handle.join().unwrap();
    assert!(verify_chain(&store.snapshot()).unwrap().ok());
}
