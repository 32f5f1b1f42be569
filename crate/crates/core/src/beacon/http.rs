//! HTTP face of the beacon: an axum service over a shared [`PulseStore`] and
//! a blocking client that re-verifies everything it receives.

use std::future::Future;
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use rand::RngCore;
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use super::{verify_chain, BeaconError, Pulse, PulseStore};

type Shared = Arc<PulseStore>;

#[derive(Debug, Deserialize)]
struct ChainQuery {
    from: Option<u64>,
    to: Option<u64>,
}

fn not_found() -> Response {
    (StatusCode::NOT_FOUND, "no such pulse\n").into_response()
}

async fn last(State(store): State<Shared>) -> Response {
    match store.latest() {
        Some(p) => Json(p).into_response(),
        None => not_found(),
    }
}

async fn by_index(State(store): State<Shared>, Path(raw): Path<String>) -> Response {
    let Ok(index) = raw.parse::<u64>() else {
        return (
            StatusCode::BAD_REQUEST,
            "index must be a non-negative integer\n",
        )
            .into_response();
    };
    match store.get(index) {
        Some(p) => Json(p).into_response(),
        None => not_found(),
    }
}

async fn chain(State(store): State<Shared>, Query(q): Query<ChainQuery>) -> Response {
    let from = q.from.unwrap_or(0);
    let to = q.to.unwrap_or(u64::MAX);
    if from > to {
        return (StatusCode::BAD_REQUEST, "from must not exceed to\n").into_response();
    }
    let pulses = store.range(from, to);
    if pulses.is_empty() {
        return not_found();
    }
    Json(pulses).into_response()
}

/// `GET /pulse/last`, `GET /pulse/{index}`, `GET /chain?from=a&to=b`.
pub fn router(store: Arc<PulseStore>) -> Router {
    Router::new()
        .route("/pulse/last", get(last))
        .route("/pulse/{index}", get(by_index))
        .route("/chain", get(chain))
        .with_state(store)
}

pub async fn serve<F>(
    listener: TcpListener,
    store: Arc<PulseStore>,
    shutdown: F,
) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(store))
        .with_graceful_shutdown(shutdown)
        .await
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Appends one pulse every `interval` on the current tokio runtime. This task
/// is the store's only writer while it runs.
pub fn spawn_appender<R>(store: Arc<PulseStore>, interval: Duration, mut rng: R) -> JoinHandle<()>
where
    R: RngCore + Send + 'static,
{
    tokio::spawn(async move {
        let mut ticker = tokio::time::interval(interval);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            ticker.tick().await;
            // Never step backwards if the wall clock does.
            let now = store
                .latest()
                .map_or(unix_now(), |p| p.timestamp.max(unix_now()));
            match store.append_next(&mut rng, now) {
                Ok(p) => log::debug!("appended pulse {}", p.index),
                Err(e) => {
                    log::error!("beacon appender stopped: {e}");
                    return;
                }
            }
        }
    })
}

/// Blocking beacon client.
#[derive(Debug, Clone)]
pub struct BeaconClient {
    base: String,
    agent: ureq::Agent,
}

impl BeaconClient {
    pub fn new(endpoint: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(15)))
            .build();
        Self {
            base: endpoint.trim_end_matches('/').to_owned(),
            agent: config.into(),
        }
    }

    fn get_body(&self, path: &str, missing: u64) -> Result<String, BeaconError> {
        let url = format!("{}{}", self.base, path);
        match self.agent.get(&url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .read_to_string()
                .map_err(|e| BeaconError::Unreachable(format!("{url}: {e}"))),
            Err(ureq::Error::StatusCode(404)) => Err(BeaconError::NotFound(missing)),
            Err(e) => Err(BeaconError::Unreachable(format!("{url}: {e}"))),
        }
    }

    /// Fetches one pulse (the latest when `index` is `None`) and rejects it
    /// unless its chain hash recomputes.
    pub fn fetch_pulse(&self, index: Option<u64>) -> Result<Pulse, BeaconError> {
        let (path, missing) = match index {
            Some(i) => (format!("/pulse/{i}"), i),
            None => ("/pulse/last".to_owned(), 0),
        };
        let body = self.get_body(&path, missing)?;
        let pulse: Pulse =
            serde_json::from_str(&body).map_err(|e| BeaconError::Malformed(e.to_string()))?;
        pulse.self_check()?;
        if let Some(i) = index {
            if pulse.index != i {
                return Err(BeaconError::Malformed(format!(
                    "asked for pulse {i}, got {}",
                    pulse.index
                )));
            }
        }
        Ok(pulse)
    }

    /// Fetches an inclusive range and verifies it as a chain.
    pub fn fetch_chain(&self, from: u64, to: u64) -> Result<Vec<Pulse>, BeaconError> {
        let body = self.get_body(&format!("/chain?from={from}&to={to}"), from)?;
        let pulses: Vec<Pulse> =
            serde_json::from_str(&body).map_err(|e| BeaconError::Malformed(e.to_string()))?;
        let verdict = verify_chain(&pulses)?;
        if !verdict.ok() {
            return Err(BeaconError::InvalidChain(verdict));
        }
        if pulses[0].index != from {
            return Err(BeaconError::Malformed(format!(
                "chain starts at {}, asked for {from}",
                pulses[0].index
            )));
        }
        Ok(pulses)
    }

    /// Downloads the whole chain into a verified local store.
    pub fn fetch_store(&self) -> Result<PulseStore, BeaconError> {
        let tip = self.fetch_pulse(None)?;
        let pulses = self.fetch_chain(0, tip.index)?;
        PulseStore::from_pulses(pulses)
    }
}

pub fn fetch_pulse(endpoint: &str, index: Option<u64>) -> Result<Pulse, BeaconError> {
    BeaconClient::new(endpoint).fetch_pulse(index)
}
