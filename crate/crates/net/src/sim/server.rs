use std::net::{SocketAddr, TcpListener};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;
use rand::Rng;
use tokio::sync::{oneshot, Mutex};

use super::respond::{react, render_page};
use super::scenario::Scenario;
use super::SimError;
use crate::HttpMethod;

struct SimState {
    scenario: Scenario,
    /// One lock per declared parameter so timed responses never overlap.
    locks: Vec<Mutex<()>>,
}

/// A running simulator. Dropping the handle stops the server.
#[derive(Debug)]
pub struct SimHandle {
    addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<()>>,
}

impl SimHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    /// `http://127.0.0.1:<port>/`
    pub fn base_url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    /// Blocks until the server stops (it only stops when shut down).
    pub fn wait(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }

    pub fn shutdown(self) {}
}

impl Drop for SimHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Serves `scenario` on 127.0.0.1:`port` from a background thread. Port 0
/// picks a free port.
pub fn serve(scenario: Scenario, port: u16) -> Result<SimHandle, SimError> {
    scenario.validate()?;
    let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|source| SimError::Bind { port, source })?;
    listener
        .set_nonblocking(true)
        .map_err(|source| SimError::Bind { port, source })?;
    let addr = listener
        .local_addr()
        .map_err(|source| SimError::Bind { port, source })?;

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(SimError::Runtime)?;
    let state = Arc::new(SimState {
        locks: scenario.params.iter().map(|_| Mutex::new(())).collect(),
        scenario,
    });
    let (tx, rx) = oneshot::channel::<()>();

    let thread = std::thread::Builder::new()
        .name(format!("sim-{}", addr.port()))
        .spawn(move || {
            runtime.block_on(async move {
                let listener = match tokio::net::TcpListener::from_std(listener) {
                    Ok(l) => l,
                    Err(e) => {
                        log::error!("simulator listener: {e}");
                        return;
                    }
                };
                let app = Router::new().fallback(handle).with_state(state);
                let served = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
                if let Err(e) = served {
                    log::error!("simulator stopped: {e}");
                }
            });
            runtime.shutdown_timeout(Duration::from_millis(100));
        })
        .map_err(SimError::Runtime)?;

    log::info!("simulator listening on http://{addr}/");
    Ok(SimHandle {
        addr,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}

/// Sleeps most of the way, then yields until `deadline`; plain sleeps
/// overshoot by a fraction of a millisecond.
fn sleep_until(deadline: Instant) {
    const SPIN: Duration = Duration::from_millis(1);
    let now = Instant::now();
    if deadline > now + SPIN {
        std::thread::sleep(deadline - now - SPIN);
    }
    while Instant::now() < deadline {
        std::thread::yield_now();
    }
}

fn html(body: String) -> Response {
    ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], body).into_response()
}

async fn handle(State(state): State<Arc<SimState>>, method: Method, uri: Uri, body: Bytes) -> Response {
    let scenario = &state.scenario;
    let Some(page) = scenario.page(uri.path()) else {
        return (StatusCode::NOT_FOUND, "not found\n").into_response();
    };
    let method = if method == Method::POST {
        HttpMethod::Post
    } else {
        HttpMethod::Get
    };
    let pairs: Vec<(String, String)> = match method {
        HttpMethod::Get => url::form_urlencoded::parse(uri.query().unwrap_or("").as_bytes())
            .into_owned()
            .collect(),
        HttpMethod::Post => url::form_urlencoded::parse(&body).into_owned().collect(),
    };

    let declared: Vec<(usize, &_)> = scenario.params_for(&page.path, method).collect();
    if declared.is_empty() {
        return html(render_page(scenario, page, None));
    }
    // The parameter whose value looks like an injection is the one under
    // attack; otherwise the first declared one that was sent.
    let present: Vec<(usize, &_, &str)> = declared
        .iter()
        .filter_map(|(i, spec)| {
            pairs
                .iter()
                .rev()
                .find(|(k, _)| *k == spec.name)
                .map(|(_, v)| (*i, *spec, v.as_str()))
        })
        .collect();
    let target = present
        .iter()
        .find(|(_, _, v)| super::respond::classify(v).is_some())
        .or(present.first())
        .copied();

    let Some((index, spec, value)) = target else {
        return html(react(scenario, page, None).body);
    };
    let _serial = state.locks[index].lock().await;
    let started = Instant::now();
    let reaction = react(scenario, page, Some((spec, value)));
    let jitter = if spec.jitter > 0.0 {
        rand::thread_rng().gen_range(0.0..spec.jitter)
    } else {
        0.0
    };
    let latency = spec.base_latency + spec.overhead_for(reaction.class) + jitter;
    let total = Duration::from_secs_f64(latency) + reaction.injected_delay;
    if !total.is_zero() {
        let deadline = started + total;
        let _ = tokio::task::spawn_blocking(move || sleep_until(deadline)).await;
    }
    html(reaction.body)
}
