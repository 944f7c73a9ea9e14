//! Local HTTP service over the pedal.
//!
//! | route | |
//! |---|---|
//! | `GET /api/params` | current [`PedalParams`] |
//! | `POST /api/params` | partial update, answers with the new params |
//! | `POST /api/process` | multipart WAV upload (field `file`), answers with a [`ProcessReceipt`] |
//! | `GET /api/result/{id}` | rendered WAV |
//! | `GET /api/response?treble=&engine=` | [`ResponseReport`] |
//! | `GET /api/bench?duration=&repetitions=&blocks=&engines=` | [`BenchReport`] |
//! | `GET /api/meta` | [`Meta`] |
//!
//! Errors carry an [`ApiError`] body. Statuses: 400 malformed request,
//! 404 unknown result, 409 neural engine at a sample rate other than
//! 44100 Hz, 413 upload too large, 415 unreadable or unsupported WAV, 422
//! parameter or benchmark settings out of range, 500 internal failure.
//!
//! All requests on a session are serialized. Rendered audio is cached per
//! (clip, params); changing gain, treble or level drops the cache, while
//! toggling the engine keeps it so both engines' renders stay available.

use std::collections::{HashMap, VecDeque};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tokio::net::TcpListener;
use tokio::sync::Mutex;

use centaur_core::analysis::{
    benchmark, log_frequencies, pedal_response, tone_response, AnalysisError, BenchReport, BenchSettings,
    BENCH_BLOCK_SIZES, MIN_BENCH_REPETITIONS, MIN_BENCH_SECONDS, RESPONSE_POINTS, RESPONSE_RANGE,
};
use centaur_core::api::{ApiError, ClipInfo, EngineStatus, Meta, ParamsUpdate, ProcessReceipt, ResponseReport};
use centaur_core::config::ComponentConfig;
use centaur_core::pedal::{Engine, Pedal, PedalError, PedalParams};
use centaur_core::render::{render_wav, RenderError};
use centaur_core::rnn::{ModelBank, MODEL_SAMPLE_RATE};
use centaur_core::wav::{self, WavError, WavSpec};

pub const DEFAULT_PORT: u16 = 8765;
pub const DEFAULT_UPLOAD_LIMIT: usize = 256 * 1024 * 1024;
/// Rendered results kept for `GET /api/result/{id}`.
pub const KEPT_RESULTS: usize = 32;

/// What the service renders with.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub components: ComponentConfig,
    pub bank: ModelBank,
    pub upload_limit: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            components: ComponentConfig::canonical(),
            bank: ModelBank::demo(),
            upload_limit: DEFAULT_UPLOAD_LIMIT,
        }
    }
}

struct Clip {
    seq: u64,
    bytes: Bytes,
    spec: WavSpec,
    samples: usize,
}

#[derive(Clone)]
struct Rendered {
    wav: Bytes,
    receipt: ProcessReceipt,
}

type ParamsKey = (u64, u64, u64, Engine);

fn params_key(p: &PedalParams) -> ParamsKey {
    (p.gain.to_bits(), p.treble.to_bits(), p.level.to_bits(), p.engine)
}

#[derive(Default)]
struct Session {
    params: PedalParams,
    clip: Option<Clip>,
    next_clip: u64,
    next_id: u64,
    cache: HashMap<(u64, ParamsKey), u64>,
    results: HashMap<u64, Rendered>,
    order: VecDeque<u64>,
}

impl Session {
    fn store(&mut self, rendered: Rendered) {
        let id = rendered.receipt.id;
        self.results.insert(id, rendered);
        self.order.push_back(id);
        while self.order.len() > KEPT_RESULTS {
            if let Some(old) = self.order.pop_front() {
                self.results.remove(&old);
                self.cache.retain(|_, v| *v != old);
            }
        }
    }
}

#[derive(Clone)]
struct AppState {
    config: Arc<ServiceConfig>,
    session: Arc<Mutex<Session>>,
}

/// An error response with a JSON body.
#[derive(Debug)]
pub struct HttpError {
    status: StatusCode,
    body: ApiError,
}

impl HttpError {
    fn new(status: StatusCode, kind: &str, error: impl ToString) -> Self {
        Self {
            status,
            body: ApiError {
                kind: kind.into(),
                error: error.to_string(),
            },
        }
    }

    fn bad_request(error: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", error)
    }
}

impl IntoResponse for HttpError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

impl From<PedalError> for HttpError {
    fn from(e: PedalError) -> Self {
        match e {
            PedalError::SampleRate { .. } => Self::new(StatusCode::CONFLICT, "sample_rate", e),
            PedalError::Param { .. } => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_params", e),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other),
        }
    }
}

impl From<WavError> for HttpError {
    fn from(e: WavError) -> Self {
        Self::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, "unsupported_audio", e)
    }
}

impl From<RenderError> for HttpError {
    fn from(e: RenderError) -> Self {
        match e {
            RenderError::Wav(e) => e.into(),
            RenderError::Pedal(e) => e.into(),
        }
    }
}

impl From<AnalysisError> for HttpError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Pedal(e) => e.into(),
            AnalysisError::BenchSettings => Self::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_bench", e),
            other => Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other),
        }
    }
}

fn internal(e: impl ToString) -> HttpError {
    HttpError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e)
}

pub fn router(config: ServiceConfig) -> Router {
    let limit = config.upload_limit;
    let state = AppState {
        config: Arc::new(config),
        session: Arc::default(),
    };
    Router::new()
        .route("/api/params", get(get_params).post(post_params))
        .route("/api/process", axum::routing::post(post_process))
        .route("/api/result/{id}", get(get_result))
        .route("/api/response", get(get_response))
        .route("/api/bench", get(get_bench))
        .route("/api/meta", get(get_meta))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serve on an already bound listener until the task is dropped.
pub async fn serve(listener: TcpListener, config: ServiceConfig) -> std::io::Result<()> {
    axum::serve(listener, router(config)).await
}

/// Serve until `shutdown` resolves, then finish in-flight requests.
pub async fn serve_until<F>(listener: TcpListener, config: ServiceConfig, shutdown: F) -> std::io::Result<()>
where
    F: std::future::Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(config)).with_graceful_shutdown(shutdown).await
}

/// Bind on localhost only.
pub async fn bind(port: u16) -> std::io::Result<TcpListener> {
    TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], port))).await
}

async fn get_params(State(state): State<AppState>) -> Json<PedalParams> {
    Json(state.session.lock().await.params)
}

async fn post_params(State(state): State<AppState>, body: Bytes) -> Result<Json<PedalParams>, HttpError> {
    let update: ParamsUpdate = serde_json::from_slice(&body).map_err(HttpError::bad_request)?;
    let mut session = state.session.lock().await;
    let next = update.apply(&session.params)?;
    let old = session.params;
    if (old.gain, old.treble, old.level) != (next.gain, next.treble, next.level) {
        session.cache.clear();
    }
    session.params = next;
    tracing::debug!(?next, "params updated");
    Ok(Json(next))
}

fn multipart_error(e: axum::extract::multipart::MultipartError) -> HttpError {
    let status = e.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        HttpError::new(status, "too_large", e.body_text())
    } else {
        HttpError::bad_request(e.body_text())
    }
}

async fn upload(mut multipart: Multipart) -> Result<Bytes, HttpError> {
    while let Some(field) = multipart.next_field().await.map_err(multipart_error)? {
        if field.name() == Some("file") {
            return field.bytes().await.map_err(multipart_error);
        }
    }
    Err(HttpError::bad_request("multipart body has no `file` field"))
}

async fn post_process(State(state): State<AppState>, multipart: Multipart) -> Result<Json<ProcessReceipt>, HttpError> {
    let bytes = upload(multipart).await?;
    let mut session = state.session.lock().await;

    let same_clip = session.clip.as_ref().is_some_and(|c| c.bytes == bytes);
    if !same_clip {
        let audio = wav::read_bytes(&bytes)?;
        session.next_clip += 1;
        session.clip = Some(Clip {
            seq: session.next_clip,
            bytes: bytes.clone(),
            spec: audio.spec,
            samples: audio.samples.len(),
        });
    }
    let seq = session.clip.as_ref().map(|c| c.seq).expect("clip stored above");
    let params = session.params;
    let key = (seq, params_key(&params));
    if let Some(r) = session.cache.get(&key).and_then(|id| session.results.get(id)) {
        let mut receipt = r.receipt.clone();
        receipt.cached = true;
        return Ok(Json(receipt));
    }

    let config = state.config.clone();
    let input = bytes.clone();
    let out = tokio::task::spawn_blocking(move || render_wav(&input, &params, &config.components, &config.bank))
        .await
        .map_err(internal)??;
    session.next_id += 1;
    let receipt = ProcessReceipt {
        id: session.next_id,
        cached: false,
        sample_rate: out.input.sample_rate,
        channels: out.input.channels,
        encoding: out.input.encoding,
        samples: session.clip.as_ref().map_or(0, |c| c.samples),
        peak: out.peak,
        clipped: out.clipped,
        params,
    };
    session.cache.insert(key, receipt.id);
    session.store(Rendered {
        wav: Bytes::from(out.wav),
        receipt: receipt.clone(),
    });
    Ok(Json(receipt))
}

async fn get_result(State(state): State<AppState>, Path(id): Path<u64>) -> Result<Response, HttpError> {
    let session = state.session.lock().await;
    let r = session
        .results
        .get(&id)
        .ok_or_else(|| HttpError::new(StatusCode::NOT_FOUND, "not_found", format!("no result with id {id}")))?;
    Ok(([(header::CONTENT_TYPE, "audio/wav")], r.wav.clone()).into_response())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResponseQuery {
    treble: Option<f64>,
    engine: Option<Engine>,
}

async fn get_response(
    State(state): State<AppState>,
    query: Result<Query<ResponseQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<ResponseReport>, HttpError> {
    let Query(query) = query.map_err(HttpError::bad_request)?;
    let session = state.session.lock().await;
    let params = ParamsUpdate {
        treble: query.treble,
        engine: query.engine,
        ..Default::default()
    }
    .apply(&session.params)?;
    let fs = session.clip.as_ref().map_or(MODEL_SAMPLE_RATE, |c| c.spec.sample_rate as f64);
    let config = state.config.clone();
    let report = tokio::task::spawn_blocking(move || -> Result<ResponseReport, AnalysisError> {
        let freqs = log_frequencies(RESPONSE_RANGE.0, RESPONSE_RANGE.1.min(0.45 * fs), RESPONSE_POINTS);
        let chain = pedal_response(&config.components, &config.bank, &params, &freqs, fs)?;
        let (tone, analog) = tone_response(&config.components, params.treble, &freqs, fs)?;
        Ok(ResponseReport {
            engine: params.engine,
            treble: params.treble,
            gain: params.gain,
            level: params.level,
            sample_rate: fs,
            chain,
            tone_db: tone.magnitudes_db,
            tone_analog_db: analog,
        })
    })
    .await
    .map_err(internal)??;
    Ok(Json(report))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchQuery {
    duration: Option<f64>,
    repetitions: Option<usize>,
    /// Comma-separated block sizes.
    blocks: Option<String>,
    /// Comma-separated engines.
    engines: Option<String>,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>, HttpError> {
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| HttpError::bad_request(format!("bad {what} `{s}`"))))
        .collect()
}

async fn get_bench(
    State(state): State<AppState>,
    query: Result<Query<BenchQuery>, axum::extract::rejection::QueryRejection>,
) -> Result<Json<BenchReport>, HttpError> {
    let Query(query) = query.map_err(HttpError::bad_request)?;
    let settings = BenchSettings {
        engines: match &query.engines {
            Some(e) => parse_list(e, "engine")?,
            None => Engine::ALL.to_vec(),
        },
        block_sizes: match &query.blocks {
            Some(b) => parse_list(b, "block size")?,
            None => BENCH_BLOCK_SIZES.to_vec(),
        },
        duration_s: query.duration.unwrap_or(MIN_BENCH_SECONDS),
        repetitions: query.repetitions.unwrap_or(MIN_BENCH_REPETITIONS),
        fs: MODEL_SAMPLE_RATE,
    };
    if settings.block_sizes.iter().any(|b| !BENCH_BLOCK_SIZES.contains(b)) {
        return Err(HttpError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_bench",
            format!("block sizes must come from {BENCH_BLOCK_SIZES:?}"),
        ));
    }
    // Timing runs hold the session so nothing else competes for the CPU.
    let _session = state.session.lock().await;
    let config = state.config.clone();
    let report = tokio::task::spawn_blocking(move || {
        benchmark(
            || Pedal::with_bank(&config.components, settings.fs, config.bank.clone()),
            &settings,
        )
    })
    .await
    .map_err(internal)??;
    Ok(Json(report))
}

async fn get_meta(State(state): State<AppState>) -> Json<Meta> {
    let session = state.session.lock().await;
    let fs = session.clip.as_ref().map_or(MODEL_SAMPLE_RATE, |c| c.spec.sample_rate as f64);
    Json(Meta {
        name: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        sample_rate: MODEL_SAMPLE_RATE,
        engines: Engine::ALL
            .iter()
            .map(|&engine| EngineStatus {
                engine,
                available: engine == Engine::Traditional || fs == MODEL_SAMPLE_RATE,
            })
            .collect(),
        clip: session.clip.as_ref().map(|c| ClipInfo {
            sample_rate: c.spec.sample_rate,
            channels: c.spec.channels,
            encoding: c.spec.encoding,
            samples: c.samples,
        }),
    })
}
