//! Thin async client for the service in `centaur-server`.

use centaur_core::analysis::BenchReport;
use centaur_core::api::{ApiError, Meta, ParamsUpdate, ProcessReceipt, ResponseReport};
use centaur_core::pedal::{Engine, PedalParams};
use reqwest::multipart::{Form, Part};
use reqwest::{RequestBuilder, StatusCode};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    /// The service answered with an error status.
    #[error("server returned {status}: {}", body.error)]
    Api { status: StatusCode, body: ApiError },
}

impl ClientError {
    /// Error class reported by the service, if it answered.
    pub fn kind(&self) -> Option<&str> {
        match self {
            ClientError::Api { body, .. } => Some(&body.kind),
            ClientError::Transport(_) => None,
        }
    }

    pub fn status(&self) -> Option<StatusCode> {
        match self {
            ClientError::Api { status, .. } => Some(*status),
            ClientError::Transport(e) => e.status(),
        }
    }
}

/// Benchmark options; `None` uses the service defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchOptions {
    pub duration: Option<f64>,
    pub repetitions: Option<usize>,
    pub blocks: Option<Vec<usize>>,
    pub engines: Option<Vec<Engine>>,
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8765`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(req: RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let body = serde_json::from_str(&text).unwrap_or(ApiError {
            kind: "http".into(),
            error: text,
        });
        Err(ClientError::Api { status, body })
    }

    pub async fn params(&self) -> Result<PedalParams, ClientError> {
        Ok(Self::send(self.http.get(self.url("/api/params"))).await?.json().await?)
    }

    pub async fn set_params(&self, update: &ParamsUpdate) -> Result<PedalParams, ClientError> {
        Ok(Self::send(self.http.post(self.url("/api/params")).json(update))
            .await?
            .json()
            .await?)
    }

    /// Upload a WAV file for processing with the session's params.
    pub async fn process(&self, wav: Vec<u8>) -> Result<ProcessReceipt, ClientError> {
        let part = Part::bytes(wav).file_name("input.wav").mime_str("audio/wav")?;
        let form = Form::new().part("file", part);
        Ok(Self::send(self.http.post(self.url("/api/process")).multipart(form))
            .await?
            .json()
            .await?)
    }

    pub async fn result(&self, id: u64) -> Result<Vec<u8>, ClientError> {
        let resp = Self::send(self.http.get(self.url(&format!("/api/result/{id}")))).await?;
        Ok(resp.bytes().await?.to_vec())
    }

    pub async fn response(&self, treble: Option<f64>, engine: Option<Engine>) -> Result<ResponseReport, ClientError> {
        let mut query = Vec::new();
        if let Some(t) = treble {
            query.push(("treble", t.to_string()));
        }
        if let Some(e) = engine {
            query.push(("engine", e.to_string()));
        }
        Ok(Self::send(self.http.get(self.url("/api/response")).query(&query))
            .await?
            .json()
            .await?)
    }

    pub async fn bench(&self, options: &BenchOptions) -> Result<BenchReport, ClientError> {
        let mut query = Vec::new();
        if let Some(d) = options.duration {
            query.push(("duration", d.to_string()));
        }
        if let Some(r) = options.repetitions {
            query.push(("repetitions", r.to_string()));
        }
        if let Some(b) = &options.blocks {
            query.push(("blocks", join(b)));
        }
        if let Some(e) = &options.engines {
            query.push(("engines", join(e)));
        }
        Ok(Self::send(self.http.get(self.url("/api/bench")).query(&query))
            .await?
            .json()
            .await?)
    }

    pub async fn meta(&self) -> Result<Meta, ClientError> {
        Ok(Self::send(self.http.get(self.url("/api/meta"))).await?.json().await?)
    }
}
