use centaur_client::{BenchOptions, Client};
use centaur_core::api::ParamsUpdate;
use centaur_core::config::ComponentConfig;
use centaur_core::pedal::{Engine, PedalParams};
use centaur_core::render::render_wav;
use centaur_core::rnn::ModelBank;
use centaur_core::signal::guitar_like;
use centaur_core::wav::{self, Encoding};
use centaur_server::{bind, serve, ServiceConfig};
use reqwest::StatusCode;

async fn start(config: ServiceConfig) -> String {
    let listener = bind(0).await.unwrap();
    let addr = listener.local_addr().unwrap();
    assert!(addr.ip().is_loopback());
    tokio::spawn(serve(listener, config));
    format!("http://{addr}")
}

fn clip(fs: u32, seconds: f64) -> Vec<u8> {
    wav::write_bytes(fs, Encoding::Float32, &guitar_like(7, seconds, fs as f64, 0.5)).unwrap()
}

fn update(gain: f64, treble: f64, level: f64, engine: Engine) -> ParamsUpdate {
    PedalParams {
        gain,
        treble,
        level,
        engine,
    }
    .into()
}

#[tokio::test]
async fn params_round_trip_and_validation() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new(&base);
    assert_eq!(c.params().await.unwrap(), PedalParams::default());

    let bad = ParamsUpdate {
        treble: Some(2.0),
        ..Default::default()
    };
    let err = c.set_params(&bad).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::UNPROCESSABLE_ENTITY));
    assert_eq!(err.kind(), Some("invalid_params"));
    assert_eq!(c.params().await.unwrap(), PedalParams::default());

    let part = ParamsUpdate {
        gain: Some(0.75),
        engine: Some(Engine::Neural),
        ..Default::default()
    };
    let p = c.set_params(&part).await.unwrap();
    assert_eq!((p.gain, p.treble, p.engine), (0.75, 0.5, Engine::Neural));
    assert_eq!(c.params().await.unwrap(), p);

    let http = reqwest::Client::new();
    for body in ["{not json", r#"{"volume": 1}"#, r#"{"gain": "loud"}"#, r#"{"engine": "fuzz"}"#] {
        let resp = http.post(format!("{base}/api/params")).body(body).send().await.unwrap();
        assert_eq!(resp.status(), StatusCode::BAD_REQUEST, "{body}");
        let err: serde_json::Value = resp.json().await.unwrap();
        assert_eq!(err["kind"], "bad_request");
    }
}

#[tokio::test]
async fn processing_matches_local_render_and_caches() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new(&base);
    let input = clip(44100, 1.0);
    for engine in Engine::ALL {
        let u = update(0.3, 0.6, 0.7, engine);
        let params = c.set_params(&u).await.unwrap();
        let receipt = c.process(input.clone()).await.unwrap();
        assert!(!receipt.cached);
        assert_eq!(receipt.params, params);
        assert_eq!((receipt.sample_rate, receipt.samples), (44100, 44100));
        let served = c.result(receipt.id).await.unwrap();
        let local = render_wav(&input, &params, &ComponentConfig::canonical(), &ModelBank::demo()).unwrap();
        assert_eq!(served, local.wav, "{engine}");
        assert_eq!(receipt.peak, local.peak);
    }

    // Same clip and params: reused. Engine toggles keep the cache.
    let again = c.process(input.clone()).await.unwrap();
    assert!(again.cached);
    c.set_params(&update(0.3, 0.6, 0.7, Engine::Traditional)).await.unwrap();
    assert!(c.process(input.clone()).await.unwrap().cached);

    // Any other change drops it.
    c.set_params(&update(0.31, 0.6, 0.7, Engine::Traditional)).await.unwrap();
    let fresh = c.process(input.clone()).await.unwrap();
    assert!(!fresh.cached);
    assert!(fresh.id > again.id);
}

#[tokio::test]
async fn concurrent_requests_are_serialized() {
    let base = start(ServiceConfig::default()).await;
    let input = clip(44100, 0.5);
    let mut tasks = Vec::new();
    for _ in 0..4 {
        let c = Client::new(&base);
        let input = input.clone();
        tasks.push(tokio::spawn(async move {
            let r = c.process(input).await.unwrap();
            c.result(r.id).await.unwrap()
        }));
    }
    let mut outputs = Vec::new();
    for t in tasks {
        outputs.push(t.await.unwrap());
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn sample_rate_guard_and_meta() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new(&base);
    let meta = c.meta().await.unwrap();
    assert_eq!(meta.sample_rate, 44100.0);
    assert!(meta.engines.iter().all(|e| e.available));
    assert!(meta.clip.is_none());

    let input = clip(48000, 0.5);
    let r = c.process(input.clone()).await.unwrap();
    assert_eq!(r.sample_rate, 48000);
    let meta = c.meta().await.unwrap();
    assert_eq!(meta.clip.unwrap().sample_rate, 48000);
    let neural = meta.engines.iter().find(|e| e.engine == Engine::Neural).unwrap();
    assert!(!neural.available);

    c.set_params(&update(0.5, 0.5, 0.5, Engine::Neural)).await.unwrap();
    let err = c.process(input).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::CONFLICT));
    assert_eq!(err.kind(), Some("sample_rate"));
    assert!(err.to_string().contains("44100"));
}

#[tokio::test]
async fn bad_uploads_and_unknown_results() {
    let base = start(ServiceConfig {
        upload_limit: 64 * 1024,
        ..Default::default()
    })
    .await;
    let c = Client::new(&base);
    let err = c.process(b"RIFF nonsense".to_vec()).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::UNSUPPORTED_MEDIA_TYPE));
    assert_eq!(err.kind(), Some("unsupported_audio"));

    let err = c.result(999).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::NOT_FOUND));

    let err = c.process(clip(44100, 2.0)).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::PAYLOAD_TOO_LARGE));

    let form = reqwest::multipart::Form::new().text("other", "x");
    let resp = reqwest::Client::new()
        .post(format!("{base}/api/process"))
        .multipart(form)
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn response_report_tracks_analog_tone() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new(&base);
    for engine in Engine::ALL {
        let r = c.response(Some(0.2), Some(engine)).await.unwrap();
        assert_eq!((r.engine, r.treble), (engine, 0.2));
        let n = r.chain.frequencies.len();
        assert!(n > 10 && r.tone_db.len() == n && r.tone_analog_db.len() == n);
        assert!(r.chain.frequencies.windows(2).all(|w| w[1] > w[0]));
        assert!(r.chain.magnitudes_db.iter().chain(&r.tone_db).all(|m| m.is_finite()));
        for ((f, d), a) in r.chain.frequencies.iter().zip(&r.tone_db).zip(&r.tone_analog_db) {
            if *f <= 10_000.0 {
                assert!((d - a).abs() < 1.0, "{f} Hz");
            }
        }
    }
    let err = c.response(Some(1.5), None).await.unwrap_err();
    assert_eq!(err.status(), Some(StatusCode::UNPROCESSABLE_ENTITY));
    let resp = reqwest::get(format!("{base}/api/response?treble=abc")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn bench_reports_requested_cells() {
    let base = start(ServiceConfig::default()).await;
    let c = Client::new(&base);
    let short = BenchOptions {
        duration: Some(1.0),
        ..Default::default()
    };
    assert_eq!(c.bench(&short).await.unwrap_err().status(), Some(StatusCode::UNPROCESSABLE_ENTITY));
    let odd = BenchOptions {
        blocks: Some(vec![100]),
        ..Default::default()
    };
    assert_eq!(c.bench(&odd).await.unwrap_err().kind(), Some("invalid_bench"));

    let one = BenchOptions {
        blocks: Some(vec![512]),
        engines: Some(vec![Engine::Traditional]),
        ..Default::default()
    };
    let report = c.bench(&one).await.unwrap();
    assert_eq!(report.rows.len(), 1);
    assert!(report.cell(512, Engine::Traditional).unwrap() > 0.0);
}
