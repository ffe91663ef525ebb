use std::path::Path;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use posefuse_cli::config::Paths;
use posefuse_cli::pipeline;
use posefuse_cli::server::router;
use posefuse_cli::PipelineConfig;
use posefuse_core::dataio::overlay::read_overlay_bundle;
use posefuse_core::dataio::overrides::{read_overrides, Tier};
use posefuse_core::dataio::synth::{synth_sequence, SynthSpec};

const FRAMES: usize = 12;

fn fixture(root: &Path) {
    let spec = SynthSpec {
        sequence_id: "seq_a".into(),
        frames: FRAMES,
        query_points: 40,
        model_points: 200,
        ..SynthSpec::default()
    };
    synth_sequence(&spec, &root.join("seq_a")).unwrap();
    pipeline::run_export(&root.join("seq_a"), &PipelineConfig::default(), None).unwrap();
}

async fn send(root: &Path, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = router(root.to_path_buf(), Paths::default()).oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body)
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn put(uri: &str, body: &str) -> Request<Body> {
    Request::put(uri).body(Body::from(body.to_string())).unwrap()
}

#[tokio::test]
async fn bundle_is_served_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let (status, body) = send(dir.path(), get("/bundle/seq_a")).await;
    assert_eq!(status, StatusCode::OK);
    let on_disk = std::fs::read(dir.path().join("seq_a/overlays.json")).unwrap();
    assert_eq!(body, on_disk);
    let bundle = read_overlay_bundle(&dir.path().join("seq_a/overlays.json")).unwrap();
    assert_eq!(bundle.frame_count, FRAMES);
    assert_eq!(bundle.variants, vec!["raw", "gt"]);
    assert_eq!(bundle.notices.len(), 2);
}

#[tokio::test]
async fn missing_sequence_or_bundle_is_404() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    assert_eq!(send(dir.path(), get("/bundle/nope")).await.0, StatusCode::NOT_FOUND);
    std::fs::remove_file(dir.path().join("seq_a/overlays.json")).unwrap();
    assert_eq!(send(dir.path(), get("/bundle/seq_a")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(send(dir.path(), get("/bundle/..")).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn frames_are_png_and_bounded() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let (status, body) = send(dir.path(), get("/frame/seq_a/3")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&body[..8], b"\x89PNG\r\n\x1a\n");
    assert_eq!(body, std::fs::read(dir.path().join("seq_a/rgb/000003.png")).unwrap());
    assert_eq!(send(dir.path(), get(&format!("/frame/seq_a/{FRAMES}"))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(send(dir.path(), get("/frame/seq_a/x")).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn put_overrides_writes_the_file_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let text = "# target,tier,weight\n2-4,downweighted,\n7,removed,\n9,default,250.5\n";
    let (status, body) = send(dir.path(), put("/overrides/seq_a", text)).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    assert_eq!(body, text.as_bytes());
    let path = dir.path().join("seq_a/overrides.csv");
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
    let file = read_overrides(&path).unwrap();
    assert_eq!(file.resolve(3).0, Tier::Downweighted);
    assert_eq!(file.resolve(9), (Tier::Default, Some(250.5)));

    let (status, body) = send(dir.path(), get("/overrides/seq_a")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, text.as_bytes());
}

#[tokio::test]
async fn empty_override_file_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let (status, empty) = send(dir.path(), get("/overrides/seq_a")).await;
    assert_eq!(status, StatusCode::OK);
    let (status, body) = send(dir.path(), put("/overrides/seq_a", std::str::from_utf8(&empty).unwrap())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, empty);
}

#[tokio::test]
async fn invalid_overrides_are_rejected_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let path = dir.path().join("seq_a/overrides.csv");
    for bad in [
        "# target,tier,weight\n3,sometimes,\n",
        "# target,tier,weight\n5-2,removed,\n",
        &format!("# target,tier,weight\n{FRAMES},removed,\n"),
    ] {
        let (status, _) = send(dir.path(), put("/overrides/seq_a", bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
        assert!(!path.exists());
    }
}

#[tokio::test]
async fn reads_do_not_touch_the_sequence() {
    let dir = tempfile::tempdir().unwrap();
    fixture(dir.path());
    let listing = |d: &Path| {
        let mut v: Vec<_> = std::fs::read_dir(d.join("seq_a")).unwrap().map(|e| e.unwrap().file_name()).collect();
        v.sort();
        v
    };
    let before = listing(dir.path());
    for uri in ["/bundle/seq_a", "/frame/seq_a/0", "/overrides/seq_a", "/bundle/missing"] {
        send(dir.path(), get(uri)).await;
    }
    assert_eq!(listing(dir.path()), before);
    let (status, _) = send(dir.path(), Request::post("/overrides/seq_a").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::METHOD_NOT_ALLOWED);
}
