//! Local HTTP server for the review UI.
//!
//! - `GET /bundle/{seq}`: the overlay bundle JSON
//! - `GET /frame/{seq}/{idx}`: the color frame PNG
//! - `GET /overrides/{seq}`: the current override file (empty when none was saved)
//! - `PUT /overrides/{seq}`: replaces the override file; the body must parse and
//!   validate against the sequence
//!
//! Sequences are subdirectories of the served root; nothing else is written.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;

use posefuse_core::dataio::overrides::{format_overrides, parse_overrides, OverrideFile};
use posefuse_core::dataio::Sequence;

use crate::config::Paths;

#[derive(Clone)]
struct AppState {
    root: Arc<PathBuf>,
    paths: Arc<Paths>,
}

pub fn router(root: PathBuf, paths: Paths) -> Router {
    Router::new()
        .route("/bundle/{seq}", get(bundle))
        .route("/frame/{seq}/{idx}", get(frame))
        .route("/overrides/{seq}", get(get_overrides).put(put_overrides))
        .with_state(AppState {
            root: Arc::new(root),
            paths: Arc::new(paths),
        })
}

pub async fn serve(addr: SocketAddr, root: PathBuf, paths: Paths) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("serving {} on http://{}", root.display(), listener.local_addr()?);
    axum::serve(listener, router(root, paths)).await
}

fn error(status: StatusCode, message: impl Into<String>) -> Response {
    (status, [(header::CONTENT_TYPE, "text/plain; charset=utf-8")], message.into()).into_response()
}

fn valid_id(seq: &str) -> bool {
    !seq.is_empty()
        && seq != "."
        && seq != ".."
        && seq.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn open_sequence(root: &Path, seq: &str) -> Result<Sequence, Response> {
    if !valid_id(seq) {
        return Err(error(StatusCode::BAD_REQUEST, format!("invalid sequence id '{seq}'")));
    }
    Sequence::open(&root.join(seq)).map_err(|e| error(StatusCode::NOT_FOUND, format!("sequence '{seq}': {e}")))
}

fn read_file(path: &Path, content_type: &'static str) -> Response {
    match std::fs::read(path) {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type)], bytes).into_response(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            error(StatusCode::NOT_FOUND, format!("{} not found", path.display()))
        }
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display())),
    }
}

async fn bundle(State(st): State<AppState>, UrlPath(seq): UrlPath<String>) -> Response {
    match open_sequence(&st.root, &seq) {
        Ok(s) => read_file(&s.path(&st.paths.overlays), "application/json"),
        Err(r) => r,
    }
}

async fn frame(State(st): State<AppState>, UrlPath((seq, idx)): UrlPath<(String, String)>) -> Response {
    let s = match open_sequence(&st.root, &seq) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let Ok(idx) = idx.parse::<usize>() else {
        return error(StatusCode::BAD_REQUEST, format!("invalid frame index '{idx}'"));
    };
    if idx >= s.manifest.frame_count {
        return error(
            StatusCode::NOT_FOUND,
            format!("frame {idx} outside the {}-frame sequence", s.manifest.frame_count),
        );
    }
    match s.frame_image_path(idx) {
        Some(p) => read_file(&p, "image/png"),
        None => error(StatusCode::NOT_FOUND, format!("sequence '{seq}' has no color frames")),
    }
}

async fn get_overrides(State(st): State<AppState>, UrlPath(seq): UrlPath<String>) -> Response {
    let s = match open_sequence(&st.root, &seq) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let path = s.path(&st.paths.overrides);
    if !path.exists() {
        return ([(header::CONTENT_TYPE, "text/csv")], format_overrides(&OverrideFile::default())).into_response();
    }
    read_file(&path, "text/csv")
}

async fn put_overrides(State(st): State<AppState>, UrlPath(seq): UrlPath<String>, body: String) -> Response {
    let s = match open_sequence(&st.root, &seq) {
        Ok(s) => s,
        Err(r) => return r,
    };
    let path = s.path(&st.paths.overrides);
    let file = match parse_overrides(&body, &path).and_then(|f| f.validate(s.manifest.frame_count).map(|_| f)) {
        Ok(f) => f,
        Err(e) => return error(StatusCode::BAD_REQUEST, e.to_string()),
    };
    let text = format_overrides(&file);
    let tmp = path.with_extension("tmp");
    if let Err(e) = std::fs::write(&tmp, &text).and_then(|_| std::fs::rename(&tmp, &path)) {
        return error(StatusCode::INTERNAL_SERVER_ERROR, format!("{}: {e}", path.display()));
    }
    log::info!("{seq}: wrote {} override entries", file.entries.len());
    ([(header::CONTENT_TYPE, "text/csv")], text).into_response()
}
