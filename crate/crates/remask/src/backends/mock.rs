//! In-process mock server implementing the remote protocol over the toy
//! backends. Serves client integration tests and the `serve-mock` CLI
//! subcommand; deterministic per (model seed, request).

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use tokio::sync::oneshot;

use crate::error::{Error, Result};
use crate::model::VictimModel;
use crate::reconstruction::MaskedLm;

use super::remote::protocol::*;
use super::remote::{CLASSIFY_ENDPOINT, FILL_MASK_ENDPOINT, GRADIENTS_ENDPOINT};
use super::toy_mlm::ToyMaskedLm;
use super::toy_victim::ToyVictimModel;

#[derive(Clone)]
pub struct MockState {
    pub victim: Arc<ToyVictimModel>,
    pub mlm: Arc<ToyMaskedLm>,
}

impl MockState {
    pub fn new(victim: ToyVictimModel, mlm: ToyMaskedLm) -> Self {
        Self {
            victim: Arc::new(victim),
            mlm: Arc::new(mlm),
        }
    }

    /// Deterministic demo models built from the bundled toy corpus.
    pub fn with_default_models() -> Result<Self> {
        let corpus = crate::harness::corpus::generate_corpus(&Default::default());
        let labeled: Vec<(String, usize)> = corpus
            .iter()
            .map(|lt| (lt.text.clone(), lt.label))
            .collect();
        let victim = ToyVictimModel::train(&labeled, &Default::default())?;
        let sentences: Vec<Vec<String>> = corpus
            .iter()
            .map(|lt| lt.text.split_whitespace().map(str::to_string).collect())
            .collect();
        let mlm = ToyMaskedLm::fit(sentences, super::toy_mlm::DEFAULT_SMOOTHING);
        Ok(Self::new(victim, mlm))
    }
}

type Reply<T> = std::result::Result<Json<T>, (StatusCode, Json<ErrorResponse>)>;

fn bad_request<T>(message: impl Into<String>) -> Reply<T> {
    Err((
        StatusCode::BAD_REQUEST,
        Json(ErrorResponse {
            error: message.into(),
        }),
    ))
}

async fn classify(State(state): State<MockState>, Json(req): Json<ClassifyRequest>) -> Reply<ClassifyResponse> {
    let mut texts = Vec::with_capacity(req.texts.len());
    for raw in &req.texts {
        match crate::text::tokenize(raw) {
            Ok(t) => texts.push(t),
            Err(e) => return bad_request(format!("text {raw:?}: {e}")),
        }
    }
    match state.victim.classify_batch(&texts) {
        Ok(rows) => Ok(Json(ClassifyResponse {
            probs: rows.into_iter().map(|cv| cv.probs().to_vec()).collect(),
        })),
        Err(e) => bad_request(e.to_string()),
    }
}

async fn fill_mask(State(state): State<MockState>, Json(req): Json<FillMaskRequest>) -> Reply<FillMaskResponse> {
    if req.words.is_empty() {
        return bad_request("words must be non-empty");
    }
    if req.mask_index == 0 || req.mask_index > req.words.len() {
        return bad_request(format!(
            "mask_index {} outside 1..={}",
            req.mask_index,
            req.words.len()
        ));
    }
    if req.top_k == 0 {
        return bad_request("top_k must be at least 1");
    }
    match state.mlm.fill(&req.words, req.mask_index - 1, req.top_k) {
        Ok(candidates) => Ok(Json(FillMaskResponse {
            candidates: candidates
                .into_iter()
                .map(|c| CandidateJson {
                    word: c.word,
                    score: c.score,
                })
                .collect(),
        })),
        Err(e) => bad_request(e.to_string()),
    }
}

async fn gradients(State(state): State<MockState>, Json(req): Json<GradientsRequest>) -> Reply<GradientsResponse> {
    if req.words.is_empty() {
        return bad_request("words must be non-empty");
    }
    if req.target_label == 0 || req.target_label > state.victim.class_count() {
        return bad_request(format!(
            "target_label {} outside 1..={}",
            req.target_label,
            state.victim.class_count()
        ));
    }
    let text = match crate::text::from_words(&req.words) {
        Ok(t) => t,
        Err(e) => return bad_request(e.to_string()),
    };
    match state.victim.word_gradients(&text, req.target_label) {
        Ok((loss, grads)) => {
            let norms = grads
                .rows()
                .into_iter()
                .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect();
            Ok(Json(GradientsResponse {
                loss,
                word_grad_norms: norms,
            }))
        }
        Err(e) => bad_request(e.to_string()),
    }
}

pub fn router(state: MockState) -> Router {
    Router::new()
        .route(CLASSIFY_ENDPOINT, post(classify))
        .route(FILL_MASK_ENDPOINT, post(fill_mask))
        .route(GRADIENTS_ENDPOINT, post(gradients))
        .with_state(state)
}

/// A running mock server; shuts down when dropped.
pub struct MockServerHandle {
    pub addr: SocketAddr,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServerHandle {
    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for MockServerHandle {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(handle) = self.thread.take() {
            let _ = handle.join();
        }
    }
}

/// Binds 127.0.0.1:0 on a background thread with its own runtime.
pub fn spawn(state: MockState) -> Result<MockServerHandle> {
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (shutdown_tx, shutdown_rx) = oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .expect("tokio runtime");
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind(("127.0.0.1", 0))
                .await
                .expect("bind mock server");
            let addr = listener.local_addr().expect("local addr");
            addr_tx.send(addr).expect("report addr");
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    let _ = shutdown_rx.await;
                })
                .await
                .expect("serve mock");
        });
    });
    let addr = addr_rx
        .recv()
        .map_err(|_| Error::Backend(crate::error::BackendError::Other("mock server failed to start".into())))?;
    Ok(MockServerHandle {
        addr,
        shutdown: Some(shutdown_tx),
        thread: Some(thread),
    })
}

/// Serves on the given port until the process exits; used by the CLI.
/// `on_bind` observes the bound address (port 0 picks a free one).
pub fn serve_blocking(port: u16, state: MockState, on_bind: impl FnOnce(SocketAddr)) -> Result<()> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
        on_bind(listener.local_addr()?);
        axum::serve(listener, router(state))
            .await
            .map_err(std::io::Error::other)?;
        Ok(())
    })
}
