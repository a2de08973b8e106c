//! The HTTP JSON API. Models are loaded once and shared read-only.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use taboo_core::container::Detector;
use taboo_core::corpus::read_records;
use tower_http::services::ServeDir;

use crate::detect::{detect, DetectionResult};

/// A curated example sentence for the samples panel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub info_type: String,
    pub label: u8,
    pub text: String,
}

/// Everything the service serves.
#[derive(Debug, Default)]
pub struct Catalog {
    pub models: BTreeMap<String, Detector>,
    pub samples: Vec<Sample>,
}

impl Catalog {
    /// Load every `*.json` file in `models_dir` as a model (id = file
    /// stem) and, if given, a samples file in the dataset record format.
    pub fn load(models_dir: &Path, samples: Option<&Path>) -> taboo_core::Result<Self> {
        let mut models = BTreeMap::new();
        let mut paths: Vec<PathBuf> = std::fs::read_dir(models_dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()?;
        paths.sort();
        for path in paths {
            if path.extension().is_none_or(|e| e != "json") || !path.is_file() {
                continue;
            }
            let id = path
                .file_stem()
                .unwrap_or_default()
                .to_string_lossy()
                .into_owned();
            let det = Detector::load(&path)
                .map_err(|e| taboo_core::Error::Container(format!("{}: {e}", path.display())))?;
            models.insert(id, det);
        }
        let samples = match samples {
            Some(p) => load_samples(p)?,
            None => Vec::new(),
        };
        Ok(Catalog { models, samples })
    }
}

pub fn load_samples(path: &Path) -> taboo_core::Result<Vec<Sample>> {
    let ingest = read_records(BufReader::new(File::open(path)?))?;
    Ok(ingest
        .sentences
        .into_iter()
        .map(|s| Sample {
            info_type: s.info_type,
            label: s.label,
            text: s.tokens.join(" "),
        })
        .collect())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelInfo {
    pub id: String,
    pub kind: String,
    pub info_type: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictRequest {
    pub model_id: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub sentences: Vec<DetectionResult>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SamplesResponse {
    pub sensitive: Vec<String>,
    pub non_sensitive: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareRequest {
    pub model_a: String,
    pub model_b: String,
    pub text: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareSentence {
    pub text: String,
    pub start: usize,
    pub end: usize,
    pub scored: bool,
    pub label_a: u8,
    pub probability_a: f64,
    pub label_b: u8,
    pub probability_b: f64,
    pub disagree: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CompareResponse {
    pub model_a: String,
    pub model_b: String,
    pub sentences: Vec<CompareSentence>,
    /// Number of sentences with `disagree` set.
    pub disagreements: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(ErrorBody { error: self.1 })).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError(
            StatusCode::BAD_REQUEST,
            format!("malformed request body: {e}"),
        )
    })
}

fn model<'a>(catalog: &'a Catalog, id: &str) -> Result<&'a Detector, ApiError> {
    catalog
        .models
        .get(id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown model {id:?}")))
}

fn internal(e: taboo_core::Error) -> ApiError {
    ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
}

async fn list_models(State(c): State<Arc<Catalog>>) -> Json<Vec<ModelInfo>> {
    Json(
        c.models
            .iter()
            .map(|(id, d)| ModelInfo {
                id: id.clone(),
                kind: d.kind().to_string(),
                info_type: d.info_type().to_string(),
            })
            .collect(),
    )
}

async fn predict(State(c): State<Arc<Catalog>>, body: Bytes) -> ApiResult<PredictResponse> {
    let req: PredictRequest = parse_body(&body)?;
    let det = model(&c, &req.model_id)?;
    let sentences = detect(det, &req.text).map_err(internal)?;
    Ok(Json(PredictResponse { sentences }))
}

async fn samples(
    State(c): State<Arc<Catalog>>,
    Query(q): Query<HashMap<String, String>>,
) -> Json<SamplesResponse> {
    let wanted = q.get("info_type");
    let mut out = SamplesResponse {
        sensitive: Vec::new(),
        non_sensitive: Vec::new(),
    };
    for s in &c.samples {
        if wanted.is_some_and(|w| *w != s.info_type) {
            continue;
        }
        if s.label == 1 {
            out.sensitive.push(s.text.clone());
        } else {
            out.non_sensitive.push(s.text.clone());
        }
    }
    Json(out)
}

async fn compare(State(c): State<Arc<Catalog>>, body: Bytes) -> ApiResult<CompareResponse> {
    let req: CompareRequest = parse_body(&body)?;
    let a = model(&c, &req.model_a)?;
    let b = model(&c, &req.model_b)?;
    let ra = detect(a, &req.text).map_err(internal)?;
    let rb = detect(b, &req.text).map_err(internal)?;
    let sentences: Vec<CompareSentence> = ra
        .into_iter()
        .zip(rb)
        .map(|(x, y)| CompareSentence {
            disagree: x.label != y.label,
            text: x.text,
            start: x.start,
            end: x.end,
            scored: x.scored,
            label_a: x.label,
            probability_a: x.probability,
            label_b: y.label,
            probability_b: y.probability,
        })
        .collect();
    Ok(Json(CompareResponse {
        model_a: req.model_a,
        model_b: req.model_b,
        disagreements: sentences.iter().filter(|s| s.disagree).count(),
        sentences,
    }))
}

async fn api_not_found() -> ApiError {
    ApiError(StatusCode::NOT_FOUND, "no such endpoint".into())
}

/// Routes under `/api`, plus static files from `static_dir` for
/// everything else.
pub fn router(catalog: Arc<Catalog>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/models", get(list_models))
        .route("/predict", post(predict))
        .route("/samples", get(samples))
        .route("/compare", post(compare))
        .fallback(api_not_found)
        .with_state(catalog);
    let app = Router::new().nest("/api", api);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}
