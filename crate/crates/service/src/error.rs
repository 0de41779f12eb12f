use axum::body::Bytes;
use axum::extract::{FromRequest, Request};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use workbench_core::{Error, ErrorClass};

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("invalid request body: {message}")]
    Body { field: Option<String>, message: String },
    #[error("no job with id {0}")]
    UnknownJob(u64),
    #[error("job {0} has not finished")]
    Unfinished(u64),
    #[error("job {id} failed: {}", error.message)]
    JobFailed { id: u64, error: ErrorBody },
    #[error("another mutation is in progress; retry when it finishes")]
    Busy,
}

/// JSON body of every error response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub class: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl ErrorBody {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> ErrorBody {
        ErrorBody { class: class.as_str().into(), field: None, message: message.into() }
    }
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::Core(Error::UnknownModel(_)) | ApiError::UnknownJob(_) => StatusCode::NOT_FOUND,
            ApiError::Core(e) => match e.class() {
                ErrorClass::Config | ErrorClass::Data => StatusCode::BAD_REQUEST,
                ErrorClass::Capability => StatusCode::UNPROCESSABLE_ENTITY,
                ErrorClass::Conflict => StatusCode::CONFLICT,
                ErrorClass::Execution | ErrorClass::Storage => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ApiError::Body { .. } => StatusCode::BAD_REQUEST,
            ApiError::Unfinished(_) | ApiError::JobFailed { .. } | ApiError::Busy => StatusCode::CONFLICT,
        }
    }

    pub fn body(&self) -> ErrorBody {
        let message = self.to_string();
        match self {
            ApiError::Core(e) => {
                let field = match e {
                    Error::InvalidParameter { name, .. } => Some(name.clone()),
                    Error::InvalidConfig { path, .. } => Some(path.clone()),
                    Error::UnknownModel(_) => Some("model".into()),
                    _ => None,
                };
                ErrorBody { class: e.class().as_str().into(), field, message }
            }
            ApiError::Body { field, .. } => {
                ErrorBody { class: ErrorClass::Config.as_str().into(), field: field.clone(), message }
            }
            ApiError::UnknownJob(_) => ErrorBody { class: "not_found".into(), field: Some("id".into()), message },
            ApiError::JobFailed { error, .. } => error.clone(),
            ApiError::Unfinished(_) | ApiError::Busy => ErrorBody::new(ErrorClass::Conflict, message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::to_string(&self.body()).expect("error bodies serialize");
        (self.status(), [(header::CONTENT_TYPE, "application/json")], body).into_response()
    }
}

/// JSON request body whose deserialization errors name the offending field.
pub struct JsonBody<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        let bytes = Bytes::from_request(req, state)
            .await
            .map_err(|e| ApiError::Body { field: None, message: e.body_text() })?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        let de = &mut serde_json::Deserializer::from_slice(text);
        serde_path_to_error::deserialize(de).map(JsonBody).map_err(|e| {
            let path = e.path().to_string();
            ApiError::Body { field: (path != ".").then_some(path), message: e.inner().to_string() }
        })
    }
}
