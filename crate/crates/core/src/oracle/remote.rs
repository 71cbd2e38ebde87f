use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ClassLabel, Classifier};
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;

#[derive(Serialize)]
struct ScoreRequest<'a> {
    class_id: u32,
    images: &'a [String],
}

#[derive(Deserialize)]
struct ScoreResponse {
    confidences: Vec<f64>,
}

/// Classifier served over HTTP.
///
/// `POST {base}/score` with `{"class_id": c, "images": [b64, ...]}` where each
/// image is base64 of little-endian float32 values in CHW order; the reply is
/// `{"confidences": [...]}`. Any non-200 status is an oracle failure.
pub struct RemoteClassifier {
    name: String,
    endpoint: String,
    class_count: usize,
    agent: ureq::Agent,
}

impl std::fmt::Debug for RemoteClassifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClassifier")
            .field("name", &self.name)
            .field("endpoint", &self.endpoint)
            .finish()
    }
}

impl RemoteClassifier {
    pub fn new(name: impl Into<String>, base_url: &str, class_count: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        Self {
            name: name.into(),
            endpoint: format!("{}/score", base_url.trim_end_matches('/')),
            class_count,
            agent,
        }
    }

    pub fn encode(image: &ImageTensor) -> String {
        STANDARD.encode(image.to_le_bytes())
    }
}

impl Classifier for RemoteClassifier {
    fn name(&self) -> &str {
        &self.name
    }

    fn class_count(&self) -> usize {
        self.class_count
    }

    fn score_batch(&self, images: &[ImageTensor], class: ClassLabel) -> Result<Vec<f64>> {
        if images.is_empty() {
            return Ok(Vec::new());
        }
        let encoded: Vec<String> = images.iter().map(Self::encode).collect();
        let request = ScoreRequest {
            class_id: class.0,
            images: &encoded,
        };
        let mut response = self
            .agent
            .post(&self.endpoint)
            .send_json(&request)
            .map_err(|e| Error::oracle(&self.name, e))?;
        let status = response.status();
        if status != 200 {
            return Err(Error::oracle(&self.name, format!("HTTP {status} from {}", self.endpoint)));
        }
        let body: ScoreResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| Error::oracle(&self.name, e))?;
        Ok(body.confidences)
    }
}
