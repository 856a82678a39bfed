//! Replay gateway: serves completions from content-addressed fixtures and
//! fails closed on a miss. Zero network operations by construction.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use super::{request_fixture_key, ChatModel, ChatTurnRequest, ChatTurnResponse, GatewayError};

pub struct ReplayGateway {
    dir: PathBuf,
}

impl ReplayGateway {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let dir = dir.as_ref().to_path_buf();
        if !dir.is_dir() {
            return Err(GatewayError::Configuration(format!(
                "gateway fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(ReplayGateway { dir })
    }
}

impl ChatModel for ReplayGateway {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let key = request_fixture_key(request);
        let path = self.dir.join(format!("{key}.json"));
        let text = std::fs::read_to_string(&path)
            .map_err(|_| GatewayError::FixtureMiss { key: key.clone() })?;
        serde_json::from_str(&text).map_err(|e| GatewayError::Decode {
            message: format!("malformed fixture {key}: {e}"),
            raw: text,
        })
    }
}

/// Wraps a model and records every (request, response) pair as fixtures
/// a [`ReplayGateway`] can serve later.
pub struct RecordingGateway {
    inner: Arc<dyn ChatModel>,
    dir: PathBuf,
}

impl RecordingGateway {
    pub fn new(inner: Arc<dyn ChatModel>, dir: impl AsRef<Path>) -> std::io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir)?;
        Ok(RecordingGateway { inner, dir })
    }
}

impl ChatModel for RecordingGateway {
    fn complete(&self, request: &ChatTurnRequest) -> Result<ChatTurnResponse, GatewayError> {
        let response = self.inner.complete(request)?;
        let key = request_fixture_key(request);
        let path = self.dir.join(format!("{key}.json"));
        let body = serde_json::to_string_pretty(&response).expect("responses serialize");
        std::fs::write(path, body).map_err(|e| {
            GatewayError::Configuration(format!("cannot record fixture {key}: {e}"))
        })?;
        Ok(response)
    }
}
