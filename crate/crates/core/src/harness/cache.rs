//! Content-addressed response cache keyed by (backend id, question id,
//! config hash). Replay keeps re-runs deterministic and makes partial runs
//! resumable without re-querying the backend.

use std::path::{Path, PathBuf};

use super::backend::BackendResponse;
use crate::util::fnv1a64_hex;

#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl AsRef<Path>) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir.as_ref())?;
        Ok(Self {
            dir: dir.as_ref().to_path_buf(),
        })
    }

    fn entry_path(&self, backend_id: &str, question_id: &str, config_hash: &str) -> PathBuf {
        self.dir
            .join(sanitize(backend_id))
            .join(format!("{}__{config_hash}.json", sanitize(question_id)))
    }

    pub fn get(
        &self,
        backend_id: &str,
        question_id: &str,
        config_hash: &str,
    ) -> Option<BackendResponse> {
        let path = self.entry_path(backend_id, question_id, config_hash);
        let text = std::fs::read_to_string(path).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn put(
        &self,
        backend_id: &str,
        question_id: &str,
        config_hash: &str,
        response: &BackendResponse,
    ) -> std::io::Result<()> {
        let path = self.entry_path(backend_id, question_id, config_hash);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        // Write-then-rename keeps concurrent readers from seeing partial
        // entries.
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(response)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Filesystem-safe key: word characters kept, everything else folded, with
/// a hash suffix so distinct keys never collide.
fn sanitize(key: &str) -> String {
    let cleaned: String = key
        .chars()
        .map(|c| {
            if c.is_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '-'
            }
        })
        .take(80)
        .collect();
    format!("{cleaned}-{}", &fnv1a64_hex(key.as_bytes())[..8])
}
