//! Content-addressed on-disk response cache.
//!
//! Layout: `{cache_dir}/{first 2 hex of key}/{key}.json`, each file
//! holding the request and the original response. Files are write-once;
//! concurrent writers of the same key are benign because the content is
//! identical. Replayed responses carry `cached = true` with the original
//! token counts.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{cache_key, CallMeta, ChatProvider, ChatRequest, ChatResponse, ProviderError};

#[derive(Serialize, Deserialize)]
struct CachedCall {
    key: String,
    request: ChatRequest,
    response: ChatResponse,
}

pub struct CacheProvider {
    inner: Arc<dyn ChatProvider>,
    dir: PathBuf,
}

impl CacheProvider {
    pub fn new(inner: Arc<dyn ChatProvider>, dir: impl Into<PathBuf>) -> Self {
        Self {
            inner,
            dir: dir.into(),
        }
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    fn io_err(path: &Path, source: std::io::Error) -> ProviderError {
        ProviderError::CacheIo {
            path: path.display().to_string(),
            source,
        }
    }
}

impl ChatProvider for CacheProvider {
    fn complete(&self, req: &ChatRequest, meta: &CallMeta) -> Result<ChatResponse, ProviderError> {
        let key = cache_key(req);
        let path = self.path_for(&key);

        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| Self::io_err(&path, e))?;
            let cached: CachedCall = serde_json::from_str(&text).map_err(|e| {
                Self::io_err(
                    &path,
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e),
                )
            })?;
            let mut response = cached.response;
            response.cached = true;
            return Ok(response);
        }

        let response = self.inner.complete(req, meta)?;
        let parent = path.parent().expect("cache path has a parent");
        std::fs::create_dir_all(parent).map_err(|e| Self::io_err(parent, e))?;
        // write to a temp name then rename; the final file appears atomically
        let tmp = parent.join(format!(".{key}.{}.tmp", std::process::id()));
        let record = CachedCall {
            key: key.clone(),
            request: req.clone(),
            response: response.clone(),
        };
        let body = serde_json::to_string_pretty(&record).expect("cache record serializes");
        std::fs::write(&tmp, body).map_err(|e| Self::io_err(&tmp, e))?;
        if path.exists() {
            let _ = std::fs::remove_file(&tmp);
        } else {
            std::fs::rename(&tmp, &path).map_err(|e| Self::io_err(&path, e))?;
        }
        Ok(response)
    }

    fn id(&self) -> &str {
        self.inner.id()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{ChatMessage, MockEntry, MockMatcher, MockProvider};

    fn mock() -> Arc<dyn ChatProvider> {
        Arc::new(MockProvider::new(vec![MockEntry {
            matcher: MockMatcher::Meta {
                stage: "s".into(),
                case_id: None,
                role: None,
            },
            response: "canned".into(),
            prompt_tokens: Some(10),
            completion_tokens: Some(5),
        }]))
    }

    #[test]
    fn second_call_hits_cache_with_identical_content() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheProvider::new(mock(), dir.path());
        let req = ChatRequest::new("m", vec![ChatMessage::user("q")]);
        let meta = CallMeta::new("s", "c1");

        let first = cache.complete(&req, &meta).unwrap();
        assert!(!first.cached);
        let second = cache.complete(&req, &meta).unwrap();
        assert!(second.cached);
        assert_eq!(first.content, second.content);
        assert_eq!(first.prompt_tokens, second.prompt_tokens);
        assert_eq!(first.completion_tokens, second.completion_tokens);

        let key = cache_key(&req);
        let expected = dir.path().join(&key[..2]).join(format!("{key}.json"));
        assert!(expected.is_file());
    }

    #[test]
    fn distinct_requests_get_distinct_files() {
        let dir = tempfile::tempdir().unwrap();
        let cache = CacheProvider::new(mock(), dir.path());
        let meta = CallMeta::new("s", "c1");
        cache
            .complete(&ChatRequest::new("m", vec![ChatMessage::user("a")]), &meta)
            .unwrap();
        cache
            .complete(&ChatRequest::new("m", vec![ChatMessage::user("b")]), &meta)
            .unwrap();
        let files: Vec<_> = walk(dir.path());
        assert_eq!(files.len(), 2);
    }

    fn walk(dir: &Path) -> Vec<PathBuf> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                out.extend(walk(&path));
            } else if path.extension().is_some_and(|e| e == "json") {
                out.push(path);
            }
        }
        out
    }
}
