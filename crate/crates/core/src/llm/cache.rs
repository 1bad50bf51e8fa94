use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{ChatExchange, ChatRequest, ModelConfig};
use crate::util::{sanitize_component, write_atomic};

/// Content hash of everything that can change a model's answer. Fields are
/// length-prefixed so no two distinct inputs share an encoding.
pub fn cache_key(config: &ModelConfig, request: &ChatRequest) -> String {
    let mut h = Sha256::new();
    let mut field = |bytes: &[u8]| {
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(bytes);
    };
    field(b"chat-v1");
    field(config.model.as_bytes());
    field(request.prompt.as_bytes());
    field(&config.temperature.to_bits().to_le_bytes());
    field(&config.max_tokens.to_le_bytes());
    field(&request.attempt.to_le_bytes());
    field(&(request.images.len() as u64).to_le_bytes());
    for img in &request.images {
        field(Sha256::digest(img.bytes.as_slice()).as_slice());
    }
    hex::encode(h.finalize())
}

/// `{root}/{model}/{key}.json`, one file per exchange.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    root: PathBuf,
}

impl ResponseCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ResponseCache { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, model: &str, key: &str) -> PathBuf {
        self.root.join(sanitize_component(model)).join(format!("{key}.json"))
    }

    pub fn get(&self, model: &str, key: &str) -> Option<ChatExchange> {
        let raw = fs::read(self.path(model, key)).ok()?;
        match serde_json::from_slice::<ChatExchange>(&raw) {
            Ok(ex) if ex.cache_key == key => Some(ex),
            Ok(_) => None,
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {key}: {e}");
                None
            }
        }
    }

    pub fn put(&self, exchange: &ChatExchange) -> io::Result<()> {
        let path = self.path(&exchange.model, &exchange.cache_key);
        let body = serde_json::to_vec_pretty(exchange).map_err(io::Error::other)?;
        write_atomic(&path, &body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ImageInput;
    use proptest::prelude::*;

    fn cfg() -> ModelConfig {
        ModelConfig::new("http://x", "m")
    }

    #[test]
    fn key_depends_on_every_input() {
        let base = cache_key(&cfg(), &ChatRequest::text("p"));
        assert_eq!(base, cache_key(&cfg(), &ChatRequest::text("p")));
        assert_ne!(base, cache_key(&cfg(), &ChatRequest::text("p").with_attempt(1)));
        let mut hot = cfg();
        hot.temperature = 0.7;
        assert_ne!(base, cache_key(&hot, &ChatRequest::text("p")));
        let other = ModelConfig::new("http://x", "m2");
        assert_ne!(base, cache_key(&other, &ChatRequest::text("p")));
        let img = ChatRequest::text("p").with_image(ImageInput::png("a", vec![1]));
        let img2 = ChatRequest::text("p").with_image(ImageInput::png("a", vec![2]));
        assert_ne!(cache_key(&cfg(), &img), cache_key(&cfg(), &img2));
        // the reference name does not matter, only the content
        let img3 = ChatRequest::text("p").with_image(ImageInput::png("b", vec![1]));
        assert_eq!(cache_key(&cfg(), &img), cache_key(&cfg(), &img3));
    }

    proptest! {
        #[test]
        fn near_identical_prompts_never_collide(
            prompt in "[a-z \n]{0,40}",
            pos in 0usize..41,
            ch in prop::char::range('a', 'z'),
        ) {
            let pos = pos.min(prompt.len());
            let mut edited = prompt.clone();
            edited.insert(pos, ch);
            let mut trailing = prompt.clone();
            trailing.push(' ');
            let k = cache_key(&cfg(), &ChatRequest::text(prompt.clone()));
            prop_assert_ne!(&k, &cache_key(&cfg(), &ChatRequest::text(edited)));
            prop_assert_ne!(&k, &cache_key(&cfg(), &ChatRequest::text(trailing)));
            prop_assert_eq!(&k, &cache_key(&cfg(), &ChatRequest::text(prompt)));
        }
    }
}
