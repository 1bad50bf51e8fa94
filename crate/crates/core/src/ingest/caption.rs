use futures::stream::{self, StreamExt};

use crate::corpus::Lecture;
use crate::llm::{ChatRequest, ImageInput, LlmClient};

pub const CAPTION_PROMPT: &str = "Describe this lecture slide. Summarize its title, the key points, \
any formulas, diagrams or code it shows, and the concepts it explains. Be faithful to the slide content.";

#[derive(Debug, Clone, Copy)]
pub struct CaptionOptions {
    /// Re-caption frames that already have a caption.
    pub force: bool,
    /// Upper bound on concurrently pending caption requests.
    pub concurrency: usize,
}

impl Default for CaptionOptions {
    fn default() -> Self {
        CaptionOptions {
            force: false,
            concurrency: 4,
        }
    }
}

/// Captions every keyframe with a vision model. Frames that already carry a
/// caption are left alone unless `force` is set. A frame whose request fails
/// gets `caption_error` set; the others are unaffected.
pub async fn caption_keyframes(mut lecture: Lecture, client: &LlmClient, options: CaptionOptions) -> Lecture {
    let todo: Vec<usize> = lecture
        .keyframes
        .iter()
        .enumerate()
        .filter(|(_, k)| options.force || k.caption.trim().is_empty())
        .map(|(i, _)| i)
        .collect();

    let results: Vec<(usize, Result<String, String>)> = stream::iter(todo)
        .map(|i| {
            let kf = &lecture.keyframes[i];
            let path = lecture.image_path(kf);
            let reference = kf.image_ref.clone();
            async move {
                let bytes = match tokio::fs::read(&path).await {
                    Ok(b) => b,
                    Err(e) => return (i, Err(format!("{}: {e}", path.display()))),
                };
                let req = ChatRequest::text(CAPTION_PROMPT).with_image(ImageInput::png(reference, bytes));
                match client.complete(&req).await {
                    Ok(ex) if !ex.response.trim().is_empty() => (i, Ok(ex.response.trim().to_string())),
                    Ok(_) => (i, Err("empty caption".to_string())),
                    Err(e) => (i, Err(e.to_string())),
                }
            }
        })
        .buffer_unordered(options.concurrency.max(1))
        .collect()
        .await;

    for (i, result) in results {
        let kf = &mut lecture.keyframes[i];
        match result {
            Ok(caption) => {
                kf.caption = caption;
                kf.caption_error = None;
            }
            Err(e) => {
                log::warn!("caption failed for {} keyframe {}: {e}", lecture.id, kf.index);
                kf.caption_error = Some(e);
            }
        }
    }
    lecture
}
