use serde::{Deserialize, Serialize};

use super::strategy::{ContextStrategy, Modality, Selection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    #[default]
    NotApplicable,
    Pass,
    Fail,
    /// Validation kept failing and a rule window was used instead.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Validation {
    pub integrity: Check,
    pub explicitness: Check,
    /// Model calls spent on selection (all modalities).
    pub selection_attempts: u32,
    pub rewrite_attempts: u32,
    /// Excerpts discarded for failing the integrity check.
    pub dropped_excerpts: usize,
    /// Statements discarded for failing the explicitness check.
    pub dropped_statements: usize,
    /// Set when one modality contributed nothing and the other was used alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

/// One unit of a lecture (a transcript segment or a keyframe caption).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextUnit {
    pub id: usize,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeStatement {
    pub text: String,
    pub contains_answer: bool,
    #[serde(default)]
    pub granularity: String,
}

/// Everything context construction produced for one (item, strategy).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub strategy: ContextStrategy,
    /// Segment or keyframe ID of the item's timestamp in the selected modality.
    pub anchor_id: usize,
    /// Units shown verbatim (All and Rule strategies).
    #[serde(default)]
    pub listing: Vec<ContextUnit>,
    #[serde(default)]
    pub selected_transcript: Vec<String>,
    #[serde(default)]
    pub selected_keyframe_text: Vec<String>,
    #[serde(default)]
    pub contextual_summary: String,
    #[serde(default)]
    pub statements: Vec<KnowledgeStatement>,
    pub validation: Validation,
    #[serde(default)]
    pub reasoning: String,
    /// Cache keys of the model exchanges behind this bundle, in call order.
    #[serde(default)]
    pub exchanges: Vec<String>,
}

impl ContextBundle {
    pub(crate) fn new(strategy: ContextStrategy, anchor_id: usize) -> Self {
        ContextBundle {
            strategy,
            anchor_id,
            listing: Vec::new(),
            selected_transcript: Vec::new(),
            selected_keyframe_text: Vec::new(),
            contextual_summary: String::new(),
            statements: Vec::new(),
            validation: Validation::default(),
            reasoning: String::new(),
            exchanges: Vec::new(),
        }
    }

    pub fn has_selection(&self) -> bool {
        !self.listing.is_empty() || !self.selected_transcript.is_empty() || !self.selected_keyframe_text.is_empty()
    }

    /// The selected context before rewriting.
    ///
    /// All lists every unit as `ID. text`; a rule window lists bare texts;
    /// model selections become labeled sections.
    pub fn render_selection(&self) -> String {
        if !self.listing.is_empty() {
            return self.listing_lines().join("\n");
        }
        let mut lines = Vec::new();
        if !self.contextual_summary.is_empty() {
            lines.push(format!("Contextual summary: {}", self.contextual_summary));
        }
        if !self.selected_transcript.is_empty() {
            lines.push(format!("From Transcript Excerpt: {}", quoted(&self.selected_transcript)));
        }
        if !self.selected_keyframe_text.is_empty() {
            let label = if self.strategy.modality == Modality::Both {
                "From Keyframe Excerpt"
            } else {
                "From Slides"
            };
            lines.push(format!("{label}: {}", quoted(&self.selected_keyframe_text)));
        }
        lines.join("\n")
    }

    fn listing_lines(&self) -> Vec<String> {
        let with_ids = self.strategy.selection == Selection::All;
        self.listing
            .iter()
            .map(|u| if with_ids { format!("{}. {}", u.id, u.text) } else { u.text.clone() })
            .collect()
    }

    /// Byte offset of the anchor unit within `render()`. Only listings
    /// (All, Rule) that were not rewritten have one.
    pub fn anchor_offset(&self) -> Option<usize> {
        if !self.statements.is_empty() {
            return None;
        }
        let mut offset = 0;
        for (unit, line) in self.listing.iter().zip(self.listing_lines()) {
            if unit.id == self.anchor_id {
                return Some(offset);
            }
            offset += line.len() + 1;
        }
        None
    }

    /// Context handed to question generation: the rewritten statements when
    /// there are any, otherwise the selection.
    pub fn render(&self) -> String {
        if self.statements.is_empty() {
            return self.render_selection();
        }
        self.statements
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {}", i + 1, s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Only the All setting tells the generator where the timestamp is.
    pub fn timestamp_id(&self) -> Option<usize> {
        (self.strategy.selection == Selection::All).then_some(self.anchor_id)
    }
}

fn quoted(parts: &[String]) -> String {
    parts.iter().map(|p| format!("\"{p}\"")).collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(spec: &str) -> ContextBundle {
        ContextBundle::new(spec.parse().unwrap(), 2)
    }

    #[test]
    fn all_listing_has_ids() {
        let mut b = bundle("all");
        b.listing = (1..=3).map(|id| ContextUnit { id, text: format!("s{id}") }).collect();
        assert_eq!(b.render(), "1. s1\n2. s2\n3. s3");
        assert_eq!(b.timestamp_id(), Some(2));
        assert_eq!(&b.render()[b.anchor_offset().unwrap()..], "2. s2\n3. s3");
    }

    #[test]
    fn rule_listing_is_bare() {
        let mut b = bundle("rule-3");
        b.listing = (4..=6).map(|id| ContextUnit { id, text: format!("s{id}") }).collect();
        assert_eq!(b.render(), "s4\ns5\ns6");
        assert_eq!(b.timestamp_id(), None);
    }

    #[test]
    fn sections_and_statements() {
        let mut b = bundle("combinemm+rewrite");
        b.contextual_summary = "Summary.".into();
        b.selected_transcript = vec!["t1".into(), "t2".into()];
        b.selected_keyframe_text = vec!["k1".into()];
        assert_eq!(
            b.render(),
            "Contextual summary: Summary.\nFrom Transcript Excerpt: \"t1\" \"t2\"\nFrom Keyframe Excerpt: \"k1\""
        );
        b.statements = vec![KnowledgeStatement {
            text: "ReLU zeroes negatives.".into(),
            contains_answer: true,
            granularity: String::new(),
        }];
        assert_eq!(b.render(), "1. ReLU zeroes negatives.");
    }

    #[test]
    fn keyframe_only_uses_slides_label() {
        let mut b = bundle("keyframes/cot");
        b.selected_keyframe_text = vec!["slide".into()];
        assert_eq!(b.render(), "From Slides: \"slide\"");
    }
}
