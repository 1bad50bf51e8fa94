use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Window sizes evaluated by the window sweep.
pub const SWEEP_KS: [usize; 6] = [1, 3, 5, 7, 9, 11];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Transcript,
    Keyframes,
    Both,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Transcript => "transcript",
            Modality::Keyframes => "keyframes",
            Modality::Both => "both",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "transcript" | "transcripts" => Ok(Modality::Transcript),
            "keyframes" | "keyframe" | "slides" => Ok(Modality::Keyframes),
            "both" | "multimodal" => Ok(Modality::Both),
            other => Err(format!("unknown modality {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Selection {
    All,
    Rule(usize),
    /// Rule window whose size is taken from the sweep result at run time.
    RuleBest,
    Direct,
    Cot,
    CombineMm,
}

impl Selection {
    pub fn label(self) -> String {
        match self {
            Selection::All => "All".into(),
            Selection::Rule(k) => format!("Rule-{k}"),
            Selection::RuleBest => "Rule-Best".into(),
            Selection::Direct => "Direct".into(),
            Selection::Cot => "CoT".into(),
            Selection::CombineMm => "CombineMM".into(),
        }
    }

    fn key(self) -> String {
        match self {
            Selection::All => "all".into(),
            Selection::Rule(k) => format!("rule-{k}"),
            Selection::RuleBest => "rule-best".into(),
            Selection::Direct => "direct".into(),
            Selection::Cot => "cot".into(),
            Selection::CombineMm => "combinemm".into(),
        }
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, Selection::Direct | Selection::Cot | Selection::CombineMm)
    }
}

impl FromStr for Selection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        match s.as_str() {
            "all" => return Ok(Selection::All),
            "direct" => return Ok(Selection::Direct),
            "cot" => return Ok(Selection::Cot),
            "combinemm" | "combine-mm" | "combine_mm" => return Ok(Selection::CombineMm),
            "rule-best" | "rulebest" | "rule_best" => return Ok(Selection::RuleBest),
            _ => {}
        }
        let k = s
            .strip_prefix("rule")
            .map(|rest| rest.trim_start_matches(['-', '_']))
            .ok_or_else(|| format!("unknown selection {s:?}"))?;
        match k.parse::<usize>() {
            Ok(k) if k >= 1 => Ok(Selection::Rule(k)),
            _ => Err(format!("rule window must be a positive integer, got {k:?}")),
        }
    }
}

/// One context-construction setting: selection method, optional rewriting,
/// and the modality it reads from.
///
/// Text form is `[modality/]selection[+rewrite]`, e.g. `keyframes/cot+rewrite`.
/// The modality defaults to transcript, or to both for `combinemm`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ContextStrategy {
    pub modality: Modality,
    pub selection: Selection,
    pub rewrite: bool,
}

impl ContextStrategy {
    pub fn new(selection: Selection, rewrite: bool, modality: Modality) -> Result<Self, String> {
        let s = ContextStrategy {
            modality,
            selection,
            rewrite,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<(), String> {
        match (self.selection, self.modality) {
            (Selection::CombineMm, Modality::Both) => Ok(()),
            (Selection::CombineMm, m) => Err(format!("CombineMM needs both modalities, not {m}")),
            (s, Modality::Both) => Err(format!("{} reads a single modality", s.label())),
            (Selection::Rule(0), _) => Err("rule window must be at least 1".into()),
            _ => Ok(()),
        }
    }

    /// Row label as used in reports, e.g. `CoT+Rewrite`.
    pub fn label(&self) -> String {
        let mut l = self.selection.label();
        if self.rewrite {
            l.push_str("+Rewrite");
        }
        l
    }

    /// Stable identifier, also used in file names.
    pub fn key(&self) -> String {
        format!("{}/{}{}", self.modality, self.selection.key(), if self.rewrite { "+rewrite" } else { "" })
    }

    pub fn file_stem(&self) -> String {
        self.key().replace(['/', '+'], "-")
    }

    /// Same strategy with `RuleBest` replaced by a concrete window.
    pub fn resolved(mut self, rule_best_k: usize) -> Self {
        if self.selection == Selection::RuleBest {
            self.selection = Selection::Rule(rule_best_k);
        }
        self
    }
}

impl fmt::Display for ContextStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

impl FromStr for ContextStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (modality, rest) = match s.split_once('/') {
            Some((m, rest)) => (Some(m.parse::<Modality>()?), rest),
            None => (None, s),
        };
        let rest = rest.trim().to_ascii_lowercase();
        let (sel, rewrite) = match rest.strip_suffix("+rewrite") {
            Some(sel) => (sel, true),
            None => (rest.as_str(), false),
        };
        let selection: Selection = sel.parse()?;
        let modality = modality.unwrap_or(if selection == Selection::CombineMm {
            Modality::Both
        } else {
            Modality::Transcript
        });
        ContextStrategy::new(selection, rewrite, modality)
    }
}

impl TryFrom<String> for ContextStrategy {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<ContextStrategy> for String {
    fn from(s: ContextStrategy) -> String {
        s.key()
    }
}
