//! Prompt templates with `{slot}` placeholders.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateName {
    ActionProposal,
    SelfRefinement,
    WorldModel,
    RewardModel,
}

impl TemplateName {
    pub const ALL: [TemplateName; 4] = [
        TemplateName::ActionProposal,
        TemplateName::SelfRefinement,
        TemplateName::WorldModel,
        TemplateName::RewardModel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateName::ActionProposal => "action_proposal",
            TemplateName::SelfRefinement => "self_refinement",
            TemplateName::WorldModel => "world_model",
            TemplateName::RewardModel => "reward_model",
        }
    }

    /// Shipped body of the template.
    pub fn source(self) -> &'static str {
        match self {
            TemplateName::ActionProposal => include_str!("../../templates/action_proposal.txt"),
            TemplateName::SelfRefinement => include_str!("../../templates/self_refinement.txt"),
            TemplateName::WorldModel => include_str!("../../templates/world_model.txt"),
            TemplateName::RewardModel => include_str!("../../templates/reward_model.txt"),
        }
    }
}

impl fmt::Display for TemplateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("missing binding for slot {{{0}}}")]
    MissingSlot(String),
    #[error("unterminated slot at byte {0}")]
    Unterminated(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: Option<TemplateName>,
    pub body: String,
    pub required_slots: BTreeSet<String>,
    segments: Vec<Segment>,
}

impl PromptTemplate {
    /// Every `{...}` in `body` is a slot.
    pub fn parse(body: &str) -> Result<Self, TemplateError> {
        let mut segments = Vec::new();
        let mut required = BTreeSet::new();
        let mut rest = body;
        let mut offset = 0;
        while let Some(open) = rest.find('{') {
            if open > 0 {
                segments.push(Segment::Literal(rest[..open].to_string()));
            }
            let after = &rest[open + 1..];
            let close = after.find('}').ok_or(TemplateError::Unterminated(offset + open))?;
            let name = after[..close].to_string();
            required.insert(name.clone());
            segments.push(Segment::Slot(name));
            let consumed = open + 1 + close + 1;
            offset += consumed;
            rest = &rest[consumed..];
        }
        if !rest.is_empty() {
            segments.push(Segment::Literal(rest.to_string()));
        }
        Ok(Self {
            name: None,
            body: body.to_string(),
            required_slots: required,
            segments,
        })
    }

    pub fn builtin(name: TemplateName) -> Self {
        let mut t = Self::parse(name.source()).expect("shipped templates are well-formed");
        t.name = Some(name);
        t
    }

    /// Substitutes every slot in one pass; bound values are not rescanned.
    pub fn render(&self, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
        let mut out = String::with_capacity(self.body.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot(name) => out.push_str(
                    bindings
                        .get(name)
                        .ok_or_else(|| TemplateError::MissingSlot(name.clone()))?,
                ),
            }
        }
        Ok(out)
    }

    /// Inverse of [`render`](Self::render): recovers slot values from a
    /// rendered prompt. Each slot extends to the next occurrence of the
    /// literal that follows it, so values containing that literal are not
    /// recoverable. A slot that appears twice must bind the same value.
    pub fn extract(&self, rendered: &str) -> Option<BTreeMap<String, String>> {
        let mut out = BTreeMap::new();
        let mut rest = rendered;
        let mut i = 0;
        while i < self.segments.len() {
            match &self.segments[i] {
                Segment::Literal(lit) => {
                    rest = rest.strip_prefix(lit.as_str())?;
                    i += 1;
                }
                Segment::Slot(name) => {
                    let value = match self.segments.get(i + 1) {
                        // A trailing literal must match at the very end.
                        Some(Segment::Literal(next)) if i + 2 == self.segments.len() => {
                            let v = rest.strip_suffix(next.as_str())?;
                            rest = &rest[v.len()..];
                            v
                        }
                        Some(Segment::Literal(next)) => {
                            let end = rest.find(next.as_str())?;
                            let v = &rest[..end];
                            rest = &rest[end..];
                            v
                        }
                        // Adjacent slots are ambiguous.
                        Some(Segment::Slot(_)) => return None,
                        None => std::mem::take(&mut rest),
                    };
                    match out.get(name) {
                        Some(prev) if prev != value => return None,
                        _ => {
                            out.insert(name.clone(), value.to_string());
                        }
                    }
                    i += 1;
                }
            }
        }
        rest.is_empty().then_some(out)
    }
}

/// Renders a shipped template.
pub fn render_template(name: TemplateName, bindings: &BTreeMap<String, String>) -> Result<String, TemplateError> {
    PromptTemplate::builtin(name).render(bindings)
}
