//! Agent-visible page observations and their `[id][tagType][text]` rendering.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{escape_brackets, Action, ElementId};

/// One line of the observation. Static text has no id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ElementRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ElementId>,
    #[serde(rename = "tag")]
    pub tag_type: String,
    #[serde(rename = "text")]
    pub text_content: String,
}

impl ElementRecord {
    pub fn interactive(id: ElementId, tag_type: &str, text: &str) -> Self {
        Self {
            id: Some(id),
            tag_type: tag_type.to_string(),
            text_content: text.to_string(),
        }
    }

    pub fn static_text(text: &str) -> Self {
        Self {
            id: None,
            tag_type: "StaticText".to_string(),
            text_content: text.to_string(),
        }
    }

    pub fn is_interactive(&self) -> bool {
        self.id.is_some()
    }

    /// `[1234][button]['Add to Cart']` or `[][StaticText][Sale ends]`.
    pub fn render(&self) -> String {
        let tag = escape_brackets(&self.tag_type);
        let text = escape_brackets(&self.text_content);
        match self.id {
            Some(id) => format!("[{id}][{tag}]['{text}']"),
            None => format!("[][{tag}][{text}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TabInfo {
    pub index: u32,
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub url: String,
    pub elements: Vec<ElementRecord>,
    pub open_tabs: Vec<TabInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous_action: Option<Action>,
    /// Opaque screenshot reference; never dereferenced here.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
}

impl Observation {
    pub fn find(&self, id: ElementId) -> Option<&ElementRecord> {
        self.elements.iter().find(|e| e.id == Some(id))
    }

    pub fn tabs_line(&self) -> String {
        self.open_tabs
            .iter()
            .map(|t| format!("Tab {}: {}", t.index, t.title))
            .collect::<Vec<_>>()
            .join("; ")
    }

    /// Short content hash identifying this observation (first 16 hex chars of
    /// SHA-256 over the URL, tabs and rendered elements).
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.url.as_bytes());
        hasher.update(b"\n");
        hasher.update(self.tabs_line().as_bytes());
        hasher.update(b"\n");
        hasher.update(render_observation(self).as_bytes());
        let full = hex::encode(hasher.finalize());
        full[..16].to_string()
    }
}

/// One element per line, in listed order.
pub fn render_observation(obs: &Observation) -> String {
    render_elements(&obs.elements)
}

pub fn render_elements(elements: &[ElementRecord]) -> String {
    elements
        .iter()
        .map(ElementRecord::render)
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct ObservationParseError {
    pub line: usize,
    pub message: String,
}

/// Inverse of [`render_elements`].
pub fn parse_elements(text: &str) -> Result<Vec<ElementRecord>, ObservationParseError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_element_line(line).map_err(|message| ObservationParseError { line: idx + 1, message })?);
    }
    Ok(out)
}

fn parse_element_line(line: &str) -> Result<ElementRecord, String> {
    let groups = split_groups(line)?;
    let [id, tag, text]: [String; 3] = groups
        .try_into()
        .map_err(|g: Vec<String>| format!("expected 3 bracket groups, found {}", g.len()))?;
    if id.is_empty() {
        return Ok(ElementRecord {
            id: None,
            tag_type: tag,
            text_content: text,
        });
    }
    let id: ElementId = id
        .parse()
        .map_err(|_| format!("element id {id:?} is not a nonnegative integer"))?;
    let text = text
        .strip_prefix('\'')
        .and_then(|t| t.strip_suffix('\''))
        .ok_or_else(|| "interactive element text must be single-quoted".to_string())?
        .to_string();
    Ok(ElementRecord {
        id: Some(id),
        tag_type: tag,
        text_content: text,
    })
}

/// Splits `[a][b][c]` into unescaped group contents. Quote characters inside
/// a group are literal; only backslash escapes brackets.
fn split_groups(line: &str) -> Result<Vec<String>, String> {
    let mut groups = Vec::new();
    let mut chars = line.trim().chars();
    loop {
        match chars.next() {
            None => return Ok(groups),
            Some('[') => {}
            Some(c) => return Err(format!("unexpected character {c:?} between groups")),
        }
        let mut current = String::new();
        loop {
            match chars.next() {
                None => return Err("unterminated bracket".into()),
                Some('\\') => match chars.next() {
                    Some(c) => current.push(c),
                    None => return Err("dangling escape".into()),
                },
                Some(']') => break,
                Some('[') => return Err("unescaped '[' inside group".into()),
                Some(c) => current.push(c),
            }
        }
        groups.push(current);
    }
}
