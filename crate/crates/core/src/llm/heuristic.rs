//! Offline stand-in for a chat model. It answers the four planning prompts
//! with keyword-overlap heuristics so every pipeline runs without network
//! access or API keys. Answers are a pure function of the request.
//!
//! Proposals rank actions by how many instruction keywords the target element
//! shares: clickable elements by overlap, text boxes by overlap plus one when
//! the instruction contains a quoted string to type, and `stop` with a static
//! text as the answer when that text overlaps. With temperature above zero,
//! sample `i` of `n` is the `i mod len`-th ranked action; at temperature zero
//! every sample is the top action. The proposal ignores predicted changes, so
//! imagined actions are only as good as the current page allows.

use std::collections::BTreeSet;

use super::prompts::{CHANGES_HEADER, INTENT_LABEL, PROPOSED_LABEL};
use super::{CompletionRequest, PromptTemplate, Role, TemplateName, Transport, TransportError};
use crate::action::{Action, ActionKind, SUMMARY_PHRASE};
use crate::observation::{parse_elements, ElementRecord};

const STOPWORDS: &[&str] = &[
    "the", "a", "an", "of", "to", "in", "on", "for", "and", "or", "is", "what", "which", "find", "me", "my", "it",
    "this", "that", "with", "at", "by", "from", "be", "are", "was", "page", "please", "then", "go", "navigate", "show",
    "tell", "how", "much", "does", "do", "there",
];

fn stem(word: &str) -> String {
    if word.len() > 3 {
        if let Some(base) = word.strip_suffix("ies") {
            return format!("{base}y");
        }
        if let Some(base) = word.strip_suffix("es") {
            if base.ends_with(['s', 'x', 'z', 'h']) {
                return base.to_string();
            }
        }
        if word.ends_with('s') && !word.ends_with("ss") {
            return word[..word.len() - 1].to_string();
        }
    }
    word.to_string()
}

/// Lowercased, stemmed content words of `text`.
pub fn keywords(text: &str) -> BTreeSet<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.chars().count() > 1 && !STOPWORDS.contains(w))
        .map(stem)
        .collect()
}

/// Number of keywords `text` shares with `instruction`.
pub fn overlap(instruction: &str, text: &str) -> usize {
    keywords(instruction).intersection(&keywords(text)).count()
}

fn quoted(instruction: &str) -> Option<&str> {
    let start = instruction.find('"')? + 1;
    let len = instruction[start..].find('"')?;
    let q = instruction[start..start + len].trim();
    (!q.is_empty()).then_some(q)
}

/// Proposal candidates ranked best first; never empty.
pub fn rank_actions(instruction: &str, elements: &[ElementRecord]) -> Vec<Action> {
    let mut scored: Vec<(usize, Action)> = Vec::new();
    for el in elements {
        let ov = overlap(instruction, &el.text_content);
        match el.id {
            Some(id) if el.tag_type.eq_ignore_ascii_case("textbox") => {
                if let Some(q) = quoted(instruction) {
                    scored.push((ov + 1, Action::type_text(id, q, true)));
                }
            }
            Some(id) => scored.push((ov, Action::click(id))),
            None if ov > 0 => scored.push((ov, Action::stop(Some(&el.text_content)))),
            None => {}
        }
    }
    if !scored.iter().any(|(_, a)| a.is_stop()) {
        scored.push((0, Action::stop(None)));
    }
    // Stable: ties keep element order.
    scored.sort_by_key(|s| std::cmp::Reverse(s.0));
    scored.into_iter().map(|(_, a)| a).collect()
}

fn user_text(req: &CompletionRequest) -> &str {
    req.message_text(Role::User).unwrap_or("")
}

fn labelled<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(label))
}

fn changes(text: &str) -> Vec<&str> {
    text.split_once(CHANGES_HEADER)
        .map(|(_, rest)| {
            rest.lines()
                .filter_map(|l| l.strip_prefix("Step "))
                .filter_map(|l| l.split_once("): ").map(|(_, d)| d))
                .collect()
        })
        .unwrap_or_default()
}

/// Element list between `header` and the next non-element line.
fn page_elements(text: &str, header: &str) -> Vec<ElementRecord> {
    let Some((_, rest)) = text.split_once(header) else {
        return Vec::new();
    };
    let lines: Vec<&str> = rest
        .trim_start_matches('\n')
        .lines()
        .take_while(|l| l.starts_with('['))
        .collect();
    parse_elements(&lines.join("\n")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicModel;

impl HeuristicModel {
    fn propose(&self, req: &CompletionRequest, system: &str) -> Vec<String> {
        let n = req.n_samples.max(1) as usize;
        let Some(b) = PromptTemplate::builtin(TemplateName::ActionProposal).extract(system) else {
            return vec![format!("I cannot read the page. {SUMMARY_PHRASE} stop []"); n];
        };
        let instruction = &b["Task Objective"];
        let elements = parse_elements(&b["Web Information"]).unwrap_or_default();
        let ranked = rank_actions(instruction, &elements);
        (0..n)
            .map(|i| {
                let a = if req.temperature > 0.0 {
                    &ranked[i % ranked.len()]
                } else {
                    &ranked[0]
                };
                format!("Let's think step-by-step. The objective is: {instruction} {SUMMARY_PHRASE} {a}")
            })
            .collect()
    }

    fn refine(&self, req: &CompletionRequest, system: &str) -> String {
        let instruction = labelled(user_text(req), INTENT_LABEL).unwrap_or("");
        let Some(b) = PromptTemplate::builtin(TemplateName::SelfRefinement).extract(system) else {
            return "Thoughts: unreadable prompt.\nSelected actions: 0".into();
        };
        let mut keep = Vec::new();
        for line in b["action_descriptions"].lines().filter(|l| !l.trim().is_empty()) {
            let Some((idx, text)) = line.split_once(": ") else {
                continue;
            };
            let Ok(action) = text.parse::<Action>() else {
                continue;
            };
            let useless = match &action {
                Action::Stop { answer: Some(ans) } => overlap(instruction, ans) == 0,
                a => matches!(a.kind(), ActionKind::Scroll | ActionKind::Hover | ActionKind::Press),
            };
            if !useless {
                keep.push(idx.trim().to_string());
            }
        }
        if keep.is_empty() {
            keep.push("0".into());
        }
        format!(
            "Thoughts: kept actions related to the objective.\nSelected actions: {}",
            keep.join(";")
        )
    }

    fn predict(&self, req: &CompletionRequest, system: &str) -> String {
        let action = PromptTemplate::builtin(TemplateName::WorldModel)
            .extract(system)
            .and_then(|b| b["action"].trim().parse::<Action>().ok());
        let elements = page_elements(user_text(req), super::prompts::PAGE_HEADER);
        match action {
            Some(a) => match a.element().and_then(|id| elements.iter().find(|e| e.id == Some(id))) {
                Some(el) => format!("State changes: The '{}' page opens.", el.text_content),
                None => format!("State changes: The page updates after {a}."),
            },
            None => "State changes: The page updates.".into(),
        }
    }

    fn judge(&self, req: &CompletionRequest) -> String {
        let text = user_text(req);
        let instruction = labelled(text, INTENT_LABEL).unwrap_or("");
        let elements = page_elements(text, "Current page:");
        let last = labelled(text, "Final action: ")
            .or_else(|| labelled(text, PROPOSED_LABEL))
            .and_then(|s| s.trim().parse::<Action>().ok());
        let success = matches!(&last, Some(Action::Stop { answer: Some(ans) }) if overlap(instruction, ans) > 0);
        let target_text = last
            .as_ref()
            .and_then(Action::element)
            .and_then(|id| elements.iter().find(|e| e.id == Some(id)))
            .map(|e| e.text_content.as_str())
            .unwrap_or("");
        let on_track = success
            || overlap(instruction, target_text) > 0
            || changes(text).iter().any(|d| overlap(instruction, d) > 0);
        format!(
            "Thoughts: compared the predicted state with the intent.\nStatus: {}\nOn the right track to success: {}",
            if success { "success" } else { "failure" },
            if on_track { "yes" } else { "no" }
        )
    }
}

impl Transport for HeuristicModel {
    fn complete(&self, req: &CompletionRequest) -> Result<Vec<String>, TransportError> {
        let system = req
            .message_text(Role::System)
            .ok_or_else(|| TransportError::permanent("request has no system message"))?;
        let n = req.n_samples.max(1) as usize;
        let starts = |t: TemplateName| system.starts_with(&t.source()[..60]);
        if starts(TemplateName::ActionProposal) {
            Ok(self.propose(req, system))
        } else if starts(TemplateName::SelfRefinement) {
            Ok(vec![self.refine(req, system); n])
        } else if starts(TemplateName::WorldModel) {
            Ok(vec![self.predict(req, system); n])
        } else if starts(TemplateName::RewardModel) {
            Ok(vec![self.judge(req); n])
        } else {
            Err(TransportError::permanent("unrecognised prompt"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observation::ElementRecord;

    #[test]
    fn keywords_drop_stopwords_and_stem() {
        let k = keywords("Find the price of the red dresses in Women's Clothing.");
        let k: Vec<_> = k.iter().map(String::as_str).collect();
        assert_eq!(k, ["clothing", "dress", "price", "red", "women"]);
    }

    #[test]
    fn ranking_prefers_overlap_then_page_order() {
        let els = vec![
            ElementRecord::interactive(1, "link", "Electronics"),
            ElementRecord::interactive(3, "link", "Women's Clothing"),
            ElementRecord::static_text("Welcome"),
        ];
        let ranked = rank_actions("Find the red dress in Women's Clothing", &els);
        assert_eq!(ranked, vec![Action::click(3), Action::click(1), Action::stop(None)]);
    }

    #[test]
    fn quoted_text_becomes_a_type_action() {
        let els = vec![ElementRecord::interactive(1, "textbox", "Search listings")];
        let ranked = rank_actions("Search for \"blue bicycle\" now", &els);
        assert_eq!(ranked[0], Action::type_text(1, "blue bicycle", true));
    }
}
