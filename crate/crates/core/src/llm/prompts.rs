//! Request builders for the four planning stages. The system message is the
//! rendered template; per-call context the templates have no slot for goes
//! into a user message using the labels below.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CompletionRequest, LlmError, Message, TemplateName};
use crate::action::Action;
use crate::observation::{render_elements, Observation};
use crate::types::{StateChange, TaskInstance};

pub const INTENT_LABEL: &str = "User Intent: ";
pub const HISTORY_LABEL: &str = "Action History: ";
pub const URL_LABEL: &str = "Current URL: ";
pub const CHANGES_HEADER: &str = "Predicted state changes:";
pub const PAGE_HEADER: &str = "Initial page:";
pub const PROPOSED_LABEL: &str = "Proposed next action: ";
pub const REPRESENTATION_LABEL: &str = "Describe the result as: ";

/// Sampling parameters per stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model_name: String,
    pub max_tokens: u32,
    pub proposal_temperature: f64,
    pub world_model_temperature: f64,
    pub judge_temperature: f64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model_name: "gpt-4o".into(),
            max_tokens: 1024,
            proposal_temperature: 1.0,
            world_model_temperature: 0.7,
            judge_temperature: 0.0,
        }
    }
}

impl LlmSettings {
    fn request(&self, messages: Vec<Message>, temperature: f64, n: u32) -> CompletionRequest {
        CompletionRequest {
            messages,
            temperature,
            n_samples: n,
            max_tokens: self.max_tokens,
            model_name: self.model_name.clone(),
        }
    }
}

fn bindings(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// `click [1]; type [2] [x] [1]`, or `None` for an empty history.
pub fn history_line(history: &[Action]) -> String {
    if history.is_empty() {
        return "None".into();
    }
    history.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// One line per change: `Step 1 (click [5]): description`.
pub fn changes_block(changes: &[StateChange]) -> String {
    let mut out = String::from(CHANGES_HEADER);
    for c in changes {
        out.push_str(&format!(
            "\nStep {} ({}): {}",
            c.step_index, c.producing_action, c.description
        ));
    }
    out
}

fn screenshot_refs(task: &TaskInstance, obs: &Observation) -> Vec<String> {
    task.instruction_image_refs
        .iter()
        .cloned()
        .chain(obs.image_ref.clone())
        .collect()
}

/// Action-proposal prompt. `changes` are predicted changes the proposal
/// should assume already happened (used when imagining actions).
pub fn proposal_request(
    settings: &LlmSettings,
    task: &TaskInstance,
    obs: &Observation,
    history: &[Action],
    changes: &[StateChange],
    n: u32,
) -> Result<CompletionRequest, LlmError> {
    let previous = history
        .last()
        .or(obs.previous_action.as_ref())
        .map(ToString::to_string)
        .unwrap_or_else(|| "None".into());
    let system = super::render_template(
        TemplateName::ActionProposal,
        &bindings(&[
            ("Web Information", render_elements(&obs.elements)),
            ("Task Objective", task.instruction.clone()),
            (
                "Web Page Screenshot Image",
                obs.image_ref.clone().unwrap_or_else(|| "None".into()),
            ),
            ("Web URL", obs.url.clone()),
            ("Previous Tabs", obs.tabs_line()),
            ("Previous Action", previous),
        ]),
    )?;
    let mut user = format!("{HISTORY_LABEL}{}", history_line(history));
    if !changes.is_empty() {
        user.push('\n');
        user.push_str(&changes_block(changes));
    }
    user.push_str("\nIssue the next action.");
    let messages = vec![
        Message::system(system),
        Message::user(user).with_images(screenshot_refs(task, obs)),
    ];
    Ok(settings.request(messages, settings.proposal_temperature, n))
}

/// `0: click [1]` lines, one per candidate.
pub fn candidate_lines(candidates: &[Action]) -> String {
    candidates
        .iter()
        .enumerate()
        .map(|(i, a)| format!("\n{i}: {a}"))
        .collect()
}

pub fn refinement_request(
    settings: &LlmSettings,
    task: &TaskInstance,
    obs: &Observation,
    history: &[Action],
    candidates: &[Action],
) -> Result<CompletionRequest, LlmError> {
    let screenshots: Vec<String> = obs.image_ref.iter().cloned().collect();
    let system = super::render_template(
        TemplateName::SelfRefinement,
        &bindings(&[
            ("last_actions_str", history_line(history)),
            ("current_url", obs.url.clone()),
            ("len(intent_images)", task.instruction_image_refs.len().to_string()),
            ("len(screenshots)", screenshots.len().to_string()),
            ("action_descriptions", candidate_lines(candidates)),
        ]),
    )?;
    let user = format!("{INTENT_LABEL}{}", task.instruction);
    let messages = vec![
        Message::system(system),
        Message::user(user).with_images(screenshot_refs(task, obs)),
    ];
    Ok(settings.request(messages, settings.judge_temperature, 1))
}

/// What the world model is asked to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StateRepresentation {
    #[default]
    ChangeDescription,
    FullHtml,
    AccessibilityTree,
}

impl StateRepresentation {
    pub fn as_str(self) -> &'static str {
        match self {
            StateRepresentation::ChangeDescription => "change_description",
            StateRepresentation::FullHtml => "full_html",
            StateRepresentation::AccessibilityTree => "accessibility_tree",
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            StateRepresentation::ChangeDescription => "a concise description of what changed",
            StateRepresentation::FullHtml => "the full HTML of the resulting page",
            StateRepresentation::AccessibilityTree => "the full accessibility tree of the resulting page",
        }
    }
}

impl std::str::FromStr for StateRepresentation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "change_description" => Ok(Self::ChangeDescription),
            "full_html" => Ok(Self::FullHtml),
            "accessibility_tree" => Ok(Self::AccessibilityTree),
            other => Err(format!("unknown state representation {other:?}")),
        }
    }
}

/// World-model prompt. The task instruction is deliberately not shown.
pub fn world_model_request(
    settings: &LlmSettings,
    obs: &Observation,
    prior: &[StateChange],
    action: &Action,
    representation: StateRepresentation,
) -> Result<CompletionRequest, LlmError> {
    let system = super::render_template(TemplateName::WorldModel, &bindings(&[("action", action.to_string())]))?;
    let mut user = format!(
        "{PAGE_HEADER}\n{}\n{URL_LABEL}{}\n{}",
        render_elements(&obs.elements),
        obs.url,
        changes_block(prior)
    );
    if representation != StateRepresentation::ChangeDescription {
        user.push_str(&format!("\n{REPRESENTATION_LABEL}{}", representation.instruction()));
    }
    let messages = vec![
        Message::system(system),
        Message::user(user).with_images(obs.image_ref.clone()),
    ];
    Ok(settings.request(messages, settings.world_model_temperature, 1))
}

/// What the judge is asked to evaluate.
#[derive(Debug, Clone, Copy)]
pub enum JudgeSubject<'a> {
    /// A simulated trajectory: predicted changes plus a final imagined action
    /// when the simulation stopped on one.
    Simulated {
        changes: &'a [StateChange],
        final_action: Option<&'a Action>,
    },
    /// A candidate scored without simulation.
    Action(&'a Action),
    /// The real current page.
    Current,
}

/// Reward-model prompt. `screenshots` is the ordered list of image refs; the
/// judge rotates it between samples.
pub fn judge_request(
    settings: &LlmSettings,
    task: &TaskInstance,
    history: &[Action],
    obs: &Observation,
    screenshots: Vec<String>,
    subject: JudgeSubject<'_>,
) -> Result<CompletionRequest, LlmError> {
    let system = super::render_template(TemplateName::RewardModel, &BTreeMap::new())?;
    let mut user = format!(
        "{INTENT_LABEL}{}\n{HISTORY_LABEL}{}\n{URL_LABEL}{}\nCurrent page:\n{}",
        task.instruction,
        history_line(history),
        obs.url,
        render_elements(&obs.elements)
    );
    match subject {
        JudgeSubject::Simulated { changes, final_action } => {
            user.push('\n');
            user.push_str(&changes_block(changes));
            if let Some(a) = final_action {
                user.push_str(&format!("\nFinal action: {a}"));
            }
        }
        JudgeSubject::Action(a) => user.push_str(&format!("\n{PROPOSED_LABEL}{a}")),
        JudgeSubject::Current => {}
    }
    let images = task
        .instruction_image_refs
        .iter()
        .cloned()
        .chain(screenshots)
        .collect::<Vec<_>>();
    let messages = vec![Message::system(system), Message::user(user).with_images(images)];
    Ok(settings.request(messages, settings.judge_temperature, 1))
}
