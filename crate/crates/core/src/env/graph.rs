//! Site graphs: pages, guarded transitions, variables, goals and tasks,
//! loaded from a JSON document.
//!
//! ```json
//! {
//!   "name": "shop-small",
//!   "variables": { "cart": "" },
//!   "pages": {
//!     "home": { "url": "http://shop.local/", "title": "Shop",
//!               "elements": [ { "id": 1, "tag": "link", "text": "Electronics" },
//!                             { "tag": "StaticText", "text": "Cart: {cart}" } ] }
//!   },
//!   "transitions": [
//!     { "from": "home", "action": "click [1]", "to": "electronics",
//!       "description": "The 'Electronics' category opens.",
//!       "updates": { "cart": "" }, "guard": [], "irreversible": false }
//!   ],
//!   "goals": { "task-id": { "kind": "reach_page", "target_page": "electronics" } },
//!   "tasks": [ { "id": "task-id", "instruction": "...", "start_page": "home", "max_steps": 10 } ]
//! }
//! ```
//!
//! `{name}` inside urls and element text is replaced by the variable's current
//! value. Transition `action` strings use the agent action grammar and match
//! by canonical signature.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::goal::{GoalSpec, Predicate};
use super::{EnvState, Stopped};
use crate::action::{Action, ElementId};
use crate::observation::{ElementRecord, Observation, TabInfo};
use crate::types::TaskInstance;

#[derive(Debug, Error)]
pub enum SiteLoadError {
    #[error("reading site file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid site graph: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementTemplate {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ElementId>,
    pub tag: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTemplate {
    pub url: String,
    pub title: String,
    #[serde(default)]
    pub elements: Vec<ElementTemplate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionEffect {
    pub target_page: String,
    pub variable_updates: Vec<(String, String)>,
    pub irreversible: bool,
    pub canonical_change_description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub from: String,
    pub action: Action,
    pub guard: Vec<Predicate>,
    pub effect: TransitionEffect,
}

impl Transition {
    pub fn enabled(&self, state: &EnvState) -> bool {
        state.page == self.from && self.guard.iter().all(|g| g.holds(state))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionSpec {
    from: String,
    action: String,
    to: String,
    description: String,
    #[serde(default)]
    updates: BTreeMap<String, String>,
    #[serde(default)]
    guard: Vec<Predicate>,
    #[serde(default)]
    irreversible: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskSpec {
    id: String,
    instruction: String,
    start_page: String,
    #[serde(default = "default_max_steps")]
    max_steps: u32,
    #[serde(default)]
    goal: Option<String>,
    #[serde(default)]
    difficulty: Option<String>,
    #[serde(default)]
    instruction_image_refs: Vec<String>,
}

fn default_max_steps() -> u32 {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SiteFile {
    name: String,
    #[serde(default)]
    variables: BTreeMap<String, String>,
    pages: BTreeMap<String, PageTemplate>,
    #[serde(default)]
    transitions: Vec<TransitionSpec>,
    #[serde(default)]
    goals: BTreeMap<String, GoalSpec>,
    #[serde(default)]
    tasks: Vec<TaskSpec>,
}

/// What applying an action to a state did.
#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    /// A transition fired; index into [`SiteGraph::transitions`].
    Transition(usize),
    Stopped,
    /// No transition matched; the state only gained a history entry and an
    /// error banner.
    Undefined,
}

#[derive(Debug, Clone)]
pub struct SiteGraph {
    name: String,
    variables: BTreeMap<String, String>,
    pages: BTreeMap<String, PageTemplate>,
    transitions: Vec<Transition>,
    by_source: HashMap<(String, String), Vec<usize>>,
    goals: BTreeMap<String, GoalSpec>,
    tasks: Vec<TaskInstance>,
}

impl SiteGraph {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, SiteLoadError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, SiteLoadError> {
        let file: SiteFile = serde_json::from_str(text).map_err(|e| SiteLoadError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: SiteFile) -> Result<Self, SiteLoadError> {
        let invalid = |msg: String| Err(SiteLoadError::Validation(msg));
        if file.pages.is_empty() {
            return invalid("site has no pages".into());
        }

        for (page_id, page) in &file.pages {
            check_template_vars(&page.url, &file.variables).map_err(|v| {
                SiteLoadError::Validation(format!("page {page_id:?} url references undeclared variable {v:?}"))
            })?;
            let mut seen = std::collections::HashSet::new();
            for el in &page.elements {
                check_template_vars(&el.text, &file.variables).map_err(|v| {
                    SiteLoadError::Validation(format!("page {page_id:?} element references undeclared variable {v:?}"))
                })?;
                if let Some(id) = el.id {
                    if !seen.insert(id) {
                        return invalid(format!("page {page_id:?} repeats element id {id}"));
                    }
                }
            }
        }

        let check_predicate = |p: &Predicate, ctx: &str| -> Result<(), SiteLoadError> {
            if let Some(page) = p.referenced_page() {
                if !file.pages.contains_key(page) {
                    return Err(SiteLoadError::Validation(format!(
                        "{ctx} references undeclared page {page:?}"
                    )));
                }
            }
            if let Some(var) = p.referenced_var() {
                if !file.variables.contains_key(var) {
                    return Err(SiteLoadError::Validation(format!(
                        "{ctx} references undeclared variable {var:?}"
                    )));
                }
            }
            Ok(())
        };

        let mut transitions = Vec::with_capacity(file.transitions.len());
        let mut by_source: HashMap<(String, String), Vec<usize>> = HashMap::new();
        for (i, spec) in file.transitions.into_iter().enumerate() {
            let ctx = format!("transition #{i} ({} / {})", spec.from, spec.action);
            if !file.pages.contains_key(&spec.from) {
                return invalid(format!("{ctx} starts at undeclared page {:?}", spec.from));
            }
            if !file.pages.contains_key(&spec.to) {
                return invalid(format!("{ctx} targets undeclared page {:?}", spec.to));
            }
            if spec.description.trim().is_empty() {
                return invalid(format!("{ctx} has an empty change description"));
            }
            for (var, value) in &spec.updates {
                if !file.variables.contains_key(var) {
                    return invalid(format!("{ctx} updates undeclared variable {var:?}"));
                }
                check_template_vars(value, &file.variables).map_err(|v| {
                    SiteLoadError::Validation(format!("{ctx} update references undeclared variable {v:?}"))
                })?;
            }
            for g in &spec.guard {
                check_predicate(g, &ctx)?;
            }
            let action: Action = spec
                .action
                .parse()
                .map_err(|e| SiteLoadError::Validation(format!("{ctx}: {e}")))?;
            if action.is_stop() {
                return invalid(format!("{ctx}: stop is handled by the simulator, not transitions"));
            }
            by_source
                .entry((spec.from.clone(), action.signature()))
                .or_default()
                .push(i);
            transitions.push(Transition {
                from: spec.from,
                action,
                guard: spec.guard,
                effect: TransitionEffect {
                    target_page: spec.to,
                    variable_updates: spec.updates.into_iter().collect(),
                    irreversible: spec.irreversible,
                    canonical_change_description: spec.description,
                },
            });
        }

        for (goal_id, goal) in &file.goals {
            let ctx = format!("goal {goal_id:?}");
            if let Some(msg) = goal.consistency_error() {
                return invalid(format!("{ctx}: {msg}"));
            }
            if let Some(page) = &goal.target_page {
                if !file.pages.contains_key(page) {
                    return invalid(format!("{ctx} targets undeclared page {page:?}"));
                }
            }
            for p in goal.conditions.iter().chain(&goal.milestones) {
                check_predicate(p, &ctx)?;
            }
        }

        let mut tasks = Vec::with_capacity(file.tasks.len());
        for spec in file.tasks {
            let goal = spec.goal.unwrap_or_else(|| spec.id.clone());
            if !file.goals.contains_key(&goal) {
                return invalid(format!("task {:?} references undeclared goal {goal:?}", spec.id));
            }
            if !file.pages.contains_key(&spec.start_page) {
                return invalid(format!(
                    "task {:?} starts at undeclared page {:?}",
                    spec.id, spec.start_page
                ));
            }
            if spec.max_steps == 0 {
                return invalid(format!("task {:?} has max_steps 0", spec.id));
            }
            if tasks.iter().any(|t: &TaskInstance| t.id == spec.id) {
                return invalid(format!("duplicate task id {:?}", spec.id));
            }
            tasks.push(TaskInstance {
                id: spec.id,
                site: file.name.clone(),
                instruction: spec.instruction,
                instruction_image_refs: spec.instruction_image_refs,
                start_page: spec.start_page,
                max_steps: spec.max_steps,
                goal,
                difficulty: spec.difficulty,
            });
        }

        Ok(Self {
            name: file.name,
            variables: file.variables,
            pages: file.pages,
            transitions,
            by_source,
            goals: file.goals,
            tasks,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn pages(&self) -> impl Iterator<Item = (&String, &PageTemplate)> {
        self.pages.iter()
    }

    pub fn page(&self, id: &str) -> Option<&PageTemplate> {
        self.pages.get(id)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn tasks(&self) -> &[TaskInstance] {
        &self.tasks
    }

    pub fn task(&self, id: &str) -> Option<&TaskInstance> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn goal(&self, id: &str) -> Option<&GoalSpec> {
        self.goals.get(id)
    }

    pub fn goal_for(&self, task: &TaskInstance) -> Option<&GoalSpec> {
        self.goals.get(&task.goal)
    }

    pub fn initial_bindings(&self) -> &BTreeMap<String, String> {
        &self.variables
    }

    /// Fresh state at `page`, or `None` if the page is undeclared.
    pub fn initial_state(&self, page: &str) -> Option<EnvState> {
        self.pages.contains_key(page).then(|| EnvState {
            page: page.to_string(),
            bindings: self.variables.clone(),
            history: Vec::new(),
            irreversible_count: 0,
            visited: vec![page.to_string()],
            stopped: None,
            error_banner: None,
        })
    }

    /// The enabled transition `action` triggers in `state`, if any.
    pub fn lookup(&self, state: &EnvState, action: &Action) -> Option<usize> {
        self.by_source
            .get(&(state.page.clone(), action.signature()))?
            .iter()
            .copied()
            .find(|&i| self.transitions[i].enabled(state))
    }

    /// Transitions enabled in `state`, in file order.
    pub fn enabled_transitions<'a>(
        &'a self,
        state: &'a EnvState,
    ) -> impl Iterator<Item = (usize, &'a Transition)> + 'a {
        self.transitions
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.enabled(state))
    }

    /// Pure transition function. Every call appends the action's signature to
    /// the history; nothing else changes for undefined actions or actions
    /// issued after a stop.
    pub fn step(&self, state: &EnvState, action: &Action) -> (EnvState, StepKind) {
        let mut next = state.clone();
        next.history.push(action.signature());
        next.error_banner = None;

        if state.stopped.is_some() {
            next.error_banner = Some("The task has already ended.".to_string());
            return (next, StepKind::Undefined);
        }
        if let Action::Stop { answer } = action {
            next.stopped = Some(Stopped { answer: answer.clone() });
            return (next, StepKind::Stopped);
        }
        match self.lookup(state, action) {
            Some(i) => {
                self.apply_effect(&mut next, &self.transitions[i].effect);
                (next, StepKind::Transition(i))
            }
            None => {
                next.error_banner = Some(format!("Error: the action {action} is not available on this page."));
                (next, StepKind::Undefined)
            }
        }
    }

    /// Applies an effect regardless of guards. Oracle world models use this to
    /// realise hallucinated transitions.
    pub fn apply_effect(&self, state: &mut EnvState, effect: &TransitionEffect) {
        state.page = effect.target_page.clone();
        // Update values may reference variables; they see the pre-update bindings.
        let before = state.bindings.clone();
        for (var, value) in &effect.variable_updates {
            state.bindings.insert(var.clone(), interpolate(value, &before));
        }
        if effect.irreversible {
            state.irreversible_count += 1;
        }
        state.visited.push(effect.target_page.clone());
    }

    /// The observation function: a pure projection of the state.
    pub fn observe(&self, state: &EnvState) -> Observation {
        let page = &self.pages[&state.page];
        let mut elements: Vec<ElementRecord> = page
            .elements
            .iter()
            .map(|el| ElementRecord {
                id: el.id,
                tag_type: el.tag.clone(),
                text_content: interpolate(&el.text, &state.bindings),
            })
            .collect();
        if let Some(banner) = &state.error_banner {
            elements.push(ElementRecord::static_text(banner));
        }
        let previous_action = state.history.last().and_then(|sig| sig.parse().ok());
        Observation {
            url: interpolate(&page.url, &state.bindings),
            elements,
            open_tabs: vec![TabInfo {
                index: 0,
                title: interpolate(&page.title, &state.bindings),
            }],
            previous_action,
            image_ref: Some(format!("screenshot://{}/{}", self.name, state.page)),
        }
    }

    /// Page rendered as minimal HTML.
    pub fn render_html(&self, state: &EnvState) -> String {
        let obs = self.observe(state);
        let title = &obs.open_tabs[0].title;
        let mut out = format!("<html><head><title>{}</title></head><body>\n", html_escape(title));
        for el in &obs.elements {
            let text = html_escape(&el.text_content);
            let line = match (el.id, el.tag_type.as_str()) {
                (Some(id), "link") => format!("<a id=\"{id}\" href=\"#\">{text}</a>"),
                (Some(id), "button") => format!("<button id=\"{id}\">{text}</button>"),
                (Some(id), "textbox") => {
                    format!("<input id=\"{id}\" type=\"text\" placeholder=\"{text}\"/>")
                }
                (Some(id), tag) => format!("<div id=\"{id}\" role=\"{tag}\">{text}</div>"),
                (None, _) => format!("<p>{text}</p>"),
            };
            out.push_str("  ");
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str("</body></html>");
        out
    }

    /// Page rendered as an accessibility tree.
    pub fn render_accessibility_tree(&self, state: &EnvState) -> String {
        let obs = self.observe(state);
        let mut out = format!("RootWebArea '{}' focused: True", obs.open_tabs[0].title);
        for el in &obs.elements {
            out.push_str("\n\t");
            match el.id {
                Some(id) => out.push_str(&format!("[{id}] {} '{}'", el.tag_type, el.text_content)),
                None => out.push_str(&format!("StaticText '{}'", el.text_content)),
            }
        }
        out
    }
}

fn html_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Replaces `{var}` with bound values; unknown names stay verbatim.
pub(crate) fn interpolate(template: &str, bindings: &BTreeMap<String, String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match bindings.get(name) {
                    Some(v) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

fn check_template_vars(template: &str, vars: &BTreeMap<String, String>) -> Result<(), String> {
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let Some(close) = after.find('}') else {
            return Ok(());
        };
        let name = &after[..close];
        if !vars.contains_key(name) {
            return Err(name.to_string());
        }
        rest = &after[close + 1..];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"{
        "name": "mini",
        "variables": { "q": "" },
        "pages": {
            "a": { "url": "http://a/", "title": "A",
                   "elements": [ { "id": 1, "tag": "link", "text": "Go" },
                                 { "tag": "StaticText", "text": "Query: {q}" } ] },
            "b": { "url": "http://a/b?q={q}", "title": "B", "elements": [] }
        },
        "transitions": [
            { "from": "a", "action": "click [1]", "to": "b", "description": "B opens.",
              "updates": { "q": "x" } }
        ],
        "goals": { "t": { "kind": "reach_page", "target_page": "b" } },
        "tasks": [ { "id": "t", "instruction": "Go to b", "start_page": "a" } ]
    }"#;

    #[test]
    fn loads_and_interpolates() {
        let g = SiteGraph::from_json(MINI).unwrap();
        assert_eq!(g.page_count(), 2);
        assert_eq!(g.tasks()[0].max_steps, 10);
        assert_eq!(g.tasks()[0].site, "mini");
        let s0 = g.initial_state("a").unwrap();
        assert_eq!(g.observe(&s0).elements[1].text_content, "Query: ");
        let (s1, kind) = g.step(&s0, &Action::click(1));
        assert_eq!(kind, StepKind::Transition(0));
        assert_eq!(g.observe(&s1).url, "http://a/b?q=x");
    }

    #[test]
    fn undeclared_variable_is_rejected() {
        let bad = MINI.replace("Query: {q}", "Query: {nope}");
        let err = SiteGraph::from_json(&bad).unwrap_err();
        assert!(err.to_string().contains("nope"), "{err}");
    }

    #[test]
    fn empty_document_is_a_parse_error() {
        assert!(matches!(SiteGraph::from_json(""), Err(SiteLoadError::Parse { .. })));
    }

    #[test]
    fn undefined_action_adds_banner_only() {
        let g = SiteGraph::from_json(MINI).unwrap();
        let s0 = g.initial_state("a").unwrap();
        let (s1, kind) = g.step(&s0, &Action::click(99));
        assert_eq!(kind, StepKind::Undefined);
        assert_eq!(s1.page, "a");
        assert_eq!(s1.history, vec!["click[99]".to_string()]);
        let obs = g.observe(&s1);
        assert!(obs.elements.last().unwrap().text_content.starts_with("Error:"));
    }

    #[test]
    fn renderings_cover_every_element() {
        let g = SiteGraph::from_json(MINI).unwrap();
        let s0 = g.initial_state("a").unwrap();
        let html = g.render_html(&s0);
        assert!(html.contains("<a id=\"1\" href=\"#\">Go</a>"));
        let tree = g.render_accessibility_tree(&s0);
        assert!(tree.contains("[1] link 'Go'"));
        assert!(tree.contains("StaticText 'Query: '"));
    }
}
