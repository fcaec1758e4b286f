//! The browser action grammar: typed actions, the bracket syntax agents emit,
//! and the canonical signature used for dedup, repeat detection and
//! transition lookup.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Phrase that precedes the action in an agent completion.
pub const SUMMARY_PHRASE: &str = "In summary, the next action I will perform is";

pub type ElementId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScrollDirection {
    Up,
    Down,
}

impl ScrollDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            ScrollDirection::Up => "up",
            ScrollDirection::Down => "down",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Click,
    Hover,
    Type,
    Press,
    Goto,
    GoBack,
    GoForward,
    NewTab,
    TabFocus,
    TabClose,
    Scroll,
    Stop,
}

impl ActionKind {
    pub const ALL: [ActionKind; 12] = [
        ActionKind::Click,
        ActionKind::Hover,
        ActionKind::Type,
        ActionKind::Press,
        ActionKind::Goto,
        ActionKind::GoBack,
        ActionKind::GoForward,
        ActionKind::NewTab,
        ActionKind::TabFocus,
        ActionKind::TabClose,
        ActionKind::Scroll,
        ActionKind::Stop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Click => "click",
            ActionKind::Hover => "hover",
            ActionKind::Type => "type",
            ActionKind::Press => "press",
            ActionKind::Goto => "goto",
            ActionKind::GoBack => "go_back",
            ActionKind::GoForward => "go_forward",
            ActionKind::NewTab => "new_tab",
            ActionKind::TabFocus => "tab_focus",
            ActionKind::TabClose => "tab_close",
            ActionKind::Scroll => "scroll",
            ActionKind::Stop => "stop",
        }
    }

    fn from_token(token: &str) -> Option<Self> {
        let kind = match token.to_ascii_lowercase().as_str() {
            "click" => ActionKind::Click,
            "hover" => ActionKind::Hover,
            "type" => ActionKind::Type,
            "press" => ActionKind::Press,
            "goto" => ActionKind::Goto,
            "go_back" => ActionKind::GoBack,
            "go_forward" => ActionKind::GoForward,
            "new_tab" => ActionKind::NewTab,
            "tab_focus" => ActionKind::TabFocus,
            // the proposal prompt spells it close_tab
            "tab_close" | "close_tab" => ActionKind::TabClose,
            "scroll" => ActionKind::Scroll,
            "stop" => ActionKind::Stop,
            _ => return None,
        };
        Some(kind)
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One browser action. Each variant carries exactly the arguments its kind
/// requires, so an `Action` value is always well-formed.
///
/// Text arguments are whitespace-normalized by the constructors and the
/// parser; build actions through those to keep `==` and [`Action::signature`]
/// in agreement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Click {
        elem: ElementId,
    },
    Hover {
        elem: ElementId,
    },
    Type {
        elem: ElementId,
        text: String,
        press_enter_after: bool,
    },
    Press {
        key_comb: String,
    },
    Goto {
        url: String,
    },
    GoBack,
    GoForward,
    NewTab,
    TabFocus {
        tab_index: u32,
    },
    TabClose,
    Scroll {
        direction: ScrollDirection,
    },
    Stop {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
    },
}

impl Action {
    pub fn click(elem: ElementId) -> Self {
        Action::Click { elem }
    }

    pub fn hover(elem: ElementId) -> Self {
        Action::Hover { elem }
    }

    pub fn type_text(elem: ElementId, text: &str, press_enter_after: bool) -> Self {
        Action::Type {
            elem,
            text: normalize_whitespace(text),
            press_enter_after,
        }
    }

    pub fn press(key_comb: &str) -> Self {
        Action::Press {
            key_comb: normalize_whitespace(key_comb),
        }
    }

    pub fn goto(url: &str) -> Self {
        Action::Goto {
            url: normalize_whitespace(url),
        }
    }

    pub fn tab_focus(tab_index: u32) -> Self {
        Action::TabFocus { tab_index }
    }

    pub fn scroll(direction: ScrollDirection) -> Self {
        Action::Scroll { direction }
    }

    /// A stop action. Blank answers collapse to `None`.
    pub fn stop(answer: Option<&str>) -> Self {
        let answer = answer.map(normalize_whitespace).filter(|a| !a.is_empty());
        Action::Stop { answer }
    }

    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Click { .. } => ActionKind::Click,
            Action::Hover { .. } => ActionKind::Hover,
            Action::Type { .. } => ActionKind::Type,
            Action::Press { .. } => ActionKind::Press,
            Action::Goto { .. } => ActionKind::Goto,
            Action::GoBack => ActionKind::GoBack,
            Action::GoForward => ActionKind::GoForward,
            Action::NewTab => ActionKind::NewTab,
            Action::TabFocus { .. } => ActionKind::TabFocus,
            Action::TabClose => ActionKind::TabClose,
            Action::Scroll { .. } => ActionKind::Scroll,
            Action::Stop { .. } => ActionKind::Stop,
        }
    }

    pub fn is_stop(&self) -> bool {
        matches!(self, Action::Stop { .. })
    }

    /// Element the action targets, if any.
    pub fn element(&self) -> Option<ElementId> {
        match self {
            Action::Click { elem } | Action::Hover { elem } | Action::Type { elem, .. } => Some(*elem),
            _ => None,
        }
    }

    fn arguments(&self) -> Vec<String> {
        match self {
            Action::Click { elem } | Action::Hover { elem } => vec![elem.to_string()],
            Action::Type {
                elem,
                text,
                press_enter_after,
            } => vec![
                elem.to_string(),
                normalize_whitespace(text),
                if *press_enter_after { "1" } else { "0" }.to_string(),
            ],
            Action::Press { key_comb } => vec![normalize_whitespace(key_comb)],
            Action::Goto { url } => vec![normalize_whitespace(url)],
            Action::TabFocus { tab_index } => vec![tab_index.to_string()],
            Action::Scroll { direction } => vec![direction.as_str().to_string()],
            Action::Stop { answer } => {
                vec![answer.as_deref().map(normalize_whitespace).unwrap_or_default()]
            }
            Action::GoBack | Action::GoForward | Action::NewTab | Action::TabClose => Vec::new(),
        }
    }

    /// Canonical, whitespace-free form: `click[1234]`, `type[12][red dress][1]`,
    /// `stop[]`. Equal actions have equal signatures and vice versa.
    pub fn signature(&self) -> String {
        let mut out = self.kind().as_str().to_string();
        for arg in self.arguments() {
            out.push('[');
            out.push_str(&escape_brackets(&arg));
            out.push(']');
        }
        out
    }
}

/// Prompt form, e.g. `type [12] [red dress] [1]` or `stop []`.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().as_str())?;
        for arg in self.arguments() {
            write!(f, " [{}]", escape_brackets(&arg))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("completion does not contain the action summary phrase")]
    MissingSummaryPhrase,
    #[error("malformed action: {0}")]
    MalformedAction(String),
}

impl FromStr for Action {
    type Err = ActionParseError;

    /// Parses bare action syntax (`click [5]`, `stop`, `scroll [down]`).
    /// Only whitespace may follow the last argument.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (action, rest) = parse_prefix(s)?;
        if !rest.trim().is_empty() {
            return Err(malformed(format!("unexpected trailing text {:?}", rest.trim())));
        }
        Ok(action)
    }
}

/// Extracts the action that follows the last summary phrase in a completion.
pub fn parse_action(completion: &str) -> Result<Action, ActionParseError> {
    let start = find_last_phrase(completion).ok_or(ActionParseError::MissingSummaryPhrase)?;
    let tail = &completion[start + SUMMARY_PHRASE.len()..];
    let tail = tail.trim_start_matches(|c: char| c.is_whitespace() || c == '`' || c == ':');
    let (action, _) = parse_prefix(tail)?;
    Ok(action)
}

fn find_last_phrase(text: &str) -> Option<usize> {
    // case-insensitive search; the phrase is ASCII so byte offsets line up
    let lowered = text.to_ascii_lowercase();
    lowered.rfind(&SUMMARY_PHRASE.to_ascii_lowercase())
}

fn malformed(msg: impl Into<String>) -> ActionParseError {
    ActionParseError::MalformedAction(msg.into())
}

/// Parses `kind [arg]...` from the start of `input`, returning the action and
/// whatever text follows the last bracket group.
fn parse_prefix(input: &str) -> Result<(Action, &str), ActionParseError> {
    let input = input.trim_start();
    let token_len = input
        .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .unwrap_or(input.len());
    let token = &input[..token_len];
    if token.is_empty() {
        return Err(malformed("missing action kind"));
    }
    let kind = ActionKind::from_token(token).ok_or_else(|| malformed(format!("unknown kind {token:?}")))?;

    let mut rest = &input[token_len..];
    let mut args = Vec::new();
    loop {
        let trimmed = rest.trim_start();
        if !trimmed.starts_with('[') {
            break;
        }
        let (arg, after) = read_bracket_group(trimmed)?;
        args.push(arg);
        rest = after;
    }

    let action = build_action(kind, &args)?;
    Ok((action, rest))
}

/// Reads one `[...]` group, honouring backslash escapes and nested balanced
/// brackets. `input` must start with `[`.
fn read_bracket_group(input: &str) -> Result<(String, &str), ActionParseError> {
    let mut depth = 0usize;
    let mut out = String::new();
    let mut chars = input.char_indices();
    while let Some((idx, c)) = chars.next() {
        match c {
            '\\' => match chars.next() {
                Some((_, escaped)) => out.push(escaped),
                None => return Err(malformed("dangling escape")),
            },
            '[' => {
                if depth > 0 {
                    out.push('[');
                }
                depth += 1;
            }
            ']' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((out, &input[idx + 1..]));
                }
                out.push(']');
            }
            _ => out.push(c),
        }
    }
    Err(malformed("unterminated bracket"))
}

fn parse_element_id(arg: &str) -> Result<ElementId, ActionParseError> {
    arg.trim()
        .parse::<ElementId>()
        .map_err(|_| malformed(format!("element id {arg:?} is not a nonnegative integer")))
}

fn expect_arity(kind: ActionKind, args: &[String], allowed: &[usize]) -> Result<(), ActionParseError> {
    if allowed.contains(&args.len()) {
        Ok(())
    } else {
        Err(malformed(format!(
            "{kind} takes {allowed:?} arguments, got {}",
            args.len()
        )))
    }
}

fn build_action(kind: ActionKind, args: &[String]) -> Result<Action, ActionParseError> {
    let action = match kind {
        ActionKind::Click => {
            expect_arity(kind, args, &[1])?;
            Action::click(parse_element_id(&args[0])?)
        }
        ActionKind::Hover => {
            expect_arity(kind, args, &[1])?;
            Action::hover(parse_element_id(&args[0])?)
        }
        ActionKind::Type => {
            expect_arity(kind, args, &[2, 3])?;
            let elem = parse_element_id(&args[0])?;
            let press_enter_after = match args.get(2).map(|s| s.trim()) {
                None | Some("1") => true,
                Some("0") => false,
                Some(other) => return Err(malformed(format!("press_enter_after must be 0 or 1, got {other:?}"))),
            };
            Action::type_text(elem, &args[1], press_enter_after)
        }
        ActionKind::Press => {
            expect_arity(kind, args, &[1])?;
            let key = normalize_whitespace(&args[0]);
            if key.is_empty() {
                return Err(malformed("press needs a key combination"));
            }
            Action::press(&key)
        }
        ActionKind::Goto => {
            expect_arity(kind, args, &[1])?;
            let url = normalize_whitespace(&args[0]);
            if url.is_empty() {
                return Err(malformed("goto needs a url"));
            }
            Action::goto(&url)
        }
        ActionKind::GoBack => {
            expect_arity(kind, args, &[0])?;
            Action::GoBack
        }
        ActionKind::GoForward => {
            expect_arity(kind, args, &[0])?;
            Action::GoForward
        }
        ActionKind::NewTab => {
            expect_arity(kind, args, &[0])?;
            Action::NewTab
        }
        ActionKind::TabClose => {
            expect_arity(kind, args, &[0])?;
            Action::TabClose
        }
        ActionKind::TabFocus => {
            expect_arity(kind, args, &[1])?;
            let index = args[0]
                .trim()
                .parse::<u32>()
                .map_err(|_| malformed(format!("tab index {:?} is not a nonnegative integer", args[0])))?;
            Action::tab_focus(index)
        }
        ActionKind::Scroll => {
            expect_arity(kind, args, &[1])?;
            let raw = args[0].trim().to_ascii_lowercase();
            let raw = raw.strip_prefix("direction=").unwrap_or(&raw);
            let direction = match raw {
                "up" => ScrollDirection::Up,
                "down" => ScrollDirection::Down,
                other => return Err(malformed(format!("scroll direction {other:?}"))),
            };
            Action::scroll(direction)
        }
        ActionKind::Stop => {
            expect_arity(kind, args, &[0, 1])?;
            Action::stop(args.first().map(String::as_str))
        }
    };
    Ok(action)
}

/// Collapses runs of whitespace to single spaces and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub(crate) fn escape_brackets(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if matches!(c, '\\' | '[' | ']') {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_click_after_summary_phrase() {
        let text =
            "Let's think step by step. The button is 1234. In summary, the next action I will perform is click [1234]";
        assert_eq!(parse_action(text).unwrap(), Action::click(1234));
    }

    #[test]
    fn parses_type_with_enter_disabled() {
        let text = "In summary, the next action I will perform is type [12] [red dress] [0]";
        assert_eq!(
            parse_action(text).unwrap(),
            Action::Type {
                elem: 12,
                text: "red dress".into(),
                press_enter_after: false
            }
        );
    }

    #[test]
    fn missing_phrase_is_reported() {
        assert_eq!(
            parse_action("I think we should explore."),
            Err(ActionParseError::MissingSummaryPhrase)
        );
    }

    #[test]
    fn last_phrase_wins_and_backticks_are_skipped() {
        let text = "In summary, the next action I will perform is click [1]\nWait, no.\nIn summary, the next action I will perform is ```scroll [down]```";
        assert_eq!(parse_action(text).unwrap(), Action::scroll(ScrollDirection::Down));
    }

    #[test]
    fn unknown_kind_and_bad_arity_are_malformed() {
        assert!(matches!(
            "jump [3]".parse::<Action>(),
            Err(ActionParseError::MalformedAction(_))
        ));
        assert!(matches!(
            "click".parse::<Action>(),
            Err(ActionParseError::MalformedAction(_))
        ));
        assert!(matches!(
            "click [1] [2]".parse::<Action>(),
            Err(ActionParseError::MalformedAction(_))
        ));
        assert!(matches!(
            "click [-4]".parse::<Action>(),
            Err(ActionParseError::MalformedAction(_))
        ));
        assert!(matches!(
            "scroll [sideways]".parse::<Action>(),
            Err(ActionParseError::MalformedAction(_))
        ));
    }

    #[test]
    fn signatures_are_canonical() {
        assert_eq!(Action::click(1234).signature(), "click[1234]");
        assert_eq!(
            Action::type_text(12, "red dress", true).signature(),
            "type[12][red dress][1]"
        );
        assert_eq!(Action::stop(None).signature(), "stop[]");
        assert_eq!(Action::GoBack.signature(), "go_back");
        assert_eq!(
            Action::type_text(3, "  a   [b] ", false).signature(),
            r"type[3][a \[b\]][0]"
        );
    }

    #[test]
    fn stop_without_answer_renders_empty_brackets() {
        assert_eq!(Action::stop(None).to_string(), "stop []");
        assert_eq!("stop".parse::<Action>().unwrap(), Action::stop(None));
        assert_eq!("stop [ ]".parse::<Action>().unwrap(), Action::stop(None));
        assert_eq!("stop [$19.99]".parse::<Action>().unwrap(), Action::stop(Some("$19.99")));
    }

    #[test]
    fn close_tab_alias_and_scroll_direction_prefix() {
        assert_eq!("close_tab".parse::<Action>().unwrap(), Action::TabClose);
        assert_eq!(
            "scroll [direction=up]".parse::<Action>().unwrap(),
            Action::scroll(ScrollDirection::Up)
        );
    }

    #[test]
    fn nested_brackets_in_answers_survive() {
        let a: Action = "stop [items [a] and [b]]".parse().unwrap();
        assert_eq!(a, Action::stop(Some("items [a] and [b]")));
        let again: Action = a.signature().parse().unwrap();
        assert_eq!(again, a);
    }

    #[test]
    fn serde_uses_kind_tag() {
        let json = serde_json::to_string(&Action::click(5)).unwrap();
        assert_eq!(json, r#"{"kind":"click","elem":5}"#);
        let back: Action = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Action::click(5));
    }
}
