use proptest::prelude::*;
use webplan_core::action::{Action, ScrollDirection, SUMMARY_PHRASE};
use webplan_core::observation::{parse_elements, render_elements, ElementRecord};
use webplan_core::parse_action;

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 $.,:'\\[\\]-]{0,24}"
}

fn action() -> impl Strategy<Value = Action> {
    prop_oneof![
        any::<u32>().prop_map(Action::click),
        any::<u32>().prop_map(Action::hover),
        (any::<u32>(), text(), any::<bool>()).prop_map(|(e, t, p)| Action::type_text(e, &t, p)),
        "[a-zA-Z+]{1,12}".prop_map(|k| Action::press(&k)),
        "https?://[a-z]{1,8}\\.[a-z]{2,3}/[a-z0-9/]{0,10}".prop_map(|u| Action::goto(&u)),
        Just(Action::GoBack),
        Just(Action::GoForward),
        Just(Action::NewTab),
        (0u32..16).prop_map(Action::tab_focus),
        Just(Action::TabClose),
        prop_oneof![Just(ScrollDirection::Up), Just(ScrollDirection::Down)].prop_map(Action::scroll),
        proptest::option::of(text()).prop_map(|a| Action::stop(a.as_deref())),
    ]
}

fn element() -> impl Strategy<Value = ElementRecord> {
    prop_oneof![
        (any::<u32>(), "[a-zA-Z]{1,10}", text()).prop_map(|(id, tag, t)| ElementRecord::interactive(id, &tag, &t)),
        "[a-zA-Z0-9 $.,\\[\\]-]{1,24}"
            .prop_filter("static text must show", |t| !t.trim().is_empty())
            .prop_map(|t| ElementRecord::static_text(&t)),
    ]
}

proptest! {
    #[test]
    fn display_parses_back(a in action()) {
        let shown = a.to_string();
        prop_assert_eq!(shown.parse::<Action>(), Ok(a));
    }

    #[test]
    fn completion_with_summary_phrase_parses_back(a in action(), lead in "[a-zA-Z .,]{0,40}") {
        let completion = format!("Let's think step-by-step. {lead} {SUMMARY_PHRASE} ```{a}```");
        prop_assert_eq!(parse_action(&completion), Ok(a));
    }

    #[test]
    fn signature_is_injective(a in action(), b in action()) {
        prop_assert_eq!(a == b, a.signature() == b.signature());
    }

    #[test]
    fn json_round_trip(a in action()) {
        let json = serde_json::to_string(&a).unwrap();
        prop_assert_eq!(serde_json::from_str::<Action>(&json).unwrap(), a);
    }

    #[test]
    fn element_rendering_round_trips(els in proptest::collection::vec(element(), 0..8)) {
        let rendered = render_elements(&els);
        prop_assert_eq!(parse_elements(&rendered).unwrap(), els);
    }
}

#[test]
fn last_summary_phrase_wins() {
    let c = format!("{SUMMARY_PHRASE} ```click [1]```, no wait. {SUMMARY_PHRASE} ```click [2]```");
    assert_eq!(parse_action(&c), Ok(Action::click(2)));
}

#[test]
fn empty_stop_renders_with_brackets() {
    assert_eq!(Action::stop(None).to_string(), "stop []");
    assert_eq!(Action::stop(Some("  ")), Action::stop(None));
}
