use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use proptest::prelude::*;
use webplan_core::action::SUMMARY_PHRASE;
use webplan_core::env::bundled_site;
use webplan_core::llm::{CompletionRequest, Gateway, LlmSettings, Transport, TransportError};
use webplan_core::propose::{get_candidates, parse_selection, rank_by_frequency, self_refine, ProposeError};
use webplan_core::{Action, Observation, TaskInstance};

struct Canned(Result<Vec<String>, bool>);

impl Transport for Canned {
    fn complete(&self, _req: &CompletionRequest) -> Result<Vec<String>, TransportError> {
        match &self.0 {
            Ok(v) => Ok(v.clone()),
            Err(_) => Err(TransportError::permanent("down")),
        }
    }
}

fn gateway(replies: Vec<String>) -> Gateway {
    Gateway::live(Arc::new(Canned(Ok(replies))))
}

fn page() -> (TaskInstance, Observation) {
    let g = bundled_site("shop-small").unwrap().unwrap();
    let task = g.tasks()[0].clone();
    let obs = g.observe(&g.initial_state(&task.start_page).unwrap());
    (task, obs)
}

fn small_action() -> impl Strategy<Value = Action> {
    prop_oneof![
        (1u32..6).prop_map(Action::click),
        (1u32..3).prop_map(|e| Action::type_text(e, "red dress", true)),
        prop_oneof![Just(None), Just(Some("$19.99"))].prop_map(Action::stop),
    ]
}

proptest! {
    #[test]
    fn ranking_keeps_the_most_frequent_distinct_samples(
        samples in proptest::collection::vec(small_action(), 0..30),
        k in 1usize..8,
    ) {
        let ranked = rank_by_frequency(&samples, k);
        let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
        for (i, a) in samples.iter().enumerate() {
            counts.entry(a.signature()).or_insert((0, i)).0 += 1;
        }
        prop_assert_eq!(ranked.len(), k.min(counts.len()));
        let sigs: HashSet<String> = ranked.iter().map(Action::signature).collect();
        prop_assert_eq!(sigs.len(), ranked.len());
        for pair in ranked.windows(2) {
            let (ca, fa) = counts[&pair[0].signature()];
            let (cb, fb) = counts[&pair[1].signature()];
            prop_assert!(ca > cb || (ca == cb && fa < fb));
        }
        // Nothing left out beats the weakest kept candidate.
        if let Some(last) = ranked.last() {
            let (cl, fl) = counts[&last.signature()];
            for (sig, &(c, f)) in &counts {
                if !sigs.contains(sig) {
                    prop_assert!(c < cl || (c == cl && f > fl));
                }
            }
        }
    }

    #[test]
    fn candidates_come_from_parseable_samples(
        samples in proptest::collection::vec(proptest::option::of(small_action()), 1..12),
        k in 1usize..6,
    ) {
        let replies: Vec<String> = samples
            .iter()
            .map(|s| match s {
                Some(a) => format!("Let's think. {SUMMARY_PHRASE} ```{a}```"),
                None => "I would rather not act.".to_string(),
            })
            .collect();
        let (task, obs) = page();
        let gw = gateway(replies.clone());
        let got = get_candidates(&gw, &LlmSettings::default(), &task, &obs, &[], k, replies.len() as u32);
        let valid: Vec<Action> = samples.iter().flatten().cloned().collect();
        if valid.is_empty() {
            prop_assert!(matches!(got, Err(ProposeError::NoValidCandidates(_))));
        } else {
            let got = got.unwrap();
            prop_assert!(!got.is_empty() && got.len() <= k);
            prop_assert!(got.iter().all(|a| valid.contains(a)));
            prop_assert_eq!(got, rank_by_frequency(&valid, k));
        }
    }

    #[test]
    fn refinement_returns_a_non_empty_ordered_subset(
        candidates in proptest::collection::vec(small_action(), 1..6),
        picks in proptest::collection::vec(0usize..9, 0..6),
    ) {
        let mut seen = HashSet::new();
        let candidates: Vec<Action> = candidates.into_iter().filter(|a| seen.insert(a.signature())).collect();
        let reply = format!(
            "Thoughts: pruning.\nSelected actions: {}",
            picks.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")
        );
        let (task, obs) = page();
        let gw = gateway(vec![reply]);
        let out = self_refine(&gw, &LlmSettings::default(), &task, &obs, &[], &candidates);

        prop_assert!(!out.is_empty());
        let positions: Vec<usize> = out
            .iter()
            .map(|a| candidates.iter().position(|c| c == a).unwrap())
            .collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));

        let valid: Vec<usize> = picks.iter().copied().filter(|&i| i < candidates.len()).collect();
        if candidates.len() > 1 && !valid.is_empty() {
            let mut expect = valid;
            expect.sort_unstable();
            expect.dedup();
            prop_assert_eq!(positions, expect);
        } else {
            prop_assert_eq!(out, candidates);
        }
    }
}

#[test]
fn refinement_fails_open_when_the_model_is_unavailable() {
    let (task, obs) = page();
    let gw = Gateway::live(Arc::new(Canned(Err(true))));
    let cands = vec![Action::click(1), Action::click(2)];
    assert_eq!(
        self_refine(&gw, &LlmSettings::default(), &task, &obs, &[], &cands),
        cands
    );
}

#[test]
fn selection_parsing() {
    assert_eq!(parse_selection("Selected actions: 2;0;id1", 3), Some(vec![0, 1, 2]));
    assert_eq!(parse_selection("selected actions: aid1, 1, 7.", 3), Some(vec![1]));
    assert_eq!(parse_selection("Selected actions: 9", 3), None);
    assert_eq!(parse_selection("no selection here", 3), None);
}

#[test]
fn zero_counts_are_rejected() {
    let (task, obs) = page();
    let gw = gateway(vec![]);
    assert!(matches!(
        get_candidates(&gw, &LlmSettings::default(), &task, &obs, &[], 0, 10),
        Err(ProposeError::InvalidCounts { .. })
    ));
}
