//! Shared helpers for integration tests: seeded random site graphs,
//! random trajectories and fixture paths.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use webtree::action::{Action, ElementRef};
use webtree::env::{
    observe, reset, step, Effect, ElementKind, ElementSpec, EnvState, GoalSpec, PageSpec, SiteGraph, TransitionSpec,
};
use webtree::replay::Trajectory;

pub const WORDS: &[&str] = &[
    "account", "billing", "catalog", "delivery", "export", "filter", "gallery", "history", "invoice", "journal",
    "kitchen", "ledger", "market", "network", "orders", "profile", "quota", "report", "settings", "travel",
];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn el(r: &str, kind: ElementKind, label: String) -> ElementSpec {
    ElementSpec { element: ElementRef::new(r).unwrap(), kind, label, href: None, options: None }
}

/// A random valid site. World effects always write one fixed value per
/// variable and `*` bindings only reach form state, so re-executing any
/// suffix of a trajectory is idempotent on the world store.
pub fn random_site(seed: u64) -> SiteGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10);
    let host = format!("https://g{seed}.local");
    let url = |i: usize| if i == 0 { format!("{host}/") } else { format!("{host}/p{i}") };
    let id = |i: usize| format!("p{i}");
    let mut pages = BTreeMap::new();
    let mut transitions = Vec::new();
    for i in 0..n {
        let mut elements = Vec::new();
        for k in 0..rng.gen_range(1..=3) {
            let target = rng.gen_range(0..n);
            let mut link = el(&format!("l{k}"), ElementKind::Link, words(&mut rng, 2));
            link.href = Some(url(target));
            elements.push(link);
        }
        for k in 0..rng.gen_range(0..=2) {
            let r = format!("f{k}");
            elements.push(el(&r, ElementKind::Field, words(&mut rng, 1)));
            let effect = rng.gen_bool(0.3).then(|| {
                let var = format!("v{}", rng.gen_range(0..4));
                Effect { value: format!("{var}-set"), var }
            });
            transitions.push(TransitionSpec {
                from: id(i),
                action: Action::Type { element: ElementRef::new(&r).unwrap(), text: "*".into() },
                to: id(i),
                navigates: false,
                effect,
            });
        }
        if rng.gen_bool(0.4) {
            let mut select = el("s0", ElementKind::Select, words(&mut rng, 1));
            select.options = Some(vec!["low".into(), "mid".into(), "high".into()]);
            elements.push(select);
            transitions.push(TransitionSpec {
                from: id(i),
                action: Action::Select { element: ElementRef::new("s0").unwrap(), option: "*".into() },
                to: id(i),
                navigates: false,
                effect: None,
            });
        }
        if rng.gen_bool(0.6) {
            elements.push(el("b0", ElementKind::Button, words(&mut rng, 2)));
            let var = format!("v{}", rng.gen_range(0..4));
            let navigates = rng.gen_bool(0.5);
            transitions.push(TransitionSpec {
                from: id(i),
                action: Action::click("b0"),
                to: if navigates { id(rng.gen_range(0..n)) } else { id(i) },
                navigates,
                effect: rng.gen_bool(0.5).then(|| Effect { value: format!("{var}-set"), var }),
            });
        }
        let page = PageSpec { url: url(i), title: words(&mut rng, 2), dom_text: words(&mut rng, 5), elements };
        pages.insert(id(i), page);
    }
    let goal = if rng.gen_bool(0.5) {
        GoalSpec::UrlEquals { url: url(rng.gen_range(1..n)) }
    } else {
        GoalSpec::WorldVarEquals { name: "v0".into(), value: "v0-set".into() }
    };
    SiteGraph::from_parts(format!("random-{seed}"), pages, transitions, id(0), goal).expect("generated site is valid")
}

/// Actions that are well-formed on the current page of `state`.
pub fn candidate_actions(state: &EnvState, graph: &SiteGraph, rng: &mut ChaCha8Rng) -> Vec<Action> {
    let page = graph.page(&state.active_tab().page);
    let mut out = Vec::new();
    for e in &page.elements {
        let r = e.element.clone();
        match e.kind {
            ElementKind::Link | ElementKind::Button => {
                out.push(Action::Click { element: r.clone() });
                out.push(Action::Click { element: r.clone() });
            }
            ElementKind::Field => out.push(Action::Type { element: r.clone(), text: words(rng, 1) }),
            ElementKind::Select => {
                let options = e.options.as_ref().unwrap();
                out.push(Action::Select { element: r.clone(), option: options.choose(rng).unwrap().clone() });
            }
            ElementKind::Draggable => {}
        }
        out.push(Action::Hover { element: r });
    }
    let target = graph.pages.values().collect::<Vec<_>>().choose(rng).unwrap().url.clone();
    out.push(Action::Navigate { url: target });
    out.push(Action::NavigateBack);
    out.push(Action::NavigateForward);
    out.push(Action::TabNew);
    out.push(Action::TabSelect { id: rng.gen_range(0..state.tabs.len()) });
    out.push(Action::TabClose { id: rng.gen_range(0..state.tabs.len()) });
    out
}

/// A random trajectory of `len` actions with every intermediate state.
pub fn random_trajectory(graph: &SiteGraph, seed: u64, len: usize) -> (Trajectory, Vec<EnvState>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = reset(graph);
    let mut tau = Trajectory::root(observe(&state, graph));
    let mut states = vec![state.clone()];
    let mut navigated = vec![true];
    for _ in 0..len {
        let options = candidate_actions(&state, graph, &mut rng);
        let action = options.choose(&mut rng).unwrap().clone();
        let r = step(&state, graph, &action).expect("candidate actions are well-formed");
        tau.push(action, r.view, r.navigated);
        navigated.push(r.navigated);
        state = r.state;
        states.push(state.clone());
    }
    (tau, states, navigated)
}

/// An intent made of label words of `graph`, for decomposition by splitting.
pub fn random_intent(graph: &SiteGraph, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let labels: Vec<&str> = graph.pages.values().flat_map(|p| p.elements.iter().map(|e| e.label.as_str())).collect();
    let parts: Vec<String> = (0..rng.gen_range(1..=3)).map(|_| labels.choose(&mut rng).unwrap().to_string()).collect();
    parts.join(" then ")
}
