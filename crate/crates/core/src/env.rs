//! Deterministic simulated web environment.
//!
//! A site is a declarative page graph. [`step`] is the transition operator:
//! it never mutates its input and returns a fresh [`EnvState`]. All maps are
//! ordered so that serialization, and therefore [`state_hash`], is canonical.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{Action, ElementRef};

pub const SITE_SCHEMA_VERSION: u32 = 1;

/// Pattern text that binds whatever was typed or selected.
pub const WILDCARD: &str = "*";

pub type PageId = String;

#[derive(Debug, Error)]
pub enum SiteError {
    #[error("{source_name}: parse error at line {line}, column {column}: {message}")]
    Parse { source_name: String, line: usize, column: usize, message: String },
    #[error("unsupported schema_version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("dangling reference: {0}")]
    DanglingRef(String),
    #[error("url `{url}` is shared by pages `{first}` and `{second}`")]
    DuplicateUrl { url: String, first: PageId, second: PageId },
    #[error("transitions {first} and {second} from page `{page}` can match the same action")]
    AmbiguousTransition { page: PageId, first: usize, second: usize },
    #[error("invalid transition {index}: {reason}")]
    InvalidTransition { index: usize, reason: String },
    #[error("invalid element `{element}` on page `{page}`: {reason}")]
    InvalidElement { page: PageId, element: String, reason: String },
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("element `{0}` is not on the current page")]
    InvalidElement(String),
    #[error("tab index {index} out of range ({count} open)")]
    InvalidTab { index: usize, count: usize },
    #[error("no page has url `{0}`")]
    NavigateUnknownUrl(String),
    #[error("element `{0}` is not a link with an href")]
    NotALink(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Link,
    Button,
    Field,
    Select,
    Draggable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementSpec {
    #[serde(rename = "ref")]
    pub element: ElementRef,
    pub kind: ElementKind,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub href: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageSpec {
    pub url: String,
    pub title: String,
    pub dom_text: String,
    #[serde(default)]
    pub elements: Vec<ElementSpec>,
}

impl PageSpec {
    pub fn element(&self, r: &ElementRef) -> Option<&ElementSpec> {
        self.elements.iter().find(|e| &e.element == r)
    }
}

/// World-variable assignment. A value of `"*"` binds the typed text or selected option.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Effect {
    pub var: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionSpec {
    pub from: PageId,
    /// Action template; TYPE text / SELECT option may be `"*"`.
    pub action: Action,
    pub to: PageId,
    pub navigates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GoalSpec {
    UrlEquals { url: String },
    WorldVarEquals { name: String, value: String },
    AnswerContains { substring: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SiteDoc {
    schema_version: u32,
    #[serde(default)]
    name: String,
    start: PageId,
    goal: GoalSpec,
    pages: BTreeMap<PageId, PageSpec>,
    #[serde(default)]
    transitions: Vec<TransitionSpec>,
}

/// A validated site. Construct with [`load_site_graph`] or [`SiteGraph::from_parts`].
#[derive(Debug, Clone)]
pub struct SiteGraph {
    pub name: String,
    pub pages: BTreeMap<PageId, PageSpec>,
    /// Explicit transitions followed by implicit link-follow transitions.
    pub transitions: Vec<TransitionSpec>,
    pub start: PageId,
    pub goal: GoalSpec,
    by_url: HashMap<String, PageId>,
    explicit: usize,
}

pub fn load_site_graph(doc: &str) -> Result<SiteGraph, SiteError> {
    load_named(doc, "<site>")
}

pub fn load_site_graph_file(path: &Path) -> Result<SiteGraph, SiteError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| SiteError::Io { path: path.display().to_string(), source })?;
    load_named(&text, &path.display().to_string())
}

fn load_named(doc: &str, source_name: &str) -> Result<SiteGraph, SiteError> {
    let parsed: SiteDoc = serde_json::from_str(doc).map_err(|e| SiteError::Parse {
        source_name: source_name.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if parsed.schema_version != SITE_SCHEMA_VERSION {
        return Err(SiteError::UnsupportedVersion { found: parsed.schema_version, expected: SITE_SCHEMA_VERSION });
    }
    SiteGraph::from_parts(parsed.name, parsed.pages, parsed.transitions, parsed.start, parsed.goal)
}

impl SiteGraph {
    pub fn from_parts(
        name: String,
        pages: BTreeMap<PageId, PageSpec>,
        transitions: Vec<TransitionSpec>,
        start: PageId,
        goal: GoalSpec,
    ) -> Result<Self, SiteError> {
        if !pages.contains_key(&start) {
            return Err(SiteError::DanglingRef(format!("start page `{start}`")));
        }
        let mut by_url: HashMap<String, PageId> = HashMap::new();
        for (id, page) in &pages {
            if let Some(first) = by_url.insert(page.url.clone(), id.clone()) {
                return Err(SiteError::DuplicateUrl { url: page.url.clone(), first, second: id.clone() });
            }
            let mut seen = std::collections::BTreeSet::new();
            for el in &page.elements {
                if !seen.insert(&el.element) {
                    return Err(invalid_element(id, &el.element, "duplicate ref"));
                }
                if el.href.is_some() && el.kind != ElementKind::Link {
                    return Err(invalid_element(id, &el.element, "only links may carry an href"));
                }
                if el.kind == ElementKind::Select && el.options.as_ref().is_none_or(Vec::is_empty) {
                    return Err(invalid_element(id, &el.element, "select needs options"));
                }
            }
        }
        for (id, page) in &pages {
            for el in &page.elements {
                if let Some(href) = &el.href {
                    if !by_url.contains_key(href) {
                        return Err(SiteError::DanglingRef(format!(
                            "href `{href}` of `{}` on page `{id}`",
                            el.element
                        )));
                    }
                }
            }
        }

        for (index, t) in transitions.iter().enumerate() {
            validate_transition(index, t, &pages, &by_url)?;
        }
        for i in 0..transitions.len() {
            for j in (i + 1)..transitions.len() {
                let (a, b) = (&transitions[i], &transitions[j]);
                if a.from == b.from && patterns_overlap(&a.action, &b.action) {
                    return Err(SiteError::AmbiguousTransition { page: a.from.clone(), first: i, second: j });
                }
            }
        }

        let explicit = transitions.len();
        let mut all = transitions;
        for (id, page) in &pages {
            for el in &page.elements {
                let Some(href) = &el.href else { continue };
                let click = Action::Click { element: el.element.clone() };
                let covered = all[..explicit].iter().any(|t| &t.from == id && t.action == click);
                if !covered {
                    all.push(TransitionSpec {
                        from: id.clone(),
                        action: click,
                        to: by_url[href].clone(),
                        navigates: true,
                        effect: None,
                    });
                }
            }
        }

        Ok(Self { name, pages, transitions: all, start, goal, by_url, explicit })
    }

    pub fn page(&self, id: &str) -> &PageSpec {
        &self.pages[id]
    }

    pub fn page_id_by_url(&self, url: &str) -> Option<&PageId> {
        self.by_url.get(url)
    }

    /// The explicit transitions as authored (implicit link follows excluded).
    pub fn explicit_transitions(&self) -> &[TransitionSpec] {
        &self.transitions[..self.explicit]
    }

    pub fn with_goal(mut self, goal: GoalSpec) -> Self {
        self.goal = goal;
        self
    }

    /// Serializes back to the fixture schema.
    pub fn to_document(&self) -> String {
        let doc = SiteDoc {
            schema_version: SITE_SCHEMA_VERSION,
            name: self.name.clone(),
            start: self.start.clone(),
            goal: self.goal.clone(),
            pages: self.pages.clone(),
            transitions: self.explicit_transitions().to_vec(),
        };
        serde_json::to_string_pretty(&doc).expect("site serializes")
    }

    fn find_transition(&self, page: &str, action: &Action) -> Option<&TransitionSpec> {
        self.transitions.iter().find(|t| t.from == page && pattern_matches(&t.action, action))
    }
}

fn invalid_element(page: &str, el: &ElementRef, reason: &str) -> SiteError {
    SiteError::InvalidElement { page: page.to_string(), element: el.to_string(), reason: reason.to_string() }
}

fn validate_transition(
    index: usize,
    t: &TransitionSpec,
    pages: &BTreeMap<PageId, PageSpec>,
    by_url: &HashMap<String, PageId>,
) -> Result<(), SiteError> {
    let bad = |reason: &str| SiteError::InvalidTransition { index, reason: reason.to_string() };
    let from = pages
        .get(&t.from)
        .ok_or_else(|| SiteError::DanglingRef(format!("transition {index} from unknown page `{}`", t.from)))?;
    if !pages.contains_key(&t.to) {
        return Err(SiteError::DanglingRef(format!("transition {index} to unknown page `{}`", t.to)));
    }
    for el in t.action.elements() {
        if from.element(el).is_none() {
            return Err(SiteError::DanglingRef(format!(
                "transition {index} uses element `{el}` absent from page `{}`",
                t.from
            )));
        }
    }
    match &t.action {
        Action::Click { .. } | Action::Hover { .. } | Action::Drag { .. } | Action::PressKey { .. } => {}
        Action::Type { element, .. } => {
            if from.element(element).map(|e| e.kind) != Some(ElementKind::Field) {
                return Err(bad("TYPE pattern must target a field"));
            }
        }
        Action::Select { element, option } => {
            let spec = from.element(element).expect("checked above");
            if spec.kind != ElementKind::Select {
                return Err(bad("SELECT pattern must target a select"));
            }
            let known = spec.options.as_ref().is_some_and(|o| o.contains(option));
            if option != WILDCARD && !known {
                return Err(bad("SELECT pattern names an option the select does not offer"));
            }
        }
        _ => return Err(bad("only element and key actions may appear in transitions")),
    }
    if !t.navigates && t.from != t.to {
        return Err(bad("a non-navigating transition must stay on its page"));
    }
    if let Action::Click { element } = &t.action {
        if let Some(href) = from.element(element).and_then(|e| e.href.as_ref()) {
            if t.to != by_url[href] || !t.navigates || t.effect.is_some() {
                return Err(bad("a click on an href link must navigate to that href without effects"));
            }
        }
    }
    if let Some(effect) = &t.effect {
        let binds = matches!(t.action, Action::Type { .. } | Action::Select { .. });
        if effect.value == WILDCARD && !binds {
            return Err(bad("only TYPE/SELECT transitions can bind `*` into an effect"));
        }
    }
    Ok(())
}

fn text_overlaps(a: &str, b: &str) -> bool {
    a == b || a == WILDCARD || b == WILDCARD
}

fn patterns_overlap(a: &Action, b: &Action) -> bool {
    match (a, b) {
        (Action::Type { element: e1, text: t1 }, Action::Type { element: e2, text: t2 }) => {
            e1 == e2 && text_overlaps(t1, t2)
        }
        (Action::Select { element: e1, option: o1 }, Action::Select { element: e2, option: o2 }) => {
            e1 == e2 && text_overlaps(o1, o2)
        }
        _ => a == b,
    }
}

fn pattern_matches(pattern: &Action, action: &Action) -> bool {
    match (pattern, action) {
        (Action::Type { element: pe, text: pt }, Action::Type { element: e, text }) => {
            pe == e && (pt == WILDCARD || pt == text)
        }
        (Action::Select { element: pe, option: po }, Action::Select { element: e, option }) => {
            pe == e && (po == WILDCARD || po == option)
        }
        _ => pattern == action,
    }
}

/// One browser tab: current page, in-page form values and session history.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TabState {
    pub page: PageId,
    pub form: BTreeMap<String, String>,
    pub back: Vec<PageId>,
    pub forward: Vec<PageId>,
}

impl TabState {
    pub fn fresh(page: PageId) -> Self {
        Self { page, form: BTreeMap::new(), back: Vec::new(), forward: Vec::new() }
    }

    fn navigate_to(&mut self, page: PageId) {
        let previous = std::mem::replace(&mut self.page, page);
        self.back.push(previous);
        self.forward.clear();
        self.form.clear();
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub tabs: Vec<TabState>,
    pub active: usize,
    /// Server-side variables. They survive navigation and tab changes.
    pub world: BTreeMap<String, String>,
}

impl EnvState {
    pub fn active_tab(&self) -> &TabState {
        &self.tabs[self.active]
    }

    fn active_tab_mut(&mut self) -> &mut TabState {
        &mut self.tabs[self.active]
    }
}

/// Hex SHA-256 digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateDigest(pub String);

impl fmt::Display for StateDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn digest_of<T: Serialize>(value: &T) -> StateDigest {
    let bytes = serde_json::to_vec(value).expect("state serializes");
    StateDigest(hex::encode(Sha256::digest(&bytes)))
}

/// Digest over the full state, world store included.
pub fn state_hash(state: &EnvState) -> StateDigest {
    digest_of(state)
}

/// Digest over browser-side state only (tabs and active index).
///
/// This is what a URL load plus re-executed actions can reconstruct; the
/// world store belongs to the server and is whatever it currently is.
pub fn client_hash(state: &EnvState) -> StateDigest {
    digest_of(&(&state.tabs, state.active))
}

/// The observation handed to the agent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageView {
    pub url: String,
    pub title: String,
    pub dom_text: String,
    pub elements: Vec<ElementSpec>,
    /// Current field and select values on the active tab.
    pub form_values: BTreeMap<String, String>,
    pub tab_count: usize,
    /// Session history of the active tab, as URLs.
    pub back_urls: Vec<String>,
    pub forward_urls: Vec<String>,
    pub state_digest: StateDigest,
    pub client_digest: StateDigest,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub state: EnvState,
    pub view: PageView,
    pub navigated: bool,
    pub matched: bool,
}

pub fn reset(graph: &SiteGraph) -> EnvState {
    EnvState { tabs: vec![TabState::fresh(graph.start.clone())], active: 0, world: BTreeMap::new() }
}

pub fn observe(state: &EnvState, graph: &SiteGraph) -> PageView {
    let tab = state.active_tab();
    let page = graph.page(&tab.page);
    let urls = |ids: &[PageId]| ids.iter().map(|id| graph.page(id).url.clone()).collect();
    PageView {
        url: page.url.clone(),
        title: page.title.clone(),
        dom_text: page.dom_text.clone(),
        elements: page.elements.clone(),
        form_values: tab.form.clone(),
        tab_count: state.tabs.len(),
        back_urls: urls(&tab.back),
        forward_urls: urls(&tab.forward),
        state_digest: state_hash(state),
        client_digest: client_hash(state),
    }
}

/// Applies `action` to `state`. Unmatched actions leave the state untouched.
pub fn step(state: &EnvState, graph: &SiteGraph, action: &Action) -> Result<StepResult, StepError> {
    let mut next = state.clone();
    let (matched, navigated) = apply(&mut next, graph, action)?;
    if !matched {
        next = state.clone();
    }
    let view = observe(&next, graph);
    Ok(StepResult { state: next, view, navigated, matched })
}

fn apply(state: &mut EnvState, graph: &SiteGraph, action: &Action) -> Result<(bool, bool), StepError> {
    match action {
        Action::Navigate { url } => {
            let target = graph.page_id_by_url(url).ok_or_else(|| StepError::NavigateUnknownUrl(url.clone()))?.clone();
            state.active_tab_mut().navigate_to(target);
            Ok((true, true))
        }
        Action::NavigateBack => {
            let tab = state.active_tab_mut();
            let Some(target) = tab.back.pop() else { return Ok((false, false)) };
            let previous = std::mem::replace(&mut tab.page, target);
            tab.forward.push(previous);
            tab.form.clear();
            Ok((true, true))
        }
        Action::NavigateForward => {
            let tab = state.active_tab_mut();
            let Some(target) = tab.forward.pop() else { return Ok((false, false)) };
            let previous = std::mem::replace(&mut tab.page, target);
            tab.back.push(previous);
            tab.form.clear();
            Ok((true, true))
        }
        Action::TabNew => {
            state.tabs.push(TabState::fresh(graph.start.clone()));
            state.active = state.tabs.len() - 1;
            Ok((true, false))
        }
        Action::TabSelect { id } => {
            check_tab(state, *id)?;
            state.active = *id;
            Ok((true, false))
        }
        Action::TabClose { id } => {
            check_tab(state, *id)?;
            if state.tabs.len() == 1 {
                return Ok((false, false));
            }
            state.tabs.remove(*id);
            if *id < state.active || state.active >= state.tabs.len() {
                state.active -= 1;
            }
            Ok((true, false))
        }
        Action::Stop { .. } => Ok((true, false)),
        _ => {
            let page_id = state.active_tab().page.clone();
            let page = graph.page(&page_id);
            for el in action.elements() {
                if page.element(el).is_none() {
                    return Err(StepError::InvalidElement(el.to_string()));
                }
            }
            let Some(t) = graph.find_transition(&page_id, action) else { return Ok((false, false)) };
            let bound = match action {
                Action::Type { text, .. } => Some(text.as_str()),
                Action::Select { option, .. } => Some(option.as_str()),
                _ => None,
            };
            let tab = state.active_tab_mut();
            if t.navigates {
                tab.navigate_to(t.to.clone());
            } else if let (Some(value), Some(el)) = (bound, action.element()) {
                tab.form.insert(el.to_string(), value.to_string());
            }
            if let Some(effect) = &t.effect {
                let value = match bound {
                    Some(v) if effect.value == WILDCARD => v.to_string(),
                    _ => effect.value.clone(),
                };
                state.world.insert(effect.var.clone(), value);
            }
            Ok((true, t.navigates))
        }
    }
}

fn check_tab(state: &EnvState, index: usize) -> Result<(), StepError> {
    if index >= state.tabs.len() {
        return Err(StepError::InvalidTab { index, count: state.tabs.len() });
    }
    Ok(())
}

/// Follows the href of link `element` and nothing else.
///
/// Used for speculative expansion on scratch copies; by the loader's href
/// invariant the result equals `step(state, CLICK(element))`.
pub fn follow_link(state: &EnvState, graph: &SiteGraph, element: &ElementRef) -> Result<EnvState, StepError> {
    let page = graph.page(&state.active_tab().page);
    let spec = page.element(element).ok_or_else(|| StepError::InvalidElement(element.to_string()))?;
    let href = spec.href.as_ref().ok_or_else(|| StepError::NotALink(element.to_string()))?;
    let target = graph.page_id_by_url(href).ok_or_else(|| StepError::NavigateUnknownUrl(href.clone()))?.clone();
    let mut next = state.clone();
    next.active_tab_mut().navigate_to(target);
    Ok(next)
}

/// Restores a single fresh tab at `url` with the given session history,
/// keeping the server-side world store. This is a URL load.
pub fn load_url(
    world: &BTreeMap<String, String>,
    graph: &SiteGraph,
    url: &str,
    back_urls: &[String],
    forward_urls: &[String],
) -> Result<EnvState, StepError> {
    let resolve = |u: &String| graph.page_id_by_url(u).cloned().ok_or_else(|| StepError::NavigateUnknownUrl(u.clone()));
    let page = resolve(&url.to_string())?;
    let tab = TabState {
        page,
        form: BTreeMap::new(),
        back: back_urls.iter().map(resolve).collect::<Result<_, _>>()?,
        forward: forward_urls.iter().map(resolve).collect::<Result<_, _>>()?,
    };
    Ok(EnvState { tabs: vec![tab], active: 0, world: world.clone() })
}

pub fn goal_check(graph: &SiteGraph, state: &EnvState, answer: Option<&str>) -> bool {
    match &graph.goal {
        GoalSpec::UrlEquals { url } => &graph.page(&state.active_tab().page).url == url,
        GoalSpec::WorldVarEquals { name, value } => state.world.get(name) == Some(value),
        GoalSpec::AnswerContains { substring } => answer.is_some_and(|a| a.contains(substring.as_str())),
    }
}

/// A view with the given page fields and an otherwise empty state.
#[cfg(test)]
pub(crate) fn test_view(url: &str, title: &str, dom_text: &str) -> PageView {
    PageView {
        url: url.to_string(),
        title: title.to_string(),
        dom_text: dom_text.to_string(),
        elements: Vec::new(),
        form_values: BTreeMap::new(),
        tab_count: 1,
        back_urls: Vec::new(),
        forward_urls: Vec::new(),
        state_digest: StateDigest("0".repeat(64)),
        client_digest: StateDigest("0".repeat(64)),
    }
}
