//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Tolerances are fixed below.

mod common;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use webtree::action::{action_signature, Action};
use webtree::env::{
    goal_check, observe, reset, state_hash, step, ElementKind, EnvState, GoalSpec, SiteGraph, TabState,
};
use webtree::harness::{load_suite, load_task, run_suite, run_task, sweep, RunOptions, Suite, TaskRun, DEFAULT_GRID};
use webtree::memory::{
    url_digest, ActionEntry, CycleInput, CycleRecord, MemoryStore, Objective, PageMemory, Relevance, Snapshot,
    MEMORY_SCHEMA_VERSION,
};
use webtree::reasoner::{
    request_evaluation, request_proposals, Evaluation, NodeContext, ScriptedReasoner, TaskHints, DEFAULT_DOM_LIMIT,
};
use webtree::replay::{replay, Trajectory};
use webtree::search::{search, SearchConfig, SearchResult, SearchTask, Trace, TraceEvent};
use webtree::subtask::{check_and_advance, decompose, update_subtask, Plan};

const REPLAY_SITES: u64 = 24;
const TRAJECTORIES_PER_SITE: u64 = 10;
const MIN_TRAJECTORIES: usize = 200;
const MIN_SITES: u64 = 20;
const REPLAY_TIME_LIMIT: Duration = Duration::from_secs(30);
const MINIADMIN_ANSWER_DEPTH: usize = 3;
const ENUMERATION_DEPTH: usize = 5;
const STRICT_REPLAY_WINS: usize = 8;
const MEMORY_RECORDS: usize = 60;
const LINEAR_RANDOM_SITES: u64 = 30;
const EPSILON: f64 = 0.1;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn suite() -> Suite {
    load_suite(&common::fixtures().join("suites/backtracking.json")).expect("bundled suite loads")
}

fn default_options(seed: u64) -> RunOptions {
    RunOptions::new(SearchConfig { seed, ..SearchConfig::new(5, 5, 10) })
}

/// Every trace produced while checking criteria, for the trace-wide checks.
#[derive(Default)]
struct Traces(Vec<(String, Trace, Option<webtree::search::Tree>)>);

impl Traces {
    fn add_runs(&mut self, label: &str, runs: &[TaskRun]) {
        for run in runs {
            if let Some(r) = &run.result {
                self.0.push((format!("{label}/{}", run.report.task), r.trace.clone(), Some(r.tree.clone())));
            }
        }
    }

    fn add_result(&mut self, label: String, r: &SearchResult) {
        self.0.push((label, r.trace.clone(), Some(r.tree.clone())));
    }
}

// 1 and 2 ---------------------------------------------------------------

/// Independent oracle: a fresh single tab at the start page, holding the
/// live world store, with every action re-applied.
fn reexecute(graph: &SiteGraph, live_world: &BTreeMap<String, String>, tau: &Trajectory, j: usize) -> EnvState {
    let mut state = EnvState { tabs: vec![TabState::fresh(graph.start.clone())], active: 0, world: live_world.clone() };
    for a in &tau.actions[..j] {
        state = step(&state, graph, a).expect("recorded actions replay").state;
    }
    state
}

struct ReplayStats {
    trajectories: usize,
    indices: usize,
    equivalence_failures: Vec<String>,
    economy_failures: Vec<String>,
    cacheable_hits: usize,
    elapsed: Duration,
}

fn replay_campaign() -> ReplayStats {
    let started = Instant::now();
    let mut s = ReplayStats {
        trajectories: 0,
        indices: 0,
        equivalence_failures: Vec::new(),
        economy_failures: Vec::new(),
        cacheable_hits: 0,
        elapsed: Duration::ZERO,
    };
    for site in 0..REPLAY_SITES {
        let graph = common::random_site(site);
        for t in 0..TRAJECTORIES_PER_SITE {
            let seed = site * 1000 + t;
            let len = ChaCha8Rng::seed_from_u64(seed).gen_range(1..=14);
            let (tau, states, navigated) = common::random_trajectory(&graph, seed, len);
            let live = states.last().unwrap();
            // Cacheability recomputed from raw states: reached by navigation,
            // one tab, no form values.
            let cacheable: Vec<bool> = states
                .iter()
                .zip(&navigated)
                .map(|(st, &nav)| nav && st.tabs.len() == 1 && st.active_tab().form.is_empty())
                .collect();
            s.trajectories += 1;
            for j in 0..tau.len() {
                s.indices += 1;
                let oracle = state_hash(&reexecute(&graph, &live.world, &tau, j));
                let out = match replay(live, &graph, &tau, j) {
                    Ok(out) => out,
                    Err(e) => {
                        s.equivalence_failures.push(format!("site {site} traj {t} j {j}: {e}"));
                        continue;
                    }
                };
                if state_hash(&out.state) != oracle {
                    s.equivalence_failures.push(format!("site {site} traj {t} j {j}: digest mismatch"));
                }
                let nearest = (0..=j).rev().find(|&c| cacheable[c]).unwrap_or(0);
                if out.replayed != j - nearest || (cacheable[j] && out.replayed != 0) {
                    s.economy_failures.push(format!(
                        "site {site} traj {t} j {j}: replayed {} expected {}",
                        out.replayed,
                        j - nearest
                    ));
                }
                if cacheable[j] {
                    s.cacheable_hits += 1;
                }
            }
        }
    }
    s.elapsed = started.elapsed();
    s
}

fn criterion_1(s: &ReplayStats) -> Outcome {
    ensure(s.trajectories >= MIN_TRAJECTORIES && REPLAY_SITES >= MIN_SITES, || "campaign too small".into())?;
    ensure(s.equivalence_failures.is_empty(), || {
        format!("{} mismatches, first: {}", s.equivalence_failures.len(), s.equivalence_failures[0])
    })?;
    ensure(s.elapsed < REPLAY_TIME_LIMIT, || format!("took {:.1?}", s.elapsed))?;
    Ok(format!(
        "{} trajectories on {REPLAY_SITES} sites, {} indices, 0 mismatches in {:.2?}",
        s.trajectories, s.indices, s.elapsed
    ))
}

fn criterion_2(s: &ReplayStats) -> Outcome {
    ensure(s.economy_failures.is_empty(), || {
        format!("{} violations, first: {}", s.economy_failures.len(), s.economy_failures[0])
    })?;
    Ok(format!(
        "replayed = j - checkpoint at all {} indices; {} cacheable indices replayed 0",
        s.indices, s.cacheable_hits
    ))
}

// 3 ---------------------------------------------------------------------

fn evaluate(reasoner: &mut ScriptedReasoner, plan: &Plan, view: &webtree::env::PageView) -> Evaluation {
    let subtask = plan.active();
    let mut eval = request_evaluation(reasoner, view, subtask).unwrap();
    if let Some(done) = subtask.predicate.decide_locally(view) {
        eval.subtask_done = done;
    }
    eval
}

/// Sequential reference: take the first non-suppressed proposal, act,
/// evaluate, refine; stop on a goal, a terminal or pruned step, or a
/// repeated `(url, action)` pair.
fn linear_reference(graph: &SiteGraph, intent: &str, hints: TaskHints, budget: usize) -> Vec<String> {
    let mut reasoner = ScriptedReasoner::new(hints);
    let mut memory = MemoryStore::new();
    let mut plan = decompose(intent, None, &mut reasoner).unwrap();
    let mut state = reset(graph);
    let mut view = observe(&state, graph);
    let root = evaluate(&mut reasoner, &plan, &view);
    plan = check_and_advance(&plan, &root);
    let mut executed = Vec::new();
    if goal_check(graph, &state, None) {
        return executed;
    }
    let mut tau = Trajectory::root(view.clone());
    let mut pairs: BTreeSet<(String, String)> = BTreeSet::new();
    let mut spent = 0;
    while spent < budget {
        let ctx = NodeContext::new(
            &view,
            intent,
            plan.active(),
            plan.is_final_active(),
            memory.load_for_url(&view.url),
            DEFAULT_DOM_LIMIT,
        );
        let proposals = request_proposals(&mut reasoner, &ctx, plan.active(), 1, false).unwrap();
        let banned = memory.irrelevant_signatures(&view.url);
        let Some(p) = proposals.into_iter().find(|p| !banned.contains(&action_signature(&p.action))) else { break };
        spent += 1;
        let signature = action_signature(&p.action);
        executed.push(signature.clone());
        let objective = Objective { global_intent: intent.into(), active_subtask: plan.active().objective.clone() };
        let r = match step(&state, graph, &p.action) {
            Ok(r) => r,
            Err(e) => {
                let eval =
                    Evaluation { score: 0.0, subtask_done: false, task_done_hint: false, rationale: e.to_string() };
                let result = format!("error: {e}");
                memory
                    .record_cycle(CycleInput {
                        page: &view,
                        objective,
                        reason: &p.rationale,
                        action: &p.action,
                        result: &result,
                        success: false,
                        eval: &eval,
                        epsilon: EPSILON,
                    })
                    .unwrap();
                continue;
            }
        };
        let eval = if r.matched {
            evaluate(&mut reasoner, &plan, &r.view)
        } else {
            Evaluation { score: 0.0, subtask_done: false, task_done_hint: false, rationale: "no effect".into() }
        };
        let result = if r.matched { format!("reached {}", r.view.url) } else { "no effect".to_string() };
        memory
            .record_cycle(CycleInput {
                page: &view,
                objective,
                reason: &p.rationale,
                action: &p.action,
                result: &result,
                success: r.matched,
                eval: &eval,
                epsilon: EPSILON,
            })
            .unwrap();
        let answer = match &p.action {
            Action::Stop { answer } => Some(answer.as_str()),
            _ => None,
        };
        if goal_check(graph, &r.state, answer) {
            break;
        }
        plan = check_and_advance(&plan, &eval);
        tau.push(p.action.clone(), r.view.clone(), r.navigated);
        state = r.state;
        view = r.view;
        if !plan.complete {
            let updated = update_subtask(plan.active(), &view, &tau, &mut reasoner).unwrap();
            plan.apply_update(updated);
        }
        if p.action.is_stop() || !r.matched || eval.score < EPSILON {
            break;
        }
        if !pairs.insert((view.url.clone(), signature)) {
            break;
        }
    }
    executed
}

fn engine_executions(result: &SearchResult) -> Vec<String> {
    result
        .trace
        .events()
        .filter_map(|e| match e {
            TraceEvent::Execute { signature, .. } => Some(signature.clone()),
            _ => None,
        })
        .collect()
}

fn criterion_3(traces: &mut Traces) -> Outcome {
    let config = SearchConfig { epsilon: EPSILON, ..SearchConfig::new(0, 1, 10) };
    let mut cases: Vec<(String, SiteGraph, String, TaskHints)> = suite()
        .tasks
        .into_iter()
        .map(|t| (t.file.id.clone(), t.graph, t.file.intent.clone(), t.file.hints.clone()))
        .collect();
    for seed in 0..LINEAR_RANDOM_SITES {
        let graph = common::random_site(seed);
        let intent = common::random_intent(&graph, seed);
        cases.push((format!("random-{seed}"), graph, intent, TaskHints::default()));
    }
    let mut longest = 0;
    for (id, graph, intent, hints) in &cases {
        let task = SearchTask { id: id.clone(), intent: intent.clone() };
        let mut reasoner = ScriptedReasoner::new(hints.clone());
        let result = search(&task, graph, &config, &mut reasoner, &mut MemoryStore::new()).unwrap();
        let nodes = result.tree.nodes();
        let chain = nodes.iter().skip(1).all(|n| n.parent == Some(n.id - 1));
        ensure(chain, || format!("{id}: tree is not a single path"))?;
        ensure(nodes.len() == result.stats.cycles + 1, || {
            format!("{id}: {} nodes for {} cycles", nodes.len(), result.stats.cycles)
        })?;
        let engine = engine_executions(&result);
        let reference = linear_reference(graph, intent, hints.clone(), config.budget);
        ensure(engine == reference, || format!("{id}: engine {engine:?} vs reference {reference:?}"))?;
        longest = longest.max(engine.len());
        traces.add_result(format!("linear/{id}"), &result);
    }
    Ok(format!("{} tasks match the sequential reference exactly (longest path {longest})", cases.len()))
}

// 4 ---------------------------------------------------------------------

/// Breadth-first enumeration of every action sequence up to `max_depth`.
/// Returns the shallowest depth of a page containing `needle` and the
/// shallowest depth at which the goal check holds.
fn enumerate(
    graph: &SiteGraph,
    inputs: &BTreeMap<String, String>,
    needle: &str,
    max_depth: usize,
) -> (Option<usize>, Option<usize>, usize) {
    let mut queue = VecDeque::from([(reset(graph), 0usize)]);
    let mut page_depth = None;
    let mut goal_depth = None;
    let mut explored = 0;
    while let Some((state, depth)) = queue.pop_front() {
        explored += 1;
        let page = graph.page(&state.active_tab().page);
        if page_depth.is_none() && page.dom_text.contains(needle) {
            page_depth = Some(depth);
        }
        if depth == max_depth {
            continue;
        }
        let mut actions = vec![Action::NavigateBack];
        for line in page.dom_text.lines() {
            actions.push(Action::Stop { answer: line.to_string() });
        }
        for e in &page.elements {
            let r = e.element.clone();
            match e.kind {
                ElementKind::Link | ElementKind::Button => actions.push(Action::Click { element: r }),
                ElementKind::Field => {
                    let text = inputs.get(r.as_str()).cloned().unwrap_or_else(|| "x".into());
                    actions.push(Action::Type { element: r, text });
                }
                ElementKind::Select => {
                    for o in e.options.iter().flatten() {
                        actions.push(Action::Select { element: r.clone(), option: o.clone() });
                    }
                }
                ElementKind::Draggable => {}
            }
        }
        for a in actions {
            let Ok(next) = step(&state, graph, &a) else { continue };
            let answer = match &a {
                Action::Stop { answer } => Some(answer.as_str()),
                _ => None,
            };
            if goal_depth.is_none() && goal_check(graph, &next.state, answer) {
                goal_depth = Some(depth + 1);
            }
            if next.matched && !a.is_stop() {
                queue.push_back((next.state, depth + 1));
            }
        }
    }
    (page_depth, goal_depth, explored)
}

fn criterion_4(traces: &mut Traces) -> Outcome {
    let task = load_task(&common::fixtures().join("tasks/miniadmin.json")).unwrap();
    let GoalSpec::AnswerContains { substring } = &task.graph.goal else { return Err("unexpected goal type".into()) };
    let (page_depth, goal_depth, explored) =
        enumerate(&task.graph, &task.file.hints.inputs, substring, ENUMERATION_DEPTH);
    ensure(page_depth == Some(MINIADMIN_ANSWER_DEPTH), || format!("answer page at depth {page_depth:?}"))?;
    ensure(goal_depth.is_some_and(|d| d <= ENUMERATION_DEPTH), || "goal unreachable within 5 steps".into())?;

    let ok = run_task(&task, &RunOptions::new(SearchConfig::new(5, 5, 10))).unwrap();
    ensure(ok.report.success, || format!("d=5 b=5 c=10 failed: {:?}", ok.report))?;
    let starved = run_task(&task, &RunOptions::new(SearchConfig::new(5, 5, 1))).unwrap();
    ensure(!starved.report.success, || "c=1 unexpectedly succeeded".into())?;
    traces.add_runs("miniadmin", &[ok.clone(), starved]);
    Ok(format!(
        "answer page at depth {MINIADMIN_ANSWER_DEPTH}, goal at depth {} ({explored} states enumerated); c=10 succeeds in {} env actions, c=1 fails",
        goal_depth.unwrap(),
        ok.report.env_actions
    ))
}

// 5 and 6 ---------------------------------------------------------------

fn criterion_5(traces: &mut Traces) -> Outcome {
    let suite = suite();
    let base = default_options(suite.seed);
    let (replay_on, runs_on) = run_suite(&suite, &base).unwrap();
    let mut no_replay = base.clone();
    no_replay.config.replay = false;
    let (replay_off, runs_off) = run_suite(&suite, &no_replay).unwrap();
    let mut no_bg = base.clone();
    no_bg.config.background_budget = 0;
    let (bg_off, runs_nobg) = run_suite(&suite, &no_bg).unwrap();
    traces.add_runs("default", &runs_on);
    traces.add_runs("no-replay", &runs_off);
    traces.add_runs("no-background", &runs_nobg);

    let mut strict = 0;
    for (on, off) in replay_on.tasks.iter().zip(&replay_off.tasks) {
        ensure(on.refocus_actions <= off.refocus_actions, || {
            format!("{}: replay {} > no-replay {}", on.task, on.refocus_actions, off.refocus_actions)
        })?;
        if on.refocus_actions < off.refocus_actions {
            strict += 1;
        }
    }
    ensure(strict >= STRICT_REPLAY_WINS, || format!("replay strictly cheaper on only {strict}/10"))?;
    for (on, off) in replay_on.tasks.iter().zip(&bg_off.tasks) {
        ensure(on.success && off.success, || format!("{}: cycles-to-success undefined, a run failed", on.task))?;
        ensure(on.cycles <= off.cycles, || {
            format!("{}: background {} > no-background {}", on.task, on.cycles, off.cycles)
        })?;
    }
    let sum = |r: &webtree::harness::RunReport, f: fn(&webtree::harness::TaskReport) -> usize| -> usize {
        r.tasks.iter().map(f).sum()
    };
    Ok(format!(
        "refocus cost {} vs {} (strictly lower on {strict}/10); cycles {} vs {} without background",
        sum(&replay_on, |t| t.refocus_actions),
        sum(&replay_off, |t| t.refocus_actions),
        sum(&replay_on, |t| t.cycles),
        sum(&bg_off, |t| t.cycles)
    ))
}

fn criterion_6(traces: &mut Traces) -> Outcome {
    let suite = suite();
    let base = default_options(suite.seed);
    let table = sweep(&suite, &DEFAULT_GRID, &base).unwrap();
    for &(depth, branch) in &DEFAULT_GRID {
        let options = RunOptions { config: SearchConfig { depth, branch, ..base.config }, ..base.clone() };
        let (_, runs) = run_suite(&suite, &options).unwrap();
        traces.add_runs(&format!("sweep-{depth}-{branch}"), &runs);
    }
    let points: Vec<(f64, usize)> =
        table.rows.iter().map(|r| (r.report.aggregate.success_rate, r.report.aggregate.total_env_actions)).collect();
    for w in table.rows.windows(2) {
        let (a, b) = (&w[0].report.aggregate, &w[1].report.aggregate);
        ensure(b.success_rate >= a.success_rate, || {
            format!("SR drops at ({},{}): {points:?}", w[1].depth, w[1].branch)
        })?;
        ensure(b.total_env_actions >= a.total_env_actions, || {
            format!("env_actions drop at ({},{}): {points:?}", w[1].depth, w[1].branch)
        })?;
    }
    let shown: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "({},{}) {:.1}/{}",
                r.depth, r.branch, r.report.aggregate.success_rate, r.report.aggregate.total_env_actions
            )
        })
        .collect();
    Ok(format!("SR/env_actions: {}", shown.join(" ")))
}

// 7 ---------------------------------------------------------------------

fn synthetic_record(rng: &mut ChaCha8Rng, i: usize) -> PageMemory {
    let url = format!("https://mem.local/page/{i}?q={}", rng.gen_range(0..1000));
    let mut record = PageMemory::new(&url);
    record.objective = Objective { global_intent: format!("intent {i}"), active_subtask: format!("step {}", i % 7) };
    record.progress_summary = format!("visited {i} with \"quotes\", unicode é and newline\n");
    for k in 0..rng.gen_range(0..6) {
        record.history.push(CycleRecord {
            action_id: k,
            name: "CLICK".into(),
            element: format!("e{k}"),
            result: format!("reached {k}"),
            reason: "scripted".into(),
        });
    }
    record.snapshot = Snapshot {
        url: url.clone(),
        title: format!("Page {i}"),
        dom_text: "text ".repeat(rng.gen_range(0..20)),
        image_ref: format!("sha256:{i:064}"),
    };
    let marks = [Relevance::Relevant, Relevance::Irrelevant, Relevance::Unknown];
    for k in 0..rng.gen_range(0..5) {
        record.action_memory.push(ActionEntry {
            signature: format!("TYPE|f{k}|3:a|b"),
            relevance: marks[rng.gen_range(0..3)],
            success: rng.gen_bool(0.5),
            note: String::new(),
        });
    }
    record
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = MemoryStore::new();
    for i in 0..MEMORY_RECORDS {
        store.insert(synthetic_record(&mut rng, i));
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    store.persist(dir.path()).map_err(|e| e.to_string())?;
    let restored = MemoryStore::restore(dir.path()).map_err(|e| e.to_string())?;
    ensure(restored == store && restored.len() == MEMORY_RECORDS, || "restore(persist(s)) != s".into())?;
    ensure(restored.warnings().is_empty(), || format!("clean restore warned: {:?}", restored.warnings()))?;

    // Corrupt three files in different ways and add a stray one.
    let victims: Vec<PageMemory> = store.records().take(3).cloned().collect();
    let path = |r: &PageMemory| dir.path().join(format!("{}.mem", url_digest(&r.url)));
    fs::write(path(&victims[0]), "{ not json").unwrap();
    let text = fs::read_to_string(path(&victims[1])).unwrap();
    fs::write(path(&victims[1]), &text[..text.len() / 2]).unwrap();
    let mut wrong = victims[2].clone();
    wrong.version = MEMORY_SCHEMA_VERSION + 1;
    fs::write(path(&victims[2]), serde_json::to_string(&wrong).unwrap()).unwrap();
    fs::write(dir.path().join(format!("{}.mem", "0".repeat(64))), serde_json::to_string(&victims[0]).unwrap()).unwrap();

    let damaged = panic::catch_unwind(|| MemoryStore::restore(dir.path()))
        .map_err(|_| "restore panicked on corrupt files".to_string())?
        .map_err(|e| e.to_string())?;
    ensure(damaged.len() == MEMORY_RECORDS - 3, || format!("{} records survived", damaged.len()))?;
    ensure(damaged.warnings().len() == 4, || format!("{} warnings", damaged.warnings().len()))?;
    ensure(victims.iter().all(|v| damaged.get(&v.url).is_none()), || "a corrupt record was loaded".into())?;
    Ok(format!(
        "{MEMORY_RECORDS} records round-trip deep-equal; 4 corrupt files skipped with {} warnings",
        damaged.warnings().len()
    ))
}

// 8 and 9 ---------------------------------------------------------------

fn criterion_8(traces: &Traces) -> Outcome {
    let mut marks = 0;
    for (label, trace, _) in &traces.0 {
        let mut irrelevant: BTreeSet<(String, String)> = BTreeSet::new();
        for record in trace.records() {
            match &record.event {
                TraceEvent::Execute { url, signature, .. } | TraceEvent::Reuse { url, signature, .. } => {
                    let key = (url.clone(), signature.clone());
                    ensure(!irrelevant.contains(&key), || {
                        format!("{label}: {signature} ran on {url} after being marked irrelevant (seq {})", record.seq)
                    })?;
                }
                TraceEvent::Memory { url, signature, relevance: Relevance::Irrelevant }
                    if irrelevant.insert((url.clone(), signature.clone())) =>
                {
                    marks += 1;
                }
                _ => {}
            }
        }
    }
    ensure(marks > 0, || "no action was ever marked irrelevant".into())?;
    Ok(format!("{} traces, {marks} irrelevant marks, none re-executed", traces.0.len()))
}

fn criterion_9(traces: &Traces) -> Outcome {
    let (mut steps, mut edges) = (0, 0);
    for (label, trace, tree) in &traces.0 {
        for event in trace.events() {
            if let TraceEvent::Background { live_before, live_after, proposals, .. } = event {
                steps += 1;
                ensure(live_before == live_after, || format!("{label}: live digest changed during background"))?;
                for p in proposals.iter().filter(|p| p.pre_expanded) {
                    ensure(p.signature.starts_with("CLICK|") && p.href.is_some(), || {
                        format!("{label}: pre-expanded {}", p.signature)
                    })?;
                }
            }
        }
        let Some(tree) = tree else { continue };
        for n in tree.nodes().iter().filter(|n| n.pre_expanded) {
            edges += 1;
            let parent = &tree.node(n.parent.unwrap()).view;
            let ok = match &n.incoming {
                Some(Action::Click { element }) => {
                    parent.elements.iter().any(|e| &e.element == element && e.href.is_some())
                }
                _ => false,
            };
            ensure(ok, || format!("{label}: pre-expanded edge {:?} is not a CLICK with href", n.incoming))?;
        }
    }
    ensure(steps > 0 && edges > 0, || "no background activity observed".into())?;
    Ok(format!("{steps} background steps left the live digest unchanged; {edges}/{edges} pre-expanded edges are CLICK-with-href"))
}

// 10 --------------------------------------------------------------------

fn suite_bytes(suite: &Suite) -> (String, String) {
    let (report, runs) = run_suite(suite, &default_options(suite.seed)).unwrap();
    let traces: String = runs.iter().filter_map(|r| r.trace()).map(Trace::to_jsonl).collect();
    (traces, report.masked().to_json())
}

fn criterion_10() -> Outcome {
    let suite = suite();
    let (t1, r1) = suite_bytes(&suite);
    let (t2, r2) = suite_bytes(&suite);
    ensure(t1 == t2, || "traces differ between identical runs".into())?;
    ensure(r1 == r2, || "masked reports differ between identical runs".into())?;
    Ok(format!("traces ({} bytes) and masked reports ({} bytes) byte-identical", t1.len(), r1.len()))
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    panic::set_hook(Box::new(|_| {}));
    let mut traces = Traces::default();
    let replay_stats = replay_campaign();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        results.push((name, outcome));
    };
    run("replay equivalence", &mut || criterion_1(&replay_stats));
    run("replay economy", &mut || criterion_2(&replay_stats));
    run("degenerate linear mode", &mut || criterion_3(&mut traces));
    run("search success on miniadmin", &mut || criterion_4(&mut traces));
    run("ablation trend", &mut || criterion_5(&mut traces));
    run("sensitivity trend", &mut || criterion_6(&mut traces));
    run("memory round-trip", &mut || criterion_7());
    run("suppression soundness", &mut || criterion_8(&traces));
    run("background isolation and selectivity", &mut || criterion_9(&traces));
    run("determinism", &mut || criterion_10());

    let mut failed = 0;
    for (i, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS [{:>2}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{:>2}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
