//! Monte Carlo tree search over the particle belief.
//!
//! The tree alternates history nodes (children keyed by action) and action
//! nodes (children keyed by the exact observation vector). Each simulation
//! samples a root particle, descends with UCT, creates one new history node,
//! evaluates it with a depth-limited rollout and backs the discounted return
//! up the visited path. Values are running means of those returns.
//!
//! A root belief is either over states about to be served
//! ([`RootPhase::BeforeService`], every transition is a full model step) or
//! over states whose interval has already been served and observed
//! ([`RootPhase::BeforeRouting`]). In the second case the root actions only
//! place the arriving job, and the search continues with full steps below.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::Belief;
use crate::model::{advance_in_place, route_in_place, Action, AugmentedState, ModelParams, Observation};
use crate::{Error, Result};

/// Policy used beyond the tree frontier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RolloutPolicy {
    #[default]
    Uniform,
    /// Smallest `(b + 1) / μ` on the simulated state, ties at random.
    ShortestExpectedDelay,
}

impl RolloutPolicy {
    fn choose<R: Rng + ?Sized>(self, state: &AugmentedState, model: &ModelParams, rng: &mut R) -> Action {
        let n_actions = model.n_queues();
        match self {
            RolloutPolicy::Uniform => Action(rng.random_range(0..n_actions)),
            RolloutPolicy::ShortestExpectedDelay => {
                let mut best = f64::INFINITY;
                let mut ties = 0u32;
                let mut pick = 0;
                for (i, (slot, q)) in state.slots().iter().zip(&model.queues).enumerate() {
                    let delay = (slot.filling + 1) as f64 / q.service_rate;
                    if delay < best {
                        best = delay;
                        ties = 1;
                        pick = i;
                    } else if delay == best {
                        ties += 1;
                        if rng.random_range(0..ties) == 0 {
                            pick = i;
                        }
                    }
                }
                Action(pick)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Maximum number of transitions simulated below the root.
    pub depth: u32,
    /// UCT exploration constant, on the raw reward scale.
    pub uct_c: f64,
    /// Simulations per decision (ignored when `time_budget_ms` is set).
    pub n_simulations: u32,
    /// Wall-clock search budget per decision.
    pub time_budget_ms: Option<u64>,
    pub gamma: f64,
    pub n_particles: usize,
    /// Propagations per belief update; defaults to `n_particles`.
    pub belief_simulations: Option<usize>,
    /// Keep the subtree matching the real (action, observation) between
    /// decisions instead of rebuilding from scratch.
    pub reuse_tree: bool,
    pub rollout: RolloutPolicy,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            depth: 10,
            uct_c: 1.0,
            n_simulations: 500,
            time_budget_ms: None,
            gamma: 0.95,
            n_particles: 1000,
            belief_simulations: None,
            reuse_tree: true,
            rollout: RolloutPolicy::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchBudget {
    Simulations(u32),
    WallClock(Duration),
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 1 {
            return Err(Error::config("planner.depth", "must be at least 1"));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::config(
                "planner.gamma",
                format!("must lie in (0, 1), got {}", self.gamma),
            ));
        }
        if !(self.uct_c > 0.0 && self.uct_c.is_finite()) {
            return Err(Error::config("planner.uct_c", "must be finite and > 0"));
        }
        if self.n_simulations < 1 && self.time_budget_ms.is_none() {
            return Err(Error::config("planner.n_simulations", "must be at least 1"));
        }
        if self.n_particles < 1 {
            return Err(Error::config("planner.n_particles", "must be at least 1"));
        }
        Ok(())
    }

    pub fn search_budget(&self) -> SearchBudget {
        match self.time_budget_ms {
            Some(ms) => SearchBudget::WallClock(Duration::from_millis(ms)),
            None => SearchBudget::Simulations(self.n_simulations),
        }
    }

    pub fn belief_budget(&self) -> usize {
        self.belief_simulations.unwrap_or(self.n_particles)
    }
}

/// Visit count and mean return of a tree node.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NodeStats {
    pub visits: u64,
    pub value: f64,
}

#[derive(Debug, Clone)]
enum Edges {
    /// Empty until the node is expanded.
    Actions(Vec<Option<usize>>),
    Observations(HashMap<Vec<u32>, usize>),
}

#[derive(Debug, Clone)]
struct Node {
    stats: NodeStats,
    edges: Edges,
}

impl Node {
    fn history() -> Self {
        Node {
            stats: NodeStats::default(),
            edges: Edges::Actions(Vec::new()),
        }
    }

    fn action() -> Self {
        Node {
            stats: NodeStats::default(),
            edges: Edges::Observations(HashMap::new()),
        }
    }

    fn record(&mut self, ret: f64) {
        self.stats.visits += 1;
        self.stats.value += (ret - self.stats.value) / self.stats.visits as f64;
    }
}

/// UCT: `value + c * sqrt(ln(parent_visits) / visits)`. Unvisited children
/// score `+inf`; ties are broken uniformly at random.
pub fn uct_select<R: Rng + ?Sized>(children: &[NodeStats], parent_visits: u64, uct_c: f64, rng: &mut R) -> Action {
    assert!(!children.is_empty(), "uct_select needs at least one child");
    let ln_parent = (parent_visits.max(1) as f64).ln();
    argmax_random(
        children.iter().map(|c| {
            if c.visits == 0 {
                f64::INFINITY
            } else {
                c.value + uct_c * (ln_parent / c.visits as f64).sqrt()
            }
        }),
        rng,
    )
    .map(Action)
    .expect("non-empty")
}

/// Index of the maximum, ties resolved by reservoir sampling. NaN entries
/// are skipped.
fn argmax_random<R: Rng + ?Sized>(scores: impl Iterator<Item = f64>, rng: &mut R) -> Option<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut choice = None;
    let mut ties = 0u32;
    for (i, s) in scores.enumerate() {
        if s.is_nan() {
            continue;
        }
        if choice.is_none() || s > best {
            best = s;
            choice = Some(i);
            ties = 1;
        } else if s == best {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                choice = Some(i);
            }
        }
    }
    choice
}

/// Discounted return of `depth_remaining` uniformly random actions from
/// `state`.
pub fn rollout<R: Rng + ?Sized>(
    state: &AugmentedState,
    depth_remaining: u32,
    model: &ModelParams,
    gamma: f64,
    rng: &mut R,
) -> f64 {
    let mut s = state.clone();
    let mut available = Vec::with_capacity(s.len());
    rollout_in_place(
        &mut s,
        depth_remaining,
        model,
        gamma,
        RolloutPolicy::Uniform,
        rng,
        &mut available,
    )
}

fn rollout_in_place<R: Rng + ?Sized>(
    state: &mut AugmentedState,
    depth_remaining: u32,
    model: &ModelParams,
    gamma: f64,
    policy: RolloutPolicy,
    rng: &mut R,
    available: &mut Vec<u32>,
) -> f64 {
    let mut total = 0.0;
    let mut discount = 1.0;
    for _ in 0..depth_remaining {
        let a = policy.choose(state, model, rng);
        total += discount * advance_in_place(state, a, model, rng, available).reward;
        discount *= gamma;
    }
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchReport {
    pub action: Action,
    pub simulations: u64,
    pub tree_size: usize,
    /// Longest trajectory (tree plus rollout transitions) of this search.
    pub max_trajectory: u32,
    pub elapsed: Duration,
}

struct Scratch {
    state: AugmentedState,
    available: Vec<u32>,
    stats: Vec<NodeStats>,
    transitions: u32,
}

/// What the next event is for the states of the root belief.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootPhase {
    #[default]
    BeforeService,
    BeforeRouting,
}

/// Search tree rooted at the current belief.
#[derive(Debug, Clone)]
pub struct SearchTree {
    nodes: Vec<Node>,
    n_actions: usize,
    phase: RootPhase,
    log: Option<Vec<(usize, f64)>>,
}

const ROOT: usize = 0;

impl SearchTree {
    pub fn new(n_actions: usize) -> Self {
        assert!(n_actions >= 1);
        SearchTree {
            nodes: vec![Node::history()],
            n_actions,
            phase: RootPhase::BeforeService,
            log: None,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn root_stats(&self) -> NodeStats {
        self.nodes[ROOT].stats
    }

    /// Stats of the root's action children (`None` for never-created ones).
    pub fn root_children(&self) -> Vec<Option<NodeStats>> {
        match &self.nodes[ROOT].edges {
            Edges::Actions(v) if !v.is_empty() => v.iter().map(|c| c.map(|id| self.nodes[id].stats)).collect(),
            _ => vec![None; self.n_actions],
        }
    }

    /// Stats of the history node reached by `(action, observation)` from the root.
    pub fn child_after(&self, action: Action, observation: &Observation) -> Option<NodeStats> {
        self.child_id(action, observation).map(|id| self.nodes[id].stats)
    }

    pub fn node_stats(&self, id: usize) -> NodeStats {
        self.nodes[id].stats
    }

    /// Record `(node id, return)` for every backup until the next reset or
    /// root advance.
    pub fn set_recording(&mut self, on: bool) {
        self.log = on.then(Vec::new);
    }

    pub fn take_log(&mut self) -> Vec<(usize, f64)> {
        self.log.as_mut().map(std::mem::take).unwrap_or_default()
    }

    fn child_id(&self, action: Action, observation: &Observation) -> Option<usize> {
        let Edges::Actions(actions) = &self.nodes[ROOT].edges else {
            return None;
        };
        let action_node = (*actions.get(action.0)?)?;
        let Edges::Observations(obs) = &self.nodes[action_node].edges else {
            return None;
        };
        obs.get(observation.counts()).copied()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
        self.nodes.push(Node::history());
        if let Some(log) = self.log.as_mut() {
            log.clear();
        }
    }

    /// Make the `(taken, observed)` grandchild the new root, discarding all
    /// siblings. Falls back to a fresh root when that history was never
    /// simulated. Returns whether a subtree was kept.
    ///
    /// For a [`RootPhase::BeforeRouting`] root, `observed` is the
    /// acknowledgement vector of the interval that follows the routing of
    /// `taken`; the new root is again before routing, and its actions lead to
    /// the subtrees that were grown below `(taken, observed, action)`.
    pub fn advance_root(&mut self, taken: Action, observed: &Observation) -> bool {
        match self.phase {
            RootPhase::BeforeService => {
                let Some(new_root) = self.child_id(taken, observed) else {
                    self.reset();
                    return false;
                };
                let mut fresh = Vec::new();
                self.copy_subtree(new_root, &mut fresh);
                self.nodes = fresh;
            }
            RootPhase::BeforeRouting => {
                let routed = self.child_id(taken, &Observation(Vec::new()));
                let Some(Edges::Actions(actions)) = routed.map(|id| &self.nodes[id].edges) else {
                    self.reset();
                    return false;
                };
                let grandchildren: Vec<Option<usize>> = (0..self.n_actions)
                    .map(|a| {
                        let action_node = (*actions.get(a)?)?;
                        match &self.nodes[action_node].edges {
                            Edges::Observations(m) => m.get(observed.counts()).copied(),
                            Edges::Actions(_) => None,
                        }
                    })
                    .collect();
                if grandchildren.iter().all(Option::is_none) {
                    self.reset();
                    return false;
                }
                let mut fresh = vec![Node::history()];
                let mut root_edges = vec![None; self.n_actions];
                for (a, g) in grandchildren.into_iter().enumerate() {
                    let Some(g) = g else { continue };
                    let action_id = fresh.len();
                    fresh.push(Node::action());
                    root_edges[a] = Some(action_id);
                    let g_new = self.copy_subtree(g, &mut fresh);
                    if let Edges::Observations(m) = &mut fresh[action_id].edges {
                        m.insert(Vec::new(), g_new);
                    }
                }
                fresh[ROOT].edges = Edges::Actions(root_edges);
                self.nodes = fresh;
            }
        }
        if let Some(log) = self.log.as_mut() {
            log.clear();
        }
        true
    }

    /// Appends a renumbered copy of the subtree under `old` and returns the
    /// new id of `old`.
    fn copy_subtree(&self, old: usize, out: &mut Vec<Node>) -> usize {
        let base = out.len();
        let mut order = vec![old];
        let mut remap: HashMap<usize, usize> = HashMap::from([(old, base)]);
        let mut i = 0;
        while i < order.len() {
            let children: Vec<usize> = match &self.nodes[order[i]].edges {
                Edges::Actions(v) => v.iter().flatten().copied().collect(),
                Edges::Observations(m) => m.values().copied().collect(),
            };
            for c in children {
                remap.insert(c, base + order.len());
                order.push(c);
            }
            i += 1;
        }
        for &id in &order {
            let node = &self.nodes[id];
            let edges = match &node.edges {
                Edges::Actions(v) => Edges::Actions(v.iter().map(|c| c.map(|id| remap[&id])).collect()),
                Edges::Observations(m) => Edges::Observations(m.iter().map(|(k, id)| (k.clone(), remap[id])).collect()),
            };
            out.push(Node {
                stats: node.stats,
                edges,
            });
        }
        base
    }

    /// Sets the phase of the root; the tree is reset when it changes.
    pub fn set_phase(&mut self, phase: RootPhase) {
        if phase != self.phase {
            self.phase = phase;
            self.reset();
        }
    }

    pub fn phase(&self) -> RootPhase {
        self.phase
    }

    /// Runs the configured number of simulations from `belief` and returns
    /// the root action with the highest mean return.
    pub fn search<R: Rng + ?Sized>(
        &mut self,
        belief: &Belief,
        model: &ModelParams,
        params: &PlannerParams,
        rng: &mut R,
    ) -> SearchReport {
        assert_eq!(model.n_queues(), self.n_actions);
        let started = Instant::now();
        self.expand(ROOT);
        let mut scratch = Scratch {
            state: belief.particles()[0].clone(),
            available: Vec::with_capacity(self.n_actions),
            stats: Vec::with_capacity(self.n_actions),
            transitions: 0,
        };
        let mut simulations = 0u64;
        let mut max_trajectory = 0;
        let budget = params.search_budget();
        loop {
            let done = match budget {
                SearchBudget::Simulations(n) => simulations >= n as u64,
                SearchBudget::WallClock(limit) => simulations > 0 && started.elapsed() >= limit,
            };
            if done {
                break;
            }
            scratch.state.clone_from(belief.sample(rng));
            scratch.transitions = 0;
            self.simulate(ROOT, 0, model, params, rng, &mut scratch);
            max_trajectory = max_trajectory.max(scratch.transitions);
            simulations += 1;
        }
        SearchReport {
            action: self.best_root_action(rng),
            simulations,
            tree_size: self.nodes.len(),
            max_trajectory,
            elapsed: started.elapsed(),
        }
    }

    fn best_root_action<R: Rng + ?Sized>(&self, rng: &mut R) -> Action {
        let children = self.root_children();
        argmax_random(
            children.iter().map(|c| match c {
                Some(s) if s.visits > 0 => s.value,
                _ => f64::NAN,
            }),
            rng,
        )
        .map(Action)
        .unwrap_or_else(|| Action(rng.random_range(0..self.n_actions)))
    }

    fn expand(&mut self, node: usize) {
        if let Edges::Actions(v) = &mut self.nodes[node].edges {
            if v.is_empty() {
                *v = vec![None; self.n_actions];
            }
        }
    }

    fn is_expanded(&self, node: usize) -> bool {
        matches!(&self.nodes[node].edges, Edges::Actions(v) if !v.is_empty())
    }

    fn backup(&mut self, node: usize, ret: f64) {
        self.nodes[node].record(ret);
        if let Some(log) = self.log.as_mut() {
            log.push((node, ret));
        }
    }

    fn simulate<R: Rng + ?Sized>(
        &mut self,
        node: usize,
        depth: u32,
        model: &ModelParams,
        params: &PlannerParams,
        rng: &mut R,
        scratch: &mut Scratch,
    ) -> f64 {
        let remaining = params.depth - depth;
        if !self.is_expanded(node) {
            self.expand(node);
            let ret = rollout_in_place(
                &mut scratch.state,
                remaining,
                model,
                params.gamma,
                params.rollout,
                rng,
                &mut scratch.available,
            );
            scratch.transitions += remaining;
            self.backup(node, ret);
            return ret;
        }

        scratch.stats.clear();
        let Edges::Actions(actions) = &self.nodes[node].edges else {
            unreachable!("history node");
        };
        scratch.stats.extend(
            actions
                .iter()
                .map(|c| c.map(|id| self.nodes[id].stats).unwrap_or_default()),
        );
        let a = uct_select(&scratch.stats, self.nodes[node].stats.visits, params.uct_c, rng);

        let existing = actions[a.0];
        let action_node = match existing {
            Some(id) => id,
            None => {
                let id = self.nodes.len();
                self.nodes.push(Node::action());
                if let Edges::Actions(v) = &mut self.nodes[node].edges {
                    v[a.0] = Some(id);
                }
                id
            }
        };

        let route_only = depth == 0 && self.phase == RootPhase::BeforeRouting;
        let outcome = if route_only {
            route_in_place(&mut scratch.state, a, model)
        } else {
            advance_in_place(&mut scratch.state, a, model, rng, &mut scratch.available)
        };
        scratch.transitions += 1;
        let future = if remaining > 1 {
            let key: Vec<u32> = if route_only {
                Vec::new()
            } else {
                scratch.state.slots().iter().map(|s| s.observed).collect()
            };
            let next_id = self.nodes.len();
            let child = match &mut self.nodes[action_node].edges {
                Edges::Observations(m) => *m.entry(key).or_insert(next_id),
                Edges::Actions(_) => unreachable!("action node"),
            };
            if child == next_id {
                self.nodes.push(Node::history());
            }
            self.simulate(child, depth + 1, model, params, rng, scratch)
        } else {
            0.0
        };
        let ret = outcome.reward + params.gamma * future;
        self.backup(action_node, ret);
        self.backup(node, ret);
        ret
    }
}

/// One planning call from a fresh tree.
pub fn plan<R: Rng + ?Sized>(belief: &Belief, model: &ModelParams, params: &PlannerParams, rng: &mut R) -> Action {
    SearchTree::new(model.n_queues())
        .search(belief, model, params, rng)
        .action
}
