//! Routing policies as seen by the run loop.
//!
//! At every arrival the loop calls [`Policy::decide`] with what the balancer
//! could know at that instant, routes the job, and then reports the chosen
//! action and the acknowledgements of the epoch through [`Policy::observe`].
//! The planning policy conditions its belief on the acknowledgements of the
//! epoch that just ended before it plans, then places the routed job in
//! every particle once the decision is made.

use crate::baselines::{decide_full_info, decide_limited_info, LimitedInfoView, StrategyKind};
use crate::belief::{init_belief, sir_observe, Belief, UpdateBudget};
use crate::environment::PlannerStats;
use crate::model::{Action, AugmentedState, ModelParams, Observation};
use crate::planner::{PlannerParams, RootPhase, SearchTree};
use crate::seed::SimRng;

/// Information available at an arrival.
#[derive(Debug, Clone, Copy)]
pub struct ArrivalView<'a> {
    /// True fillings just before the arriving job is placed. Only
    /// full-information strategies may read them.
    pub fillings: &'a [u32],
    pub service_rates: &'a [f64],
    /// Acknowledgements received during the epoch that just ended.
    pub acks: &'a Observation,
    /// Length of that epoch.
    pub interval: f64,
}

pub trait Policy: Send {
    fn decide(&mut self, view: &ArrivalView<'_>) -> Action;

    fn observe(&mut self, _action: Action, _acks: &Observation) {}

    fn belief(&self) -> Option<&Belief> {
        None
    }

    fn planner_stats(&self) -> Option<PlannerStats> {
        None
    }
}

/// JSQ, DJSQ or SED on the true fillings.
pub struct FullInfoPolicy {
    kind: StrategyKind,
    rng: SimRng,
}

impl FullInfoPolicy {
    pub fn new(kind: StrategyKind, rng: SimRng) -> Self {
        assert!(kind.is_full_info());
        FullInfoPolicy { kind, rng }
    }
}

impl Policy for FullInfoPolicy {
    fn decide(&mut self, view: &ArrivalView<'_>) -> Action {
        decide_full_info(self.kind, view.fillings, view.service_rates, &mut self.rng)
    }
}

/// JMO or JMO-E, remembering which queues were ever used and the last one.
pub struct LimitedInfoPolicy {
    kind: StrategyKind,
    rng: SimRng,
    ever_used: Vec<bool>,
    last_routed: Option<usize>,
}

impl LimitedInfoPolicy {
    pub fn new(kind: StrategyKind, n_queues: usize, rng: SimRng) -> Self {
        assert!(kind.is_limited_info());
        LimitedInfoPolicy {
            kind,
            rng,
            ever_used: vec![false; n_queues],
            last_routed: None,
        }
    }
}

impl Policy for LimitedInfoPolicy {
    fn decide(&mut self, view: &ArrivalView<'_>) -> Action {
        let info = LimitedInfoView {
            last_epoch_acks: view.acks.counts(),
            ever_used: &self.ever_used,
            last_routed: self.last_routed,
        };
        decide_limited_info(self.kind, &info, &mut self.rng)
    }

    fn observe(&mut self, action: Action, _acks: &Observation) {
        self.ever_used[action.0] = true;
        self.last_routed = Some(action.0);
    }
}

/// Belief-tracking tree search.
pub struct PlanningPolicy {
    model: ModelParams,
    params: PlannerParams,
    belief: Belief,
    tree: SearchTree,
    rng: SimRng,
    stats: PlannerStats,
    searches: u64,
    tree_size_sum: u64,
    last_action: Option<Action>,
}

impl PlanningPolicy {
    /// Starts from an empty system known with certainty.
    pub fn new(model: ModelParams, params: PlannerParams, rng: SimRng) -> Self {
        let n = model.n_queues();
        let belief = init_belief(params.n_particles, AugmentedState::empty(n));
        let mut tree = SearchTree::new(n);
        tree.set_phase(RootPhase::BeforeRouting);
        PlanningPolicy {
            tree,
            model,
            params,
            belief,
            rng,
            stats: PlannerStats::default(),
            searches: 0,
            tree_size_sum: 0,
            last_action: None,
        }
    }
}

impl Policy for PlanningPolicy {
    fn decide(&mut self, view: &ArrivalView<'_>) -> Action {
        let budget = UpdateBudget::Simulations(self.params.belief_budget());
        let update = sir_observe(
            &self.belief,
            view.acks,
            Some(view.interval),
            &self.model,
            budget,
            &mut self.rng,
        );
        if update.degenerate {
            self.stats.degenerate_updates += 1;
        }
        self.belief = update.belief;
        match self.last_action {
            Some(a) if self.params.reuse_tree => {
                self.tree.advance_root(a, view.acks);
            }
            _ => self.tree.reset(),
        }

        let report = self.tree.search(&self.belief, &self.model, &self.params, &mut self.rng);
        self.stats.simulations += report.simulations;
        self.searches += 1;
        self.tree_size_sum += report.tree_size as u64;
        report.action
    }

    fn observe(&mut self, action: Action, _acks: &Observation) {
        self.belief.route(action, &self.model);
        self.last_action = Some(action);
    }

    fn belief(&self) -> Option<&Belief> {
        Some(&self.belief)
    }

    fn planner_stats(&self) -> Option<PlannerStats> {
        let mut stats = self.stats.clone();
        if self.searches > 0 {
            stats.mean_tree_size = self.tree_size_sum as f64 / self.searches as f64;
        }
        Some(stats)
    }
}

/// Builds the policy for `kind`. `model` and `params` are only used by the
/// planning policy.
pub fn make_policy(kind: StrategyKind, model: &ModelParams, params: &PlannerParams, rng: SimRng) -> Box<dyn Policy> {
    match kind {
        StrategyKind::Pol => Box::new(PlanningPolicy::new(model.clone(), params.clone(), rng)),
        k if k.is_full_info() => Box::new(FullInfoPolicy::new(k, rng)),
        k => Box::new(LimitedInfoPolicy::new(k, model.n_queues(), rng)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DistributionSpec, QueueParams};
    use crate::reward::RewardSpec;
    use crate::seed::rng_from;

    fn model() -> ModelParams {
        let q = QueueParams::new(10, DistributionSpec::exponential(4.0), 0.6);
        ModelParams::new(
            &DistributionSpec::exponential(5.0),
            &[q.clone(), q],
            RewardSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn jmo_tracks_usage() {
        let m = model();
        let mut p = make_policy("jmo-e:1".parse().unwrap(), &m, &PlannerParams::default(), rng_from(1));
        let z = Observation::zeros(2);
        let view = ArrivalView {
            fillings: &[0, 0],
            service_rates: &[4.0, 4.0],
            acks: &z,
            interval: 0.2,
        };
        let first = p.decide(&view);
        p.observe(first, &z);
        // the other queue is the only idle one now
        for _ in 0..20 {
            assert_eq!(p.decide(&view).0, 1 - first.0);
        }
    }

    #[test]
    fn planner_belief_keeps_size() {
        let m = model();
        let params = PlannerParams {
            n_simulations: 50,
            n_particles: 200,
            ..PlannerParams::default()
        };
        let mut p = PlanningPolicy::new(m, params, rng_from(2));
        let z = Observation::zeros(2);
        let view = ArrivalView {
            fillings: &[0, 0],
            service_rates: &[4.0, 4.0],
            acks: &z,
            interval: 0.2,
        };
        for _ in 0..5 {
            let a = p.decide(&view);
            p.observe(a, &z);
            assert_eq!(p.belief().unwrap().len(), 200);
        }
        let s = p.planner_stats().unwrap();
        assert_eq!(s.simulations, 250);
        assert!(s.mean_tree_size > 1.0);
    }
}
