//! Lagrange dual decomposition of the joint mapping / power problem.
//!
//! Power budgets are priced with one multiplier per uplink user and one for
//! the BS. At a fixed price vector every triple's power problem decouples
//! ([`crate::powalloc::solve_inner`]); the resulting priced payoffs feed the
//! 3D mapping heuristic, which yields the dual function value. Prices follow
//! projected subgradient steps with a `pi0 / sqrt(l)` step size, and a
//! budget-feasible primal point is recovered by rescaling the powers.

use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mapping3d::{exhaustive_3d, initial_assignment, iterative_hungarian_3d, RateTensor, DEFAULT_ITERATIONS};
use crate::model::{total_throughput, Assignment3D, PowerAllocation, Scenario};
use crate::powalloc::{solve_inner, InnerSolution};

/// Multipliers never drop below this so every inner problem stays bounded.
pub const LAMBDA_FLOOR: f64 = 1e-9;

pub const DEFAULT_PI0: f64 = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    /// Price of each uplink user's budget (1/W).
    pub lambda_m: Vec<f64>,
    /// Price of the BS budget (1/W).
    pub lambda_b: f64,
    /// Iteration index, starting at 1.
    pub iteration: usize,
    pub pi0: f64,
    /// Per-constraint step weights (1/W^2); all ones gives the plain update
    /// `lambda - pi * (budget - used)`.
    pub weight_m: Vec<f64>,
    pub weight_b: f64,
}

impl DualState {
    /// Starts every price at the equal-split water level
    /// `subchannels / (budget * ln 2)` and weights each constraint's step by
    /// `lambda_init / budget`, so `pi0` is dimensionless.
    pub fn initial(scenario: &Scenario, pi0: Option<f64>) -> Result<Self> {
        let dims = scenario.dims();
        let level = |served: usize, budget: f64| served as f64 / (budget * LN_2);
        let lambda_m: Vec<f64> = scenario.uue_budget.iter().map(|&p| level(dims.uue_cap(), p)).collect();
        let lambda_b = level(dims.sub, scenario.bs_budget);
        let weight_m = lambda_m.iter().zip(&scenario.uue_budget).map(|(l, p)| l / p).collect();
        let weight_b = lambda_b / scenario.bs_budget;
        let state = DualState {
            lambda_m,
            lambda_b,
            iteration: 1,
            pi0: pi0.unwrap_or(DEFAULT_PI0),
            weight_m,
            weight_b,
        };
        state.validate(scenario)?;
        Ok(state)
    }

    pub fn validate(&self, scenario: &Scenario) -> Result<()> {
        if self.lambda_m.len() != scenario.num_uue || self.weight_m.len() != scenario.num_uue {
            return Err(Error::Consistency(format!(
                "{} uplink multipliers for {} uplink users",
                self.lambda_m.len(),
                scenario.num_uue
            )));
        }
        if !(self.weight_b > 0.0 && self.weight_m.iter().all(|w| *w > 0.0)) {
            return Err(Error::validation("weight", "step weights must be > 0"));
        }
        if !(self.pi0.is_finite() && self.pi0 > 0.0) {
            return Err(Error::validation("pi0", "must be finite and > 0"));
        }
        if self.iteration == 0 {
            return Err(Error::validation("iteration", "starts at 1"));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        self.pi0 / (self.iteration as f64).sqrt()
    }

    /// `sum_m lambda_m P_m + lambda_b P_b`.
    pub fn budget_term(&self, scenario: &Scenario) -> f64 {
        let up: f64 = self.lambda_m.iter().zip(&scenario.uue_budget).map(|(l, p)| l * p).sum();
        up + self.lambda_b * scenario.bs_budget
    }
}

/// How the dual evaluation picks its mapping from the payoff tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MappingRule {
    /// Iterative Hungarian with the given number of 2D re-solves.
    Iterative(usize),
    /// Global optimum; only for `M = N = K <= 8`.
    Exhaustive,
}

impl Default for MappingRule {
    fn default() -> Self {
        MappingRule::Iterative(DEFAULT_ITERATIONS)
    }
}

#[derive(Debug, Clone)]
pub struct DualEvaluation {
    pub value: f64,
    pub assignment: Assignment3D,
    pub powers: PowerAllocation,
    /// Priced payoff of every triple at this dual point.
    pub payoffs: RateTensor,
}

/// Dual function value with the heuristic mapping started from the default
/// initial mapping.
pub fn evaluate_dual(state: &DualState, scenario: &Scenario) -> Result<DualEvaluation> {
    evaluate_dual_with(state, scenario, MappingRule::default(), &[])
}

/// Dual function value. With [`MappingRule::Iterative`] the heuristic is run
/// from the default initial mapping and from each of `warm_starts`, keeping
/// the best result.
pub fn evaluate_dual_with(
    state: &DualState,
    scenario: &Scenario,
    rule: MappingRule,
    warm_starts: &[&Assignment3D],
) -> Result<DualEvaluation> {
    state.validate(scenario)?;
    let dims = scenario.dims();
    let (num_due, num_sub) = (dims.due, dims.sub);

    let inner: Vec<InnerSolution> = (0..dims.uue * num_due * num_sub)
        .into_par_iter()
        .map(|idx| {
            let (m, rest) = (idx / (num_due * num_sub), idx % (num_due * num_sub));
            let (n, k) = (rest / num_sub, rest % num_sub);
            solve_inner(&scenario.gains_unchecked(m, n, k), state.lambda_m[m], state.lambda_b)
        })
        .collect::<Result<_>>()?;
    let payoffs = RateTensor::new(dims, inner.iter().map(|s| s.objective).collect())?;

    let assignment = match rule {
        MappingRule::Exhaustive => exhaustive_3d(&payoffs)?.0,
        MappingRule::Iterative(iterations) => {
            let default_start = initial_assignment(dims);
            let mut starts: Vec<&Assignment3D> = vec![&default_start];
            for s in warm_starts {
                if !starts.contains(s) {
                    starts.push(s);
                }
            }
            let mut best: Option<(Assignment3D, f64)> = None;
            for start in starts {
                let a = iterative_hungarian_3d(&payoffs, start, iterations)?;
                let v = payoffs.objective(&a);
                if best.as_ref().is_none_or(|(_, bv)| v > *bv) {
                    best = Some((a, v));
                }
            }
            best.expect("default start always present").0
        }
    };

    let mut powers = PowerAllocation::new();
    for t in assignment.triples() {
        let s = &inner[(t.uue * num_due + t.due) * num_sub + t.sub];
        powers.insert(t, s.p_up, s.p_down)?;
    }
    let value = payoffs.objective(&assignment) + state.budget_term(scenario);
    Ok(DualEvaluation {
        value,
        assignment,
        powers,
        payoffs,
    })
}

/// Projected subgradient update of every multiplier, floored at
/// [`LAMBDA_FLOOR`].
pub fn subgradient_step(state: &DualState, powers: &PowerAllocation, scenario: &Scenario) -> DualState {
    let step = state.step_size();
    let used_down = powers.total_down();
    let used_up = powers.up_per_uue(scenario.num_uue);
    let lambda_b = (state.lambda_b - step * state.weight_b * (scenario.bs_budget - used_down)).max(LAMBDA_FLOOR);
    let lambda_m = (0..scenario.num_uue)
        .map(|m| {
            let delta = step * state.weight_m[m] * (scenario.uue_budget[m] - used_up[m]);
            (state.lambda_m[m] - delta).max(LAMBDA_FLOOR)
        })
        .collect();
    DualState {
        lambda_m,
        lambda_b,
        iteration: state.iteration + 1,
        ..state.clone()
    }
}

/// Scales each uplink user's powers by `min(1, P_m / used_m)` and all
/// downlink powers by `P_b / used_b`. Downlink power is scaled up as well as
/// down: downlink rates grow with it and uplink rates do not depend on it, so
/// spending the whole BS budget never lowers the sum rate.
pub fn recover_primal(powers: &PowerAllocation, scenario: &Scenario) -> PowerAllocation {
    let factor = |budget: f64, used: f64| if used > budget { budget / used } else { 1.0 };
    let uue_factor: Vec<f64> = powers
        .up_per_uue(scenario.num_uue)
        .iter()
        .zip(&scenario.uue_budget)
        .map(|(&used, &budget)| factor(budget, used))
        .collect();
    let used_down = powers.total_down();
    let down_factor = if used_down > 0.0 {
        scenario.bs_budget / used_down
    } else {
        1.0
    };
    let mut out = powers.clone();
    out.scale(&uue_factor, down_factor);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointConfig {
    pub max_iters: usize,
    /// Base step size; `None` picks the default from the initial multipliers.
    pub pi0: Option<f64>,
    /// Stop once `(dual - primal) / dual` falls below this.
    pub eps_gap: f64,
    pub mapping: MappingRule,
}

impl Default for JointConfig {
    fn default() -> Self {
        JointConfig {
            max_iters: 2000,
            pi0: None,
            eps_gap: 1e-3,
            mapping: MappingRule::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    /// Dual function value at this iteration's multipliers.
    pub dual_value: f64,
    /// Throughput of this iteration's rescaled primal point.
    pub primal_value: f64,
    pub best_primal: f64,
    pub best_dual: f64,
}

#[derive(Debug, Clone)]
pub struct JointSolution {
    pub assignment: Assignment3D,
    pub powers: PowerAllocation,
    pub primal_value: f64,
    pub dual_value: f64,
    /// `(dual_value - primal_value) / dual_value`.
    pub gap: f64,
    pub iterations_used: usize,
    pub converged: bool,
    pub final_state: DualState,
    pub history: Vec<IterationRecord>,
}

pub(crate) fn relative_gap(dual: f64, primal: f64) -> f64 {
    if dual > 0.0 {
        (dual - primal) / dual
    } else {
        0.0
    }
}

/// Subgradient minimisation of the dual with primal recovery at every
/// iteration; returns the best feasible point found.
pub fn solve_joint(scenario: &Scenario, config: &JointConfig) -> Result<JointSolution> {
    scenario.validate()?;
    if config.max_iters == 0 {
        return Err(Error::validation("max_iters", "must be at least 1"));
    }
    let mut state = DualState::initial(scenario, config.pi0)?;
    let mut history = Vec::with_capacity(config.max_iters.min(4096));

    let mut best_dual = f64::INFINITY;
    let mut best_dual_state = state.clone();
    let mut best_primal: Option<(f64, Assignment3D, PowerAllocation)> = None;
    let mut previous: Option<Assignment3D> = None;
    let mut converged = false;
    // (iteration of best dual, iteration of incumbent) and the rechecked bound
    let (mut dual_at, mut primal_at) = (0, 0);
    let mut confirmed: Option<((usize, usize), f64)> = None;

    // A heuristic mapping can under-report the dual function; re-evaluating at
    // the best multipliers from the incumbent mapping keeps the bound above the
    // incumbent's value.
    let confirm = |state: &DualState, incumbent: &Assignment3D, best_dual: f64| -> Result<f64> {
        if config.mapping == MappingRule::Exhaustive {
            return Ok(best_dual);
        }
        let recheck = evaluate_dual_with(state, scenario, config.mapping, &[incumbent])?;
        Ok(best_dual.max(recheck.value))
    };

    for l in 0..config.max_iters {
        let mut warm: Vec<&Assignment3D> = Vec::with_capacity(2);
        warm.extend(previous.as_ref());
        warm.extend(best_primal.as_ref().map(|b| &b.1));
        let eval = evaluate_dual_with(&state, scenario, config.mapping, &warm)?;

        let recovered = recover_primal(&eval.powers, scenario);
        let primal = total_throughput(&eval.assignment, &recovered, scenario)?;
        if best_primal.as_ref().is_none_or(|b| primal > b.0) {
            best_primal = Some((primal, eval.assignment.clone(), recovered));
            primal_at = l;
        }
        if eval.value < best_dual {
            best_dual = eval.value;
            best_dual_state = state.clone();
            dual_at = l;
        }
        let (best_primal_value, incumbent) = best_primal.as_ref().map(|b| (b.0, &b.1)).expect("set above");
        history.push(IterationRecord {
            dual_value: eval.value,
            primal_value: primal,
            best_primal: best_primal_value,
            best_dual,
        });

        state = subgradient_step(&state, &eval.powers, scenario);
        if relative_gap(best_dual, best_primal_value) < config.eps_gap {
            let bound = match confirmed {
                Some((key, bound)) if key == (dual_at, primal_at) => bound,
                _ => {
                    let bound = confirm(&best_dual_state, incumbent, best_dual)?;
                    confirmed = Some(((dual_at, primal_at), bound));
                    bound
                }
            };
            if relative_gap(bound, best_primal_value) < config.eps_gap {
                converged = true;
                break;
            }
        }
        previous = Some(eval.assignment);
    }

    let (primal_value, assignment, powers) = best_primal.expect("at least one iteration");
    let dual_value = match confirmed {
        Some((key, bound)) if key == (dual_at, primal_at) => bound,
        _ => confirm(&best_dual_state, &assignment, best_dual)?,
    };
    Ok(JointSolution {
        gap: relative_gap(dual_value, primal_value),
        assignment,
        powers,
        primal_value,
        dual_value,
        iterations_used: history.len(),
        converged,
        final_state: state,
        history,
    })
}
