//! Monte Carlo estimation under the uniform scheduler.
//!
//! Runs of states with a single action and a single successor are
//! collapsed into one jump, so long deterministic tick chains cost one step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chart::{Query, QueryKind};
use crate::mdp::Mdp;
use crate::normalize::FExpr;
use crate::num::to_f64;

use super::engine::Model;
use super::{tick_budget, CheckError, CheckOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
    /// Steps after which a run is cut off and the estimate flagged.
    pub max_steps: u64,
    pub strict_bounds: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { samples: 100_000, seed: 0, max_steps: 100_000, strict_bounds: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// 95% confidence interval.
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: u64,
    /// Runs cut off before they were decided; the estimate is unreliable
    /// when non-zero.
    pub truncated: u64,
}

#[derive(Clone, Copy)]
enum Jump {
    /// Not deterministic or already a goal.
    Branch,
    To { end: usize, ticks: u64, reward: f64 },
    /// Deterministic cycle that never reaches a goal or a branch.
    Trap,
}

pub fn monte_carlo(mdp: &Mdp, q: &Query, goal: &FExpr, options: &McOptions) -> Result<McEstimate, CheckError> {
    if options.samples < 100 {
        return Err(CheckError::TooFewSamples(options.samples));
    }
    let reward = match &q.kind {
        QueryKind::Prob => None,
        QueryKind::Reward(name) => {
            if q.time_bound.is_some() {
                return Err(CheckError::BoundedReward);
            }
            Some(mdp.reward(name).ok_or_else(|| CheckError::UnknownReward(name.clone()))?)
        }
    };
    let budget = match &q.time_bound {
        None => None,
        Some(b) => {
            let check = CheckOptions { strict_bounds: options.strict_bounds, ..CheckOptions::default() };
            Some(tick_budget(mdp, b, &check)?.1)
        }
    };
    let model = Model::new(mdp);
    let goal = mdp.satisfying(goal);
    let hopeless = model.prob0a(&goal);
    let cost = |s: usize, a: usize| reward.map_or(0.0, |r| to_f64(&r.state[s]) + to_f64(&r.action[s][a]));
    let jumps = compress(&model, &goal, &cost);
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let (mut sum, mut sum_sq, mut truncated) = (0.0f64, 0.0f64, 0u64);
    for _ in 0..options.samples {
        let mut s = mdp.initial;
        let mut ticks = 0u64;
        let mut acc = 0.0;
        let mut steps = 0u64;
        let value = loop {
            if let Some(b) = budget {
                match b {
                    Some(b) if ticks <= b => {}
                    _ => break 0.0,
                }
            }
            if goal[s] {
                break if reward.is_some() { acc } else { 1.0 };
            }
            if hopeless[s] || steps >= options.max_steps {
                if reward.is_some() || steps >= options.max_steps {
                    truncated += 1;
                }
                break if reward.is_some() { acc } else { 0.0 };
            }
            steps += 1;
            match jumps[s] {
                Jump::To { end, ticks: t, reward: r } => {
                    ticks += t;
                    acc += r;
                    s = end;
                }
                Jump::Trap if reward.is_some() => {
                    truncated += 1;
                    break acc;
                }
                Jump::Trap => break 0.0,
                Jump::Branch => {
                    let a = rng.gen_range(0..model.probs[s].len());
                    acc += cost(s, a);
                    if model.tick[s][a] {
                        ticks += 1;
                    }
                    s = sample(&model.probs[s][a], rng.gen::<f64>());
                }
            }
        };
        sum += value;
        sum_sq += value * value;
    }
    let k = options.samples as f64;
    let mean = sum / k;
    let var = ((sum_sq - k * mean * mean) / (k - 1.0)).max(0.0);
    let std_err = (var / k).sqrt();
    Ok(McEstimate {
        mean,
        std_err,
        ci_low: mean - 1.96 * std_err,
        ci_high: mean + 1.96 * std_err,
        samples: options.samples,
        truncated,
    })
}

fn sample(dist: &[(usize, f64)], u: f64) -> usize {
    let mut acc = 0.0;
    for (t, p) in dist {
        acc += p;
        if u < acc {
            return *t;
        }
    }
    dist.last().map(|(t, _)| *t).expect("non-empty distribution")
}

fn compress(model: &Model, goal: &[bool], cost: &dyn Fn(usize, usize) -> f64) -> Vec<Jump> {
    let n = model.len();
    let det = |s: usize| !goal[s] && model.probs[s].len() == 1 && model.probs[s][0].len() == 1;
    let mut out: Vec<Option<Jump>> = (0..n).map(|s| if det(s) { None } else { Some(Jump::Branch) }).collect();
    let mut on_path = vec![false; n];
    for start in 0..n {
        if out[start].is_some() {
            continue;
        }
        let mut path = Vec::new();
        let mut s = start;
        // walk until a decided state, a branch, or a cycle
        let tail = loop {
            if let Some(j) = out[s] {
                break match j {
                    Jump::Branch => Some((s, 0, 0.0)),
                    Jump::To { end, ticks, reward } => Some((end, ticks, reward)),
                    Jump::Trap => None,
                };
            }
            if on_path[s] {
                break None;
            }
            on_path[s] = true;
            path.push(s);
            s = model.probs[s][0][0].0;
        };
        match tail {
            None => path.iter().for_each(|p| out[*p] = Some(Jump::Trap)),
            Some((end, mut ticks, mut reward)) => {
                for p in path.iter().rev() {
                    ticks += model.tick[*p][0] as u64;
                    reward += cost(*p, 0);
                    out[*p] = Some(Jump::To { end, ticks, reward });
                }
            }
        }
        path.iter().for_each(|p| on_path[*p] = false);
    }
    out.into_iter().map(|j| j.expect("every state decided")).collect()
}
