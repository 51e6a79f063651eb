//! Graph precomputation and value iteration over an explicit MDP.

use std::collections::VecDeque;

use crate::mdp::Mdp;
use crate::num::to_f64;
use crate::normalize::TICK;

/// Float copy of the transition structure with predecessor lists.
pub(crate) struct Model {
    pub probs: Vec<Vec<Vec<(usize, f64)>>>,
    pub tick: Vec<Vec<bool>>,
    /// For each state, the (state, action) pairs that can reach it.
    preds: Vec<Vec<(usize, usize)>>,
}

impl Model {
    pub fn new(mdp: &Mdp) -> Model {
        let n = mdp.states.len();
        let mut preds = vec![Vec::new(); n];
        let probs: Vec<Vec<Vec<(usize, f64)>>> = mdp
            .actions
            .iter()
            .map(|acts| acts.iter().map(|a| a.dist.iter().map(|(t, p)| (*t, to_f64(p))).collect()).collect())
            .collect();
        for (s, acts) in probs.iter().enumerate() {
            for (a, d) in acts.iter().enumerate() {
                for (t, _) in d {
                    if preds[*t].last() != Some(&(s, a)) {
                        preds[*t].push((s, a));
                    }
                }
            }
        }
        let tick = mdp.actions.iter().map(|acts| acts.iter().map(|a| a.label == TICK).collect()).collect();
        Model { probs, tick, preds }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    /// States that reach `target` with positive probability under some
    /// scheduler, never passing through `blocked`.
    fn backward(&self, target: &[bool], blocked: &[bool]) -> Vec<bool> {
        let mut seen = target.to_vec();
        let mut queue: VecDeque<usize> = (0..self.len()).filter(|s| target[*s]).collect();
        while let Some(t) = queue.pop_front() {
            for (s, _) in &self.preds[t] {
                if !seen[*s] && !blocked[*s] {
                    seen[*s] = true;
                    queue.push_back(*s);
                }
            }
        }
        seen
    }

    /// States with maximal reachability probability zero.
    pub fn prob0a(&self, goal: &[bool]) -> Vec<bool> {
        let none = vec![false; self.len()];
        self.backward(goal, &none).into_iter().map(|r| !r).collect()
    }

    /// States with minimal reachability probability zero: some scheduler
    /// avoids the goal surely.
    pub fn prob0e(&self, goal: &[bool]) -> Vec<bool> {
        // least fixpoint of: goal, or every action can hit the set
        let n = self.len();
        let mut inside = goal.to_vec();
        let mut hit: Vec<Vec<bool>> = self.probs.iter().map(|a| vec![false; a.len()]).collect();
        let mut count = vec![0usize; n];
        let mut queue: VecDeque<usize> = (0..n).filter(|s| goal[*s]).collect();
        while let Some(t) = queue.pop_front() {
            for (s, a) in &self.preds[t] {
                if inside[*s] || hit[*s][*a] {
                    continue;
                }
                hit[*s][*a] = true;
                count[*s] += 1;
                if count[*s] == self.probs[*s].len() {
                    inside[*s] = true;
                    queue.push_back(*s);
                }
            }
        }
        inside.into_iter().map(|r| !r).collect()
    }

    /// States with maximal reachability probability one.
    pub fn prob1e(&self, goal: &[bool]) -> Vec<bool> {
        let n = self.len();
        let mut keep = vec![true; n];
        loop {
            let mut reach = goal.to_vec();
            let mut queue: VecDeque<usize> = (0..n).filter(|s| goal[*s]).collect();
            while let Some(t) = queue.pop_front() {
                for (s, a) in &self.preds[t] {
                    if reach[*s] || !keep[*s] {
                        continue;
                    }
                    if self.probs[*s][*a].iter().all(|(u, _)| keep[*u]) {
                        reach[*s] = true;
                        queue.push_back(*s);
                    }
                }
            }
            if reach == keep {
                return keep;
            }
            keep = reach;
        }
    }

    /// States with minimal reachability probability one.
    pub fn prob1a(&self, goal: &[bool]) -> Vec<bool> {
        let bad = self.backward(&self.prob0e(goal), goal);
        bad.into_iter().map(|b| !b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Solve {
    pub iterations: u64,
    pub residual: f64,
}

/// Gauss-Seidel iteration of `x(s) = opt_a step(s, a, x)` for states
/// without a fixed value, until the largest change is below `tol`.
pub(crate) fn iterate(
    model: &Model,
    x: &mut [f64],
    fixed: &[bool],
    maximize: bool,
    tol: f64,
    max_iter: u64,
    allowed: &dyn Fn(usize, usize) -> bool,
    step: &dyn Fn(usize, usize, &[f64]) -> f64,
) -> Solve {
    let mut it = 0;
    let mut residual = 0.0;
    while it < max_iter {
        it += 1;
        residual = 0.0f64;
        for s in 0..model.len() {
            if fixed[s] {
                continue;
            }
            let mut best: Option<f64> = None;
            for a in 0..model.probs[s].len() {
                if !allowed(s, a) {
                    continue;
                }
                let v = step(s, a, x);
                best = Some(match best {
                    None => v,
                    Some(b) if maximize => b.max(v),
                    Some(b) => b.min(v),
                });
            }
            let v = best.unwrap_or(x[s]);
            residual = residual.max((v - x[s]).abs());
            x[s] = v;
        }
        if residual < tol {
            break;
        }
    }
    Solve { iterations: it, residual }
}

pub(crate) fn expect(d: &[(usize, f64)], x: &[f64]) -> f64 {
    d.iter().map(|(t, p)| p * x[*t]).sum()
}
