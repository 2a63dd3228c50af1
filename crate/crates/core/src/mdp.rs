//! Deterministic episodic MDPs over an enumerated, integer-indexed state space.
//!
//! Every environment in this crate is deterministic and small enough to
//! enumerate eagerly, so states are addressed by a dense [`StateId`] and the
//! tables in [`crate::reachability`] can be plain `|S| x |S|` matrices.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical index of a state in an environment's enumeration.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub type Action = usize;

/// `(s_t, a_t, s_{t+1})`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transition {
    pub from: StateId,
    pub action: Action,
    pub to: StateId,
}

/// A finite deterministic MDP with a designated noop action.
///
/// Implementations must make [`Mdp::transition`] a pure function of its
/// arguments, and every returned state must be inside `0..num_states()`.
pub trait Mdp: Send + Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn noop(&self) -> Action;
    fn initial_state(&self) -> StateId;
    fn is_terminal(&self, s: StateId) -> bool;
    /// Raw dynamics for a non-terminal state. Callers outside the crate
    /// should prefer [`Mdp::step`], which checks the contract.
    fn transition(&self, s: StateId, a: Action) -> (StateId, f64);
    /// MDP discount used by the agent and by inaction rollouts.
    fn discount(&self) -> f64;
    /// Hard episode length.
    fn horizon(&self) -> usize;

    fn step(&self, s: StateId, a: Action) -> Result<(StateId, f64)> {
        if a >= self.num_actions() {
            return Err(Error::InvalidAction {
                action: a,
                num_actions: self.num_actions(),
            });
        }
        if self.is_terminal(s) {
            return Err(Error::TerminalStep(s));
        }
        Ok(self.transition(s, a))
    }

    /// State reached by the noop action; terminal states are absorbing.
    fn inaction_step(&self, s: StateId) -> StateId {
        if self.is_terminal(s) {
            s
        } else {
            self.transition(s, self.noop()).0
        }
    }

    fn successors(&self, s: StateId) -> Vec<StateId> {
        if self.is_terminal(s) {
            return Vec::new();
        }
        (0..self.num_actions()).map(|a| self.transition(s, a).0).collect()
    }

    fn state_label(&self, s: StateId) -> String {
        s.to_string()
    }
}

/// Every `(s, a, s')` with `s` non-terminal, in `(s, a)` order.
pub fn all_transitions(mdp: &dyn Mdp) -> Vec<Transition> {
    let mut out = Vec::new();
    for s in 0..mdp.num_states() {
        let s = StateId(s);
        if mdp.is_terminal(s) {
            continue;
        }
        for a in 0..mdp.num_actions() {
            out.push(Transition {
                from: s,
                action: a,
                to: mdp.transition(s, a).0,
            });
        }
    }
    out
}

/// Explicit transition table. Used directly for small hand-built MDPs and
/// as the compiled form of every gridworld.
#[derive(Clone, Debug)]
pub struct TableMdp {
    num_states: usize,
    num_actions: usize,
    noop: Action,
    initial: StateId,
    next: Vec<StateId>,
    reward: Vec<f64>,
    terminal: Vec<bool>,
    discount: f64,
    horizon: usize,
}

impl TableMdp {
    /// `next[s][a]` and `reward[s][a]`; rows for terminal states are ignored.
    pub fn new(
        next: Vec<Vec<usize>>,
        reward: Vec<Vec<f64>>,
        terminal: Vec<bool>,
        noop: Action,
        initial: usize,
        discount: f64,
        horizon: usize,
    ) -> Result<Self> {
        let num_states = next.len();
        let num_actions = next.first().map_or(0, Vec::len);
        if num_states == 0 || num_actions == 0 {
            return Err(Error::config("mdp", "empty state or action set"));
        }
        if reward.len() != num_states || terminal.len() != num_states {
            return Err(Error::config("mdp", "table dimensions disagree"));
        }
        if noop >= num_actions || initial >= num_states {
            return Err(Error::config("mdp", "noop or initial state out of range"));
        }
        let mut flat_next = Vec::with_capacity(num_states * num_actions);
        let mut flat_reward = Vec::with_capacity(num_states * num_actions);
        for (row, rew) in next.iter().zip(&reward) {
            if row.len() != num_actions || rew.len() != num_actions {
                return Err(Error::config("mdp", "ragged transition table"));
            }
            for &z in row {
                if z >= num_states {
                    return Err(Error::config("mdp", format!("successor {z} out of range")));
                }
                flat_next.push(StateId(z));
            }
            flat_reward.extend_from_slice(rew);
        }
        Ok(Self {
            num_states,
            num_actions,
            noop,
            initial: StateId(initial),
            next: flat_next,
            reward: flat_reward,
            terminal,
            discount,
            horizon,
        })
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }
}

impl Mdp for TableMdp {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn noop(&self) -> Action {
        self.noop
    }
    fn initial_state(&self) -> StateId {
        self.initial
    }
    fn is_terminal(&self, s: StateId) -> bool {
        self.terminal[s.0]
    }
    #[inline]
    fn transition(&self, s: StateId, a: Action) -> (StateId, f64) {
        let k = s.0 * self.num_actions + a;
        (self.next[k], self.reward[k])
    }
    fn discount(&self) -> f64 {
        self.discount
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
}

/// The four-state vase-breaking MDP: `s1` = nothing broken, `s2` = vase 1
/// broken, `s3` = vase 2 broken, `s4` = both broken. Actions are
/// `[noop, break 1, break 2]`; breaking an already broken vase is a noop.
/// Returned ids are `s_k -> StateId(k - 1)`.
pub fn two_vase_mdp() -> TableMdp {
    let next = vec![
        vec![0, 1, 2], // s1
        vec![1, 1, 3], // s2
        vec![2, 3, 2], // s3
        vec![3, 3, 3], // s4
    ];
    let reward = vec![vec![0.0; 3]; 4];
    TableMdp::new(next, reward, vec![false; 4], 0, 0, 0.99, 20).expect("static table is valid")
}

/// An eventually periodic sequence `prefix ++ cycle ++ cycle ++ ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lasso<T> {
    pub prefix: Vec<T>,
    pub cycle: Vec<T>,
}

impl<T: Copy + Eq + Hash> Lasso<T> {
    /// Iterates `f` from `start` until the first repeated element.
    pub fn trace(start: T, mut f: impl FnMut(T) -> T, cap: usize) -> Option<Self> {
        let mut seen: HashMap<T, usize> = HashMap::new();
        let mut seq = Vec::new();
        let mut cur = start;
        loop {
            if let Some(&first) = seen.get(&cur) {
                let cycle = seq.split_off(first);
                return Some(Lasso { prefix: seq, cycle });
            }
            if seq.len() >= cap {
                return None;
            }
            seen.insert(cur, seq.len());
            seq.push(cur);
            cur = f(cur);
        }
    }

    /// `(element, weight)` pairs such that `sum weight * v(element)` equals
    /// `(1 - gamma) * sum_k gamma^k v(z_k)` over the infinite sequence. For
    /// `gamma == 1` the weights are the Cesaro limit (uniform over the cycle).
    pub fn discounted_weights(&self, gamma: f64) -> Vec<(T, f64)> {
        let mut out = Vec::with_capacity(self.prefix.len() + self.cycle.len());
        if gamma >= 1.0 {
            let w = 1.0 / self.cycle.len() as f64;
            out.extend(self.cycle.iter().map(|&z| (z, w)));
            return out;
        }
        let mut g = 1.0;
        for &z in &self.prefix {
            out.push((z, (1.0 - gamma) * g));
            g *= gamma;
        }
        let period = self.cycle.len() as i32;
        let scale = g / (1.0 - gamma.powi(period));
        let mut h = 1.0;
        for &z in &self.cycle {
            out.push((z, (1.0 - gamma) * scale * h));
            h *= gamma;
        }
        out
    }
}

/// Result of following the noop policy for a fixed number of steps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InactionRollout {
    /// `[s, I(s), ..., I^horizon(s)]`.
    pub states: Vec<StateId>,
    /// Index of the first state with `I(x) = x`, if reached within the horizon.
    pub fixed_point: Option<usize>,
    /// `(start, period)` of the first cycle of length > 1 entered within the horizon.
    pub cycle: Option<(usize, usize)>,
}

pub fn rollout_inaction(mdp: &dyn Mdp, s: StateId, horizon: usize) -> InactionRollout {
    let mut states = Vec::with_capacity(horizon + 1);
    let mut first_seen: HashMap<StateId, usize> = HashMap::new();
    let mut fixed_point = None;
    let mut cycle = None;
    let mut cur = s;
    for k in 0..=horizon {
        states.push(cur);
        if fixed_point.is_none() && cycle.is_none() {
            if let Some(&j) = first_seen.get(&cur) {
                cycle = Some((j, k - j));
            } else {
                first_seen.insert(cur, k);
            }
        }
        let next = mdp.inaction_step(cur);
        if fixed_point.is_none() && cycle.is_none() && next == cur {
            fixed_point = Some(k);
        }
        cur = next;
    }
    InactionRollout {
        states,
        fixed_point,
        cycle,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn static_grid() -> TableMdp {
        // 2x2 grid, actions [noop, right, down]
        let next = vec![vec![0, 1, 2], vec![1, 1, 3], vec![2, 3, 2], vec![3, 3, 3]];
        TableMdp::new(next, vec![vec![0.0; 3]; 4], vec![false; 4], 0, 0, 0.9, 10).unwrap()
    }

    #[test]
    fn inaction_is_identity_in_static_env() {
        let m = static_grid();
        for s in 0..4 {
            assert_eq!(m.inaction_step(StateId(s)), StateId(s));
        }
        let r = rollout_inaction(&m, StateId(2), 3);
        assert_eq!(r.states, vec![StateId(2); 4]);
        assert_eq!(r.fixed_point, Some(0));
    }

    #[test]
    fn horizon_zero_rollout() {
        let m = static_grid();
        let r = rollout_inaction(&m, StateId(1), 0);
        assert_eq!(r.states, vec![StateId(1)]);
    }

    #[test]
    fn rollout_reports_cycles() {
        // noop cycles 0 -> 1 -> 2 -> 1
        let next = vec![vec![1], vec![2], vec![1]];
        let m = TableMdp::new(next, vec![vec![0.0]; 3], vec![false; 3], 0, 0, 0.9, 5).unwrap();
        let r = rollout_inaction(&m, StateId(0), 5);
        assert_eq!(r.fixed_point, None);
        assert_eq!(r.cycle, Some((1, 2)));
    }

    #[test]
    fn stepping_terminal_is_rejected() {
        let next = vec![vec![1, 1], vec![1, 1]];
        let m = TableMdp::new(next, vec![vec![0.0; 2]; 2], vec![false, true], 0, 0, 0.9, 5).unwrap();
        assert!(matches!(m.step(StateId(1), 0), Err(Error::TerminalStep(_))));
        assert!(matches!(m.step(StateId(0), 7), Err(Error::InvalidAction { .. })));
        assert_eq!(m.inaction_step(StateId(1)), StateId(1));
    }

    #[test]
    fn lasso_weights_sum_to_one() {
        let l = Lasso {
            prefix: vec![0, 1, 2],
            cycle: vec![3, 4],
        };
        for g in [0.0, 0.3, 0.9, 0.99, 1.0] {
            let total: f64 = l.discounted_weights(g).iter().map(|(_, w)| w).sum();
            assert!((total - 1.0).abs() < 1e-12, "gamma {g}: {total}");
        }
    }

    #[test]
    fn lasso_trace_finds_cycle() {
        let l = Lasso::trace(0u32, |x| if x < 3 { x + 1 } else { 2 }, 100).unwrap();
        assert_eq!(l.prefix, vec![0, 1]);
        assert_eq!(l.cycle, vec![2, 3]);
    }

    #[test]
    fn two_vase_structure() {
        let m = two_vase_mdp();
        assert_eq!(m.transition(StateId(0), 1).0, StateId(1));
        assert_eq!(m.transition(StateId(0), 2).0, StateId(2));
        assert_eq!(m.transition(StateId(1), 2).0, StateId(3));
        assert_eq!(m.transition(StateId(2), 1).0, StateId(3));
        assert_eq!(m.inaction_step(StateId(3)), StateId(3));
    }
}
