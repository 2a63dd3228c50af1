//! Tabular Q-learning with linearly annealed epsilon-greedy exploration.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, StateId};

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub anneal_episodes: usize,
    pub hold_episodes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::desk()
    }
}

impl AgentConfig {
    /// 2000 episodes.
    pub fn desk() -> Self {
        AgentConfig {
            alpha: 0.1,
            gamma: 0.99,
            anneal_episodes: 1800,
            hold_episodes: 200,
        }
    }

    /// 10000 episodes.
    pub fn full() -> Self {
        AgentConfig {
            anneal_episodes: 9000,
            hold_episodes: 1000,
            ..AgentConfig::desk()
        }
    }

    pub fn episodes(&self) -> usize {
        self.anneal_episodes + self.hold_episodes
    }

    pub fn schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            anneal_episodes: self.anneal_episodes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::config("alpha", format!("must be in (0, 1], got {}", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", format!("must be in [0, 1], got {}", self.gamma)));
        }
        if self.episodes() == 0 {
            return Err(Error::config("anneal_episodes", "need at least one episode"));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct EpsilonSchedule {
    pub anneal_episodes: usize,
}

impl EpsilonSchedule {
    pub fn epsilon(&self, episode: usize) -> f64 {
        if self.anneal_episodes == 0 {
            return 0.0;
        }
        (1.0 - episode as f64 / self.anneal_episodes as f64).max(0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_actions: usize,
    q: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize, alpha: f64, gamma: f64) -> Self {
        QTable {
            num_actions,
            q: vec![0.0; num_states * num_actions],
            alpha,
            gamma,
        }
    }

    pub fn num_states(&self) -> usize {
        self.q.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    #[inline]
    pub fn row(&self, s: StateId) -> &[f64] {
        &self.q[s.0 * self.num_actions..(s.0 + 1) * self.num_actions]
    }

    pub fn get(&self, s: StateId, a: Action) -> f64 {
        self.q[s.0 * self.num_actions + a]
    }

    pub fn set(&mut self, s: StateId, a: Action, v: f64) {
        self.q[s.0 * self.num_actions + a] = v;
    }

    /// First action with the highest value.
    pub fn greedy(&self, s: StateId) -> Action {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    pub fn max_value(&self, s: StateId) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Epsilon-greedy. Always consumes one uniform draw, plus one more for
    /// the random action when exploring, so the stream position depends
    /// only on the number of steps taken and exploration outcomes.
    pub fn select_action(&self, s: StateId, epsilon: f64, rng: &mut impl Rng) -> Action {
        let u: f64 = rng.gen();
        if u < epsilon {
            rng.gen_range(0..self.num_actions)
        } else {
            self.greedy(s)
        }
    }

    /// One Q-learning backup; `terminal` drops the bootstrap term.
    pub fn update(&mut self, s: StateId, a: Action, reward: f64, next: StateId, terminal: bool) {
        let bootstrap = if terminal { 0.0 } else { self.gamma * self.max_value(next) };
        let i = s.0 * self.num_actions + a;
        self.q[i] += self.alpha * (reward + bootstrap - self.q[i]);
    }

    /// One row per state: `state q_0 q_1 ...`.
    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "states {} actions {}", self.num_states(), self.num_actions)?;
        for s in 0..self.num_states() {
            let row: Vec<String> = self.row(StateId(s)).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{s} {}", row.join(" "))?;
        }
        Ok(())
    }
}
