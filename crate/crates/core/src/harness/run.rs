use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, QTable};
use crate::error::Result;
use crate::gridworlds::{GridWorld, ACTION_NAMES};
use crate::mdp::{Mdp, Transition};
use crate::penalty::{shaped_reward, BaselineContext, ImpactPenalty, PenaltyConfig};

/// Summary of one training episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub epsilon: f64,
    pub steps: usize,
    pub task_return: f64,
    pub penalty: f64,
    pub performance: f64,
    pub scaled: f64,
    pub actions: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub beta: f64,
    pub episodes: Vec<EpisodeRecord>,
    /// Mean scaled performance over the evaluation window.
    pub final_perf: f64,
}

impl CellResult {
    pub fn curve(&self) -> Vec<f64> {
        self.episodes.iter().map(|e| e.scaled).collect()
    }

    /// Deterministic text rendering of every episode, used for replay checks.
    pub fn trace(&self) -> String {
        let mut out = String::from("episode,epsilon,steps,task_return,penalty,performance,scaled,actions\n");
        for e in &self.episodes {
            let actions: Vec<&str> = e.actions.iter().map(|&a| ACTION_NAMES[a as usize]).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                e.episode,
                e.epsilon,
                e.steps,
                e.task_return,
                e.penalty,
                e.performance,
                e.scaled,
                actions.join(" ")
            );
        }
        out
    }
}

/// Number of final episodes averaged into the headline metric.
pub fn eval_window(agent: &AgentConfig) -> usize {
    agent.hold_episodes.clamp(1, 100)
}

/// Trains one agent from scratch. Fully determined by its arguments.
pub fn run_cell(
    world: &GridWorld,
    penalty: &PenaltyConfig,
    agent: &AgentConfig,
    beta: f64,
    seed: u64,
) -> Result<CellResult> {
    Ok(train(world, penalty, agent, beta, seed)?.0)
}

/// As [`run_cell`], also returning the learned Q table.
pub fn train(
    world: &GridWorld,
    penalty: &PenaltyConfig,
    agent: &AgentConfig,
    beta: f64,
    seed: u64,
) -> Result<(CellResult, QTable)> {
    agent.validate()?;
    let cfg = PenaltyConfig { beta, ..*penalty };
    let mut imp = ImpactPenalty::new(cfg, world.num_states())?;
    let mut q = QTable::new(world.num_states(), world.num_actions(), agent.alpha, agent.gamma);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schedule = agent.schedule();
    let horizon = world.horizon();
    let mut episodes = Vec::with_capacity(agent.episodes());
    let mut path: Vec<Transition> = Vec::with_capacity(horizon);

    for episode in 0..agent.episodes() {
        let epsilon = schedule.epsilon(episode);
        let s0 = world.initial_state();
        let mut s = s0;
        let mut ctx = BaselineContext::new(s0);
        let mut task_return = 0.0;
        let mut total_penalty = 0.0;
        let mut actions = Vec::with_capacity(horizon);
        path.clear();
        for _ in 0..horizon {
            let a = q.select_action(s, epsilon, &mut rng);
            let (z, r) = world.transition(s, a);
            let t = Transition { from: s, action: a, to: z };
            imp.observe(t);
            ctx.advance(world, z);
            let d = if beta > 0.0 { imp.penalty(world, &ctx) } else { 0.0 };
            let terminal = world.is_terminal(z);
            q.update(s, a, shaped_reward(r, d, beta), z, terminal);
            task_return += r;
            total_penalty += d;
            actions.push(a as u8);
            path.push(t);
            s = z;
            if terminal {
                break;
            }
        }
        let performance = world.performance(&path);
        episodes.push(EpisodeRecord {
            episode,
            epsilon,
            steps: path.len(),
            task_return,
            penalty: total_penalty,
            performance,
            scaled: world.scaled(performance),
            actions,
        });
    }

    let window = eval_window(agent).min(episodes.len());
    let tail = &episodes[episodes.len() - window..];
    let final_perf = tail.iter().map(|e| e.scaled).sum::<f64>() / window as f64;
    Ok((
        CellResult {
            seed,
            beta,
            episodes,
            final_perf,
        },
        q,
    ))
}
