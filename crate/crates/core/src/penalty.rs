//! Impact penalties: a baseline state, a deviation measure between the
//! current state and that baseline, and the shaped reward `r - beta * d`.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Lasso, Mdp, StateId, Transition};
use crate::reachability::{random_aux_rewards, AuValueTable, ReachabilityTable};

macro_rules! named_enum {
    ($ty:ident { $($var:ident => $name:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($ty::$var),+];

            pub fn name(self) -> &'static str {
                match self { $($ty::$var => $name),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($name $(| $alias)* => Ok($ty::$var),)+
                    _ => {
                        let names: Vec<&str> = $ty::ALL.iter().map(|v| v.name()).collect();
                        Err(Error::config(
                            stringify!($ty).to_ascii_lowercase(),
                            format!("`{s}` is not one of: {}", names.join(", ")),
                        ))
                    }
                }
            }
        }
    };
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Starting,
    Inaction,
    Stepwise,
}

named_enum!(BaselineKind {
    Starting => "starting" | "start",
    Inaction => "inaction",
    Stepwise => "stepwise",
});

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    None,
    Ur,
    Rr,
    Au,
}

named_enum!(Measure {
    None => "none",
    Ur => "ur" | "unreachability",
    Rr => "rr" | "relative-reachability",
    Au => "au" | "attainable-utility",
});

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Summary {
    Truncation,
    Absolute,
}

named_enum!(Summary {
    Truncation => "truncation" | "truncated",
    Absolute => "absolute",
});

impl Summary {
    #[inline]
    pub fn apply(self, diff: f64) -> f64 {
        match self {
            Summary::Truncation => diff.max(0.0),
            Summary::Absolute => diff.abs(),
        }
    }
}

/// Discount used for reachability and auxiliary values when `discounted`.
pub const DISCOUNTED_GAMMA_R: f64 = 0.99;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub baseline: BaselineKind,
    pub measure: Measure,
    /// Reachability / auxiliary value discount.
    pub gamma_r: f64,
    /// Discount for inaction rollouts under the stepwise baseline.
    pub gamma: f64,
    pub summary: Summary,
    pub beta: f64,
    /// Number of random auxiliary reward functions added to the indicator
    /// rewards for attainable utility.
    pub aux_random: usize,
    pub aux_seed: u64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            baseline: BaselineKind::Inaction,
            measure: Measure::Rr,
            gamma_r: DISCOUNTED_GAMMA_R,
            gamma: 0.99,
            summary: Summary::Truncation,
            beta: 1.0,
            aux_random: 8,
            aux_seed: 0,
        }
    }
}

impl PenaltyConfig {
    pub fn none() -> Self {
        PenaltyConfig {
            measure: Measure::None,
            beta: 0.0,
            ..Default::default()
        }
    }

    pub fn discounted(&self) -> bool {
        self.gamma_r < 1.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", format!("must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.gamma_r > 0.0 && self.gamma_r <= 1.0) {
            return Err(Error::config("gamma_r", format!("must be in (0, 1], got {}", self.gamma_r)));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma", format!("must be in (0, 1], got {}", self.gamma)));
        }
        if self.measure == Measure::Au && self.gamma_r >= 1.0 {
            return Err(Error::InvalidCombo(
                "attainable utility requires a discounted value function (gamma_r < 1)".into(),
            ));
        }
        Ok(())
    }

    /// Short label such as `rr-d-trunc` used in reports.
    pub fn variant_label(&self) -> String {
        match self.measure {
            Measure::None => "none".into(),
            Measure::Ur => format!("ur-{}", if self.discounted() { "d" } else { "u" }),
            m => format!(
                "{m}-{}-{}",
                if self.discounted() { "d" } else { "u" },
                match self.summary {
                    Summary::Truncation => "trunc",
                    Summary::Absolute => "abs",
                }
            ),
        }
    }
}

/// Per-episode state needed to name the baseline state at each step.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct BaselineContext {
    pub start: StateId,
    /// `I^t(s_0)`.
    pub inaction: StateId,
    /// `s_{t-1}`; equal to `s_0` before the first step.
    pub previous: StateId,
    pub current: StateId,
    pub t: usize,
}

impl BaselineContext {
    pub fn new(start: StateId) -> Self {
        BaselineContext {
            start,
            inaction: start,
            previous: start,
            current: start,
            t: 0,
        }
    }

    /// Record that the agent moved to `next`.
    pub fn advance(&mut self, mdp: &dyn Mdp, next: StateId) {
        self.previous = self.current;
        self.current = next;
        self.inaction = mdp.inaction_step(self.inaction);
        self.t += 1;
    }

    /// `s'_t` for the current step. Stepwise at `t = 0` is `I(s_0)`.
    pub fn baseline(&self, mdp: &dyn Mdp, kind: BaselineKind) -> StateId {
        match kind {
            BaselineKind::Starting => self.start,
            BaselineKind::Inaction => self.inaction,
            BaselineKind::Stepwise => mdp.inaction_step(self.previous),
        }
    }
}

/// Whichever value table the measure needs.
#[derive(Clone, Debug)]
pub enum Tables {
    None,
    Reach(ReachabilityTable),
    Au(AuValueTable),
}

impl Tables {
    /// Empty online tables for `cfg` over `n` states.
    pub fn online(cfg: &PenaltyConfig, n: usize) -> Self {
        match cfg.measure {
            Measure::None => Tables::None,
            Measure::Ur | Measure::Rr => Tables::Reach(ReachabilityTable::new(n, cfg.gamma_r)),
            Measure::Au => {
                let extra = random_aux_rewards(n, cfg.aux_random, cfg.aux_seed);
                Tables::Au(AuValueTable::new(n, &extra, cfg.gamma_r))
            }
        }
    }

    pub fn observe(&mut self, t: Transition) -> bool {
        match self {
            Tables::None => false,
            Tables::Reach(r) => r.observe(t),
            Tables::Au(a) => a.observe(t),
        }
    }
}

/// `d(s; s_b)` for the plain (non-rollout) comparison.
pub fn deviation(s: StateId, s_b: StateId, cfg: &PenaltyConfig, tables: &Tables) -> f64 {
    if s == s_b {
        return 0.0;
    }
    match (cfg.measure, tables) {
        (Measure::None, _) => 0.0,
        (Measure::Ur, Tables::Reach(r)) => 1.0 - r.get(s, s_b),
        (Measure::Rr, Tables::Reach(r)) => summarize(r.row(s_b), r.row(s), cfg.summary),
        (Measure::Au, Tables::Au(a)) => summarize(&a.values(s_b), &a.values(s), cfg.summary),
        (m, _) => panic!("tables do not match measure {m}"),
    }
}

/// `mean_i f(base_i - cur_i)`.
fn summarize(base: &[f64], cur: &[f64], f: Summary) -> f64 {
    if base.is_empty() {
        return 0.0;
    }
    let total: f64 = base.iter().zip(cur).map(|(b, c)| f.apply(b - c)).sum();
    total / base.len() as f64
}

/// Rollout-based comparison for the stepwise baseline: both states are
/// followed under inaction and the per-step comparisons are summed with
/// weights `(1 - gamma) gamma^k`, closing the periodic tail analytically.
pub fn stepwise_deviation(
    mdp: &dyn Mdp,
    s: StateId,
    s_b: StateId,
    cfg: &PenaltyConfig,
    tables: &Tables,
) -> f64 {
    let cap = mdp.num_states() * mdp.num_states() + 1;
    let step = |x: StateId| mdp.inaction_step(x);
    match (cfg.measure, tables) {
        (Measure::None, _) => 0.0,
        (Measure::Ur, Tables::Reach(r)) => {
            let lasso = Lasso::trace((s, s_b), |(a, b)| (step(a), step(b)), cap)
                .expect("joint inaction rollout closes within |S|^2 steps");
            let sum: f64 = lasso
                .discounted_weights(cfg.gamma)
                .into_iter()
                .map(|((a, b), w)| w * r.get(a, b))
                .sum();
            (1.0 - sum).max(0.0)
        }
        (Measure::Rr, Tables::Reach(r)) => {
            let cur = rollout_values(mdp, s, cfg.gamma, r.num_states(), |x| Cow::Borrowed(r.row(x)));
            let base = rollout_values(mdp, s_b, cfg.gamma, r.num_states(), |x| Cow::Borrowed(r.row(x)));
            summarize(&base, &cur, cfg.summary)
        }
        (Measure::Au, Tables::Au(a)) => {
            let cur = rollout_values(mdp, s, cfg.gamma, a.num_rewards(), |x| Cow::Owned(a.values(x)));
            let base = rollout_values(mdp, s_b, cfg.gamma, a.num_rewards(), |x| Cow::Owned(a.values(x)));
            summarize(&base, &cur, cfg.summary)
        }
        (m, _) => panic!("tables do not match measure {m}"),
    }
}

/// `RV(s) = (1 - gamma) sum_k gamma^k V(I^k s)` for a vector-valued `V`.
fn rollout_values<'a>(
    mdp: &dyn Mdp,
    s: StateId,
    gamma: f64,
    width: usize,
    values: impl Fn(StateId) -> Cow<'a, [f64]>,
) -> Vec<f64> {
    let mut out = vec![0.0; width];
    let lasso = Lasso::trace(s, |x| mdp.inaction_step(x), mdp.num_states() + 1)
        .expect("inaction rollout closes within |S| steps");
    for (x, w) in lasso.discounted_weights(gamma) {
        for (o, v) in out.iter_mut().zip(values(x).iter()) {
            *o += w * v;
        }
    }
    out
}

#[inline]
pub fn shaped_reward(r_task: f64, dev: f64, beta: f64) -> f64 {
    r_task - beta * dev
}

/// Online tables plus their configuration: everything an agent needs to
/// turn a transition into a penalty.
#[derive(Clone, Debug)]
pub struct ImpactPenalty {
    pub cfg: PenaltyConfig,
    pub tables: Tables,
}

impl ImpactPenalty {
    pub fn new(cfg: PenaltyConfig, num_states: usize) -> Result<Self> {
        cfg.validate()?;
        Ok(ImpactPenalty {
            tables: Tables::online(&cfg, num_states),
            cfg,
        })
    }

    pub fn observe(&mut self, t: Transition) {
        self.tables.observe(t);
    }

    /// `d(s_{t+1}; s'_{t+1})` given the context after advancing to `s_{t+1}`.
    ///
    /// Entering a terminal state is not penalised: the episode is over, and
    /// the collapse of its reachability to a single absorbing state says
    /// nothing about side effects.
    pub fn penalty(&self, mdp: &dyn Mdp, ctx: &BaselineContext) -> f64 {
        if self.cfg.measure == Measure::None || mdp.is_terminal(ctx.current) {
            return 0.0;
        }
        let b = ctx.baseline(mdp, self.cfg.baseline);
        match self.cfg.baseline {
            BaselineKind::Stepwise => stepwise_deviation(mdp, ctx.current, b, &self.cfg, &self.tables),
            _ => deviation(ctx.current, b, &self.cfg, &self.tables),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworlds::{EnvKind, EnvParams, GridWorld, DOWN, NOOP, UP};
    use crate::mdp::{two_vase_mdp, TableMdp};
    use crate::reachability::{exact_au_values, exact_reachability};
    use proptest::prelude::*;

    fn rr(gamma_r: f64, summary: Summary) -> PenaltyConfig {
        PenaltyConfig {
            measure: Measure::Rr,
            gamma_r,
            summary,
            ..Default::default()
        }
    }

    #[test]
    fn two_vase_relative_reachability() {
        let m = two_vase_mdp();
        let cfg = rr(1.0, Summary::Truncation);
        let t = Tables::Reach(exact_reachability(&m, 1.0).unwrap());
        assert_eq!(deviation(StateId(1), StateId(2), &cfg, &t), 0.25);
        assert_eq!(deviation(StateId(1), StateId(0), &cfg, &t), 0.5);
        for g in [0.5, 0.9, 0.99] {
            let cfg = rr(g, Summary::Truncation);
            let t = Tables::Reach(exact_reachability(&m, g).unwrap());
            let d = deviation(StateId(1), StateId(0), &cfg, &t);
            assert!((d - (1.0 + g) / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shaped_reward_arithmetic() {
        assert_eq!(shaped_reward(7.0, 0.3, 0.0), 7.0);
        assert_eq!(shaped_reward(50.0, 0.25, 100.0), 25.0);
    }

    #[test]
    fn names_parse_and_reject() {
        for b in BaselineKind::ALL {
            assert_eq!(b.name().parse::<BaselineKind>().unwrap(), *b);
        }
        assert_eq!("RR".parse::<Measure>().unwrap(), Measure::Rr);
        let err = "fancy".parse::<Measure>().unwrap_err().to_string();
        assert!(err.contains("none, ur, rr, au"), "{err}");
    }

    #[test]
    fn undiscounted_au_is_rejected() {
        let cfg = PenaltyConfig {
            measure: Measure::Au,
            gamma_r: 1.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidCombo(_))));
        let neg = PenaltyConfig { beta: -1.0, ..Default::default() };
        assert!(neg.validate().is_err());
    }

    #[test]
    fn static_env_baselines_stay_at_start() {
        let m = TableMdp::new(vec![vec![0, 1], vec![1, 0]], vec![vec![0.0; 2]; 2], vec![false; 2], 0, 0, 0.9, 10).unwrap();
        let mut ctx = BaselineContext::new(StateId(0));
        for _ in 0..5 {
            ctx.advance(&m, StateId(0));
            for kind in BaselineKind::ALL {
                assert_eq!(ctx.baseline(&m, *kind), StateId(0));
            }
        }
    }

    fn vase() -> GridWorld {
        GridWorld::builtin(EnvKind::Vase, EnvParams::default()).unwrap()
    }

    #[test]
    fn vase_inaction_baseline_breaks_the_vase() {
        let w = vase();
        let mut ctx = BaselineContext::new(w.initial_state());
        for _ in 0..4 {
            ctx.advance(&w, w.initial_state());
        }
        let b = w.state(ctx.baseline(&w, BaselineKind::Inaction));
        assert_eq!(b.object, crate::gridworlds::ObjectState::Consumed);
    }

    #[test]
    fn vase_stepwise_baseline_after_rescue() {
        let w = vase();
        let s0 = w.initial_state();
        let (s1, _) = w.step(s0, NOOP).unwrap();
        let (s2, _) = w.step(s1, DOWN).unwrap();
        let mut ctx = BaselineContext::new(s0);
        ctx.advance(&w, s1);
        ctx.advance(&w, s2);
        let b = ctx.baseline(&w, BaselineKind::Stepwise);
        assert_eq!(b, w.inaction_step(s1));
        assert_ne!(w.state(b).object, w.state(s2).object);
    }

    #[test]
    fn rescuing_the_vase_is_free_when_undiscounted_and_truncated() {
        // hold the vase on the belt until the counterfactual one has broken,
        // then step off it and push it off the belt
        let w = vase();
        let mut ctx = BaselineContext::new(w.initial_state());
        let mut s = w.initial_state();
        for a in [DOWN, NOOP, NOOP, UP, DOWN] {
            s = w.step(s, a).unwrap().0;
            ctx.advance(&w, s);
        }
        assert_eq!(w.state(s).object, crate::gridworlds::ObjectState::At(crate::gridworlds::Pos::new(3, 3)));
        let b = ctx.baseline(&w, BaselineKind::Inaction);
        let t = Tables::Reach(exact_reachability(&w, 1.0).unwrap());
        assert_eq!(deviation(s, b, &rr(1.0, Summary::Truncation), &t), 0.0);
        assert!(deviation(s, b, &rr(1.0, Summary::Absolute), &t) > 0.0);
    }

    #[test]
    fn stepwise_rollout_sees_delayed_breakage() {
        // agent at its start, vase about to ride off the belt; compare with
        // a state where the vase sits safely off the belt
        let w = vase();
        let s0 = w.initial_state();
        let (s1, _) = w.step(s0, NOOP).unwrap();
        let (rescued, _) = w.step(s1, DOWN).unwrap();
        let doomed = w.inaction_step(s1);
        let cfg = PenaltyConfig {
            measure: Measure::Au,
            baseline: BaselineKind::Stepwise,
            summary: Summary::Truncation,
            ..Default::default()
        };
        let rewards = random_aux_rewards(w.num_states(), 8, 0);
        let t = Tables::Au(exact_au_values(&w, &rewards, cfg.gamma_r));
        assert!(w.state(doomed).object != crate::gridworlds::ObjectState::Consumed);
        assert!(stepwise_deviation(&w, doomed, rescued, &cfg, &t) > 0.0);
    }

    #[test]
    fn stepwise_equals_plain_in_static_env() {
        let m = TableMdp::new(
            vec![vec![0, 1, 2], vec![1, 2, 0], vec![2, 2, 2]],
            vec![vec![0.0; 3]; 3],
            vec![false; 3],
            0,
            0,
            0.9,
            10,
        )
        .unwrap();
        let t = Tables::Reach(exact_reachability(&m, 0.9).unwrap());
        for measure in [Measure::Ur, Measure::Rr] {
            let cfg = PenaltyConfig { measure, gamma_r: 0.9, ..Default::default() };
            for (a, b) in [(0, 1), (1, 2), (2, 0)] {
                let plain = deviation(StateId(a), StateId(b), &cfg, &t);
                let step = stepwise_deviation(&m, StateId(a), StateId(b), &cfg, &t);
                assert!((plain - step).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn tiny_gamma_reduces_to_immediate_comparison() {
        let m = two_vase_mdp();
        let t = Tables::Reach(exact_reachability(&m, 0.9).unwrap());
        let cfg = PenaltyConfig { measure: Measure::Rr, gamma_r: 0.9, gamma: 1e-9, ..Default::default() };
        let d = stepwise_deviation(&m, StateId(1), StateId(0), &cfg, &t);
        assert!((d - deviation(StateId(1), StateId(0), &cfg, &t)).abs() < 1e-8);
    }

    /// Direct sum of the first 200 rollout terms.
    fn brute_stepwise(m: &dyn Mdp, s: StateId, b: StateId, cfg: &PenaltyConfig, t: &Tables) -> f64 {
        let Tables::Reach(r) = t else { unreachable!() };
        let n = m.num_states();
        let (mut x, mut y) = (s, b);
        let mut w = 1.0 - cfg.gamma;
        let mut ur = 0.0;
        let mut rv_s = vec![0.0; n];
        let mut rv_b = vec![0.0; n];
        for _ in 0..=200 {
            ur += w * r.get(x, y);
            for z in 0..n {
                rv_s[z] += w * r.get(x, StateId(z));
                rv_b[z] += w * r.get(y, StateId(z));
            }
            x = m.inaction_step(x);
            y = m.inaction_step(y);
            w *= cfg.gamma;
        }
        match cfg.measure {
            Measure::Ur => 1.0 - ur,
            _ => summarize(&rv_b, &rv_s, cfg.summary),
        }
    }

    fn arb_mdp(n: usize) -> impl Strategy<Value = TableMdp> {
        proptest::collection::vec(proptest::collection::vec(0..n, 3), n).prop_map(move |next| {
            TableMdp::new(next, vec![vec![0.0; 3]; n], vec![false; n], 0, 0, 0.9, 20).unwrap()
        })
    }

    proptest! {
        #[test]
        fn stepwise_matches_truncated_sum(
            m in arb_mdp(6),
            s in 0..6usize,
            b in 0..6usize,
            measure in prop_oneof![Just(Measure::Ur), Just(Measure::Rr)],
            summary in prop_oneof![Just(Summary::Truncation), Just(Summary::Absolute)],
        ) {
            let cfg = PenaltyConfig { measure, summary, gamma_r: 0.95, gamma: 0.9, ..Default::default() };
            let t = Tables::Reach(exact_reachability(&m, cfg.gamma_r).unwrap());
            let fast = stepwise_deviation(&m, StateId(s), StateId(b), &cfg, &t);
            let slow = brute_stepwise(&m, StateId(s), StateId(b), &cfg, &t);
            prop_assert!((fast - slow).abs() < 1e-8, "{} vs {}", fast, slow);
        }

        #[test]
        fn deviations_are_nonnegative_and_zero_at_baseline(
            m in arb_mdp(6),
            s in 0..6usize,
            b in 0..6usize,
            measure in prop_oneof![Just(Measure::Ur), Just(Measure::Rr), Just(Measure::Au)],
            summary in prop_oneof![Just(Summary::Truncation), Just(Summary::Absolute)],
        ) {
            let cfg = PenaltyConfig { measure, summary, gamma_r: 0.9, gamma: 0.9, aux_random: 2, ..Default::default() };
            let t = match measure {
                Measure::Au => Tables::Au(exact_au_values(&m, &random_aux_rewards(6, 2, 1), 0.9)),
                _ => Tables::Reach(exact_reachability(&m, 0.9).unwrap()),
            };
            let d = deviation(StateId(s), StateId(b), &cfg, &t);
            prop_assert!(d >= 0.0);
            if measure == Measure::Ur { prop_assert!(d <= 1.0); }
            prop_assert_eq!(deviation(StateId(s), StateId(s), &cfg, &t), 0.0);
            prop_assert!(stepwise_deviation(&m, StateId(s), StateId(b), &cfg, &t) >= 0.0);
            prop_assert!(stepwise_deviation(&m, StateId(s), StateId(s), &cfg, &t).abs() < 1e-12);
        }
    }
}
