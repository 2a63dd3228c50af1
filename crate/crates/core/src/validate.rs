//! Self-checks run by `impactlab validate`. Each check is recomputed from
//! scratch against an independent oracle and reports a single verdict.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agent::AgentConfig;
use crate::gridworlds::{EnvKind, EnvParams, GridWorld};
use crate::harness::train;
use crate::mdp::{all_transitions, two_vase_mdp, Mdp, StateId, TableMdp};
use crate::penalty::{deviation, stepwise_deviation, BaselineKind, Measure, PenaltyConfig, Summary, Tables};
use crate::reachability::{
    exact_au_values, exact_reachability, random_aux_rewards, similarity_reachability, AuValueTable, IndicatorDistance,
    ReachabilityTable, TOLERANCE,
};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn world(kind: EnvKind) -> GridWorld {
    GridWorld::builtin(kind, EnvParams::default()).expect("built-in layouts are valid")
}

/// Relative reachability values on the two-vase MDP, against their closed
/// forms.
pub fn two_vase_values() -> Check {
    let m = two_vase_mdp();
    let rr = |x: usize, b: usize, gamma: f64| {
        let cfg = PenaltyConfig { measure: Measure::Rr, gamma_r: gamma, ..PenaltyConfig::default() };
        let t = Tables::Reach(exact_reachability(&m, gamma).expect("tiny MDP converges"));
        deviation(StateId(x), StateId(b), &cfg, &t)
    };
    let mut failures = Vec::new();
    if rr(1, 2, 1.0) != 0.25 {
        failures.push(format!("RR(s2;s3) = {} (want 1/4)", rr(1, 2, 1.0)));
    }
    if rr(1, 0, 1.0) != 0.5 {
        failures.push(format!("RR(s2;s1) = {} (want 1/2)", rr(1, 0, 1.0)));
    }
    for g in [0.5, 0.9, 0.99] {
        let got = rr(1, 0, g);
        let want = (1.0 + g) / 4.0;
        if (got - want).abs() > 1e-12 {
            failures.push(format!("gamma_r {g}: RR(s2;s1) = {got} (want {want})"));
        }
    }
    let ok = failures.is_empty();
    let detail = if ok { "1/4, 1/2 and (1+g)/4 for g in 0.5, 0.9, 0.99".to_string() } else { failures.join("; ") };
    Check::new("two-vase relative reachability", ok, detail)
}

/// Max-entry distance between discounted (0.9999) and undiscounted
/// reachability on the two-vase MDP.
pub fn discounted_limit() -> Check {
    let m = two_vase_mdp();
    let a = exact_reachability(&m, 0.9999).expect("converges");
    let b = exact_reachability(&m, 1.0).expect("converges");
    let mut worst: f64 = 0.0;
    for x in 0..m.num_states() {
        for y in 0..m.num_states() {
            worst = worst.max((a.get(StateId(x), StateId(y)) - b.get(StateId(x), StateId(y))).abs());
        }
    }
    Check::new("discounted limit", worst <= 5e-4, format!("max |R_0.9999 - R_1| = {worst:.3e} (bound 5e-4)"))
}

/// Similarity-based reachability with the indicator distance against plain
/// reachability, over every (x, y) pair.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IndicatorReport {
    pub pairs: usize,
    pub mismatches: usize,
    /// Pairs whose target can be held (a self-loop or a terminal state).
    pub holdable_pairs: usize,
    pub holdable_mismatches: usize,
    pub max_error: f64,
}

/// Targets the agent can stay in once reached.
pub fn holdable(mdp: &dyn Mdp, y: StateId) -> bool {
    mdp.is_terminal(y) || (0..mdp.num_actions()).any(|a| mdp.transition(y, a).0 == y)
}

pub fn indicator_similarity(mdp: &dyn Mdp, gamma: f64) -> IndicatorReport {
    const EXACT: f64 = 1e-12;
    let reach = exact_reachability(mdp, gamma).expect("reachability converges");
    let n = mdp.num_states();
    let mut rep = IndicatorReport::default();
    for y in (0..n).map(StateId) {
        let hold = holdable(mdp, y);
        for x in (0..n).map(StateId) {
            let err = (similarity_reachability(mdp, &IndicatorDistance, gamma, x, y) - reach.get(x, y)).abs();
            rep.pairs += 1;
            rep.holdable_pairs += usize::from(hold);
            if err > EXACT {
                rep.mismatches += 1;
                rep.holdable_mismatches += usize::from(hold);
            }
            rep.max_error = rep.max_error.max(err);
        }
    }
    rep
}

/// The indicator equivalence over holdable targets, where it is a theorem;
/// transient targets are counted in the detail.
pub fn indicator_equivalence(label: &str, mdp: &dyn Mdp) -> Check {
    let r = indicator_similarity(mdp, 0.99);
    Check::new(
        format!("indicator similarity {label}"),
        r.holdable_mismatches == 0,
        format!(
            "{}/{} holdable pairs differ; {}/{} pairs overall (transient targets)",
            r.holdable_mismatches, r.holdable_pairs, r.mismatches, r.pairs
        ),
    )
}

/// Online tables after observing every transition, against the exact ones.
pub fn oracle_equivalence(kind: EnvKind) -> Check {
    let w = world(kind);
    let n = w.num_states();
    let edges = all_transitions(&w);
    let mut worst_reach: f64 = 0.0;
    for g in [0.99, 1.0] {
        let mut online = ReachabilityTable::new(n, g);
        for &t in &edges {
            online.observe(t);
        }
        let exact = exact_reachability(&w, g).expect("reachability converges");
        for x in 0..n {
            for (a, b) in online.row(StateId(x)).iter().zip(exact.row(StateId(x))) {
                worst_reach = worst_reach.max((a - b).abs());
            }
        }
    }
    let extra = random_aux_rewards(n, 8, 0);
    let mut online = AuValueTable::new(n, &extra, 0.99);
    for &t in &edges {
        online.observe(t);
    }
    let exact = exact_au_values(&w, &extra, 0.99);
    let mut worst_au: f64 = 0.0;
    for x in (0..n).map(StateId) {
        for (a, b) in online.values(x).iter().zip(exact.values(x)) {
            worst_au = worst_au.max((a - b).abs());
        }
    }
    Check::new(
        format!("oracle equivalence {kind}"),
        worst_reach <= TOLERANCE && worst_au <= TOLERANCE,
        format!("{n} states; max error reachability {worst_reach:.1e}, attainable utility {worst_au:.1e}"),
    )
}

/// `n` states, three actions (action 0 is the no-op), `terminals` random
/// terminal states.
pub fn random_mdp(rng: &mut impl Rng, n: usize, terminals: usize) -> TableMdp {
    let next: Vec<Vec<usize>> = (0..n).map(|_| (0..3).map(|_| rng.gen_range(0..n)).collect()).collect();
    let mut terminal = vec![false; n];
    for _ in 0..terminals {
        terminal[rng.gen_range(1..n)] = true;
    }
    TableMdp::new(next, vec![vec![0.0; 3]; n], terminal, 0, 0, 0.9, 20).expect("random table is valid")
}

/// Deviations are non-negative and vanish at the baseline, over random
/// states and configurations of the built-in environments.
pub fn nonnegativity(samples: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let worlds: Vec<(GridWorld, [Tables; 3])> = EnvKind::ALL
        .iter()
        .map(|&k| {
            let w = world(k);
            let extra = random_aux_rewards(w.num_states(), 8, 0);
            let tables = [
                Tables::Reach(exact_reachability(&w, 0.99).expect("converges")),
                Tables::Reach(exact_reachability(&w, 1.0).expect("converges")),
                Tables::Au(exact_au_values(&w, &extra, 0.99)),
            ];
            (w, tables)
        })
        .collect();
    let mut failures = 0;
    let mut first = String::new();
    for _ in 0..samples {
        let (w, tables) = &worlds[rng.gen_range(0..worlds.len())];
        let measure = [Measure::Ur, Measure::Rr, Measure::Au][rng.gen_range(0..3)];
        let discounted = measure == Measure::Au || rng.gen_bool(0.5);
        let cfg = PenaltyConfig {
            baseline: BaselineKind::ALL[rng.gen_range(0..3)],
            measure,
            gamma_r: if discounted { 0.99 } else { 1.0 },
            summary: if rng.gen_bool(0.5) { Summary::Truncation } else { Summary::Absolute },
            ..PenaltyConfig::default()
        };
        let t = match (measure, discounted) {
            (Measure::Au, _) => &tables[2],
            (_, true) => &tables[0],
            (_, false) => &tables[1],
        };
        let n = w.num_states();
        let s = StateId(rng.gen_range(0..n));
        let b = StateId(rng.gen_range(0..n));
        let d = deviation(s, b, &cfg, t);
        let ds = stepwise_deviation(w, s, b, &cfg, t);
        let ok = d >= 0.0
            && ds >= 0.0
            && deviation(s, s, &cfg, t) == 0.0
            && stepwise_deviation(w, s, s, &cfg, t).abs() < 1e-12
            && (measure != Measure::Ur || d <= 1.0);
        if !ok {
            failures += 1;
            if first.is_empty() {
                first = format!(" (first: {} {} s={s} b={b} d={d} stepwise={ds})", w.kind(), cfg.variant_label());
            }
        }
    }
    Check::new(
        "deviation non-negativity",
        failures == 0,
        format!("{failures} of {samples} samples violate d >= 0 or d(s; s) = 0{first}"),
    )
}

/// No observation ever lowers a table entry.
pub fn monotonicity(sequences: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut observations = 0;
    for _ in 0..sequences {
        let m = random_mdp(&mut rng, 10, 2);
        let n = m.num_states();
        let mut edges = all_transitions(&m);
        let repeats = edges.clone();
        edges.extend(repeats.choose_multiple(&mut rng, repeats.len() / 2).copied());
        edges.shuffle(&mut rng);
        let gamma = [0.5, 0.9, 0.99, 1.0][rng.gen_range(0..4)];
        let mut reach = ReachabilityTable::new(n, gamma);
        let extra = random_aux_rewards(n, 3, rng.gen());
        let mut au = AuValueTable::new(n, &extra, gamma.min(0.99));
        for t in edges {
            let before_r: Vec<f64> = (0..n).flat_map(|x| reach.row(StateId(x)).to_vec()).collect();
            let before_a: Vec<f64> = (0..n).flat_map(|x| au.values(StateId(x))).collect();
            reach.observe(t);
            au.observe(t);
            let after_r: Vec<f64> = (0..n).flat_map(|x| reach.row(StateId(x)).to_vec()).collect();
            let after_a: Vec<f64> = (0..n).flat_map(|x| au.values(StateId(x))).collect();
            observations += 1;
            let dropped = before_r.iter().zip(&after_r).any(|(a, b)| b < a)
                || before_a.iter().zip(&after_a).any(|(a, b)| b < a);
            violations += usize::from(dropped);
        }
    }
    Check::new(
        "table monotonicity",
        violations == 0,
        format!("{violations} of {observations} observations lowered an entry"),
    )
}

/// `(1 - g) sum_{k <= K} g^k (...)` evaluated term by term.
fn truncated_stepwise(m: &dyn Mdp, s: StateId, b: StateId, cfg: &PenaltyConfig, r: &ReachabilityTable, terms: usize) -> f64 {
    let n = m.num_states();
    let (mut x, mut y) = (s, b);
    let mut w = 1.0 - cfg.gamma;
    let mut ur = 0.0;
    let mut cur = vec![0.0; n];
    let mut base = vec![0.0; n];
    for _ in 0..=terms {
        ur += w * r.get(x, y);
        for z in 0..n {
            cur[z] += w * r.get(x, StateId(z));
            base[z] += w * r.get(y, StateId(z));
        }
        x = m.inaction_step(x);
        y = m.inaction_step(y);
        w *= cfg.gamma;
    }
    match cfg.measure {
        Measure::Ur => 1.0 - ur,
        _ => {
            let f = |d: f64| match cfg.summary {
                Summary::Truncation => d.max(0.0),
                Summary::Absolute => d.abs(),
            };
            base.iter().zip(&cur).map(|(bv, cv)| f(bv - cv)).sum::<f64>() / n as f64
        }
    }
}

/// Rollout-based stepwise deviation against a 200-term truncated sum. The
/// rollout discount is 0.9 so the neglected tail stays below 1e-9.
pub fn stepwise_brute_force(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let m = random_mdp(&mut rng, 7, 1);
        let cfg = PenaltyConfig {
            measure: if rng.gen_bool(0.5) { Measure::Ur } else { Measure::Rr },
            summary: if rng.gen_bool(0.5) { Summary::Truncation } else { Summary::Absolute },
            gamma_r: [0.9, 0.99, 1.0][rng.gen_range(0..3)],
            gamma: 0.9,
            ..PenaltyConfig::default()
        };
        let reach = exact_reachability(&m, cfg.gamma_r).expect("converges");
        let s = StateId(rng.gen_range(0..7));
        let b = StateId(rng.gen_range(0..7));
        let fast = stepwise_deviation(&m, s, b, &cfg, &Tables::Reach(reach.clone()));
        let slow = truncated_stepwise(&m, s, b, &cfg, &reach, 200);
        worst = worst.max((fast - slow).abs());
    }
    Check::new(
        "stepwise rollout vs truncated sum",
        worst <= 1e-8,
        format!("max error {worst:.1e} over {cases} cases (bound 1e-8)"),
    )
}

/// A random DAG on `n` states: every edge points to a higher index and the
/// last state is terminal, so no state can be visited twice.
pub fn random_dag(rng: &mut impl Rng, n: usize) -> TableMdp {
    let mut terminal = vec![false; n];
    terminal[n - 1] = true;
    let next: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            if s == n - 1 {
                vec![s; 3]
            } else {
                (0..3).map(|_| rng.gen_range(s + 1..n)).collect()
            }
        })
        .collect();
    TableMdp::new(next, vec![vec![0.0; 3]; n], terminal, 0, 0, 0.99, n).expect("dag table is valid")
}

/// `max gamma^t` over paths from `x` first hitting `y` at step `t`, by
/// enumerating every action sequence.
fn path_reachability(m: &dyn Mdp, x: StateId, y: StateId, gamma: f64) -> f64 {
    if x == y {
        return 1.0;
    }
    if m.is_terminal(x) {
        return 0.0;
    }
    (0..m.num_actions())
        .map(|a| gamma * path_reachability(m, m.transition(x, a).0, y, gamma))
        .fold(0.0, f64::max)
}

/// On an acyclic MDP, attainable utility over the indicator rewards with
/// the truncation summary equals relative reachability.
pub fn au_rr_bridge(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = random_dag(&mut rng, 8);
    let gamma = 0.99;
    let n = m.num_states();
    let au = exact_au_values(&m, &[], gamma);
    let reach = exact_reachability(&m, gamma).expect("converges");
    let mut worst: f64 = 0.0;
    for x in (0..n).map(StateId) {
        for y in (0..n).map(StateId) {
            let brute = path_reachability(&m, x, y, gamma);
            worst = worst.max((au.value(y.0, x) - brute).abs());
            worst = worst.max((reach.get(x, y) - brute).abs());
        }
    }
    let rr_cfg = PenaltyConfig { measure: Measure::Rr, gamma_r: gamma, ..PenaltyConfig::default() };
    let au_cfg = PenaltyConfig { measure: Measure::Au, gamma_r: gamma, aux_random: 0, ..PenaltyConfig::default() };
    let reach = Tables::Reach(reach);
    let au = Tables::Au(au);
    for s in (0..n).map(StateId) {
        for b in (0..n).map(StateId) {
            worst = worst.max((deviation(s, b, &rr_cfg, &reach) - deviation(s, b, &au_cfg, &au)).abs());
        }
    }
    Check::new(
        "attainable utility / relative reachability bridge",
        worst <= 1e-9,
        format!("8-state DAG, max error {worst:.1e} (bound 1e-9)"),
    )
}

/// Two trainings with the same seed produce byte-identical traces, also
/// when one of them runs on a worker thread.
pub fn replay_determinism() -> Check {
    let w = world(EnvKind::Vase);
    let cfg = PenaltyConfig { baseline: BaselineKind::Inaction, measure: Measure::Rr, ..PenaltyConfig::default() };
    let agent = AgentConfig { anneal_episodes: 200, hold_episodes: 50, ..AgentConfig::desk() };
    let run = || train(&w, &cfg, &agent, 3.0, 1).map(|(r, _)| r.trace());
    let a = run();
    let b = std::thread::scope(|scope| scope.spawn(run).join().expect("worker thread"));
    let ok = matches!((&a, &b), (Ok(x), Ok(y)) if x == y);
    let detail = match &a {
        Ok(t) => format!("{} trace bytes, {}", t.len(), if ok { "identical" } else { "differ" }),
        Err(e) => format!("training failed: {e}"),
    };
    Check::new("replay determinism", ok, detail)
}

/// Every check, in a fixed order.
pub fn run_all() -> Vec<Check> {
    let mut out = vec![two_vase_values(), discounted_limit(), indicator_equivalence("two-vase", &two_vase_mdp())];
    for k in EnvKind::ALL {
        out.push(indicator_equivalence(k.name(), &world(k)));
    }
    for k in EnvKind::ALL {
        out.push(oracle_equivalence(k));
    }
    out.push(nonnegativity(10_000, 0));
    out.push(monotonicity(50, 1));
    out.push(stepwise_brute_force(2_000, 2));
    out.push(au_rr_bridge(3));
    out.push(replay_determinism());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_checks_pass() {
        for c in [two_vase_values(), discounted_limit(), au_rr_bridge(0), stepwise_brute_force(200, 0)] {
            assert!(c.passed, "{c}");
        }
    }

    #[test]
    fn holdable_targets_match() {
        let r = indicator_similarity(&two_vase_mdp(), 0.9);
        assert_eq!(r.pairs, 16);
        assert_eq!(r.mismatches, 0);
        // a target on a two-cycle cannot be held
        let m = TableMdp::new(vec![vec![1], vec![0]], vec![vec![0.0]; 2], vec![false; 2], 0, 0, 0.9, 5).unwrap();
        let r = indicator_similarity(&m, 0.9);
        assert_eq!((r.holdable_pairs, r.mismatches), (0, 4));
    }

    #[test]
    fn dag_has_no_revisits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_dag(&mut rng, 8);
        for t in all_transitions(&m) {
            assert!(t.to.0 > t.from.0);
        }
    }
}
