//! State reachability and attainable-utility value tables.
//!
//! `R(x; y)` is the optimal value of reaching `y` from `x` with reward 1 on
//! arrival and discount `gamma_r`; in a deterministic environment it equals
//! `gamma_r^d(x, y)` for shortest path length `d`, or 0 if `y` is
//! unreachable. Tables come in two flavours: exact ones computed from the full
//! transition graph (used as oracles) and online ones that only know the
//! transitions an agent has experienced.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mdp::{Mdp, StateId, Transition};

/// Convergence tolerance for every value computation in this module.
pub const TOLERANCE: f64 = 1e-9;

/// Dense `|S| x |S|` reachability matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachabilityTable {
    n: usize,
    gamma: f64,
    r: Vec<f64>,
    succ: Vec<Vec<u32>>,
}

impl ReachabilityTable {
    /// Identity table: every state reaches only itself.
    pub fn new(n: usize, gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma <= 1.0, "gamma_r must be in (0, 1]");
        let mut r = vec![0.0; n * n];
        for i in 0..n {
            r[i * n + i] = 1.0;
        }
        ReachabilityTable {
            n,
            gamma,
            r,
            succ: vec![Vec::new(); n],
        }
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    #[inline]
    pub fn get(&self, x: StateId, y: StateId) -> f64 {
        self.r[x.0 * self.n + y.0]
    }

    #[inline]
    pub fn row(&self, x: StateId) -> &[f64] {
        &self.r[x.0 * self.n..(x.0 + 1) * self.n]
    }

    /// Shortest-path update for one experienced transition. Returns whether
    /// any entry changed.
    ///
    /// The table is kept transitively closed over the edges seen so far, so
    /// composing through the new edge once is enough and repeated edges are
    /// skipped outright.
    pub fn observe(&mut self, t: Transition) -> bool {
        let (u, v) = (t.from.0, t.to.0);
        if u == v || self.succ[u].contains(&(v as u32)) {
            return false;
        }
        self.succ[u].push(v as u32);
        let n = self.n;
        let via: Vec<f64> = self.r[v * n..(v + 1) * n].iter().map(|&x| x * self.gamma).collect();
        let mut changed = false;
        for x in 0..n {
            let rxu = self.r[x * n + u];
            if rxu == 0.0 {
                continue;
            }
            let row = &mut self.r[x * n..(x + 1) * n];
            for (dst, &w) in row.iter_mut().zip(&via) {
                let cand = rxu * w;
                if cand > *dst {
                    *dst = cand;
                    changed = true;
                }
            }
        }
        changed
    }

    /// Row-major text dump: a header of state ids, then one row per state.
    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "gamma_r {} states {}", self.gamma, self.n)?;
        let header: Vec<String> = (0..self.n).map(|i| i.to_string()).collect();
        writeln!(out, "x\\y {}", header.join(" "))?;
        for x in 0..self.n {
            let row: Vec<String> = self.row(StateId(x)).iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{x} {}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text(input: impl BufRead) -> Result<Self> {
        let bad = |msg: &str| Error::config("matrix", msg.to_string());
        let mut lines = input.lines();
        let mut next_line = || -> Result<String> {
            lines
                .next()
                .ok_or_else(|| bad("unexpected end of file"))?
                .map_err(|e| Error::io("<matrix>", e))
        };
        let first = next_line()?;
        let parts: Vec<&str> = first.split_whitespace().collect();
        let (gamma, n) = match parts.as_slice() {
            ["gamma_r", g, "states", n] => (
                g.parse::<f64>().map_err(|_| bad("bad gamma"))?,
                n.parse::<usize>().map_err(|_| bad("bad state count"))?,
            ),
            _ => return Err(bad("missing header")),
        };
        next_line()?;
        let mut table = ReachabilityTable::new(n, gamma);
        for x in 0..n {
            let line = next_line()?;
            let mut it = line.split_whitespace();
            if it.next() != Some(x.to_string().as_str()) {
                return Err(bad("rows out of order"));
            }
            let vals: Vec<f64> = it
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad entry")))
                .collect::<Result<_>>()?;
            if vals.len() != n {
                return Err(bad("row has the wrong length"));
            }
            table.r[x * n..(x + 1) * n].copy_from_slice(&vals);
        }
        Ok(table)
    }
}

/// Fixed point of `R(x; y) = gamma_r * max_a R(T(x, a); y)`, `R(y; y) = 1`,
/// by value iteration. Terminal states reach only themselves.
pub fn exact_reachability(mdp: &dyn Mdp, gamma: f64) -> Result<ReachabilityTable> {
    let n = mdp.num_states();
    let succ: Vec<Vec<usize>> = (0..n)
        .map(|s| mdp.successors(StateId(s)).into_iter().map(|z| z.0).collect())
        .collect();
    let mut table = ReachabilityTable::new(n, gamma);
    let cap = 10 * n * mdp.horizon().max(1);
    let mut next = table.r.clone();
    for _ in 0..cap {
        let mut delta: f64 = 0.0;
        for x in 0..n {
            for y in 0..n {
                let v = if x == y {
                    1.0
                } else {
                    succ[x].iter().map(|&z| table.r[z * n + y]).fold(0.0, f64::max) * gamma
                };
                delta = delta.max((v - table.r[x * n + y]).abs());
                next[x * n + y] = v;
            }
        }
        std::mem::swap(&mut table.r, &mut next);
        if delta < TOLERANCE {
            for (x, s) in succ.into_iter().enumerate() {
                table.succ[x] = s.into_iter().filter(|&z| z != x).map(|z| z as u32).collect();
                table.succ[x].sort_unstable();
                table.succ[x].dedup();
            }
            return Ok(table);
        }
    }
    Err(Error::NoConvergence(cap))
}

/// Non-negative dissimilarity between states, zero on the diagonal.
pub trait DistanceMeasure {
    fn distance(&self, a: StateId, b: StateId) -> f64;
}

/// 0 for identical states, infinite otherwise.
#[derive(Copy, Clone, Debug, Default)]
pub struct IndicatorDistance;

impl DistanceMeasure for IndicatorDistance {
    fn distance(&self, a: StateId, b: StateId) -> f64 {
        if a == b {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl<F: Fn(StateId, StateId) -> f64> DistanceMeasure for F {
    fn distance(&self, a: StateId, b: StateId) -> f64 {
        self(a, b)
    }
}

/// `max_pi (1 - gamma_r) sum_t gamma_r^t exp(-delta(x_t, y))` from `x`.
/// Terminal states are absorbing.
pub fn similarity_reachability(
    mdp: &dyn Mdp,
    delta: &dyn DistanceMeasure,
    gamma: f64,
    x: StateId,
    y: StateId,
) -> f64 {
    assert!(gamma > 0.0 && gamma < 1.0, "similarity reachability needs gamma_r in (0, 1)");
    let n = mdp.num_states();
    let reward: Vec<f64> = (0..n).map(|s| (-delta.distance(StateId(s), y)).exp()).collect();
    let graph = Graph::of(mdp, Terminals::Absorbing);
    (1.0 - gamma) * graph.optimal_values(&reward, gamma)[x.0]
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
enum Terminals {
    /// The episode ends: a terminal state collects its reward once.
    Stop,
    /// The terminal state repeats forever.
    Absorbing,
}

/// Deterministic successor lists, with terminal handling baked in.
struct Graph {
    succ: Vec<Vec<usize>>,
}

impl Graph {
    fn of(mdp: &dyn Mdp, terminals: Terminals) -> Self {
        let succ = (0..mdp.num_states())
            .map(|s| {
                let sid = StateId(s);
                if mdp.is_terminal(sid) {
                    match terminals {
                        Terminals::Stop => Vec::new(),
                        Terminals::Absorbing => vec![s],
                    }
                } else {
                    let mut v: Vec<usize> = mdp.successors(sid).into_iter().map(|z| z.0).collect();
                    v.sort_unstable();
                    v.dedup();
                    v
                }
            })
            .collect();
        Graph { succ }
    }

    /// Exact `V(x) = r(x) + gamma * max_z V(z)` (or `r(x)` with no
    /// successors) by policy iteration with closed-form evaluation of each
    /// deterministic policy.
    fn optimal_values(&self, reward: &[f64], gamma: f64) -> Vec<f64> {
        let n = self.succ.len();
        let mut policy: Vec<Option<usize>> = self.succ.iter().map(|s| s.first().copied()).collect();
        loop {
            let v = evaluate_policy(&policy, reward, gamma);
            let mut stable = true;
            for x in 0..n {
                let Some(cur) = policy[x] else { continue };
                let mut best = cur;
                for &z in &self.succ[x] {
                    if v[z] > v[best] + 1e-12 * (1.0 + v[best].abs()) {
                        best = z;
                    }
                }
                if best != cur {
                    policy[x] = Some(best);
                    stable = false;
                }
            }
            if stable {
                return v;
            }
        }
    }
}

/// Values of a deterministic successor function: chains are summed
/// backwards and cycles closed with the geometric series.
fn evaluate_policy(policy: &[Option<usize>], reward: &[f64], gamma: f64) -> Vec<f64> {
    const NEW: u8 = 0;
    const ON_PATH: u8 = 1;
    const DONE: u8 = 2;
    let n = policy.len();
    let mut v = vec![0.0; n];
    let mut mark = vec![NEW; n];
    let mut path = Vec::new();
    for start in 0..n {
        if mark[start] == DONE {
            continue;
        }
        path.clear();
        let mut cur = start;
        // walk until a solved state, a dead end, or a cycle on the path
        loop {
            if mark[cur] == DONE {
                break;
            }
            if mark[cur] == ON_PATH {
                let pos = path.iter().position(|&p| p == cur).expect("on path");
                let cycle = &path[pos..];
                let len = cycle.len();
                let denom = 1.0 - gamma.powi(len as i32);
                for i in 0..len {
                    let mut acc = 0.0;
                    let mut g = 1.0;
                    for j in 0..len {
                        acc += g * reward[cycle[(i + j) % len]];
                        g *= gamma;
                    }
                    v[cycle[i]] = acc / denom;
                }
                for &c in cycle {
                    mark[c] = DONE;
                }
                path.truncate(pos);
                break;
            }
            mark[cur] = ON_PATH;
            path.push(cur);
            match policy[cur] {
                Some(z) => cur = z,
                None => {
                    v[cur] = reward[cur];
                    mark[cur] = DONE;
                    path.pop();
                    break;
                }
            }
        }
        while let Some(x) = path.pop() {
            let z = policy[x].expect("chain states have successors");
            v[x] = reward[x] + gamma * v[z];
            mark[x] = DONE;
        }
    }
    v
}

/// `count` seeded {0, 1}-valued reward functions over `n` states.
pub fn random_aux_rewards(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// The full auxiliary reward set: one indicator per state, then `extra`.
pub fn aux_reward_set(n: usize, extra: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..n)
        .map(|y| (0..n).map(|x| if x == y { 1.0 } else { 0.0 }).collect())
        .collect();
    out.extend(extra.iter().cloned());
    out
}

/// Attainable-utility values `V_r(x) = max sum_t gamma_r^t r(x_t)` for the
/// reward set of [`aux_reward_set`]: indices `0..n` are the state
/// indicators, the rest the extra reward functions.
#[derive(Clone, Debug)]
pub struct AuValueTable {
    n: usize,
    m: usize,
    gamma: f64,
    store: AuStore,
}

#[derive(Clone, Debug)]
enum AuStore {
    /// State-major `v[x * m + k]`.
    Dense(Vec<f64>),
    Online(Box<OnlineAu>),
}

/// Online values over the experienced transition graph.
///
/// An indicator reward for `y` is best collected by reaching `y` as fast as
/// possible and then cycling back through it on the shortest loop, so
/// `V_y(x) = R(x; y) / (1 - c_y)` with `c_y = max_u gamma R(y; u)` over
/// experienced edges `u -> y`. These values therefore come straight from an
/// online reachability table; only the extra rewards need Bellman backups.
#[derive(Clone, Debug)]
struct OnlineAu {
    reach: ReachabilityTable,
    /// Experienced predecessors of each state, self-loops included.
    into: Vec<Vec<u32>>,
    loop_value: Vec<f64>,
    extra: BellmanTable,
}

impl AuValueTable {
    /// Online table with no experience: `V_r(x) = r(x)`.
    pub fn new(n: usize, extra: &[Vec<f64>], gamma: f64) -> Self {
        assert!(gamma > 0.0 && gamma < 1.0, "attainable utility needs gamma_r in (0, 1)");
        assert!(extra.iter().all(|r| r.len() == n), "reward functions differ in length");
        AuValueTable {
            n,
            m: n + extra.len(),
            gamma,
            store: AuStore::Online(Box::new(OnlineAu {
                reach: ReachabilityTable::new(n, gamma),
                into: vec![Vec::new(); n],
                loop_value: vec![1.0; n],
                extra: BellmanTable::new(n, extra, gamma),
            })),
        }
    }

    pub fn num_states(&self) -> usize {
        self.n
    }

    pub fn num_rewards(&self) -> usize {
        self.m
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn value(&self, k: usize, x: StateId) -> f64 {
        match &self.store {
            AuStore::Dense(v) => v[x.0 * self.m + k],
            AuStore::Online(o) if k < self.n => o.reach.get(x, StateId(k)) * o.loop_value[k],
            AuStore::Online(o) => o.extra.v[x.0 * o.extra.m + (k - self.n)],
        }
    }

    /// Writes `V_r(x)` for every reward into `out`.
    pub fn values_into(&self, x: StateId, out: &mut Vec<f64>) {
        out.clear();
        match &self.store {
            AuStore::Dense(v) => out.extend_from_slice(&v[x.0 * self.m..(x.0 + 1) * self.m]),
            AuStore::Online(o) => {
                out.extend(o.reach.row(x).iter().zip(&o.loop_value).map(|(r, l)| r * l));
                let m = o.extra.m;
                out.extend_from_slice(&o.extra.v[x.0 * m..(x.0 + 1) * m]);
            }
        }
    }

    pub fn values(&self, x: StateId) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m);
        self.values_into(x, &mut out);
        out
    }

    /// Incorporates one experienced transition. Returns whether any value
    /// changed. Exact tables ignore observations.
    pub fn observe(&mut self, t: Transition) -> bool {
        let AuStore::Online(o) = &mut self.store else {
            return false;
        };
        let (u, v) = (t.from.0 as u32, t.to.0);
        if o.into[v].contains(&u) {
            return false;
        }
        o.into[v].push(u);
        o.reach.observe(t);
        let g = self.gamma;
        for y in 0..self.n {
            let row = o.reach.row(StateId(y));
            let back = o.into[y].iter().map(|&u| row[u as usize]).fold(0.0, f64::max);
            o.loop_value[y] = 1.0 / (1.0 - g * back);
        }
        o.extra.observe(t);
        true
    }
}

/// Bellman max-updates over experienced edges for arbitrary state rewards.
#[derive(Clone, Debug)]
struct BellmanTable {
    m: usize,
    gamma: f64,
    rewards: Vec<f64>,
    v: Vec<f64>,
    succ: Vec<Vec<u32>>,
    pred: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    queued: Vec<bool>,
}

impl BellmanTable {
    fn new(n: usize, rewards: &[Vec<f64>], gamma: f64) -> Self {
        let m = rewards.len();
        let mut flat = vec![0.0; n * m];
        for (k, r) in rewards.iter().enumerate() {
            for (x, &val) in r.iter().enumerate() {
                flat[x * m + k] = val;
            }
        }
        BellmanTable {
            m,
            gamma,
            v: flat.clone(),
            rewards: flat,
            succ: vec![Vec::new(); n],
            pred: vec![Vec::new(); n],
            scratch: Vec::new(),
            queued: vec![false; n],
        }
    }

    /// Records the edge and relaxes until no value moves.
    fn observe(&mut self, t: Transition) -> bool {
        let (u, v) = (t.from.0, t.to.0);
        if self.m == 0 || self.succ[u].contains(&(v as u32)) {
            return false;
        }
        self.succ[u].push(v as u32);
        if u != v {
            self.pred[v].push(u as u32);
        }
        let mut stack = std::mem::take(&mut self.scratch);
        stack.clear();
        stack.push(u as u32);
        self.queued[u] = true;
        let mut changed = false;
        while let Some(x) = stack.pop() {
            let x = x as usize;
            self.queued[x] = false;
            if self.backup(x) {
                changed = true;
                for &p in &self.pred[x] {
                    if !self.queued[p as usize] {
                        self.queued[p as usize] = true;
                        stack.push(p);
                    }
                }
            }
        }
        self.scratch = stack;
        changed
    }

    /// `V(x) <- max(V(x), r(x) + gamma V(z))` over known successors; a
    /// self-loop contributes its closed form `r(x) / (1 - gamma)`.
    fn backup(&mut self, x: usize) -> bool {
        let m = self.m;
        let g = self.gamma;
        let mut improved = false;
        for i in 0..self.succ[x].len() {
            let z = self.succ[x][i] as usize;
            for k in 0..m {
                let r = self.rewards[x * m + k];
                let cand = if z == x {
                    r / (1.0 - g)
                } else {
                    r + g * self.v[z * m + k]
                };
                let cur = &mut self.v[x * m + k];
                if cand > *cur + TOLERANCE * 1e-3 {
                    *cur = cand;
                    improved = true;
                }
            }
        }
        improved
    }
}

/// Exact attainable-utility values over the full transition graph, solved
/// independently for every reward in the set. A terminal state collects its
/// own reward and nothing after.
pub fn exact_au_values(mdp: &dyn Mdp, extra: &[Vec<f64>], gamma: f64) -> AuValueTable {
    let n = mdp.num_states();
    let rewards = aux_reward_set(n, extra);
    let m = rewards.len();
    let graph = Graph::of(mdp, Terminals::Stop);
    let mut dense = vec![0.0; n * m];
    for (k, r) in rewards.iter().enumerate() {
        for (x, val) in graph.optimal_values(r, gamma).into_iter().enumerate() {
            dense[x * m + k] = val;
        }
    }
    AuValueTable {
        n,
        m,
        gamma,
        store: AuStore::Dense(dense),
    }
}
