use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::run::{run_cell, CellResult};
use crate::agent::AgentConfig;
use crate::error::{Error, Result};
use crate::gridworlds::{EnvKind, EnvParams, GridWorld};
use crate::penalty::{BaselineKind, Measure, PenaltyConfig, Summary, DISCOUNTED_GAMMA_R};

pub const BETA_GRID: [f64; 8] = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0, 300.0];

/// One deviation-measure variant: measure, discounting and summary.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub measure: Measure,
    pub discounted: bool,
    pub summary: Summary,
}

impl Variant {
    /// Placeholder variant of the unpenalised cell.
    pub const NONE: Variant = Variant::new(Measure::None, true, Summary::Truncation);

    pub const fn new(measure: Measure, discounted: bool, summary: Summary) -> Self {
        Variant {
            measure,
            discounted,
            summary,
        }
    }

    /// Every measure x discounting x summary combination; UR ignores the
    /// summary so it appears once per discounting.
    pub fn all() -> Vec<Variant> {
        let mut out = vec![
            Variant::new(Measure::Ur, true, Summary::Truncation),
            Variant::new(Measure::Ur, false, Summary::Truncation),
        ];
        for m in [Measure::Rr, Measure::Au] {
            for d in [true, false] {
                for s in [Summary::Truncation, Summary::Absolute] {
                    out.push(Variant::new(m, d, s));
                }
            }
        }
        out
    }

    pub fn config(&self, baseline: BaselineKind) -> PenaltyConfig {
        PenaltyConfig {
            baseline,
            measure: self.measure,
            gamma_r: if self.discounted { DISCOUNTED_GAMMA_R } else { 1.0 },
            summary: self.summary,
            ..PenaltyConfig::default()
        }
    }

    pub fn label(&self) -> String {
        self.config(BaselineKind::Inaction).variant_label()
    }

    pub fn parse(label: &str) -> Result<Self> {
        Variant::all()
            .into_iter()
            .find(|v| v.label() == label)
            .ok_or_else(|| {
                let known: Vec<String> = Variant::all().iter().map(Variant::label).collect();
                Error::config("variants", format!("`{label}` is not one of: {}", known.join(", ")))
            })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(label: String) -> Result<Self> {
        if label == Variant::NONE.label() {
            return Ok(Variant::NONE);
        }
        Variant::parse(&label)
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.label()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub envs: Vec<EnvKind>,
    pub baselines: Vec<BaselineKind>,
    pub variants: Vec<Variant>,
    pub betas: Vec<f64>,
    pub seeds: usize,
    pub first_seed: u64,
    /// Also train an unpenalised agent per environment.
    pub include_none: bool,
    pub env: EnvParams,
    pub agent: AgentConfig,
    /// Template for fields not set by the variant (rollout discount,
    /// auxiliary reward count).
    pub penalty: PenaltyConfig,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan::desk()
    }
}

impl ExperimentPlan {
    /// 2000 episodes, 5 seeds, full grid.
    pub fn desk() -> Self {
        ExperimentPlan {
            envs: EnvKind::ALL.to_vec(),
            baselines: BaselineKind::ALL.to_vec(),
            variants: Variant::all(),
            betas: BETA_GRID.to_vec(),
            seeds: 5,
            first_seed: 0,
            include_none: true,
            env: EnvParams::default(),
            agent: AgentConfig::desk(),
            penalty: PenaltyConfig::default(),
        }
    }

    /// 10000 episodes, 20 seeds, full grid.
    pub fn full() -> Self {
        ExperimentPlan {
            seeds: 20,
            agent: AgentConfig::full(),
            ..ExperimentPlan::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::config("betas", "beta grid must not be empty"));
        }
        if let Some(b) = self.betas.iter().find(|b| !(**b >= 0.0 && b.is_finite())) {
            return Err(Error::config("betas", format!("{b} is not a finite non-negative number")));
        }
        if self.seeds == 0 {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        if self.variants.contains(&Variant::NONE) {
            return Err(Error::config("variants", "the unpenalised agent is selected with include_none"));
        }
        if self.envs.is_empty() {
            return Err(Error::config("envs", "need at least one environment"));
        }
        self.agent.validate()
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.first_seed + i).collect()
    }

    /// Every penalised cell in grid order, with skip reasons for the
    /// invalid ones, followed by the unpenalised cells.
    pub fn cells(&self) -> Vec<(CellKey, Option<String>)> {
        let mut out = Vec::new();
        for &env in &self.envs {
            if self.include_none {
                out.push((CellKey::none(env), None));
            }
            for &baseline in &self.baselines {
                for &variant in &self.variants {
                    let key = CellKey {
                        env,
                        baseline: Some(baseline),
                        variant,
                    };
                    out.push((key, skip_reason(env, baseline, variant)));
                }
            }
        }
        out
    }

    pub fn penalty_config(&self, key: &CellKey) -> PenaltyConfig {
        let mut cfg = match key.baseline {
            Some(b) => key.variant.config(b),
            None => PenaltyConfig::none(),
        };
        cfg.gamma = self.penalty.gamma;
        cfg.aux_random = self.penalty.aux_random;
        cfg.aux_seed = self.penalty.aux_seed;
        cfg
    }
}

fn skip_reason(env: EnvKind, baseline: BaselineKind, variant: Variant) -> Option<String> {
    if variant.measure == Measure::Au && !variant.discounted {
        return Some("undiscounted attainable utility is not offered".into());
    }
    if env == EnvKind::Survival && baseline == BaselineKind::Stepwise {
        return Some("survival is evaluated with the starting and inaction baselines only".into());
    }
    None
}

/// Identifies a table cell. `baseline == None` is the unpenalised agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub env: EnvKind,
    pub baseline: Option<BaselineKind>,
    pub variant: Variant,
}

impl CellKey {
    pub fn none(env: EnvKind) -> Self {
        CellKey {
            env,
            baseline: None,
            variant: Variant::NONE,
        }
    }

    pub fn label(&self) -> String {
        match self.baseline {
            Some(b) => format!("{}/{b}/{}", self.env, self.variant.label()),
            None => format!("{}/none", self.env),
        }
    }
}

/// Final performance of every seed at one beta.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaResult {
    pub beta: f64,
    pub finals: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl BetaResult {
    pub fn new(beta: f64, finals: Vec<f64>) -> Self {
        let (mean, std) = mean_std(&finals);
        BetaResult {
            beta,
            finals,
            mean,
            std,
        }
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub key: CellKey,
    pub seeds: Vec<u64>,
    pub per_beta: Vec<BetaResult>,
    pub chosen_beta: f64,
    /// Mean over seeds of the per-episode scaled performance at the chosen beta.
    pub curve: Vec<f64>,
}

impl CellReport {
    pub fn chosen(&self) -> &BetaResult {
        self.per_beta
            .iter()
            .find(|b| b.beta == self.chosen_beta)
            .expect("chosen beta is in the grid")
    }

    pub fn mark(&self) -> Mark {
        Mark::of(self.chosen().mean)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipRecord {
    pub key: CellKey,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub cells: Vec<CellReport>,
    pub skipped: Vec<SkipRecord>,
}

impl ExperimentReport {
    pub fn cell(&self, key: &CellKey) -> Option<&CellReport> {
        self.cells.iter().find(|c| &c.key == key)
    }
}

/// Qualitative outcome of a cell.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mark {
    Pass,
    Fail,
    Unclear,
}

impl Mark {
    pub const PASS_AT: f64 = 0.7;
    pub const FAIL_AT: f64 = 0.3;

    pub fn of(mean: f64) -> Mark {
        if mean >= Mark::PASS_AT {
            Mark::Pass
        } else if mean <= Mark::FAIL_AT {
            Mark::Fail
        } else {
            Mark::Unclear
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Mark::Pass => "✓",
            Mark::Fail => "✗",
            Mark::Unclear => "?",
        }
    }
}

/// Highest mean final performance across seeds; ties go to the smaller beta.
pub fn choose_beta(per_beta: &[BetaResult]) -> f64 {
    let mut best: Option<&BetaResult> = None;
    for r in per_beta {
        match best {
            Some(b) if r.mean > b.mean || (r.mean == b.mean && r.beta < b.beta) => best = Some(r),
            None => best = Some(r),
            _ => {}
        }
    }
    best.map_or(0.0, |b| b.beta)
}

/// Trains every seed at every beta of one cell and picks the best beta.
pub fn grid_search_beta(
    world: &GridWorld,
    cfg: &PenaltyConfig,
    agent: &AgentConfig,
    betas: &[f64],
    seeds: &[u64],
) -> Result<(f64, Vec<BetaResult>, Vec<Vec<CellResult>>)> {
    let mut per_beta = Vec::with_capacity(betas.len());
    let mut runs = Vec::with_capacity(betas.len());
    for &beta in betas {
        let results: Vec<CellResult> = seeds
            .iter()
            .map(|&seed| run_cell(world, cfg, agent, beta, seed))
            .collect::<Result<_>>()?;
        per_beta.push(BetaResult::new(beta, results.iter().map(|r| r.final_perf).collect()));
        runs.push(results);
    }
    Ok((choose_beta(&per_beta), per_beta, runs))
}

/// Runs a whole plan, parallel over (cell, beta, seed) jobs. The result does
/// not depend on the number of threads.
pub fn run_plan(plan: &ExperimentPlan, threads: Option<usize>) -> Result<ExperimentReport> {
    plan.validate()?;
    let worlds: BTreeMap<EnvKind, GridWorld> = plan
        .envs
        .iter()
        .map(|&k| GridWorld::builtin(k, plan.env).map(|w| (k, w)))
        .collect::<Result<_>>()?;
    let seeds = plan.seed_list();
    let mut report = ExperimentReport::default();
    let mut active = Vec::new();
    for (key, skip) in plan.cells() {
        match skip {
            Some(reason) => report.skipped.push(SkipRecord { key, reason }),
            None => active.push(key),
        }
    }

    let mut jobs = Vec::new();
    for (ci, key) in active.iter().enumerate() {
        let betas: &[f64] = if key.baseline.is_none() { &[0.0] } else { &plan.betas };
        for (bi, &beta) in betas.iter().enumerate() {
            for &seed in &seeds {
                jobs.push((ci, bi, beta, seed));
            }
        }
    }

    let execute = || -> Result<Vec<(f64, Vec<f64>)>> {
        jobs.par_iter()
            .map(|&(ci, _, beta, seed)| {
                let key = &active[ci];
                let cfg = plan.penalty_config(key);
                let r = run_cell(&worlds[&key.env], &cfg, &plan.agent, beta, seed)?;
                let curve = r.curve();
                Ok((r.final_perf, curve))
            })
            .collect()
    };
    let outputs = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::config("threads", e.to_string()))?
            .install(execute)?,
        None => execute()?,
    };

    let mut it = jobs.iter().zip(outputs);
    for key in active {
        let betas: Vec<f64> = if key.baseline.is_none() { vec![0.0] } else { plan.betas.clone() };
        let mut per_beta = Vec::new();
        let mut curves: Vec<Vec<Vec<f64>>> = Vec::new();
        for &beta in &betas {
            let mut finals = Vec::new();
            let mut cs = Vec::new();
            for _ in &seeds {
                let (_, (f, c)) = it.next().expect("one output per job");
                finals.push(f);
                cs.push(c);
            }
            per_beta.push(BetaResult::new(beta, finals));
            curves.push(cs);
        }
        let chosen_beta = choose_beta(&per_beta);
        let bi = betas.iter().position(|&b| b == chosen_beta).expect("chosen from grid");
        let len = curves[bi].first().map_or(0, Vec::len);
        let curve = (0..len)
            .map(|e| curves[bi].iter().map(|c| c[e]).sum::<f64>() / curves[bi].len() as f64)
            .collect();
        report.cells.push(CellReport {
            key,
            seeds: seeds.clone(),
            per_beta,
            chosen_beta,
            curve,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_pick_the_smallest_beta() {
        let per: Vec<BetaResult> = [3.0, 0.1, 1.0].iter().map(|&b| BetaResult::new(b, vec![0.5, 0.5])).collect();
        assert_eq!(choose_beta(&per), 0.1);
        let per = vec![BetaResult::new(0.1, vec![0.2]), BetaResult::new(10.0, vec![0.9])];
        assert_eq!(choose_beta(&per), 10.0);
    }

    #[test]
    fn marks() {
        assert_eq!(Mark::of(1.0), Mark::Pass);
        assert_eq!(Mark::of(0.7), Mark::Pass);
        assert_eq!(Mark::of(0.3), Mark::Fail);
        assert_eq!(Mark::of(0.5), Mark::Unclear);
    }

    #[test]
    fn grid_accounting() {
        let plan = ExperimentPlan::desk();
        let cells = plan.cells();
        let per_env = 1 + plan.baselines.len() * plan.variants.len();
        assert_eq!(cells.len(), plan.envs.len() * per_env);
        let skipped = cells.iter().filter(|(_, s)| s.is_some()).count();
        // two undiscounted AU variants per baseline, plus survival stepwise
        assert_eq!(skipped, 4 * 3 * 2 + 8);
        assert_eq!(Variant::all().len(), 10);
        for v in Variant::all() {
            assert_eq!(Variant::parse(&v.label()).unwrap(), v);
        }
    }

    #[test]
    fn mean_and_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert_eq!(mean_std(&[]), (0.0, 0.0));
    }
}
