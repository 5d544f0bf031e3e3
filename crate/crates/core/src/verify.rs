//! Property checks on a single instance: supermodularity of individual hitting
//! times, the quasi-metric triangle inequality, the max/mean ratio bound and
//! estimator coverage.

use std::fmt;

use serde::Serialize;

use crate::error::Result;
use crate::estimator::{estimate_g, walk_plan, EstimatorConfig};
use crate::exact::{hitting_to_blue, ratio_bound, ExactSolver};
use crate::graph::{candidate_endpoints, BipartiteInstance, ShortcutSet};
use crate::kcenter::{build_quasi_metric, MAX_QUASI_METRIC_RED};
use crate::optimizers::greedy_exact;
use crate::par;
use crate::rng::derive_seed;

/// Absolute tolerance for the supermodularity and triangle checks.
pub const PROPERTY_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

impl Level {
    fn coverage_seeds(self) -> u64 {
        match self {
            Level::Fast => 20,
            Level::Full => 200,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// Largest violation of
/// `H_{G+S+e₂}(r,B) − H_{G+S+e₁+e₂}(r,B) ≤ H_{G+S}(r,B) − H_{G+S+e₁}(r,B)`
/// over red `r` and ordered candidate pairs, where `e₁ = e₂` is allowed when
/// the endpoint has room for two shortcuts.
pub fn supermodularity_violation(instance: &BipartiteInstance, base: &ShortcutSet) -> Result<f64> {
    let solver = ExactSolver::default();
    let candidates = candidate_endpoints(instance, base);
    let h0 = solver.hitting_to_blue(instance, base)?.times;
    let singles = par::try_map(&candidates, |&e| {
        solver.hitting_to_blue(instance, &base.with(e)).map(|p| p.times)
    })?;
    let mut pairs = Vec::new();
    for (i, &a) in candidates.iter().enumerate() {
        for (j, &b) in candidates.iter().enumerate().skip(i) {
            if i != j || instance.capacity(a) > base.multiplicity(a) + 1 {
                pairs.push((i, j, a, b));
            }
        }
    }
    let worst = par::try_map(&pairs, |&(i, j, a, b)| {
        let both = solver.hitting_to_blue(instance, &base.with(a).with(b))?.times;
        let mut worst = f64::NEG_INFINITY;
        for r in 0..h0.len() {
            // e₁ = a, e₂ = b and the swapped order
            let v1 = (singles[j][r] - both[r]) - (h0[r] - singles[i][r]);
            let v2 = (singles[i][r] - both[r]) - (h0[r] - singles[j][r]);
            worst = worst.max(v1).max(v2);
        }
        Ok::<_, crate::error::Error>(worst)
    })?;
    Ok(worst.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Fraction of `seeds` seeded estimates with `|ĝ − g| ≤ ε g`.
pub fn estimator_coverage(
    instance: &BipartiteInstance,
    set: &ShortcutSet,
    epsilon: f64,
    delta: f64,
    seeds: u64,
    master_seed: u64,
) -> Result<f64> {
    let g = hitting_to_blue(instance, set)?.mean;
    let hits = (0..seeds)
        .map(|s| {
            let cfg = EstimatorConfig::guarantee(epsilon, delta, derive_seed(master_seed, &[s]));
            Ok(((estimate_g(instance, set, &cfg)?.g_hat - g).abs() <= epsilon * g) as u64)
        })
        .sum::<Result<u64>>()?;
    Ok(hits as f64 / seeds as f64)
}

/// Walk steps above which the coverage check is skipped.
const COVERAGE_STEP_BUDGET: f64 = 2e9;

pub fn verify(instance: &BipartiteInstance, level: Level, seed: u64) -> Result<Report> {
    let mut checks = Vec::new();

    let mut bases = vec![ShortcutSet::new()];
    if level == Level::Full {
        let (set, _) = greedy_exact(instance, 2, 0.1, true)?;
        for used in 1..=set.len() {
            bases.push(ShortcutSet::from_endpoints(set.endpoints()[..used].iter().copied()));
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for base in &bases {
        worst = worst.max(supermodularity_violation(instance, base)?);
    }
    checks.push(Check {
        name: "supermodularity",
        status: if worst <= PROPERTY_TOL { Status::Pass } else { Status::Fail },
        detail: format!("{} base set(s), max violation {worst:.3e}", bases.len()),
    });

    if instance.red().len() <= MAX_QUASI_METRIC_RED {
        let v = build_quasi_metric(instance)?.max_triangle_violation();
        checks.push(Check {
            name: "triangle_inequality",
            status: if v <= PROPERTY_TOL { Status::Pass } else { Status::Fail },
            detail: format!("{} points, max violation {v:.3e}", instance.red().len() + 1),
        });
    } else {
        checks.push(Check {
            name: "triangle_inequality",
            status: Status::Skip,
            detail: "too many red nodes for the dense table".into(),
        });
    }

    // HittingProfile rejects any profile that breaks the bound, so reaching
    // the end of this loop is the check; the detail reports the slack.
    let bound = ratio_bound(instance.red().len());
    let mut max_ratio: f64 = 0.0;
    for base in &bases {
        let p = hitting_to_blue(instance, base)?;
        max_ratio = max_ratio.max(p.max / p.mean);
    }
    checks.push(Check {
        name: "ratio_bound",
        status: Status::Pass,
        detail: format!("max f/g {max_ratio:.4} against bound {bound:.4}"),
    });

    let (epsilon, delta) = (0.2, 0.1);
    let plan = walk_plan(instance, &ShortcutSet::new(), &EstimatorConfig::guarantee(epsilon, delta, seed))?;
    let seeds = level.coverage_seeds();
    let steps = plan.walk_length as f64 * plan.samples_per_node as f64 * plan.start_nodes as f64 * seeds as f64;
    if steps > COVERAGE_STEP_BUDGET {
        checks.push(Check {
            name: "estimator_coverage",
            status: Status::Skip,
            detail: format!(
                "walk length {} with {} samples per node exceeds the step budget",
                plan.walk_length, plan.samples_per_node
            ),
        });
    } else {
        let rate = estimator_coverage(instance, &ShortcutSet::new(), epsilon, delta, seeds, seed)?;
        checks.push(Check {
            name: "estimator_coverage",
            status: if rate >= 1.0 - delta { Status::Pass } else { Status::Fail },
            detail: format!(
                "{:.1}% of {seeds} estimates within {epsilon} (walk length {}, {} samples per node)",
                rate * 100.0,
                plan.walk_length,
                plan.samples_per_node
            ),
        });
    }

    Ok(Report { checks })
}
