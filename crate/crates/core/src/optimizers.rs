//! Shortcut selection for the average objective: exact and estimated greedy,
//! the exhaustive optimum, and simple baselines.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{estimate_g, estimate_with_lambda, spectral_radius, EstimatorConfig, EstimatorMode};
use crate::exact::{ExactSolver, Objective};
use crate::graph::{candidate_endpoints, BipartiteInstance, ShortcutSet};
use crate::par;
use crate::rng::{derive_seed, stream_rng};

/// Values within this relative distance are ties, broken by lowest node index.
const TIE_TOL: f64 = 1e-10;
/// Exact greedy stops once the best marginal decrease is this small.
const MIN_DECREASE: f64 = 1e-12;
/// Upper bound on the number of multisets `brute_force_opt` will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn tie_tol(x: f64) -> f64 {
    TIE_TOL * x.abs().max(1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GreedyMode {
    Exact,
    Estimated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyStep {
    pub endpoint: usize,
    /// Objective after inserting `endpoint` (an estimate in estimated mode).
    pub value: f64,
    /// Cumulative objective evaluations up to and including this step.
    pub evaluations: usize,
    pub elapsed_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreedyTrace {
    pub mode: GreedyMode,
    /// Iteration budget `τ`.
    pub budget: usize,
    pub initial_value: Option<f64>,
    pub steps: Vec<GreedyStep>,
    pub evaluations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyOptions {
    pub k: usize,
    pub epsilon: f64,
    /// Run exactly `k` iterations instead of the bicriteria budget.
    pub cap_at_k: bool,
    pub lazy: bool,
}

impl GreedyOptions {
    pub fn new(k: usize, epsilon: f64, cap_at_k: bool) -> Self {
        Self {
            k,
            epsilon,
            cap_at_k,
            lazy: false,
        }
    }

    pub fn lazy(self, lazy: bool) -> Self {
        Self { lazy, ..self }
    }
}

/// `⌈factor · k · ln(n³ / ε)⌉`: factor 1 for exact greedy, 2 for the
/// estimated variant.
pub fn iteration_budget(k: usize, node_count: usize, epsilon: f64, factor: f64) -> usize {
    let n = node_count as f64;
    (factor * k as f64 * (n.powi(3) / epsilon).ln()).ceil().max(0.0) as usize
}

/// Greedy on exact `g`: `⌈k ln(n³/ε)⌉` iterations, or `k` with `cap_at_k`.
pub fn greedy_exact(
    instance: &BipartiteInstance,
    k: usize,
    epsilon: f64,
    cap_at_k: bool,
) -> Result<(ShortcutSet, GreedyTrace)> {
    greedy_exact_with(instance, &GreedyOptions::new(k, epsilon, cap_at_k), &ExactSolver::default())
}

pub fn greedy_exact_with(
    instance: &BipartiteInstance,
    options: &GreedyOptions,
    solver: &ExactSolver,
) -> Result<(ShortcutSet, GreedyTrace)> {
    check_k_epsilon(options)?;
    let budget = if options.cap_at_k {
        options.k
    } else {
        iteration_budget(options.k, instance.node_count(), options.epsilon, 1.0)
    };
    let eval = |set: &ShortcutSet, _: u64, _: u64| solver.evaluate(instance, set, Objective::Avg);
    let initial = eval(&ShortcutSet::new(), 0, 0)?;
    let (set, steps, evaluations) = run_greedy(instance, budget, options.lazy, true, initial, eval)?;
    Ok((
        set,
        GreedyTrace {
            mode: GreedyMode::Exact,
            budget,
            initial_value: Some(initial),
            steps,
            evaluations,
        },
    ))
}

/// Greedy on the walk estimate `ĝ`. In guarantee mode `ε ≤ 1/(4k)` is
/// required, the estimator runs at relative error `ε`, and the budget is
/// `⌈2k ln(n³/ε)⌉` (or `k` with `cap_at_k`).
pub fn greedy_plus(
    instance: &BipartiteInstance,
    k: usize,
    epsilon: f64,
    config: &EstimatorConfig,
    cap_at_k: bool,
) -> Result<(ShortcutSet, GreedyTrace)> {
    greedy_plus_with(instance, &GreedyOptions::new(k, epsilon, cap_at_k), config)
}

pub fn greedy_plus_with(
    instance: &BipartiteInstance,
    options: &GreedyOptions,
    config: &EstimatorConfig,
) -> Result<(ShortcutSet, GreedyTrace)> {
    check_k_epsilon(options)?;
    let mut config = config.clone();
    if config.mode == EstimatorMode::Guarantee {
        let limit = 1.0 / (4.0 * options.k as f64);
        if options.epsilon > limit {
            return Err(Error::InvalidParameter(format!(
                "epsilon {} exceeds 1/(4k) = {limit}",
                options.epsilon
            )));
        }
        config.epsilon = options.epsilon;
    } else if !(options.epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {} not in (0,1)", options.epsilon)));
    }
    config.validate()?;

    // Shortcuts only raise red degrees, which shrinks every entry of the
    // normalized red block, so the radius at F = ∅ bounds every later one.
    let lambda = match (config.mode, config.lambda) {
        (EstimatorMode::Experiment, Some(l)) => l,
        (_, supplied) => {
            let computed = spectral_radius(instance);
            match supplied {
                Some(l) if l < computed * (1.0 - 1e-6) => {
                    return Err(Error::InvalidParameter(format!(
                        "lambda {l} is below the computed spectral radius {computed}"
                    )))
                }
                Some(l) => l,
                None => computed,
            }
        }
    };

    let budget = if options.cap_at_k {
        options.k
    } else {
        iteration_budget(options.k, instance.node_count(), options.epsilon, 2.0)
    };
    let master = config.seed;
    let eval = |set: &ShortcutSet, iteration: u64, candidate: u64| {
        let cfg = config.with_seed(derive_seed(master, &[iteration, candidate]));
        estimate_with_lambda(instance, set, &cfg, lambda).map(|e| e.g_hat)
    };
    let initial = if options.lazy {
        Some(eval(&ShortcutSet::new(), u64::MAX, u64::MAX)?)
    } else {
        None
    };
    let prior = usize::from(initial.is_some());
    let (set, steps, evaluations) =
        run_greedy_opt(instance, budget, options.lazy, false, initial, prior, eval)?;
    Ok((
        set,
        GreedyTrace {
            mode: GreedyMode::Estimated,
            budget,
            initial_value: initial,
            steps,
            evaluations,
        },
    ))
}

fn check_k_epsilon(options: &GreedyOptions) -> Result<()> {
    if options.k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if !(options.epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon {} must be positive", options.epsilon)));
    }
    Ok(())
}

/// Picks the lowest-index candidate whose value is within tolerance of the
/// minimum.
fn select(fresh: &[(usize, f64)]) -> (usize, f64) {
    let min = fresh.iter().map(|&(_, v)| v).fold(f64::INFINITY, f64::min);
    fresh
        .iter()
        .copied()
        .filter(|&(_, v)| v <= min + tie_tol(min))
        .min_by_key(|&(r, _)| r)
        .expect("non-empty candidate list")
}

#[derive(Debug)]
struct Stale {
    gain: f64,
    node: usize,
}

impl PartialEq for Stale {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Stale {}
impl PartialOrd for Stale {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Stale {
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.node.cmp(&self.node))
    }
}

type Steps = (ShortcutSet, Vec<GreedyStep>, usize);

fn run_greedy<F>(
    instance: &BipartiteInstance,
    budget: usize,
    lazy: bool,
    early_exit: bool,
    initial: f64,
    eval: F,
) -> Result<Steps>
where
    F: Fn(&ShortcutSet, u64, u64) -> Result<f64> + Sync,
{
    run_greedy_opt(instance, budget, lazy, early_exit, Some(initial), 1, eval)
}

/// The greedy loop. `eval(set, iteration, candidate)` scores `set`. Lazy
/// `prior_evaluations` seeds the running count. Lazy
/// mode keeps stale marginal decreases in a max-heap and only refreshes
/// entries that could still win; it requires `current`.
fn run_greedy_opt<F>(
    instance: &BipartiteInstance,
    budget: usize,
    lazy: bool,
    early_exit: bool,
    initial: Option<f64>,
    prior_evaluations: usize,
    eval: F,
) -> Result<Steps>
where
    F: Fn(&ShortcutSet, u64, u64) -> Result<f64> + Sync,
{
    assert!(!lazy || initial.is_some(), "lazy greedy needs the starting value");
    let start = Instant::now();
    let mut current = ShortcutSet::new();
    let mut value = initial;
    let mut steps = Vec::new();
    let mut evaluations = prior_evaluations;
    let mut heap: BinaryHeap<Stale> = BinaryHeap::new();
    let mut is_candidate = vec![false; instance.node_count()];

    for iteration in 0..budget {
        let candidates = candidate_endpoints(instance, &current);
        if candidates.is_empty() {
            break;
        }
        let it = iteration as u64;
        let fresh: Vec<(usize, f64)> = if !lazy || iteration == 0 {
            let values = par::try_map(&candidates, |&r| eval(&current.with(r), it, r as u64))?;
            evaluations += candidates.len();
            candidates.iter().copied().zip(values).collect()
        } else {
            is_candidate.iter_mut().for_each(|c| *c = false);
            for &r in &candidates {
                is_candidate[r] = true;
            }
            let cur = value.expect("lazy");
            let slack = 10.0 * tie_tol(cur);
            let mut fresh = Vec::new();
            let mut best_gain = f64::NEG_INFINITY;
            while let Some(top) = heap.peek() {
                if !is_candidate[top.node] {
                    heap.pop();
                    continue;
                }
                if top.gain < best_gain - slack {
                    break;
                }
                let node = heap.pop().expect("peeked").node;
                let v = eval(&current.with(node), it, node as u64)?;
                evaluations += 1;
                best_gain = best_gain.max(cur - v);
                fresh.push((node, v));
            }
            fresh
        };

        let (chosen, chosen_value) = select(&fresh);
        if early_exit {
            if let Some(cur) = value {
                if cur - chosen_value <= MIN_DECREASE {
                    break;
                }
            }
        }
        if lazy {
            let cur = value.expect("lazy");
            heap.extend(fresh.iter().map(|&(node, v)| Stale { gain: cur - v, node }));
        }
        current.push(chosen);
        value = Some(chosen_value);
        steps.push(GreedyStep {
            endpoint: chosen,
            value: chosen_value,
            evaluations,
            elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
        });
    }
    Ok((current, steps, evaluations))
}

/// Number of multisets of size `size` drawn from items with the given
/// multiplicity caps, saturating at `u128::MAX`.
fn bounded_multiset_count(caps: &[usize], size: usize) -> u128 {
    let mut ways = vec![0u128; size + 1];
    ways[0] = 1;
    for &cap in caps {
        let mut next = vec![0u128; size + 1];
        for (s, slot) in next.iter_mut().enumerate() {
            let mut acc = 0u128;
            for c in 0..=cap.min(s) {
                acc = acc.saturating_add(ways[s - c]);
            }
            *slot = acc;
        }
        ways = next;
    }
    ways[size]
}

/// All size-`size` multisets over `items` (respecting caps), as sorted
/// endpoint lists in lexicographic order.
fn enumerate_multisets(items: &[usize], caps: &[usize], size: usize) -> Vec<Vec<usize>> {
    fn rec(
        items: &[usize],
        caps: &[usize],
        from: usize,
        left: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if left == 0 {
            out.push(prefix.clone());
            return;
        }
        for i in from..items.len() {
            let used = prefix.iter().rev().take_while(|&&x| x == items[i]).count();
            if used >= caps[i] {
                continue;
            }
            prefix.push(items[i]);
            rec(items, caps, i, left - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(items, caps, 0, size, &mut Vec::with_capacity(size), &mut out);
    out
}

/// Exhaustive optimum over multisets of at most `k` red endpoints. Only
/// maximum-size multisets are scored: every smaller feasible multiset extends
/// to one of them and the objective is monotone. Ties go to the
/// lexicographically smallest endpoint list.
pub fn brute_force_opt(
    instance: &BipartiteInstance,
    k: usize,
    objective: Objective,
) -> Result<(ShortcutSet, f64)> {
    let solver = ExactSolver::default();
    let items = candidate_endpoints(instance, &ShortcutSet::new());
    let caps: Vec<usize> = items.iter().map(|&r| instance.capacity(r)).collect();
    let size = k.min(caps.iter().sum());
    let count = bounded_multiset_count(&caps, size);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(format!(
            "{count} multisets exceed the limit of {BRUTE_FORCE_LIMIT}"
        )));
    }
    let sets = enumerate_multisets(&items, &caps, size);
    let values = par::try_map(&sets, |s| {
        solver.evaluate(instance, &ShortcutSet::from_endpoints(s.iter().copied()), objective)
    })?;
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] - tie_tol(values[best]) {
            best = i;
        }
    }
    Ok((ShortcutSet::from_endpoints(sets[best].iter().copied()), values[best]))
}

/// `k` red endpoints drawn uniformly from the current candidates, one at a
/// time, so saturated nodes are never picked.
pub fn pure_random(instance: &BipartiteInstance, k: usize, seed: u64) -> ShortcutSet {
    let mut rng = stream_rng(seed, 0);
    let mut set = ShortcutSet::new();
    for _ in 0..k {
        let candidates = candidate_endpoints(instance, &set);
        if candidates.is_empty() {
            warn!("pure_random: no candidates left after {} shortcut(s)", set.len());
            break;
        }
        set.push(candidates[rng.random_range(0..candidates.len())]);
    }
    set
}

/// One shortcut at each of the `k` candidates with the largest hitting time
/// in the original graph.
pub fn top_hitting_baseline(instance: &BipartiteInstance, k: usize) -> Result<ShortcutSet> {
    let profile = ExactSolver::default().hitting_to_blue(instance, &ShortcutSet::new())?;
    let mut candidates = candidate_endpoints(instance, &ShortcutSet::new());
    candidates.sort_by(|&a, &b| {
        let ha = profile.time_of(instance, a).expect("red");
        let hb = profile.time_of(instance, b).expect("red");
        hb.total_cmp(&ha).then(a.cmp(&b))
    });
    candidates.truncate(k);
    Ok(ShortcutSet::from_endpoints(candidates))
}

/// Left side of `((k+x)/(k-x) · (1 - 1/k))^k ≤ e^{2x-1}` for `|x| ≤ 1`.
pub fn estimated_greedy_contraction(x: f64, k: u32) -> f64 {
    assert!(k >= 1 && x.abs() <= 1.0);
    if k == 1 {
        return 0.0;
    }
    let k = k as f64;
    ((k + x) / (k - x) * (1.0 - 1.0 / k)).powf(k)
}

/// Convenience: estimated `g(F)` under `config`.
pub fn estimated_value(instance: &BipartiteInstance, set: &ShortcutSet, config: &EstimatorConfig) -> Result<f64> {
    Ok(estimate_g(instance, set, config)?.g_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::evaluate;
    use crate::generators::{gen_planted_two_community, gen_path};
    use crate::graph::tests::path5;
    use crate::graph::{BipartiteInstance, Color};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    fn complete_bipartite() -> BipartiteInstance {
        use Color::*;
        BipartiteInstance::new(4, &[(0, 2), (0, 3), (1, 2), (1, 3)], vec![Red, Red, Blue, Blue]).unwrap()
    }

    #[test]
    fn greedy_exact_path5() {
        let (set, trace) = greedy_exact(&path5(), 1, 0.1, true).unwrap();
        assert_eq!(set.endpoints(), &[0]);
        assert!(close(trace.steps[0].value, 2.75));
        assert!(close(trace.initial_value.unwrap(), 3.5));

        let (set, trace) = greedy_exact(&path5(), 2, 0.1, true).unwrap();
        assert_eq!(set.sorted(), vec![0, 4]);
        assert!(close(trace.steps[1].value, 2.0));
        assert!(close(evaluate(&path5(), &set, Objective::Max).unwrap(), 2.0));
    }

    #[test]
    fn uncapped_budget_and_early_halt() {
        assert_eq!(iteration_budget(2, 5, 0.1, 1.0), 15);
        let (set, trace) = greedy_exact(&path5(), 2, 0.1, false).unwrap();
        assert_eq!(trace.budget, 15);
        // only two shortcuts are possible on path-5
        assert_eq!(set.len(), 2);
    }

    #[test]
    fn lazy_matches_eager_on_path5() {
        let opts = GreedyOptions::new(2, 0.1, true);
        let solver = ExactSolver::default();
        let (a, ta) = greedy_exact_with(&path5(), &opts, &solver).unwrap();
        let (b, tb) = greedy_exact_with(&path5(), &opts.lazy(true), &solver).unwrap();
        assert_eq!(a, b);
        let va: Vec<f64> = ta.steps.iter().map(|s| s.value).collect();
        let vb: Vec<f64> = tb.steps.iter().map(|s| s.value).collect();
        assert_eq!(va, vb);
        assert!(tb.evaluations <= ta.evaluations);
    }

    #[test]
    fn lazy_matches_eager_on_random_instances() {
        let solver = ExactSolver::default();
        for seed in 0..50 {
            let inst = gen_planted_two_community(12, 8, 0.35, 0.08, seed).unwrap();
            let opts = GreedyOptions::new(3, 0.1, true);
            let (a, ta) = greedy_exact_with(&inst, &opts, &solver).unwrap();
            let (b, tb) = greedy_exact_with(&inst, &opts.lazy(true), &solver).unwrap();
            assert_eq!(a, b, "seed {seed}");
            for (x, y) in ta.steps.iter().zip(&tb.steps) {
                assert_eq!(x.value.to_bits(), y.value.to_bits());
            }
            assert!(tb.evaluations <= ta.evaluations);
        }
    }

    #[test]
    fn exact_trace_strictly_decreases() {
        let inst = gen_planted_two_community(15, 10, 0.3, 0.05, 4).unwrap();
        let (_, trace) = greedy_exact(&inst, 4, 0.5, false).unwrap();
        let mut prev = trace.initial_value.unwrap();
        for s in &trace.steps {
            assert!(s.value < prev);
            prev = s.value;
        }
    }

    #[test]
    fn greedy_plus_rejects_large_epsilon_in_guarantee_mode() {
        let cfg = EstimatorConfig::guarantee(0.1, 0.1, 1);
        assert!(matches!(
            greedy_plus(&path5(), 4, 0.1, &cfg, true),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn greedy_plus_on_complete_bipartite_is_empty() {
        let cfg = EstimatorConfig::experiment(1);
        let (set, trace) = greedy_plus(&complete_bipartite(), 2, 0.1, &cfg, true).unwrap();
        assert!(set.is_empty());
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn greedy_plus_finds_both_ends_of_path5() {
        let inst = path5();
        let hits = (0..20)
            .filter(|&seed| {
                let cfg = EstimatorConfig::guarantee(0.1, 0.1, seed);
                let (set, _) = greedy_plus(&inst, 2, 0.1, &cfg, true).unwrap();
                set.sorted() == vec![0, 4]
            })
            .count();
        assert!(hits >= 19, "{hits}/20");
    }

    #[test]
    fn greedy_plus_is_deterministic() {
        let inst = gen_planted_two_community(20, 10, 0.3, 0.05, 2).unwrap();
        let cfg = EstimatorConfig::experiment(77);
        let a = greedy_plus(&inst, 3, 0.1, &cfg, true).unwrap().0;
        let b = greedy_plus(&inst, 3, 0.1, &cfg, true).unwrap().0;
        assert_eq!(a, b);
    }

    #[test]
    fn brute_force_examples() {
        let (set, v) = brute_force_opt(&path5(), 2, Objective::Avg).unwrap();
        assert_eq!(set.sorted(), vec![0, 4]);
        assert!(close(v, 2.0));
        let (set, v) = brute_force_opt(&path5(), 1, Objective::Max).unwrap();
        assert_eq!(set.endpoints(), &[0]);
        assert!(close(v, 4.0));
        let (set, v) = brute_force_opt(&path5(), 0, Objective::Avg).unwrap();
        assert!(set.is_empty());
        assert!(close(v, 3.5));
    }

    #[test]
    fn brute_force_guard() {
        let inst = gen_planted_two_community(60, 40, 0.2, 0.02, 1).unwrap();
        assert!(matches!(
            brute_force_opt(&inst, 6, Objective::Avg),
            Err(Error::InstanceTooLarge(_))
        ));
    }

    #[test]
    fn multiset_count_matches_enumeration() {
        let items = [1, 2, 3];
        let caps = [2, 1, 3];
        for size in 0..=6 {
            assert_eq!(
                bounded_multiset_count(&caps, size),
                enumerate_multisets(&items, &caps, size).len() as u128
            );
        }
    }

    #[test]
    fn pure_random_examples() {
        for seed in 0..3 {
            let s = pure_random(&path5(), 1, seed);
            assert!(s.endpoints() == [0] || s.endpoints() == [4]);
        }
        assert!(pure_random(&path5(), 0, 1).is_empty());
        assert!(pure_random(&complete_bipartite(), 3, 1).is_empty());
        assert_eq!(pure_random(&path5(), 5, 9).sorted(), vec![0, 4]);
        assert_eq!(pure_random(&path5(), 1, 5), pure_random(&path5(), 1, 5));
    }

    #[test]
    fn top_hitting_examples() {
        assert_eq!(top_hitting_baseline(&path5(), 2).unwrap().sorted(), vec![0, 4]);
        assert_eq!(top_hitting_baseline(&path5(), 1).unwrap().endpoints(), &[0]);
        assert_eq!(top_hitting_baseline(&path5(), 10).unwrap().len(), 2);
        let inst = gen_path(6, &[5]).unwrap();
        assert_eq!(top_hitting_baseline(&inst, 2).unwrap().endpoints(), &[0, 1]);
    }

    #[test]
    fn contraction_inequality_spot_checks() {
        for k in 1..=100u32 {
            for x in [-1.0, -0.5, 0.0, 0.25, 0.5, 1.0] {
                assert!(estimated_greedy_contraction(x, k) <= (2.0 * x - 1.0).exp() * (1.0 + 1e-12));
            }
        }
    }
}
