//! Randomized `(1 ± ε)` estimation of the mean red-to-blue hitting time from
//! bounded-length absorbing random walks.
//!
//! The mean hitting time splits into a truncated part `p1` (walks of at most
//! `ℓ` steps) and a tail `p2`. `p1` is estimated by the empirical mean walk
//! length over `t` walks per red start node; `ℓ` is chosen from the spectral
//! radius `λ` of `D_R^{-1/2} A_R D_R^{-1/2}` so that the tail is at most
//! `ε g`. Truncated walks count as `ℓ` steps.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AugmentedView, BipartiteInstance, Color, RedBlock, ShortcutSet, WalkGraph};
use crate::par;
use crate::rng::stream_rng;

/// Walks per RNG stream. Each `(seed, start node, batch)` triple owns a stream.
const BATCH: usize = 4096;
/// Stream label reserved for choosing the subsampled start nodes.
const SUBSAMPLE_STREAM: u64 = u64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Every red node is a start node and `ε/2` drives both `ℓ` and `t`, so
    /// the estimate is within `(1 ± ε) g` with probability at least `1 - δ`.
    Guarantee,
    /// Heuristic settings: subsampled start nodes, `ε` used as is.
    Experiment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub mode: EstimatorMode,
    pub epsilon: f64,
    pub delta: f64,
    /// Spectral radius bound; computed from the graph when `None`.
    pub lambda: Option<f64>,
    /// Override for `ℓ` (experiment mode only).
    pub walk_length: Option<usize>,
    /// Override for `t` (experiment mode only).
    pub samples_per_node: Option<usize>,
    pub subsample_fraction: f64,
    pub seed: u64,
}

impl EstimatorConfig {
    pub fn guarantee(epsilon: f64, delta: f64, seed: u64) -> Self {
        Self {
            mode: EstimatorMode::Guarantee,
            epsilon,
            delta,
            lambda: None,
            walk_length: None,
            samples_per_node: None,
            subsample_fraction: 1.0,
            seed,
        }
    }

    /// `ε = λ = 0.1`, `δ = 0.1`, a tenth of the red nodes as start nodes.
    pub fn experiment(seed: u64) -> Self {
        Self {
            mode: EstimatorMode::Experiment,
            epsilon: 0.1,
            delta: 0.1,
            lambda: Some(0.1),
            walk_length: None,
            samples_per_node: None,
            subsample_fraction: 0.1,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(self.epsilon) {
            return Err(Error::InvalidParameter(format!("epsilon {} not in (0,1)", self.epsilon)));
        }
        if !open_unit(self.delta) {
            return Err(Error::InvalidParameter(format!("delta {} not in (0,1)", self.delta)));
        }
        if let Some(l) = self.lambda {
            if !(0.0..1.0).contains(&l) {
                return Err(Error::InvalidParameter(format!("lambda {l} not in [0,1)")));
            }
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "subsample fraction {} not in (0,1]",
                self.subsample_fraction
            )));
        }
        if self.walk_length == Some(0) || self.samples_per_node == Some(0) {
            return Err(Error::InvalidParameter("walk length and sample count must be positive".into()));
        }
        if self.mode == EstimatorMode::Guarantee {
            if self.subsample_fraction != 1.0 {
                return Err(Error::InvalidParameter("guarantee mode samples every red node".into()));
            }
            if self.walk_length.is_some() || self.samples_per_node.is_some() {
                return Err(Error::InvalidParameter(
                    "guarantee mode derives walk length and sample count".into(),
                ));
            }
        }
        Ok(())
    }

    /// The relative error fed to the walk-length and sample-count formulas.
    pub fn internal_epsilon(&self) -> f64 {
        match self.mode {
            EstimatorMode::Guarantee => self.epsilon / 2.0,
            EstimatorMode::Experiment => self.epsilon,
        }
    }
}

/// Resolved sampling parameters for one estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WalkPlan {
    pub walk_length: usize,
    pub samples_per_node: usize,
    pub lambda: f64,
    pub mean_red_degree: f64,
    pub start_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub g_hat: f64,
    pub plan: WalkPlan,
    /// `(red node, empirical mean walk length)` for every start node.
    pub node_means: Vec<(usize, f64)>,
}

/// Smallest `ℓ ≥ 1` with `ℓ ≥ log(d_R / (ε (1 - λ))) / log(1/λ) - 1`.
pub fn truncation_length(mean_red_degree: f64, epsilon: f64, lambda: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!("epsilon {epsilon} not in (0,1)")));
    }
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::InvalidParameter(format!("lambda {lambda} not in [0,1)")));
    }
    if mean_red_degree < 1.0 {
        return Err(Error::InvalidParameter(format!("d_R = {mean_red_degree} below 1")));
    }
    if lambda == 0.0 {
        return Ok(1);
    }
    let bound = (mean_red_degree / (epsilon * (1.0 - lambda))).ln() / (1.0 / lambda).ln() - 1.0;
    Ok(ceil_count(bound).max(1))
}

/// `t = ⌈(ℓ² / ε²) ln(2n / δ)⌉`.
pub fn sample_count(walk_length: usize, epsilon: f64, delta: f64, node_count: usize) -> usize {
    let l = walk_length as f64;
    let t = (l * l) / (epsilon * epsilon) * (2.0 * node_count as f64 / delta).ln();
    ceil_count(t).max(1)
}

// ceil that ignores float noise just above an integer
fn ceil_count(x: f64) -> usize {
    if x <= 0.0 {
        return 0;
    }
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        x.ceil() as usize
    }
}

/// Runs one uniform simple random walk on `G + F` from `start`, halting on
/// the first blue node or after `max_steps` edge traversals. Returns the
/// number of traversals.
pub fn bounded_walk<R: Rng + ?Sized>(
    view: &AugmentedView<'_>,
    start: usize,
    max_steps: usize,
    rng: &mut R,
) -> usize {
    let inst = view.instance();
    let mut at = start;
    let mut steps = 0;
    while steps < max_steps && inst.color(at) == Color::Red {
        let d = view.degree(at);
        at = view.neighbor(at, rng.random_range(0..d));
        steps += 1;
    }
    steps
}

/// The same walk on the red block, in red-local indices: a move into the
/// blue set or along a shortcut is an absorbing step.
fn block_walk<R: Rng + ?Sized>(block: &RedBlock<'_>, start: usize, max_steps: usize, rng: &mut R) -> usize {
    let mut at = start;
    let mut steps = 0;
    while steps < max_steps {
        steps += 1;
        let red = &block.adjacency[at];
        let i = rng.random_range(0..block.degree[at]);
        if i >= red.len() {
            break;
        }
        at = red[i];
    }
    steps
}

/// Spectral radius of `D_R^{-1/2} A_R D_R^{-1/2}` for the instance without
/// shortcuts.
pub fn spectral_radius(instance: &BipartiteInstance) -> f64 {
    spectral_radius_of_block(&instance.red_block_unchecked(&ShortcutSet::new()))
}

/// Power iteration on `M²` with Collatz–Wielandt bracketing. Returns the upper
/// end of the bracket once it is within relative `1e-6` of the lower end,
/// capped at `1 - 1e-9`. Zero when `G[R]` has no edges.
pub fn spectral_radius_of_block(block: &RedBlock<'_>) -> f64 {
    const REL_TOL: f64 = 1e-6;
    const MAX_ITER: usize = 20_000;
    const CAP: f64 = 1.0 - 1e-9;

    let active: Vec<usize> = (0..block.len()).filter(|&i| !block.adjacency[i].is_empty()).collect();
    if active.is_empty() {
        return 0.0;
    }
    let inv_sqrt: Vec<f64> = block.degree.iter().map(|&d| 1.0 / (d as f64).sqrt()).collect();
    let apply = |x: &[f64], out: &mut [f64]| {
        for &i in &active {
            let s: f64 = block.adjacency[i].iter().map(|&j| inv_sqrt[j] * x[j]).sum();
            out[i] = inv_sqrt[i] * s;
        }
    };

    let m = block.len();
    let mut x = vec![0.0; m];
    for &i in &active {
        x[i] = (block.degree[i] as f64).sqrt();
    }
    let mut mx = vec![0.0; m];
    let mut y = vec![0.0; m];
    let mut upper = f64::INFINITY;
    for _ in 0..MAX_ITER {
        apply(&x, &mut mx);
        apply(&mx, &mut y);
        let xx: f64 = active.iter().map(|&i| x[i] * x[i]).sum();
        let mm: f64 = active.iter().map(|&i| mx[i] * mx[i]).sum();
        let lower = (mm / xx).sqrt();
        upper = active
            .iter()
            .map(|&i| y[i] / x[i])
            .fold(0.0f64, f64::max)
            .sqrt()
            .min(upper);
        if upper - lower <= REL_TOL * upper {
            break;
        }
        let norm = active.iter().map(|&i| y[i]).fold(0.0f64, f64::max);
        for &i in &active {
            x[i] = y[i] / norm;
        }
    }
    upper.min(CAP)
}

/// Estimates `g(F)`. The spectral radius is computed on `G + F` unless the
/// config supplies one; guarantee mode rejects a supplied bound below the
/// computed radius.
pub fn estimate_g(
    instance: &BipartiteInstance,
    shortcuts: &ShortcutSet,
    config: &EstimatorConfig,
) -> Result<Estimate> {
    config.validate()?;
    let block = instance.red_block(shortcuts)?;
    let lambda = resolve_lambda(&block, config)?;
    estimate_on_block(instance, &block, config, lambda)
}

/// Estimation with a caller-vouched spectral radius bound for `G + F`.
pub(crate) fn estimate_with_lambda(
    instance: &BipartiteInstance,
    shortcuts: &ShortcutSet,
    config: &EstimatorConfig,
    lambda: f64,
) -> Result<Estimate> {
    let block = instance.red_block(shortcuts)?;
    estimate_on_block(instance, &block, config, lambda)
}

fn resolve_lambda(block: &RedBlock<'_>, config: &EstimatorConfig) -> Result<f64> {
    match config.lambda {
        Some(l) if config.mode == EstimatorMode::Guarantee => {
            let computed = spectral_radius_of_block(block);
            if l < computed * (1.0 - 1e-6) {
                return Err(Error::InvalidParameter(format!(
                    "lambda {l} is below the computed spectral radius {computed}"
                )));
            }
            Ok(l)
        }
        Some(l) => Ok(l),
        None => Ok(spectral_radius_of_block(block)),
    }
}

/// The walk length, sample count and start-node count `estimate_g` would
/// use, without running any walks.
pub fn walk_plan(instance: &BipartiteInstance, shortcuts: &ShortcutSet, config: &EstimatorConfig) -> Result<WalkPlan> {
    config.validate()?;
    let block = instance.red_block(shortcuts)?;
    let lambda = resolve_lambda(&block, config)?;
    plan_on_block(instance, &block, config, lambda)
}

fn plan_on_block(
    instance: &BipartiteInstance,
    block: &RedBlock<'_>,
    config: &EstimatorConfig,
    lambda: f64,
) -> Result<WalkPlan> {
    let eps = config.internal_epsilon();
    let mean_red_degree = block.mean_degree();
    let walk_length = match config.walk_length {
        Some(l) => l,
        None => truncation_length(mean_red_degree, eps, lambda)?,
    };
    let samples_per_node = config
        .samples_per_node
        .unwrap_or_else(|| sample_count(walk_length, eps, config.delta, instance.node_count()));
    let red_count = block.len();
    let start_nodes = if config.subsample_fraction >= 1.0 {
        red_count
    } else {
        ((config.subsample_fraction * red_count as f64).ceil() as usize).clamp(1, red_count)
    };
    Ok(WalkPlan {
        walk_length,
        samples_per_node,
        lambda,
        mean_red_degree,
        start_nodes,
    })
}

fn estimate_on_block(
    instance: &BipartiteInstance,
    block: &RedBlock<'_>,
    config: &EstimatorConfig,
    lambda: f64,
) -> Result<Estimate> {
    let plan = plan_on_block(instance, block, config, lambda)?;
    let (walk_length, samples) = (plan.walk_length, plan.samples_per_node);
    let red_count = block.len();
    let starts: Vec<usize> = if plan.start_nodes == red_count {
        (0..red_count).collect()
    } else {
        let mut rng = stream_rng(config.seed, SUBSAMPLE_STREAM);
        let mut picked = index::sample(&mut rng, red_count, plan.start_nodes).into_vec();
        picked.sort_unstable();
        picked
    };

    let batches = samples.div_ceil(BATCH);
    let work: Vec<(usize, usize)> = starts
        .iter()
        .flat_map(|&s| (0..batches).map(move |b| (s, b)))
        .collect();
    let red = instance.red();
    let sums = par::map(&work, |&(s, b)| {
        let trials = BATCH.min(samples - b * BATCH);
        let mut rng = stream_rng(config.seed, ((red[s] as u64) << 24) | b as u64);
        (0..trials)
            .map(|_| block_walk(block, s, walk_length, &mut rng) as u64)
            .sum::<u64>()
    });

    let node_means: Vec<(usize, f64)> = starts
        .iter()
        .zip(sums.chunks(batches))
        .map(|(&s, chunk)| (red[s], chunk.iter().sum::<u64>() as f64 / samples as f64))
        .collect();
    let g_hat = node_means.iter().map(|&(_, m)| m).sum::<f64>() / node_means.len() as f64;
    Ok(Estimate {
        g_hat,
        plan,
        node_means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::hitting_to_blue;
    use crate::graph::tests::path5;
    use crate::graph::augmented_view;
    use crate::rng::stream_rng;

    #[test]
    fn truncation_length_examples() {
        assert_eq!(truncation_length(1.5, 0.1, 0.1).unwrap(), 1);
        assert_eq!(truncation_length(10.0, 0.1, 0.5).unwrap(), 7);
        assert!(truncation_length(2.0, 0.1, 0.999_999).unwrap() > 1000);
        assert!(truncation_length(2.0, 0.1, 1.0).is_err());
        assert_eq!(truncation_length(2.0, 0.1, 0.0).unwrap(), 1);
    }

    #[test]
    fn sample_count_examples() {
        assert_eq!(sample_count(10, 0.1, 0.01, 100), 99035);
        assert_eq!(sample_count(2, 0.5, 0.5, 5), 48);
        // ℓ²/ε² = 1
        assert_eq!(sample_count(1, 0.999_999_999_999, 0.1, 5), (100f64).ln().ceil() as usize);
    }

    #[test]
    fn walk_from_node_next_to_blue_only() {
        let inst = crate::generators::gen_path(3, &[1]).unwrap();
        let view = augmented_view(&inst, &ShortcutSet::new()).unwrap();
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(bounded_walk(&view, 0, 50, &mut rng), 1);
            assert_eq!(bounded_walk(&view, 0, 0, &mut rng), 0);
        }
    }

    #[test]
    fn path5_length_one_walks() {
        let inst = path5();
        let view = augmented_view(&inst, &ShortcutSet::new()).unwrap();
        let mut rng = stream_rng(2, 0);
        for _ in 0..100 {
            assert_eq!(bounded_walk(&view, 1, 1, &mut rng), 1);
        }
    }

    #[test]
    fn spectral_radius_examples() {
        let r = spectral_radius(&path5());
        assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6, "{r}");
        assert!(r >= std::f64::consts::FRAC_1_SQRT_2 * (1.0 - 1e-12));
        use crate::graph::Color::*;
        let star = BipartiteInstance::new(4, &[(0, 1), (0, 2), (0, 3)], vec![Blue, Red, Red, Red]).unwrap();
        assert_eq!(spectral_radius(&star), 0.0);
    }

    #[test]
    fn spectral_radius_matches_dense_eigenvalues() {
        let inst = crate::generators::gen_planted_two_community(15, 10, 0.4, 0.1, 5).unwrap();
        let block = inst.red_block(&ShortcutSet::new()).unwrap();
        let m = block.len();
        let mut mat = nalgebra::DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            for &j in &block.adjacency[i] {
                mat[(i, j)] = 1.0 / ((block.degree[i] * block.degree[j]) as f64).sqrt();
            }
        }
        let eig = mat.symmetric_eigenvalues();
        let want = eig.iter().fold(0.0f64, |a, &e| a.max(e.abs()));
        let got = spectral_radius_of_block(&block);
        assert!(got >= want * (1.0 - 1e-9) && got <= want * (1.0 + 2e-6), "{got} vs {want}");
    }

    #[test]
    fn complete_bipartite_estimate_is_exactly_one() {
        use crate::graph::Color::*;
        let edges = [(0, 2), (0, 3), (1, 2), (1, 3), (0, 1)];
        let inst = BipartiteInstance::new(4, &edges, vec![Red, Red, Blue, Blue]).unwrap();
        let est = estimate_g(&inst, &ShortcutSet::new(), &EstimatorConfig::guarantee(0.2, 0.1, 9)).unwrap();
        assert!(est.g_hat >= 1.0);
        // red-red edge present, so walks may bounce; drop it for the trivial case
        let edges = [(0, 2), (0, 3), (1, 2), (1, 3)];
        let inst = BipartiteInstance::new(4, &edges, vec![Red, Red, Blue, Blue]).unwrap();
        let est = estimate_g(&inst, &ShortcutSet::new(), &EstimatorConfig::guarantee(0.2, 0.1, 9)).unwrap();
        assert_eq!(est.g_hat, 1.0);
        assert_eq!(est.plan.walk_length, 1);
    }

    #[test]
    fn estimate_is_deterministic_per_seed() {
        let inst = path5();
        let cfg = EstimatorConfig::guarantee(0.2, 0.1, 42);
        let a = estimate_g(&inst, &ShortcutSet::new(), &cfg).unwrap();
        let b = estimate_g(&inst, &ShortcutSet::new(), &cfg).unwrap();
        assert_eq!(a.g_hat.to_bits(), b.g_hat.to_bits());
        let c = estimate_g(&inst, &ShortcutSet::new(), &cfg.with_seed(43)).unwrap();
        assert_ne!(a.g_hat.to_bits(), c.g_hat.to_bits());
    }

    #[test]
    fn truncation_only_undercounts() {
        let inst = path5();
        let mut cfg = EstimatorConfig::experiment(5);
        cfg.subsample_fraction = 1.0;
        cfg.walk_length = Some(3);
        cfg.samples_per_node = Some(200_000);
        let est = estimate_g(&inst, &ShortcutSet::new(), &cfg).unwrap();
        // exact p1 for ℓ = 3: nodes 0,4 -> 1 + 1 + 1/2 = 2.5; nodes 1,3 -> 1 + 1/2 + 1/2 = 2
        assert!((est.g_hat - 2.25).abs() < 0.01, "{}", est.g_hat);
        assert!(est.g_hat < 3.5);
    }

    #[test]
    fn guarantee_mode_rejects_small_lambda_override() {
        let mut cfg = EstimatorConfig::guarantee(0.2, 0.1, 1);
        cfg.lambda = Some(0.5);
        assert!(matches!(
            estimate_g(&path5(), &ShortcutSet::new(), &cfg),
            Err(Error::InvalidParameter(_))
        ));
        cfg.lambda = Some(0.8);
        assert!(estimate_g(&path5(), &ShortcutSet::new(), &cfg).is_ok());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = EstimatorConfig::guarantee(0.2, 0.1, 1);
        cfg.subsample_fraction = 0.5;
        assert!(cfg.validate().is_err());
        let mut cfg = EstimatorConfig::experiment(1);
        cfg.epsilon = 1.5;
        assert!(cfg.validate().is_err());
        cfg.epsilon = 0.1;
        cfg.subsample_fraction = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn path5_guarantee_mode_mostly_within_epsilon() {
        let inst = path5();
        let g = hitting_to_blue(&inst, &ShortcutSet::new()).unwrap().mean;
        let hits = (0..20)
            .filter(|&s| {
                let est = estimate_g(&inst, &ShortcutSet::new(), &EstimatorConfig::guarantee(0.1, 0.1, s)).unwrap();
                (3.15..=3.85).contains(&est.g_hat)
            })
            .count();
        assert!(g == 3.5 || (g - 3.5).abs() < 1e-9);
        assert!(hits >= 18, "{hits}/20");
    }

    #[test]
    fn subsampling_picks_ceil_fraction() {
        let inst = crate::generators::gen_planted_two_community(25, 10, 0.3, 0.05, 8).unwrap();
        let cfg = EstimatorConfig::experiment(3);
        let est = estimate_g(&inst, &ShortcutSet::new(), &cfg).unwrap();
        assert_eq!(est.plan.start_nodes, 3);
        assert_eq!(est.node_means.len(), 3);
    }
}
