//! Max-objective pipeline: the hitting-time quasi-metric on `R ∪ {b}`, a
//! fixed-center asymmetric k-center solver, and the shortcut rules built on
//! them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{ExactSolver, Objective};
use crate::graph::{BipartiteInstance, ShortcutSet};
use crate::optimizers::{brute_force_opt, greedy_exact, greedy_plus, BRUTE_FORCE_LIMIT};
use crate::estimator::EstimatorConfig;
use crate::par;

/// Largest red set for which the dense distance table is built.
pub const MAX_QUASI_METRIC_RED: usize = 5000;

/// Distances on the red nodes plus one synthetic point `b` standing for the
/// blue set. Points `0..red_count` follow `instance.red()`; `b` is the last.
#[derive(Clone, Debug)]
pub struct QuasiMetric {
    red: Vec<usize>,
    d: Vec<f64>,
}

impl QuasiMetric {
    pub fn point_count(&self) -> usize {
        self.red.len() + 1
    }

    /// Index of the synthetic blue point.
    pub fn b(&self) -> usize {
        self.red.len()
    }

    /// Graph node behind point `p`, or `None` for `b`.
    pub fn node(&self, p: usize) -> Option<usize> {
        self.red.get(p).copied()
    }

    pub fn d(&self, u: usize, v: usize) -> f64 {
        self.d[u * self.point_count() + v]
    }

    /// Distance from `v` to the nearest of `centers ∪ {b}`.
    pub fn distance_to(&self, v: usize, centers: &[usize]) -> f64 {
        centers
            .iter()
            .map(|&c| self.d(v, c))
            .fold(self.d(v, self.b()), f64::min)
    }

    /// `max_v d(v, centers ∪ {b})`.
    pub fn covering_radius(&self, centers: &[usize]) -> f64 {
        (0..self.point_count())
            .map(|v| self.distance_to(v, centers))
            .fold(0.0, f64::max)
    }

    /// Largest violation `d(x,y) - d(x,z) - d(z,y)` over all triples, or a
    /// non-positive number when the triangle inequality holds.
    pub fn max_triangle_violation(&self) -> f64 {
        let p = self.point_count();
        let rows: Vec<f64> = par::map_range(p, |x| {
            let mut worst = f64::NEG_INFINITY;
            for z in 0..p {
                let dxz = self.d(x, z);
                for y in 0..p {
                    worst = worst.max(self.d(x, y) - dxz - self.d(z, y));
                }
            }
            worst
        });
        rows.into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Builds the table with one exact solve per red target plus one
/// absorbing-into-blue solve.
pub fn build_quasi_metric(instance: &BipartiteInstance) -> Result<QuasiMetric> {
    let red = instance.red().to_vec();
    if red.len() > MAX_QUASI_METRIC_RED {
        return Err(Error::InstanceTooLarge(format!(
            "{} red nodes exceed the quasi-metric limit of {MAX_QUASI_METRIC_RED}",
            red.len()
        )));
    }
    let solver = ExactSolver::default();
    let p = red.len() + 1;
    let b = red.len();
    let columns = par::try_map(&red, |&v| solver.hitting_to_target(instance, v))?;
    let to_blue = solver.hitting_to_blue(instance, &ShortcutSet::new())?;

    let mut d = vec![0.0; p * p];
    for (vp, column) in columns.iter().enumerate() {
        for (up, &u) in red.iter().enumerate() {
            d[up * p + vp] = column[u];
        }
        d[b * p + vp] = instance
            .blue()
            .iter()
            .map(|&i| column[i])
            .fold(0.0, f64::max);
    }
    for up in 0..red.len() {
        d[up * p + b] = to_blue.times[up];
    }
    Ok(QuasiMetric { red, d })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CenterSolution {
    /// Chosen centers as point indices (never `b`).
    pub centers: Vec<usize>,
    pub radius: f64,
}

/// Greedy cover at threshold `r`; `None` if it needs more than `k` centers.
fn greedy_cover(qm: &QuasiMetric, k: usize, r: f64) -> Option<Vec<usize>> {
    let red = qm.b();
    let mut uncovered: Vec<bool> = (0..red).map(|v| qm.d(v, qm.b()) > r).collect();
    let mut remaining = uncovered.iter().filter(|&&u| u).count();
    let mut centers = Vec::new();
    while remaining > 0 {
        if centers.len() == k {
            return None;
        }
        let (best, gain) = (0..red)
            .map(|c| {
                let gain = (0..red).filter(|&v| uncovered[v] && qm.d(v, c) <= r).count();
                (c, gain)
            })
            .fold((0, 0), |acc, x| if x.1 > acc.1 { x } else { acc });
        debug_assert!(gain > 0, "every point covers itself");
        for v in 0..red {
            if uncovered[v] && qm.d(v, best) <= r {
                uncovered[v] = false;
                remaining -= 1;
            }
        }
        centers.push(best);
    }
    Some(centers)
}

/// Fixed-center asymmetric k-center with `b` as the free center: binary
/// search over the distinct distances for the smallest threshold at which the
/// greedy cover needs at most `k` centers. The reported radius is recomputed
/// from the returned centers.
pub fn asym_k_center_fixed(qm: &QuasiMetric, k: usize) -> Result<CenterSolution> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    let mut thresholds: Vec<f64> = qm.d.clone();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    // The largest distance is always feasible: b alone covers everything.
    let (mut lo, mut hi) = (0, thresholds.len() - 1);
    let mut best = greedy_cover(qm, k, thresholds[hi]).expect("b covers all points");
    while lo < hi {
        let mid = (lo + hi) / 2;
        match greedy_cover(qm, k, thresholds[mid]) {
            Some(c) => {
                best = c;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    let radius = qm.covering_radius(&best);
    Ok(CenterSolution { centers: best, radius })
}

/// Exhaustive optimum of the fixed-center problem over center sets of size
/// `min(k, |R|)`.
pub fn exact_k_center(qm: &QuasiMetric, k: usize) -> Result<CenterSolution> {
    let red = qm.b();
    let size = k.min(red);
    let count = binomial(red, size);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(format!("{count} center sets exceed the limit")));
    }
    let mut best = CenterSolution {
        centers: (0..size).collect(),
        radius: f64::INFINITY,
    };
    let mut combo: Vec<usize> = (0..size).collect();
    loop {
        let r = qm.covering_radius(&combo);
        if r < best.radius {
            best = CenterSolution {
                centers: combo.clone(),
                radius: r,
            };
        }
        // next combination in lexicographic order
        let mut i = size;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if combo[i] < red - size + i {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..size {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    (0..k).fold(1u128, |acc, i| acc.saturating_mul((n - i) as u128) / (i as u128 + 1))
}

#[derive(Clone, Debug, Serialize)]
pub struct AsymmOutcome {
    pub shortcuts: ShortcutSet,
    /// Chosen centers as graph node ids.
    pub centers: Vec<usize>,
    pub radius: f64,
    /// Largest degree among the centers, measured before augmentation.
    pub max_center_degree: usize,
}

/// k-center rule for the max objective: every chosen center gets one shortcut
/// unless it is already adjacent to all blue nodes.
pub fn asymm(instance: &BipartiteInstance, k: usize) -> Result<ShortcutSet> {
    Ok(asymm_detailed(instance, k)?.shortcuts)
}

pub fn asymm_detailed(instance: &BipartiteInstance, k: usize) -> Result<AsymmOutcome> {
    let qm = build_quasi_metric(instance)?;
    let solution = asym_k_center_fixed(&qm, k)?;
    let centers: Vec<usize> = solution
        .centers
        .iter()
        .map(|&p| qm.node(p).expect("centers are red points"))
        .collect();
    let shortcuts =
        ShortcutSet::from_endpoints(centers.iter().copied().filter(|&c| instance.capacity(c) > 0));
    Ok(AsymmOutcome {
        shortcuts,
        max_center_degree: instance.max_degree_of(&centers),
        centers,
        radius: solution.radius,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AverageRoute {
    Exact,
    Estimated,
}

/// Runs `k` iterations of greedy on the average objective and returns the
/// resulting set for use under the max objective.
pub fn bmmh_via_bmah(
    instance: &BipartiteInstance,
    k: usize,
    epsilon: f64,
    route: AverageRoute,
    config: &EstimatorConfig,
) -> Result<ShortcutSet> {
    if k == 0 {
        return Ok(ShortcutSet::new());
    }
    match route {
        AverageRoute::Exact => Ok(greedy_exact(instance, k, epsilon, true)?.0),
        AverageRoute::Estimated => Ok(greedy_plus(instance, k, epsilon, config, true)?.0),
    }
}

/// `(C*, M*)`: the exhaustive fixed-center optimum and the exhaustive optimum
/// of the max objective with `k` shortcuts.
pub fn lower_bound_check(instance: &BipartiteInstance, k: usize) -> Result<(f64, f64)> {
    let qm = build_quasi_metric(instance)?;
    let c_star = exact_k_center(&qm, k)?.radius;
    let (_, m_star) = brute_force_opt(instance, k, Objective::Max)?;
    Ok((c_star, m_star))
}

/// `min_C max_v H_G(v, C ∪ B)` over center sets of size `min(k, |R|)`,
/// using the hitting time of the whole set rather than the nearest single
/// center. Only the centers gain shortcuts, so a walk behaves identically in
/// `G` and `G + F` until it first reaches `C ∪ B`; this makes the value a
/// lower bound on the max objective with `k` shortcuts.
pub fn set_hitting_lower_bound(instance: &BipartiteInstance, k: usize) -> Result<f64> {
    let red = instance.red();
    let size = k.min(red.len());
    let count = binomial(red.len(), size);
    if count > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge(format!("{count} center sets exceed the limit")));
    }
    let mut combos = Vec::new();
    let mut combo: Vec<usize> = (0..size).collect();
    'outer: loop {
        combos.push(combo.clone());
        let mut i = size;
        loop {
            if i == 0 {
                break 'outer;
            }
            i -= 1;
            if combo[i] < red.len() - size + i {
                break;
            }
        }
        combo[i] += 1;
        for j in i + 1..size {
            combo[j] = combo[j - 1] + 1;
        }
    }
    let solver = ExactSolver::default();
    let radii = par::try_map(&combos, |c| {
        let mut absorbing: Vec<bool> = (0..instance.node_count()).map(|v| !instance.is_red(v)).collect();
        for &p in c {
            absorbing[red[p]] = true;
        }
        let times = solver.absorbing_times(instance, &absorbing)?;
        Ok::<_, Error>(red.iter().map(|&v| times[v]).fold(0.0, f64::max))
    })?;
    Ok(radii.into_iter().fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::evaluate;
    use crate::generators::{gen_lollipop, gen_path, gen_planted_two_community};
    use crate::graph::tests::path5;
    use crate::graph::Color;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn path3_table() {
        let qm = build_quasi_metric(&gen_path(3, &[2]).unwrap()).unwrap();
        let b = qm.b();
        assert!(close(qm.d(0, 1), 1.0));
        assert!(close(qm.d(1, 0), 3.0));
        assert!(close(qm.d(0, b), 4.0));
        assert!(close(qm.d(1, b), 3.0));
        assert!(close(qm.d(b, 0), 4.0));
        // the walk from the blue end reaches node 1 in one step
        assert!(close(qm.d(b, 1), 1.0));
        assert_eq!(qm.d(b, b), 0.0);
        for p in 0..qm.point_count() {
            assert_eq!(qm.d(p, p), 0.0);
        }
        assert!(qm.max_triangle_violation() <= 1e-7);
    }

    #[test]
    fn path3_center() {
        let qm = build_quasi_metric(&gen_path(3, &[2]).unwrap()).unwrap();
        let sol = asym_k_center_fixed(&qm, 1).unwrap();
        assert_eq!(sol.centers, vec![1]);
        assert!(close(sol.radius, 1.0));
        assert_eq!(exact_k_center(&qm, 1).unwrap().radius, sol.radius);
        assert_eq!(asym_k_center_fixed(&qm, 2).unwrap().radius, 0.0);
        assert!(asym_k_center_fixed(&qm, 0).is_err());
    }

    #[test]
    fn star_hub_is_the_center() {
        use Color::*;
        // red hub 0 with red leaves 1..=4 and one blue leaf 5
        let edges = [(0, 1), (0, 2), (0, 3), (0, 4), (0, 5)];
        let colors = vec![Red, Red, Red, Red, Red, Blue];
        let inst = crate::graph::BipartiteInstance::new(6, &edges, colors).unwrap();
        let qm = build_quasi_metric(&inst).unwrap();
        let hub = 0;
        let sol = asym_k_center_fixed(&qm, 1).unwrap();
        assert_eq!(qm.node(sol.centers[0]), Some(hub));
        assert_eq!(sol.radius, exact_k_center(&qm, 1).unwrap().radius);
    }

    #[test]
    fn path5_picks_the_blue_neighbors() {
        // {1,3} covers the endpoints at distance 1; both are already adjacent
        // to the only blue node, so no edge is added.
        let out = asymm_detailed(&path5(), 2).unwrap();
        assert_eq!(out.centers, vec![1, 3]);
        assert!(close(out.radius, 1.0));
        assert!(out.shortcuts.is_empty());
        assert_eq!(out.max_center_degree, 2);
    }

    #[test]
    fn path3_single_shortcut() {
        let inst = gen_path(3, &[2]).unwrap();
        let set = asymm(&inst, 1).unwrap();
        assert!(set.len() <= 1);
        assert!(evaluate(&inst, &set, Objective::Max).unwrap() <= 4.0);
    }

    #[test]
    fn complete_bipartite_needs_nothing() {
        use Color::*;
        let inst = crate::graph::BipartiteInstance::new(
            4,
            &[(0, 2), (0, 3), (1, 2), (1, 3)],
            vec![Red, Red, Blue, Blue],
        )
        .unwrap();
        assert!(asymm(&inst, 2).unwrap().is_empty());
        assert!(close(evaluate(&inst, &ShortcutSet::new(), Objective::Max).unwrap(), 1.0));
    }

    #[test]
    fn asymm_never_worsens_f() {
        for seed in 0..10 {
            let inst = gen_planted_two_community(20, 10, 0.3, 0.05, seed).unwrap();
            let base = evaluate(&inst, &ShortcutSet::new(), Objective::Max).unwrap();
            for k in 1..=4 {
                let set = asymm(&inst, k).unwrap();
                assert!(set.len() <= k);
                assert!(evaluate(&inst, &set, Objective::Max).unwrap() <= base + 1e-9);
            }
        }
    }

    #[test]
    fn greedy_route_examples() {
        let cfg = EstimatorConfig::experiment(1);
        let set = bmmh_via_bmah(&path5(), 2, 0.1, AverageRoute::Exact, &cfg).unwrap();
        assert_eq!(set.sorted(), vec![0, 4]);
        assert!(close(evaluate(&path5(), &set, Objective::Max).unwrap(), 2.0));
        assert!(bmmh_via_bmah(&path5(), 0, 0.1, AverageRoute::Exact, &cfg).unwrap().is_empty());

        let lolli = gen_lollipop(6, 4).unwrap();
        let before = evaluate(&lolli, &ShortcutSet::new(), Objective::Max).unwrap();
        let set = bmmh_via_bmah(&lolli, 1, 0.1, AverageRoute::Exact, &cfg).unwrap();
        assert!(evaluate(&lolli, &set, Objective::Max).unwrap() < before);
    }

    #[test]
    fn lower_bound_examples() {
        let (c, m) = lower_bound_check(&path5(), 1).unwrap();
        assert!(close(m, 4.0));
        assert!(c <= m + 1e-9);
        let (c, m) = lower_bound_check(&path5(), 2).unwrap();
        assert!(close(m, 2.0));
        assert!(c <= 2.0 + 1e-9);
        let (c, _) = lower_bound_check(&path5(), 4).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn greedy_cover_matches_exact_on_small_instances() {
        // not a guarantee, just a measured sanity band for the heuristic
        for seed in 0..10 {
            let inst = gen_planted_two_community(8, 4, 0.5, 0.1, seed).unwrap();
            let qm = build_quasi_metric(&inst).unwrap();
            for k in 1..=3 {
                let h = asym_k_center_fixed(&qm, k).unwrap();
                let e = exact_k_center(&qm, k).unwrap();
                assert!(h.centers.len() <= k);
                assert!(close(h.radius, qm.covering_radius(&h.centers)));
                assert!(e.radius <= h.radius + 1e-9);
                assert!(h.radius <= 4.0 * e.radius + 1e-9, "seed {seed} k {k}");
            }
        }
    }

    #[test]
    fn nearest_center_bound_can_exceed_the_optimum() {
        use Color::*;
        // red 0..=3, blue 4, 5; a single shortcut at node 1 brings f to 3,
        // while every single center leaves some point at distance 3.25
        let edges = [
            (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (1, 2), (1, 3), (1, 4),
            (2, 3), (2, 5), (3, 4), (3, 5), (4, 5),
        ];
        let colors = vec![Red, Red, Red, Red, Blue, Blue];
        let inst = crate::graph::BipartiteInstance::new(6, &edges, colors).unwrap();
        let (c, m) = lower_bound_check(&inst, 1).unwrap();
        assert!(close(c, 3.25));
        assert!(close(m, 3.0));
        assert!(set_hitting_lower_bound(&inst, 1).unwrap() <= m + 1e-9);
    }

    #[test]
    fn set_hitting_bound_on_path5() {
        assert!(close(set_hitting_lower_bound(&path5(), 1).unwrap(), 4.0));
        assert!(set_hitting_lower_bound(&path5(), 2).unwrap() <= 2.0 + 1e-9);
        assert_eq!(set_hitting_lower_bound(&path5(), 4).unwrap(), 0.0);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(40, 0), 1);
        assert_eq!(binomial(10, 10), 1);
    }
}
