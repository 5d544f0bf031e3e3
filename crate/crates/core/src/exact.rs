//! Exact expected hitting times from absorbing-chain linear systems.
//!
//! For a transient set `T` with absorbing complement, expected absorption
//! times satisfy `(I - Q) h = 1`. Multiplying row `i` by the degree `d_i`
//! gives the symmetric positive definite system
//!
//! ```text
//!     d_i h_i - sum_{j in N(i) ∩ T} h_j = d_i
//! ```
//!
//! which is solved by dense Cholesky below a size threshold and by
//! Jacobi-preconditioned conjugate gradients above it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BipartiteInstance, RedBlock, ShortcutSet, WalkGraph};

pub const DEFAULT_DENSE_THRESHOLD: usize = 4000;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// `g`: mean red-to-blue hitting time.
    #[serde(alias = "average")]
    Avg,
    /// `f`: max red-to-blue hitting time.
    #[serde(alias = "maximum")]
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Systems with fewer unknowns than this are factorized densely.
    pub dense_threshold: usize,
    /// Bound on `||(I - Q) h - 1||_inf`, scaled by `max(1, ||h||_inf)`.
    pub tolerance: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dense_threshold: DEFAULT_DENSE_THRESHOLD,
            tolerance: DEFAULT_TOLERANCE,
        }
    }
}

/// Expected hitting times from every red node to the blue set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HittingProfile {
    /// Indexed by red position (see [`BipartiteInstance::red`]).
    pub times: Vec<f64>,
    /// `g`
    pub mean: f64,
    /// `f`
    pub max: f64,
}

impl HittingProfile {
    /// Wraps raw hitting times, enforcing `h >= 1`, `h <= n^3` and
    /// `g <= f <= 2 |R|^{3/4} g`.
    pub fn new(times: Vec<f64>, node_count: usize) -> Result<Self> {
        assert!(!times.is_empty());
        let r = times.len() as f64;
        let mean = times.iter().sum::<f64>() / r;
        let max = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = times.iter().copied().fold(f64::INFINITY, f64::min);
        let slack = 1e-9;
        if min < 1.0 - slack {
            return Err(Error::InvariantViolation(format!(
                "hitting time {min} below one step"
            )));
        }
        let cube = (node_count as f64).powi(3);
        if max > cube * (1.0 + slack) {
            return Err(Error::InvariantViolation(format!(
                "hitting time {max} exceeds n^3 = {cube}"
            )));
        }
        let bound = ratio_bound(times.len()) * mean;
        if max > bound * (1.0 + slack) {
            return Err(Error::InvariantViolation(format!(
                "max hitting time {max} exceeds 2|R|^(3/4) * mean = {bound}"
            )));
        }
        Ok(Self { times, mean, max })
    }

    pub fn value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Avg => self.mean,
            Objective::Max => self.max,
        }
    }

    pub fn time_of(&self, instance: &BipartiteInstance, r: usize) -> Option<f64> {
        instance.red_position(r).map(|p| self.times[p])
    }
}

/// `2 |R|^{3/4}`, the worst-case ratio between max and mean hitting time.
pub fn ratio_bound(red_count: usize) -> f64 {
    2.0 * (red_count as f64).powf(0.75)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExactSolver {
    pub options: SolverOptions,
}

impl ExactSolver {
    pub fn new(options: SolverOptions) -> Self {
        Self { options }
    }

    pub fn hitting_to_blue(
        &self,
        instance: &BipartiteInstance,
        shortcuts: &ShortcutSet,
    ) -> Result<HittingProfile> {
        let block = instance.red_block(shortcuts)?;
        let times = self.red_block_times(&block)?;
        HittingProfile::new(times, instance.node_count())
    }

    /// Raw hitting times for a red block, without profile invariants.
    pub fn red_block_times(&self, block: &RedBlock<'_>) -> Result<Vec<f64>> {
        let degree: Vec<f64> = block.degree.iter().map(|&d| d as f64).collect();
        self.solve_grounded(&degree, block.adjacency)
    }

    pub fn evaluate(
        &self,
        instance: &BipartiteInstance,
        shortcuts: &ShortcutSet,
        objective: Objective,
    ) -> Result<f64> {
        Ok(self.hitting_to_blue(instance, shortcuts)?.value(objective))
    }

    /// `H(u, target)` for every node `u`; the entry for `target` itself is 0.
    pub fn hitting_to_target<G: WalkGraph>(&self, graph: &G, target: usize) -> Result<Vec<f64>> {
        let mut absorbing = vec![false; graph.node_count()];
        absorbing[target] = true;
        self.absorbing_times(graph, &absorbing)
    }

    /// Expected absorption time into the marked set from every node (0 on
    /// absorbing nodes). Every node must reach the absorbing set.
    pub fn absorbing_times<G: WalkGraph>(&self, graph: &G, absorbing: &[bool]) -> Result<Vec<f64>> {
        let n = graph.node_count();
        assert_eq!(absorbing.len(), n);
        let mut local = vec![usize::MAX; n];
        let transient: Vec<usize> = (0..n).filter(|&v| !absorbing[v]).collect();
        for (i, &v) in transient.iter().enumerate() {
            local[v] = i;
        }
        let degree: Vec<f64> = transient.iter().map(|&v| graph.degree(v) as f64).collect();
        let adjacency: Vec<Vec<usize>> = transient
            .iter()
            .map(|&v| {
                (0..graph.degree(v))
                    .map(|i| graph.neighbor(v, i))
                    .filter(|&w| !absorbing[w])
                    .map(|w| local[w])
                    .collect()
            })
            .collect();
        let times = self.solve_grounded(&degree, &adjacency)?;
        let mut out = vec![0.0; n];
        for (i, &v) in transient.iter().enumerate() {
            out[v] = times[i];
        }
        Ok(out)
    }

    fn solve_grounded(&self, degree: &[f64], adjacency: &[Vec<usize>]) -> Result<Vec<f64>> {
        let m = degree.len();
        if m == 0 {
            return Ok(Vec::new());
        }
        let system = Grounded { degree, adjacency };
        let h = if m < self.options.dense_threshold {
            system.solve_dense()?
        } else {
            let tol = self.options.tolerance;
            let first = system.conjugate_gradient(vec![0.0; m], tol);
            // one restart from the CG iterate to shed accumulated drift
            system.conjugate_gradient(first, tol)
        };
        let residual = system.scaled_residual(&h);
        let scale = h.iter().fold(1.0f64, |a, &x| a.max(x.abs()));
        let tolerance = self.options.tolerance * scale;
        if residual.is_finite() && residual <= tolerance {
            Ok(h)
        } else {
            Err(Error::SolverFailure { residual, tolerance })
        }
    }
}

struct Grounded<'a> {
    degree: &'a [f64],
    adjacency: &'a [Vec<usize>],
}

impl Grounded<'_> {
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self.adjacency[i].iter().map(|&j| x[j]).sum();
            *o = self.degree[i] * x[i] - s;
        }
    }

    /// `max_i |(L h - d)_i| / d_i`, i.e. `||(I - Q) h - 1||_inf`.
    fn scaled_residual(&self, h: &[f64]) -> f64 {
        let mut lh = vec![0.0; h.len()];
        self.apply(h, &mut lh);
        lh.iter()
            .zip(self.degree)
            .map(|(&v, &d)| ((v - d) / d).abs())
            .fold(0.0, f64::max)
    }

    fn solve_dense(&self) -> Result<Vec<f64>> {
        let m = self.degree.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            a[(i, i)] = self.degree[i];
            for &j in &self.adjacency[i] {
                a[(i, j)] -= 1.0;
            }
        }
        let chol = a.cholesky().ok_or(Error::SolverFailure {
            residual: f64::INFINITY,
            tolerance: 0.0,
        })?;
        let rhs = DVector::from_column_slice(self.degree);
        let mut h = chol.solve(&rhs);
        // one step of iterative refinement
        let mut lh = vec![0.0; m];
        self.apply(h.as_slice(), &mut lh);
        let r = DVector::from_iterator(m, (0..m).map(|i| self.degree[i] - lh[i]));
        h += chol.solve(&r);
        Ok(h.data.into())
    }

    fn conjugate_gradient(&self, mut x: Vec<f64>, tol: f64) -> Vec<f64> {
        let m = self.degree.len();
        let max_iter = 20 * m + 1000;
        let mut ax = vec![0.0; m];
        self.apply(&x, &mut ax);
        let mut r: Vec<f64> = (0..m).map(|i| self.degree[i] - ax[i]).collect();
        let mut z: Vec<f64> = (0..m).map(|i| r[i] / self.degree[i]).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; m];
        for _ in 0..max_iter {
            let scale = x.iter().fold(1.0f64, |a, &v| a.max(v.abs()));
            let res = (0..m).map(|i| (r[i] / self.degree[i]).abs()).fold(0.0, f64::max);
            if res <= 0.25 * tol * scale {
                break;
            }
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..m {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
                z[i] = r[i] / self.degree[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..m {
                p[i] = z[i] + beta * p[i];
            }
        }
        x
    }
}

pub fn hitting_to_blue(instance: &BipartiteInstance, shortcuts: &ShortcutSet) -> Result<HittingProfile> {
    ExactSolver::default().hitting_to_blue(instance, shortcuts)
}

pub fn hitting_to_target<G: WalkGraph>(graph: &G, target: usize) -> Result<Vec<f64>> {
    ExactSolver::default().hitting_to_target(graph, target)
}

pub fn evaluate(
    instance: &BipartiteInstance,
    shortcuts: &ShortcutSet,
    objective: Objective,
) -> Result<f64> {
    ExactSolver::default().evaluate(instance, shortcuts, objective)
}
