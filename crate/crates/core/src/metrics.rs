//! Behavior characterizations and kernel distances between trajectories.
//!
//! A trajectory is characterized by the sequence of positions it visits and is
//! treated as a uniform empirical distribution over those points. Distances
//! between trajectories are squared maximum mean discrepancies (MMD²) under a
//! Gaussian RBF kernel, estimated with the biased V-statistic so that the
//! estimate is never negative.

use crate::error::{Error, Result};
use crate::memory::GuidanceMemory;
use crate::trajectory::Trajectory;

/// Positions visited by a trajectory, stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorTrace {
    dim: usize,
    coords: Vec<f64>,
}

impl BehaviorTrace {
    /// Builds a trace from a list of points of equal, nonzero dimension.
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(Error::Empty("behavior trace"))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::MalformedTrajectory("point of dimension 0".into()));
        }
        let mut coords = Vec::with_capacity(dim * points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::MalformedTrajectory(format!(
                    "point {i} has dimension {}, expected {dim}",
                    p.len()
                )));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Keeps at most `max_points` points at evenly spaced indices, always
    /// including the first and the last point.
    pub fn subsampled(&self, max_points: usize) -> BehaviorTrace {
        let n = self.len();
        if n <= max_points || max_points == 0 {
            return self.clone();
        }
        let mut coords = Vec::with_capacity(max_points * self.dim);
        if max_points == 1 {
            coords.extend_from_slice(self.point(n - 1));
        } else {
            for i in 0..max_points {
                // Integer arithmetic keeps the index choice platform-independent.
                let idx = (i * (n - 1) + (max_points - 1) / 2) / (max_points - 1);
                coords.extend_from_slice(self.point(idx));
            }
        }
        BehaviorTrace {
            dim: self.dim,
            coords,
        }
    }
}

/// The behavior characterization of a trajectory: its per-step positions.
pub fn behavior_characterization(traj: &Trajectory) -> Result<BehaviorTrace> {
    if traj.is_empty() {
        return Err(Error::MalformedTrajectory("trajectory has no steps".into()));
    }
    let dim = traj.steps[0].position.len();
    let mut coords = Vec::with_capacity(dim * traj.len());
    for (t, step) in traj.steps.iter().enumerate() {
        if step.position.is_empty() {
            return Err(Error::MalformedTrajectory(format!(
                "step {t} carries no position"
            )));
        }
        if step.position.len() != dim {
            return Err(Error::MalformedTrajectory(format!(
                "step {t} position has dimension {}, expected {dim}",
                step.position.len()
            )));
        }
        coords.extend_from_slice(&step.position);
    }
    Ok(BehaviorTrace { dim, coords })
}

/// How the RBF bandwidth is chosen for a distance evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Median pairwise distance over the union of both point sets.
    MedianHeuristic,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    /// Traces longer than this are subsampled before distances are taken.
    pub max_points: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
            max_points: 200,
        }
    }
}

impl KernelConfig {
    pub fn fixed(h: f64) -> Self {
        Self {
            bandwidth: Bandwidth::Fixed(h),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "fixed bandwidth must be positive, got {h}"
                )));
            }
        }
        if self.max_points == 0 {
            return Err(Error::InvalidArgument("max_points must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Gaussian RBF kernel `exp(-|x - y|² / (2h²))`.
pub fn rbf_kernel(x: &[f64], y: &[f64], h: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "bandwidth must be positive, got {h}"
        )));
    }
    Ok((-sq_dist(x, y) / (2.0 * h * h)).exp())
}

/// Median of all pairwise Euclidean distances in `X ∪ Y` (as a multiset).
/// Falls back to 1.0 when the median is zero.
pub fn median_heuristic_bandwidth(x: &BehaviorTrace, y: Option<&BehaviorTrace>) -> Result<f64> {
    let mut pts: Vec<&[f64]> = x.points().collect();
    if let Some(y) = y {
        if y.dim != x.dim {
            return Err(Error::DimensionMismatch {
                expected: x.dim,
                got: y.dim,
            });
        }
        pts.extend(y.points());
    }
    let n = pts.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "median heuristic needs at least two points".into(),
        ));
    }
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(sq_dist(pts[i], pts[j]));
        }
    }
    let m = d2.len();
    let upper = {
        let (_, v, _) = d2.select_nth_unstable_by(m / 2, f64::total_cmp);
        v.sqrt()
    };
    let median = if m % 2 == 1 {
        upper
    } else {
        let lower = d2[..m / 2]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .sqrt();
        0.5 * (lower + upper)
    };
    Ok(if median > 0.0 { median } else { 1.0 })
}

fn kernel_mean(a: &BehaviorTrace, b: &BehaviorTrace, gamma: f64) -> f64 {
    let mut sum = 0.0;
    for p in a.points() {
        for q in b.points() {
            sum += (-gamma * sq_dist(p, q)).exp();
        }
    }
    sum / (a.len() * b.len()) as f64
}

// Within-set mean using symmetry: diagonal terms are exactly 1.
fn kernel_self_mean(a: &BehaviorTrace, gamma: f64) -> f64 {
    let n = a.len();
    let mut off = 0.0;
    for i in 0..n {
        let p = a.point(i);
        for j in (i + 1)..n {
            off += (-gamma * sq_dist(p, a.point(j))).exp();
        }
    }
    (n as f64 + 2.0 * off) / (n * n) as f64
}

/// Biased (V-statistic) estimate of MMD² between two point sets.
pub fn mmd_squared(x: &BehaviorTrace, y: &BehaviorTrace, cfg: &KernelConfig) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Empty("mmd point set"));
    }
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch {
            expected: x.dim,
            got: y.dim,
        });
    }
    let h = match cfg.bandwidth {
        Bandwidth::Fixed(h) => {
            if !(h > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
            h
        }
        Bandwidth::MedianHeuristic => {
            if x.len() + y.len() < 2 {
                1.0
            } else {
                median_heuristic_bandwidth(x, Some(y))?
            }
        }
    };
    let gamma = 1.0 / (2.0 * h * h);
    let v = kernel_self_mean(x, gamma) - 2.0 * kernel_mean(x, y, gamma) + kernel_self_mean(y, gamma);
    Ok(v.max(0.0))
}

/// MMD² between two traces after subsampling each to `cfg.max_points`.
pub fn trace_distance(a: &BehaviorTrace, b: &BehaviorTrace, cfg: &KernelConfig) -> Result<f64> {
    if a.len() > cfg.max_points || b.len() > cfg.max_points {
        mmd_squared(
            &a.subsampled(cfg.max_points),
            &b.subsampled(cfg.max_points),
            cfg,
        )
    } else {
        mmd_squared(a, b, cfg)
    }
}

/// Distance between two trajectories: MMD² of their behavior traces.
pub fn traj_distance(a: &Trajectory, b: &Trajectory, cfg: &KernelConfig) -> Result<f64> {
    trace_distance(
        &behavior_characterization(a)?,
        &behavior_characterization(b)?,
        cfg,
    )
}

/// Minimum distance from `trace` to any memory entry, with the argmin index.
/// An empty memory yields `(0, None)`.
pub fn dist_to_memory(
    trace: &BehaviorTrace,
    memory: &GuidanceMemory,
    cfg: &KernelConfig,
) -> Result<(f64, Option<usize>)> {
    let mut best: Option<(f64, usize)> = None;
    for (i, entry) in memory.entries().iter().enumerate() {
        let d = trace_distance(trace, entry.trace(), cfg)?;
        if best.map_or(true, |(b, _)| d < b) {
            best = Some((d, i));
        }
    }
    Ok(match best {
        Some((d, i)) => (d, Some(i)),
        None => (0.0, None),
    })
}

/// Distance to memory clipped to zero inside the tolerance `delta`.
pub fn hinge(distance: f64, delta: f64) -> f64 {
    if distance <= delta {
        0.0
    } else {
        distance
    }
}

pub fn hinge_distance(
    trace: &BehaviorTrace,
    memory: &GuidanceMemory,
    delta: f64,
    cfg: &KernelConfig,
) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "guidance tolerance must be positive, got {delta}"
        )));
    }
    Ok(hinge(dist_to_memory(trace, memory, cfg)?.0, delta))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentDiversity {
    pub agent: usize,
    pub min_peer_distance: f64,
    pub argmin_peer: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub team_value: f64,
    pub per_agent: Vec<AgentDiversity>,
}

/// Mean distance from each trace of `batch` to `reference`.
pub fn mean_distance_to(
    batch: &[BehaviorTrace],
    reference: &BehaviorTrace,
    cfg: &KernelConfig,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("rollout batch"));
    }
    let mut sum = 0.0;
    for t in batch {
        sum += trace_distance(t, reference, cfg)?;
    }
    Ok(sum / batch.len() as f64)
}

/// Team diversity: for each agent the smallest mean distance from its rollouts
/// to another agent's reference trajectory, averaged over agents.
pub fn team_diversity_traces(
    rollouts: &[Vec<BehaviorTrace>],
    references: &[BehaviorTrace],
    cfg: &KernelConfig,
) -> Result<DiversityReport> {
    let k = rollouts.len();
    if k == 0 {
        return Err(Error::Empty("agent team"));
    }
    if references.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: references.len(),
        });
    }
    let mut per_agent = Vec::with_capacity(k);
    for (i, batch) in rollouts.iter().enumerate() {
        if batch.is_empty() {
            return Err(Error::Empty("rollout batch"));
        }
        let mut best: Option<(f64, usize)> = None;
        for (j, reference) in references.iter().enumerate() {
            if j == i {
                continue;
            }
            let d = mean_distance_to(batch, reference, cfg)?;
            if best.map_or(true, |(b, _)| d < b) {
                best = Some((d, j));
            }
        }
        per_agent.push(AgentDiversity {
            agent: i,
            min_peer_distance: best.map_or(0.0, |b| b.0),
            argmin_peer: best.map(|b| b.1),
        });
    }
    let team_value = per_agent.iter().map(|a| a.min_peer_distance).sum::<f64>() / k as f64;
    Ok(DiversityReport {
        team_value,
        per_agent,
    })
}

pub fn team_diversity(
    rollouts: &[&[Trajectory]],
    references: &[Trajectory],
    cfg: &KernelConfig,
) -> Result<DiversityReport> {
    let traces = rollouts
        .iter()
        .map(|batch| batch.iter().map(behavior_characterization).collect())
        .collect::<Result<Vec<Vec<_>>>>()?;
    let refs = references
        .iter()
        .map(behavior_characterization)
        .collect::<Result<Vec<_>>>()?;
    team_diversity_traces(&traces, &refs, cfg)
}
