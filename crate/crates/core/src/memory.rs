//! Per-agent guidance memory: a bounded, ranked store of past trajectories
//! whose terminal positions fall in one region of the environment.

use std::cmp::Ordering;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{behavior_characterization, BehaviorTrace, KernelConfig};
use crate::trajectory::Trajectory;

/// Terminal position of a trajectory.
pub fn embed(traj: &Trajectory) -> Result<Vec<f64>> {
    traj.terminal_position()
        .map(<[f64]>::to_vec)
        .ok_or(Error::Empty("trajectory"))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn is_similar(e1: &[f64], e2: &[f64], radius: f64) -> Result<bool> {
    if e1.len() != e2.len() {
        return Err(Error::DimensionMismatch {
            expected: e1.len(),
            got: e2.len(),
        });
    }
    Ok(euclid(e1, e2) <= radius)
}

/// Quality of a memory entry. Higher return wins, then fewer steps, then a
/// terminal position closer to the goal (when the goal is known).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankingKey {
    pub ret: f64,
    pub steps: usize,
    pub goal_distance: f64,
}

impl RankingKey {
    /// `Greater` means `self` is the better entry.
    pub fn quality_cmp(&self, other: &Self) -> Ordering {
        self.ret
            .total_cmp(&other.ret)
            .then_with(|| other.steps.cmp(&self.steps))
            .then_with(|| other.goal_distance.total_cmp(&self.goal_distance))
    }

    pub fn is_better_than(&self, other: &Self) -> bool {
        self.quality_cmp(other) == Ordering::Greater
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryEntry {
    traj: Trajectory,
    trace: BehaviorTrace,
    embedding: Vec<f64>,
    steps: usize,
    ret: f64,
}

impl MemoryEntry {
    pub fn new(traj: Trajectory, cfg: &KernelConfig) -> Result<Self> {
        let embedding = embed(&traj)?;
        let trace = behavior_characterization(&traj)?.subsampled(cfg.max_points);
        Ok(Self {
            steps: traj.len(),
            ret: traj.ret(),
            embedding,
            trace,
            traj,
        })
    }

    pub fn traj(&self) -> &Trajectory {
        &self.traj
    }

    /// Behavior trace, already subsampled to the kernel's point budget.
    pub fn trace(&self) -> &BehaviorTrace {
        &self.trace
    }

    pub fn embedding(&self) -> &[f64] {
        &self.embedding
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn ret(&self) -> f64 {
        self.ret
    }
}

pub fn ranking_key(entry: &MemoryEntry, goal: Option<&[f64]>) -> RankingKey {
    RankingKey {
        ret: entry.ret,
        steps: entry.steps,
        goal_distance: goal.map_or(0.0, |g| euclid(&entry.embedding, g)),
    }
}

/// Result of offering a trajectory to a memory.
///
/// When an admission changes the best entry, the anchor moves to the best
/// entry's embedding and entries farther than the radius from it are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    AdmittedNew,
    /// The previous worst entry (at this index) was evicted.
    ReplacedWorst(usize),
    /// A dissimilar trajectory with a higher return than every stored entry
    /// moved the memory to its region; `evicted` entries fell outside it.
    Reanchored { evicted: usize },
    RejectedDissimilar,
    RejectedWorse,
    /// The memory has zero capacity.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemoryConfig {
    pub capacity: usize,
    pub similarity_radius: f64,
    /// Follow strictly higher-return trajectories into a new region instead of
    /// rejecting them as dissimilar.
    pub reanchor_on_improvement: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceMemory {
    entries: Vec<MemoryEntry>,
    capacity: usize,
    anchor: Option<Vec<f64>>,
    similarity_radius: f64,
    goal: Option<Vec<f64>>,
    reanchor_on_improvement: bool,
}

impl GuidanceMemory {
    pub fn new(cfg: MemoryConfig, goal: Option<Vec<f64>>) -> Self {
        Self {
            entries: Vec::with_capacity(cfg.capacity),
            capacity: cfg.capacity,
            anchor: None,
            similarity_radius: cfg.similarity_radius,
            goal,
            reanchor_on_improvement: cfg.reanchor_on_improvement,
        }
    }

    pub fn entries(&self) -> &[MemoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    pub fn similarity_radius(&self) -> f64 {
        self.similarity_radius
    }

    pub fn goal(&self) -> Option<&[f64]> {
        self.goal.as_deref()
    }

    pub fn key_of(&self, entry: &MemoryEntry) -> RankingKey {
        ranking_key(entry, self.goal.as_deref())
    }

    /// Ranking keys of the stored entries, best first.
    pub fn keys(&self) -> Vec<RankingKey> {
        self.entries.iter().map(|e| self.key_of(e)).collect()
    }

    fn insert_sorted(&mut self, entry: MemoryEntry) {
        let key = self.key_of(&entry);
        // Ties go after existing entries so earlier admissions keep their rank.
        let pos = self
            .entries
            .iter()
            .position(|e| key.is_better_than(&self.key_of(e)))
            .unwrap_or(self.entries.len());
        self.entries.insert(pos, entry);
    }

    /// Offers a trajectory to the memory.
    pub fn try_admit(&mut self, traj: &Trajectory, cfg: &KernelConfig) -> Result<Admission> {
        if self.capacity == 0 {
            return Ok(Admission::Disabled);
        }
        let entry = MemoryEntry::new(traj.clone(), cfg)?;
        let Some(anchor) = self.anchor.as_deref() else {
            self.anchor = Some(entry.embedding.clone());
            self.insert_sorted(entry);
            return Ok(Admission::AdmittedNew);
        };
        if !is_similar(&entry.embedding, anchor, self.similarity_radius)? {
            let best_ret = self.entries.first().map_or(f64::NEG_INFINITY, |e| e.ret);
            if self.reanchor_on_improvement && entry.ret > best_ret {
                let evicted = self.move_anchor(entry.embedding.clone());
                self.insert_sorted(entry);
                let mut evicted_total = evicted;
                if self.entries.len() > self.capacity {
                    self.entries.truncate(self.capacity);
                    evicted_total += 1;
                }
                return Ok(Admission::Reanchored {
                    evicted: evicted_total,
                });
            }
            return Ok(Admission::RejectedDissimilar);
        }
        let outcome = if self.entries.len() < self.capacity {
            Admission::AdmittedNew
        } else {
            let worst = self.entries.len() - 1;
            if !self.key_of(&entry).is_better_than(&self.key_of(&self.entries[worst])) {
                return Ok(Admission::RejectedWorse);
            }
            self.entries.pop();
            Admission::ReplacedWorst(worst)
        };
        self.insert_sorted(entry);
        let best = self.entries[0].embedding.clone();
        if self.anchor.as_deref() != Some(&best[..]) {
            self.move_anchor(best);
        }
        Ok(outcome)
    }

    /// Re-centres the memory on `anchor`, dropping entries outside the
    /// similarity radius. Returns how many were dropped.
    fn move_anchor(&mut self, anchor: Vec<f64>) -> usize {
        let before = self.entries.len();
        let radius = self.similarity_radius;
        self.entries.retain(|e| euclid(&e.embedding, &anchor) <= radius);
        self.anchor = Some(anchor);
        before - self.entries.len()
    }

    /// Plain-text snapshot, one `entry` line per stored trajectory.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# guidance memory: entry <return> <steps> <embedding> <positions...>");
        let _ = writeln!(out, "capacity {}", self.capacity);
        let _ = writeln!(out, "radius {}", self.similarity_radius);
        let _ = writeln!(out, "reanchor {}", self.reanchor_on_improvement);
        if let Some(g) = &self.goal {
            let _ = writeln!(out, "goal {}", join_point(g));
        }
        if let Some(a) = &self.anchor {
            let _ = writeln!(out, "anchor {}", join_point(a));
        }
        for e in &self.entries {
            let _ = write!(out, "entry {} {} {}", e.ret, e.steps, join_point(&e.embedding));
            for s in &e.traj.steps {
                let _ = write!(out, " {}", join_point(&s.position));
            }
            out.push('\n');
        }
        out
    }

    /// Reads a snapshot produced by [`GuidanceMemory::to_text`]. Restored
    /// entries carry positions and return only.
    pub fn from_text(text: &str, cfg: &KernelConfig) -> Result<Self> {
        let mut capacity = None;
        let mut radius = None;
        let mut reanchor = false;
        let mut goal = None;
        let mut anchor = None;
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |msg: &str| Error::Config {
                line: i + 1,
                msg: msg.to_string(),
            };
            let mut parts = line.split_whitespace();
            let tag = parts.next().unwrap_or_default();
            match tag {
                "capacity" => {
                    capacity = Some(parse_field::<usize>(parts.next()).ok_or_else(|| bad("bad capacity"))?)
                }
                "radius" => {
                    radius = Some(parse_field::<f64>(parts.next()).ok_or_else(|| bad("bad radius"))?)
                }
                "reanchor" => {
                    reanchor = parse_field::<bool>(parts.next()).ok_or_else(|| bad("bad reanchor flag"))?
                }
                "goal" => goal = Some(parse_point(parts.next()).ok_or_else(|| bad("bad goal"))?),
                "anchor" => {
                    anchor = Some(parse_point(parts.next()).ok_or_else(|| bad("bad anchor"))?)
                }
                "entry" => {
                    let ret: f64 = parse_field(parts.next()).ok_or_else(|| bad("bad return"))?;
                    let steps: usize = parse_field(parts.next()).ok_or_else(|| bad("bad steps"))?;
                    let _embedding = parse_point(parts.next()).ok_or_else(|| bad("bad embedding"))?;
                    let positions = parts
                        .map(|p| parse_point(Some(p)))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| bad("bad position"))?;
                    if positions.len() != steps {
                        return Err(bad("step count does not match positions"));
                    }
                    entries.push(MemoryEntry::new(Trajectory::from_positions(positions, ret), cfg)?);
                }
                other => return Err(bad(&format!("unknown record `{other}`"))),
            }
        }
        let capacity = capacity.ok_or(Error::Config {
            line: 0,
            msg: "missing capacity".into(),
        })?;
        let similarity_radius = radius.ok_or(Error::Config {
            line: 0,
            msg: "missing radius".into(),
        })?;
        Ok(Self {
            entries,
            capacity,
            anchor,
            similarity_radius,
            goal,
            reanchor_on_improvement: reanchor,
        })
    }
}

fn join_point(p: &[f64]) -> String {
    p.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_field<T: std::str::FromStr>(s: Option<&str>) -> Option<T> {
    s?.parse().ok()
}

fn parse_point(s: Option<&str>) -> Option<Vec<f64>> {
    s?.split(',').map(|v| v.parse().ok()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(capacity: usize, radius: f64) -> MemoryConfig {
        MemoryConfig {
            capacity,
            similarity_radius: radius,
            reanchor_on_improvement: false,
        }
    }

    // A straight walk from the origin to `end` in `steps` points.
    fn walk(end: [f64; 2], steps: usize, ret: f64) -> Trajectory {
        let pts = (1..=steps)
            .map(|i| {
                let f = i as f64 / steps as f64;
                vec![end[0] * f, end[1] * f]
            })
            .collect();
        Trajectory::from_positions(pts, ret)
    }

    #[test]
    fn embed_returns_terminal_position() {
        assert_eq!(embed(&walk([7.0, 9.0], 4, 0.0)).unwrap(), vec![7.0, 9.0]);
        let one = Trajectory::from_positions(vec![vec![0.0, 0.0]], 0.0);
        assert_eq!(embed(&one).unwrap(), vec![0.0, 0.0]);
        let cont = Trajectory::from_positions(vec![vec![1.0, 1.0], vec![3.2, -1.1]], 0.0);
        assert_eq!(embed(&cont).unwrap(), vec![3.2, -1.1]);
        assert!(embed(&Trajectory::from_positions(vec![], 0.0)).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert!(is_similar(&[1.0, 2.0], &[1.0, 2.0], 0.5).unwrap());
        assert!(!is_similar(&[0.0, 0.0], &[0.0, 3.0], 2.0).unwrap());
        assert!(is_similar(&[0.0, 0.0], &[1.0, 0.0], 2.0).unwrap());
        assert!(is_similar(&[0.0], &[1.0, 0.0], 2.0).is_err());
    }

    #[test]
    fn ranking_priorities() {
        let k = |ret, steps, goal_distance| RankingKey {
            ret,
            steps,
            goal_distance,
        };
        assert!(k(10.0, 90, 9.0).is_better_than(&k(2.0, 5, 0.0)));
        assert!(k(5.0, 30, 0.0).is_better_than(&k(5.0, 50, 0.0)));
        assert!(k(5.0, 30, 1.0).is_better_than(&k(5.0, 30, 4.0)));
        assert!(!k(5.0, 30, 1.0).is_better_than(&k(5.0, 30, 1.0)));
    }

    #[test]
    fn ranking_key_uses_goal_when_known() {
        let kc = KernelConfig::default();
        let e = MemoryEntry::new(walk([3.0, 4.0], 5, 1.0), &kc).unwrap();
        assert_eq!(ranking_key(&e, None).goal_distance, 0.0);
        assert_eq!(ranking_key(&e, Some(&[0.0, 0.0])).goal_distance, 5.0);
    }

    #[test]
    fn admission_outcomes() {
        let kc = KernelConfig::default();
        let mut m = GuidanceMemory::new(cfg(2, 1.5), None);
        assert_eq!(m.try_admit(&walk([5.0, 5.0], 10, 0.0), &kc).unwrap(), Admission::AdmittedNew);
        assert_eq!(m.anchor(), Some(&[5.0, 5.0][..]));
        assert_eq!(
            m.try_admit(&walk([0.0, 9.0], 10, 50.0), &kc).unwrap(),
            Admission::RejectedDissimilar
        );
        assert_eq!(m.try_admit(&walk([5.0, 6.0], 12, 0.0), &kc).unwrap(), Admission::AdmittedNew);
        // Full: a worse trajectory is rejected, a better one replaces the worst.
        assert_eq!(m.try_admit(&walk([6.0, 5.0], 20, 0.0), &kc).unwrap(), Admission::RejectedWorse);
        assert_eq!(
            m.try_admit(&walk([6.0, 5.0], 8, 1.0), &kc).unwrap(),
            Admission::ReplacedWorst(1)
        );
        let rets: Vec<f64> = m.entries().iter().map(|e| e.ret()).collect();
        assert_eq!(rets, vec![1.0, 0.0]);
        assert_eq!(m.entries()[1].steps(), 10);
    }

    #[test]
    fn reanchoring_follows_higher_return() {
        let kc = KernelConfig::default();
        let mut m = GuidanceMemory::new(
            MemoryConfig {
                reanchor_on_improvement: true,
                ..cfg(3, 1.5)
            },
            None,
        );
        m.try_admit(&walk([5.0, 5.0], 10, 2.0), &kc).unwrap();
        m.try_admit(&walk([5.0, 6.0], 10, 0.0), &kc).unwrap();
        // Equal return elsewhere is still dissimilar.
        assert_eq!(
            m.try_admit(&walk([0.0, 9.0], 10, 2.0), &kc).unwrap(),
            Admission::RejectedDissimilar
        );
        assert_eq!(
            m.try_admit(&walk([0.0, 9.0], 10, 10.0), &kc).unwrap(),
            Admission::Reanchored { evicted: 2 }
        );
        assert_eq!(m.len(), 1);
        assert_eq!(m.anchor(), Some(&[0.0, 9.0][..]));
    }

    #[test]
    fn zero_capacity_memory_stays_empty() {
        let mut m = GuidanceMemory::new(cfg(0, 1.0), None);
        assert_eq!(
            m.try_admit(&walk([1.0, 1.0], 3, 1.0), &KernelConfig::default()).unwrap(),
            Admission::Disabled
        );
        assert!(m.is_empty());
    }

    #[test]
    fn snapshot_round_trip() {
        let kc = KernelConfig::default();
        let mut m = GuidanceMemory::new(cfg(4, 2.0), Some(vec![9.0, 9.0]));
        m.try_admit(&walk([5.0, 5.0], 6, 1.5), &kc).unwrap();
        m.try_admit(&walk([5.5, 5.0], 4, 0.25), &kc).unwrap();
        let text = m.to_text();
        let back = GuidanceMemory::from_text(&text, &kc).unwrap();
        assert_eq!(back.keys(), m.keys());
        assert_eq!(back.anchor(), m.anchor());
        assert_eq!(back.goal(), m.goal());
        for (a, b) in back.entries().iter().zip(m.entries()) {
            assert_eq!(a.trace(), b.trace());
        }
        assert!(GuidanceMemory::from_text("capacity x", &kc).is_err());
    }

    #[test]
    fn zero_return_memory_creeps_toward_the_goal() {
        let cfg = MemoryConfig {
            capacity: 3,
            similarity_radius: 2.0,
            reanchor_on_improvement: false,
        };
        let kc = KernelConfig::default();
        let mut m = GuidanceMemory::new(cfg, Some(vec![10.0, 0.0]));
        for x in [0.0, 1.5, 3.0, 4.5] {
            assert_eq!(m.try_admit(&walk([x, 0.0], 4, 0.0), &kc).unwrap(), Admission::AdmittedNew);
            assert_eq!(m.anchor(), Some(&[x, 0.0][..]));
        }
        // Only entries within the radius of (4.5, 0) survive.
        let ends: Vec<f64> = m.entries().iter().map(|e| e.embedding()[0]).collect();
        assert_eq!(ends, vec![4.5, 3.0]);
        // Without a goal nothing beats the first entry, so the anchor stays.
        let mut m = GuidanceMemory::new(cfg, None);
        for x in [0.0, 1.5, 3.0] {
            m.try_admit(&walk([x, 0.0], 4, 0.0), &kc).unwrap();
        }
        assert_eq!(m.anchor(), Some(&[0.0, 0.0][..]));
    }
}
