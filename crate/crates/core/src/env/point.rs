//! Continuous point-mass maze with segment walls and disc-shaped goals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::trajectory::{Action, Termination};

use super::StepResult;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl Segment {
    pub fn new(a: [f64; 2], b: [f64; 2]) -> Self {
        Self { a, b }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal {
    pub center: [f64; 2],
    pub radius: f64,
    pub reward: f64,
}

fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

fn on_segment(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> bool {
    r[0] >= p[0].min(q[0]) && r[0] <= p[0].max(q[0]) && r[1] >= p[1].min(q[1]) && r[1] <= p[1].max(q[1])
}

/// Closed-segment intersection test; touching counts as intersecting.
pub fn segments_intersect(s: &Segment, t: &Segment) -> bool {
    let d1 = orient(t.a, t.b, s.a);
    let d2 = orient(t.a, t.b, s.b);
    let d3 = orient(s.a, s.b, t.a);
    let d4 = orient(s.a, s.b, t.b);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    (d1 == 0.0 && on_segment(t.a, t.b, s.a))
        || (d2 == 0.0 && on_segment(t.a, t.b, s.b))
        || (d3 == 0.0 && on_segment(s.a, s.b, t.a))
        || (d4 == 0.0 && on_segment(s.a, s.b, t.b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointMaze {
    walls: Vec<Segment>,
    bounds: ([f64; 2], [f64; 2]),
    start: [f64; 2],
    start_noise: f64,
    step_size: f64,
    goals: Vec<Goal>,
    max_steps: usize,
    position: [f64; 2],
    steps: usize,
    rng: ChaCha8Rng,
}

impl PointMaze {
    /// `bounds` is the axis-aligned arena `(min, max)`; its border is added as walls.
    pub fn new(
        bounds: ([f64; 2], [f64; 2]),
        mut walls: Vec<Segment>,
        start: [f64; 2],
        step_size: f64,
        goals: Vec<Goal>,
        max_steps: usize,
    ) -> Result<Self> {
        let (lo, hi) = bounds;
        if !(hi[0] > lo[0] && hi[1] > lo[1]) {
            return Err(Error::InvalidArgument("empty arena".into()));
        }
        if !(step_size > 0.0) || max_steps == 0 {
            return Err(Error::InvalidArgument(
                "step size and max_steps must be positive".into(),
            ));
        }
        if goals.is_empty() {
            return Err(Error::InvalidArgument("point maze needs a goal".into()));
        }
        walls.extend([
            Segment::new([lo[0], lo[1]], [hi[0], lo[1]]),
            Segment::new([hi[0], lo[1]], [hi[0], hi[1]]),
            Segment::new([hi[0], hi[1]], [lo[0], hi[1]]),
            Segment::new([lo[0], hi[1]], [lo[0], lo[1]]),
        ]);
        Ok(Self {
            walls,
            bounds,
            start,
            start_noise: 0.0,
            step_size,
            goals,
            max_steps,
            position: start,
            steps: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    /// Uniform jitter of the start position in `[-noise, noise]²`.
    pub fn with_start_noise(mut self, noise: f64) -> Self {
        self.start_noise = noise.max(0.0);
        self
    }

    pub fn walls(&self) -> &[Segment] {
        &self.walls
    }

    pub fn goals(&self) -> &[Goal] {
        &self.goals
    }

    pub fn bounds(&self) -> ([f64; 2], [f64; 2]) {
        self.bounds
    }

    pub fn start(&self) -> [f64; 2] {
        self.start
    }

    pub fn step_size(&self) -> f64 {
        self.step_size
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    fn extent(&self) -> f64 {
        let (lo, hi) = self.bounds;
        (hi[0] - lo[0]).max(hi[1] - lo[1])
    }

    pub fn diameter(&self) -> f64 {
        let (lo, hi) = self.bounds;
        ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt()
    }

    pub fn position(&self) -> Vec<f64> {
        self.position.to_vec()
    }

    pub fn observation(&self) -> Vec<f64> {
        let e = self.extent();
        vec![
            (self.position[0] - self.start[0]) / e,
            (self.position[1] - self.start[1]) / e,
        ]
    }

    fn optimal_goal(&self) -> usize {
        let mut best = 0;
        for (i, g) in self.goals.iter().enumerate() {
            if g.reward > self.goals[best].reward {
                best = i;
            }
        }
        best
    }

    pub fn optimal_goal_center(&self) -> [f64; 2] {
        self.goals[self.optimal_goal()].center
    }

    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.position = self.start;
        if self.start_noise > 0.0 {
            let n = self.start_noise;
            let jitter = [self.rng.gen_range(-n..=n), self.rng.gen_range(-n..=n)];
            let target = [self.start[0] + jitter[0], self.start[1] + jitter[1]];
            if !self.blocked(self.start, target) {
                self.position = target;
            }
        }
        self.steps = 0;
        self.observation()
    }

    fn blocked(&self, from: [f64; 2], to: [f64; 2]) -> bool {
        let path = Segment::new(from, to);
        self.walls.iter().any(|w| segments_intersect(&path, w))
    }

    pub fn step_vec(&mut self, action: [f64; 2]) -> Result<StepResult> {
        if !(action[0].is_finite() && action[1].is_finite()) {
            return Err(Error::InvalidAction("non-finite point-maze action".into()));
        }
        let norm = (action[0] * action[0] + action[1] * action[1]).sqrt();
        let scale = if norm > self.step_size {
            self.step_size / norm
        } else {
            1.0
        };
        let target = [
            self.position[0] + action[0] * scale,
            self.position[1] + action[1] * scale,
        ];
        if !self.blocked(self.position, target) {
            self.position = target;
        }
        self.steps += 1;
        let optimal = self.optimal_goal();
        let mut reward = 0.0;
        let mut termination = None;
        for (i, g) in self.goals.iter().enumerate() {
            let dx = self.position[0] - g.center[0];
            let dy = self.position[1] - g.center[1];
            if (dx * dx + dy * dy).sqrt() <= g.radius {
                reward = g.reward;
                termination = Some(Termination::Goal {
                    optimal: i == optimal,
                });
                break;
            }
        }
        if termination.is_none() && self.steps >= self.max_steps {
            termination = Some(Termination::TimeLimit);
        }
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: termination.is_some(),
            position: self.position(),
            termination,
        })
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        match action {
            Action::Continuous(v) if v.len() == 2 => self.step_vec([v[0], v[1]]),
            other => Err(Error::InvalidAction(format!(
                "point maze expects a 2-vector, got {other}"
            ))),
        }
    }
}
