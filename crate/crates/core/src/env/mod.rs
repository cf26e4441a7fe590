//! Environments with a uniform episode interface.

mod grid;
pub mod maps;
mod point;
mod visits;

pub use grid::{Cell, GridMaze, Move, RewardMap};
pub use point::{segments_intersect, Goal, PointMaze, Segment};
pub use visits::{exploration_bonus, VisitationCounter};

use crate::error::Result;
use crate::trajectory::{Action, Termination};

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub position: Vec<f64>,
    pub termination: Option<Termination>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionSpace {
    Discrete(usize),
    Continuous(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Env {
    Grid(GridMaze),
    Point(PointMaze),
}

impl Env {
    /// Starts a new episode. `seed` drives any start-state randomness.
    pub fn reset(&mut self, seed: u64) -> Vec<f64> {
        match self {
            Env::Grid(g) => g.reset(),
            Env::Point(p) => p.reset(seed),
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        match self {
            Env::Grid(g) => g.step(action),
            Env::Point(p) => p.step(action),
        }
    }

    pub fn obs_dim(&self) -> usize {
        2
    }

    pub fn action_space(&self) -> ActionSpace {
        match self {
            Env::Grid(_) => ActionSpace::Discrete(4),
            Env::Point(_) => ActionSpace::Continuous(2),
        }
    }

    pub fn position(&self) -> Vec<f64> {
        match self {
            Env::Grid(g) => g.position(),
            Env::Point(p) => p.position(),
        }
    }

    pub fn max_steps(&self) -> usize {
        match self {
            Env::Grid(g) => g.max_steps(),
            Env::Point(p) => p.max_steps(),
        }
    }

    /// Diagonal length of the environment's position space.
    pub fn diameter(&self) -> f64 {
        match self {
            Env::Grid(g) => g.diameter(),
            Env::Point(p) => p.diameter(),
        }
    }

    /// Position of the optimal goal when it is meant to be known to the agent.
    /// Mazes with a deceptive apple keep their goal hidden.
    pub fn goal_hint(&self) -> Option<Vec<f64>> {
        match self {
            Env::Grid(g) => {
                if !g.find(Cell::Apple).is_empty() {
                    return None;
                }
                g.find(Cell::Treasure)
                    .first()
                    .map(|&(x, y)| vec![x as f64, y as f64])
            }
            Env::Point(_) => None,
        }
    }

    /// A zeroed visit counter covering this environment.
    pub fn visitation_counter(&self, point_cell_size: f64) -> VisitationCounter {
        match self {
            Env::Grid(g) => VisitationCounter::new([0.0, 0.0], 1.0, g.width(), g.height()),
            Env::Point(p) => {
                let (lo, hi) = p.bounds();
                let w = ((hi[0] - lo[0]) / point_cell_size).ceil() as usize;
                let h = ((hi[1] - lo[1]) / point_cell_size).ceil() as usize;
                VisitationCounter::new(lo, point_cell_size, w, h)
            }
        }
    }
}
