//! Episode records shared by the environments, the memory and the learners.

use std::fmt;

/// An action in either a discrete or a continuous action space.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Discrete(a) => write!(f, "{a}"),
            Action::Continuous(v) => write!(f, "{v:?}"),
        }
    }
}

/// One environment transition as seen by the agent.
///
/// `position` is where the agent stands *after* the action was applied, so the
/// last step of an episode carries its terminal position.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub obs: Vec<f64>,
    pub action: Action,
    /// Extrinsic environment reward.
    pub reward: f64,
    /// Intrinsic bonus added on top of `reward` for learning (count-based exploration).
    pub bonus: f64,
    pub position: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// How an episode ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Reached a terminating goal; `optimal` marks the globally best goal.
    Goal { optimal: bool },
    /// Hit the step limit.
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn new(steps: Vec<Step>, termination: Termination) -> Self {
        Self { steps, termination }
    }

    /// Builds a trajectory that carries only positions. Used for hand-made
    /// fixtures and for memory snapshots read back from disk.
    pub fn from_positions(positions: Vec<Vec<f64>>, ret: f64) -> Self {
        let n = positions.len();
        let steps = positions
            .into_iter()
            .enumerate()
            .map(|(i, position)| Step {
                obs: Vec::new(),
                action: Action::Discrete(0),
                reward: if i + 1 == n { ret } else { 0.0 },
                bonus: 0.0,
                position,
                log_prob: 0.0,
                value: 0.0,
            })
            .collect();
        Self {
            steps,
            termination: Termination::TimeLimit,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Undiscounted extrinsic return.
    pub fn ret(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }

    pub fn is_success(&self) -> bool {
        matches!(self.termination, Termination::Goal { optimal: true })
    }

    pub fn terminal_position(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.position.as_slice())
    }
}
