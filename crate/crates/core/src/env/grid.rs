//! Discrete grid-world mazes described by ASCII maps.

use std::fmt;

use crate::error::{Error, Result};
use crate::trajectory::{Action, Termination};

use super::StepResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Wall,
    Free,
    Start,
    Key,
    Door,
    Treasure,
    Apple,
}

impl Cell {
    pub fn glyph(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Free => '.',
            Cell::Start => 'S',
            Cell::Key => 'K',
            Cell::Door => 'D',
            Cell::Treasure => 'T',
            Cell::Apple => 'A',
        }
    }

    pub fn from_glyph(c: char) -> Option<Cell> {
        Some(match c {
            '#' => Cell::Wall,
            '.' => Cell::Free,
            'S' => Cell::Start,
            'K' => Cell::Key,
            'D' => Cell::Door,
            'T' => Cell::Treasure,
            'A' => Cell::Apple,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardMap {
    pub key: f64,
    pub door: f64,
    pub treasure: f64,
    pub apple: f64,
}

impl RewardMap {
    /// Key +2, door +4, treasure +4.
    pub fn key_door_treasure() -> Self {
        Self {
            key: 2.0,
            door: 4.0,
            treasure: 4.0,
            apple: 0.0,
        }
    }

    /// Apple +2, treasure +10.
    pub fn deceptive() -> Self {
        Self {
            key: 0.0,
            door: 0.0,
            treasure: 10.0,
            apple: 2.0,
        }
    }
}

/// Grid moves. Positions use `x` to the east and `y` to the north, with the
/// bottom row of the map at `y = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    East = 0,
    South = 1,
    West = 2,
    North = 3,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::East, Move::South, Move::West, Move::North];

    fn delta(self) -> (i64, i64) {
        match self {
            Move::East => (1, 0),
            Move::South => (0, -1),
            Move::West => (-1, 0),
            Move::North => (0, 1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMaze {
    cells: Vec<Cell>,
    width: usize,
    height: usize,
    start: (i64, i64),
    rewards: RewardMap,
    max_steps: usize,
    pos: (i64, i64),
    has_key: bool,
    key_taken: Vec<(i64, i64)>,
    opened: Vec<(i64, i64)>,
    steps: usize,
}

impl GridMaze {
    /// Parses an ASCII map. Rows are listed top to bottom.
    pub fn parse(text: &str, rewards: RewardMap, max_steps: usize) -> Result<Self> {
        if max_steps == 0 {
            return Err(Error::InvalidArgument("max_steps must be positive".into()));
        }
        let rows: Vec<&str> = text
            .lines()
            .map(str::trim_end)
            .filter(|l| !l.is_empty())
            .collect();
        if rows.is_empty() {
            return Err(Error::MazeParse {
                row: 0,
                col: 0,
                msg: "empty map".into(),
            });
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut start = None;
        for (r, row) in rows.iter().enumerate() {
            let n = row.chars().count();
            if n != width {
                return Err(Error::MazeParse {
                    row: r,
                    col: n.min(width),
                    msg: format!("row has {n} cells, expected {width}"),
                });
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = Cell::from_glyph(ch).ok_or_else(|| Error::MazeParse {
                    row: r,
                    col: c,
                    msg: format!("unknown glyph `{ch}`"),
                })?;
                if cell == Cell::Start {
                    if start.is_some() {
                        return Err(Error::MazeParse {
                            row: r,
                            col: c,
                            msg: "more than one start cell".into(),
                        });
                    }
                    start = Some((c as i64, (height - 1 - r) as i64));
                }
                cells.push(cell);
            }
        }
        let start = start.ok_or(Error::MazeParse {
            row: 0,
            col: 0,
            msg: "no start cell".into(),
        })?;
        Ok(Self {
            cells,
            width,
            height,
            start,
            rewards,
            max_steps,
            pos: start,
            has_key: false,
            key_taken: Vec::new(),
            opened: Vec::new(),
            steps: 0,
        })
    }

    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                out.push(self.cells[r * self.width + c].glyph());
            }
            out.push('\n');
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn rewards(&self) -> &RewardMap {
        &self.rewards
    }

    pub fn start(&self) -> (i64, i64) {
        self.start
    }

    pub fn has_key(&self) -> bool {
        self.has_key
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Map cell at `(x, y)` with `y` counted from the bottom row.
    pub fn cell(&self, x: i64, y: i64) -> Cell {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return Cell::Wall;
        }
        let row = self.height - 1 - y as usize;
        self.cells[row * self.width + x as usize]
    }

    /// Positions of every cell of the given kind.
    pub fn find(&self, kind: Cell) -> Vec<(i64, i64)> {
        let mut out = Vec::new();
        for y in 0..self.height as i64 {
            for x in 0..self.width as i64 {
                if self.cell(x, y) == kind {
                    out.push((x, y));
                }
            }
        }
        out
    }

    fn extent(&self) -> f64 {
        self.width.max(self.height) as f64
    }

    pub fn diameter(&self) -> f64 {
        ((self.width * self.width + self.height * self.height) as f64).sqrt()
    }

    pub fn position(&self) -> Vec<f64> {
        vec![self.pos.0 as f64, self.pos.1 as f64]
    }

    pub fn observation(&self) -> Vec<f64> {
        let e = self.extent();
        vec![
            (self.pos.0 - self.start.0) as f64 / e,
            (self.pos.1 - self.start.1) as f64 / e,
        ]
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.pos = self.start;
        self.has_key = false;
        self.key_taken.clear();
        self.opened.clear();
        self.steps = 0;
        self.observation()
    }

    /// The terminating item with the highest reward.
    pub fn optimal_item(&self) -> Cell {
        let has = |k| self.cells.contains(&k);
        match (has(Cell::Treasure), has(Cell::Apple)) {
            (true, true) if self.rewards.apple > self.rewards.treasure => Cell::Apple,
            (false, true) => Cell::Apple,
            _ => Cell::Treasure,
        }
    }

    pub fn step_move(&mut self, mv: Move) -> StepResult {
        let (dx, dy) = mv.delta();
        let target = (self.pos.0 + dx, self.pos.1 + dy);
        let mut reward = 0.0;
        let mut termination = None;
        match self.cell(target.0, target.1) {
            Cell::Wall => {}
            Cell::Door => {
                if self.opened.contains(&target) {
                    self.pos = target;
                } else if self.has_key {
                    self.opened.push(target);
                    reward = self.rewards.door;
                    self.pos = target;
                }
            }
            Cell::Key => {
                self.pos = target;
                if !self.key_taken.contains(&target) {
                    self.key_taken.push(target);
                    self.has_key = true;
                    reward = self.rewards.key;
                }
            }
            item @ (Cell::Treasure | Cell::Apple) => {
                self.pos = target;
                reward = if item == Cell::Treasure {
                    self.rewards.treasure
                } else {
                    self.rewards.apple
                };
                termination = Some(Termination::Goal {
                    optimal: item == self.optimal_item(),
                });
            }
            Cell::Free | Cell::Start => self.pos = target,
        }
        self.steps += 1;
        if termination.is_none() && self.steps >= self.max_steps {
            termination = Some(Termination::TimeLimit);
        }
        StepResult {
            observation: self.observation(),
            reward,
            done: termination.is_some(),
            position: self.position(),
            termination,
        }
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        match action {
            Action::Discrete(a) if *a < 4 => Ok(self.step_move(Move::ALL[*a])),
            other => Err(Error::InvalidAction(format!(
                "grid maze expects a move index in 0..4, got {other}"
            ))),
        }
    }
}

impl fmt::Display for GridMaze {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
