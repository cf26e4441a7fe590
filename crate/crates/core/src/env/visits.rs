use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Visit counts over a rectangular grid of cells covering an environment.
///
/// Continuous positions are mapped to square cells of side `cell_size`
/// starting at `origin`; out-of-range positions are clamped to the border.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationCounter {
    origin: [f64; 2],
    cell_size: f64,
    width: usize,
    height: usize,
    counts: Vec<u64>,
    total: u64,
}

impl VisitationCounter {
    pub fn new(origin: [f64; 2], cell_size: f64, width: usize, height: usize) -> Self {
        Self {
            origin,
            cell_size,
            width: width.max(1),
            height: height.max(1),
            counts: vec![0; width.max(1) * height.max(1)],
            total: 0,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Cell `(column, row-from-bottom)` containing `position`.
    pub fn cell_of(&self, position: &[f64]) -> (usize, usize) {
        let f = |v: f64, o: f64, n: usize| {
            let c = ((v - o) / self.cell_size + 1e-9).floor();
            (c.max(0.0) as usize).min(n - 1)
        };
        (
            f(position[0], self.origin[0], self.width),
            f(position.get(1).copied().unwrap_or(0.0), self.origin[1], self.height),
        )
    }

    pub fn count(&self, cell: (usize, usize)) -> u64 {
        self.counts[cell.1 * self.width + cell.0]
    }

    /// Records a visit and returns the updated count of that cell.
    pub fn record(&mut self, position: &[f64]) -> u64 {
        let (x, y) = self.cell_of(position);
        let c = &mut self.counts[y * self.width + x];
        *c += 1;
        self.total += 1;
        *c
    }

    /// CSV export: a `width,height` header, the two dimensions, then one row
    /// per grid row from the top of the map down.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "width,height");
        let _ = writeln!(out, "{},{}", self.width, self.height);
        for y in (0..self.height).rev() {
            let row: Vec<String> = (0..self.width)
                .map(|x| self.counts[y * self.width + x].to_string())
                .collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    /// Parses [`VisitationCounter::to_csv`] output into rows (top row first).
    pub fn parse_csv(text: &str) -> Result<Vec<Vec<u64>>> {
        let mut lines = text.lines();
        let bad = |line: usize, msg: &str| Error::Config {
            line,
            msg: msg.to_string(),
        };
        if lines.next().map(str::trim) != Some("width,height") {
            return Err(bad(1, "missing `width,height` header"));
        }
        let dims = lines.next().ok_or_else(|| bad(2, "missing dimensions"))?;
        let (w, h) = dims
            .split_once(',')
            .and_then(|(w, h)| Some((w.trim().parse::<usize>().ok()?, h.trim().parse::<usize>().ok()?)))
            .ok_or_else(|| bad(2, "bad dimensions"))?;
        let mut rows = Vec::with_capacity(h);
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|v| v.trim().parse::<u64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad(i + 3, "bad count"))?;
            if row.len() != w {
                return Err(bad(i + 3, "row width does not match header"));
            }
            rows.push(row);
        }
        if rows.len() != h {
            return Err(bad(0, "row count does not match header"));
        }
        Ok(rows)
    }
}

/// Count-based exploration bonus `λ / sqrt(N)`.
pub fn exploration_bonus(count: u64, lambda: f64) -> f64 {
    if lambda == 0.0 || count == 0 {
        return 0.0;
    }
    lambda / (count as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bonus_values() {
        assert!((exploration_bonus(1, 0.1) - 0.1).abs() < 1e-15);
        assert!((exploration_bonus(4, 0.1) - 0.05).abs() < 1e-15);
        assert_eq!(exploration_bonus(9, 0.0), 0.0);
    }

    #[test]
    fn counts_and_csv() {
        let mut v = VisitationCounter::new([0.0, 0.0], 1.0, 3, 2);
        assert_eq!(v.record(&[0.0, 0.0]), 1);
        assert_eq!(v.record(&[0.0, 0.0]), 2);
        assert_eq!(v.record(&[2.0, 1.0]), 1);
        assert_eq!(v.total(), 3);
        let csv = v.to_csv();
        assert_eq!(csv, "width,height\n3,2\n0,0,1\n2,0,0\n");
        assert_eq!(
            VisitationCounter::parse_csv(&csv).unwrap(),
            vec![vec![0, 0, 1], vec![2, 0, 0]]
        );
    }

    #[test]
    fn continuous_positions_use_cell_size() {
        let mut v = VisitationCounter::new([0.0, 0.0], 0.5, 4, 4);
        assert_eq!(v.cell_of(&[0.49, 0.51]), (0, 1));
        assert_eq!(v.cell_of(&[1.9, 5.0]), (3, 3));
        v.record(&[0.1, 0.1]);
        v.record(&[0.2, 0.3]);
        assert_eq!(v.count((0, 0)), 2);
    }
}
