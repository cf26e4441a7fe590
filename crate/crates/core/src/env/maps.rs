//! Bundled environment layouts.

use crate::error::{Error, Result};

use super::{Env, Goal, GridMaze, PointMaze, RewardMap, Segment};

/// 25×25 multi-room maze. The apple sits in the upper-left room, the
/// treasure in the upper-middle room.
pub const DECEPTIVE_25: &str = "\
#########################
#A.....#.........#......#
#......#....T....#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......###.#######......#
#.......................#
#......#................#
#......#.........#......#
#......#.........#......#
#......#.........#......#
####.#####.###########.##
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#.......................#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#S.....#.........#......#
#########################
";

/// 25×25 Key-Door-Treasure maze: key in the right-hand room on the way
/// north, the door seals the upper-middle room holding the treasure.
pub const KDT_25: &str = "\
#########################
#......#.........#......#
#......#....T....#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#####D#####......#
#.......................#
#......#................#
#......#.........#......#
#......#.........#......#
#......#.........#......#
####.#####.###########.##
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#.........#....K.#
#.......................#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#......#.........#......#
#S.....#.........#......#
#########################
";

/// 15×15 two-room deceptive maze.
pub const DECEPTIVE_15: &str = "\
###############
#A....#......T#
#.....#.......#
#.....#.......#
#.....#.......#
#.....#.......#
#.....#.......#
#.....#.......#
#.....#.......#
#.....#.......#
#.....#.......#
#.............#
#.....#.......#
#S....#.......#
###############
";

/// 21×21 three-room Key-Door-Treasure maze. The rooms connect along the top
/// row: an opening into the key room, then the locked door beside the key.
/// The step limit leaves little slack over the 36-step solution.
pub const KDT_21: &str = "\
#####################
#...........KD.....T#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#.....#......#......#
#S....#......#......#
#####################
";

/// Tiny corridor for smoke runs: apple two cells west, treasure four east.
pub const CORRIDOR: &str = "\
#########
#A.S...T#
#########
";

/// Names accepted by [`build`].
pub const NAMES: &[&str] = &[
    "deceptive25",
    "kdt25",
    "deceptive15",
    "kdt21",
    "corridor",
    "point_u",
];

/// Builds a bundled environment. `max_steps` of 0 selects the layout default.
pub fn build(name: &str, max_steps: usize) -> Result<Env> {
    let pick = |default: usize| if max_steps == 0 { default } else { max_steps };
    let grid = |text: &str, rewards, default| -> Result<Env> {
        Ok(Env::Grid(GridMaze::parse(text, rewards, pick(default))?))
    };
    match name {
        "deceptive25" => grid(DECEPTIVE_25, RewardMap::deceptive(), 300),
        "kdt25" => grid(KDT_25, RewardMap::key_door_treasure(), 300),
        "deceptive15" => grid(DECEPTIVE_15, RewardMap::deceptive(), 100),
        "kdt21" => grid(KDT_21, RewardMap::key_door_treasure(), 50),
        "corridor" => grid(CORRIDOR, RewardMap::deceptive(), 20),
        "point_u" => Ok(Env::Point(point_u(pick(500))?)),
        other => Err(Error::InvalidArgument(format!(
            "unknown environment `{other}` (expected one of {})",
            NAMES.join(", ")
        ))),
    }
}

/// U-shaped point maze. The near goal (+200) lies a short way below the
/// start; the far goal (+500) is reached by going up the left arm, across
/// the top and down the right arm.
pub fn point_u(max_steps: usize) -> Result<PointMaze> {
    PointMaze::new(
        ([0.0, 0.0], [8.0, 8.0]),
        vec![
            // Central divider of the U.
            Segment::new([4.0, 0.0], [4.0, 6.0]),
        ],
        [2.0, 3.0],
        0.5,
        vec![
            Goal {
                center: [2.0, 1.0],
                radius: 0.6,
                reward: 200.0,
            },
            Goal {
                center: [6.0, 1.0],
                radius: 0.6,
                reward: 500.0,
            },
        ],
        max_steps,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Cell;

    #[test]
    fn bundled_maps_parse_and_round_trip() {
        for name in NAMES {
            let env = build(name, 0).unwrap();
            if let Env::Grid(g) = &env {
                let text = g.render();
                let again = GridMaze::parse(&text, *g.rewards(), g.max_steps()).unwrap();
                assert_eq!(again.render(), text);
            }
        }
    }

    #[test]
    fn deceptive_layout_matches_description() {
        let Env::Grid(g) = build("deceptive25", 0).unwrap() else {
            panic!("grid expected")
        };
        let (ax, ay) = g.find(Cell::Apple)[0];
        let (tx, ty) = g.find(Cell::Treasure)[0];
        let (w, h) = (g.width() as i64, g.height() as i64);
        assert!(ax < w / 3 && ay > 2 * h / 3, "apple in upper-left room");
        assert!(tx > w / 3 && tx < 2 * w / 3 && ty > 2 * h / 3, "treasure in upper-middle room");
        assert_eq!(g.start(), (1, 1));
    }
}
