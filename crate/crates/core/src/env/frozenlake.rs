use rand::Rng;

use super::{EpisodicEnv, SimRng, StepOutcome};
use crate::mdp::TabularMdp;

/// Standard 8x8 layout: `S` start, `F` frozen, `H` hole, `G` goal.
pub const FROZENLAKE_8X8_MAP: [&str; 8] = [
    "SFFFFFFF", "FFFFFFFF", "FFFHFFFF", "FFFFFHFF", "FFFHFFFF", "FHHFFFHF", "FHFFHFHF", "FFFHFFFG",
];

const LEFT: usize = 0;
const DOWN: usize = 1;
const RIGHT: usize = 2;
const UP: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tile {
    Start,
    Frozen,
    Hole,
    Goal,
}

/// Slippery FrozenLake. Actions are left, down, right, up; the intended
/// direction and each perpendicular one are taken with probability 1/3.
#[derive(Clone, Debug)]
pub struct FrozenLake {
    tiles: Vec<Tile>,
    size: usize,
    starts: Vec<usize>,
    mdp: TabularMdp<f64>,
}

pub fn frozenlake8x8() -> FrozenLake {
    FrozenLake::from_map(&FROZENLAKE_8X8_MAP)
}

impl FrozenLake {
    /// Builds the environment from a square map.
    ///
    /// # Panics
    /// If the map is not square or contains characters other than `SFHG`.
    pub fn from_map(rows: &[&str]) -> Self {
        let size = rows.len();
        let tiles: Vec<Tile> = rows
            .iter()
            .flat_map(|r| {
                assert_eq!(r.len(), size, "map must be square");
                r.chars().map(|c| match c {
                    'S' => Tile::Start,
                    'F' => Tile::Frozen,
                    'H' => Tile::Hole,
                    'G' => Tile::Goal,
                    other => panic!("unknown tile {other:?}"),
                })
            })
            .collect();
        let starts = (0..tiles.len()).filter(|&s| tiles[s] == Tile::Start).collect();
        let mdp = build_view(&tiles, size);
        Self {
            tiles,
            size,
            starts,
            mdp,
        }
    }

    fn slide(&self, state: usize, direction: usize) -> usize {
        move_cell(state, direction, self.size)
    }
}

fn move_cell(state: usize, direction: usize, size: usize) -> usize {
    let (mut row, mut col) = (state / size, state % size);
    match direction {
        LEFT => col = col.saturating_sub(1),
        DOWN => row = (row + 1).min(size - 1),
        RIGHT => col = (col + 1).min(size - 1),
        UP => row = row.saturating_sub(1),
        _ => unreachable!("direction {direction}"),
    }
    row * size + col
}

/// The three directions an action can slip into.
fn slips(action: usize) -> [usize; 3] {
    [(action + 3) % 4, action, (action + 1) % 4]
}

fn is_terminal_tile(t: Tile) -> bool {
    matches!(t, Tile::Hole | Tile::Goal)
}

fn build_view(tiles: &[Tile], size: usize) -> TabularMdp<f64> {
    let ns = tiles.len();
    let na = 4;
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na * ns];
    for s in 0..ns {
        for a in 0..na {
            let base = (s * na + a) * ns;
            if is_terminal_tile(tiles[s]) {
                p[base + s] = 1.0;
                continue;
            }
            for dir in slips(a) {
                let next = move_cell(s, dir, size);
                p[base + next] += 1.0 / 3.0;
                if tiles[next] == Tile::Goal {
                    r[base + next] = 1.0;
                }
            }
        }
    }
    TabularMdp::from_transition_rewards(ns, na, p, r, 0.9).expect("frozenlake view is a valid MDP")
}

impl EpisodicEnv for FrozenLake {
    fn name(&self) -> &'static str {
        "frozenlake8x8"
    }

    fn mdp(&self) -> &TabularMdp<f64> {
        &self.mdp
    }

    fn reset(&self, _rng: &mut SimRng) -> usize {
        self.starts[0]
    }

    fn step(&self, state: usize, action: usize, rng: &mut SimRng) -> StepOutcome {
        if is_terminal_tile(self.tiles[state]) {
            return StepOutcome {
                next_state: state,
                reward: 0.0,
                terminal: true,
            };
        }
        let dir = slips(action)[rng.random_range(0..3)];
        let next_state = self.slide(state, dir);
        let tile = self.tiles[next_state];
        StepOutcome {
            next_state,
            reward: if tile == Tile::Goal { 1.0 } else { 0.0 },
            terminal: is_terminal_tile(tile),
        }
    }

    fn is_terminal(&self, state: usize) -> bool {
        is_terminal_tile(self.tiles[state])
    }

    fn is_success(&self, state: usize) -> bool {
        self.tiles[state] == Tile::Goal
    }

    fn start_states(&self) -> &[usize] {
        &self.starts
    }
}
