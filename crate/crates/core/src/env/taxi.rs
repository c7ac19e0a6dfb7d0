use rand::Rng;

use super::{EpisodicEnv, SimRng, StepOutcome};
use crate::mdp::TabularMdp;

/// 5x5 Taxi grid. `|` is a wall, `:` is passable.
pub const TAXI_MAP: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];

/// Depot cells (row, col): R, G, Y, B.
const DEPOTS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];
const IN_TAXI: usize = 4;

const SOUTH: usize = 0;
const NORTH: usize = 1;
const EAST: usize = 2;
const WEST: usize = 3;
const PICKUP: usize = 4;
const DROPOFF: usize = 5;

/// Decoded Taxi state.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TaxiState {
    pub row: usize,
    pub col: usize,
    /// Depot index 0..4, or 4 when the passenger rides in the taxi.
    pub passenger: usize,
    pub destination: usize,
}

impl TaxiState {
    pub fn encode(self) -> usize {
        ((self.row * 5 + self.col) * 5 + self.passenger) * 4 + self.destination
    }

    pub fn decode(state: usize) -> Self {
        let destination = state % 4;
        let rest = state / 4;
        let passenger = rest % 5;
        let rest = rest / 5;
        Self {
            row: rest / 5,
            col: rest % 5,
            passenger,
            destination,
        }
    }

    /// Passenger already delivered: the episode is over.
    fn delivered(self) -> bool {
        self.passenger < IN_TAXI && self.passenger == self.destination
    }
}

/// Deterministic Taxi: 500 states, 6 actions (south, north, east, west,
/// pickup, dropoff). Each step costs -1, an illegal pickup or dropoff -10, and
/// a dropoff at the destination pays +20 and ends the episode.
#[derive(Clone, Debug)]
pub struct Taxi {
    starts: Vec<usize>,
    mdp: TabularMdp<f64>,
}

pub fn taxi() -> Taxi {
    let starts = (0..500)
        .filter(|&s| {
            let t = TaxiState::decode(s);
            t.passenger < IN_TAXI && t.passenger != t.destination
        })
        .collect();
    Taxi {
        starts,
        mdp: build_view(),
    }
}

fn passable(row: usize, wall_col: usize) -> bool {
    TAXI_MAP[1 + row].as_bytes()[wall_col] == b':'
}

/// Deterministic dynamics `(next_state, reward, terminal)`.
fn dynamics(state: usize, action: usize) -> (usize, f64, bool) {
    let mut t = TaxiState::decode(state);
    if t.delivered() {
        return (state, 0.0, true);
    }
    let mut reward = -1.0;
    let mut terminal = false;
    match action {
        SOUTH => t.row = (t.row + 1).min(4),
        NORTH => t.row = t.row.saturating_sub(1),
        EAST => {
            if passable(t.row, 2 * t.col + 2) {
                t.col += 1;
            }
        }
        WEST => {
            if passable(t.row, 2 * t.col) {
                t.col -= 1;
            }
        }
        PICKUP => {
            if t.passenger < IN_TAXI && DEPOTS[t.passenger] == (t.row, t.col) {
                t.passenger = IN_TAXI;
            } else {
                reward = -10.0;
            }
        }
        DROPOFF => {
            let here = DEPOTS.iter().position(|&d| d == (t.row, t.col));
            match (t.passenger == IN_TAXI, here) {
                (true, Some(depot)) if depot == t.destination => {
                    t.passenger = depot;
                    reward = 20.0;
                    terminal = true;
                }
                // Passenger leaves the taxi at another depot.
                (true, Some(depot)) => t.passenger = depot,
                _ => reward = -10.0,
            }
        }
        _ => unreachable!("action {action}"),
    }
    (t.encode(), reward, terminal)
}

fn build_view() -> TabularMdp<f64> {
    let (ns, na) = (500, 6);
    let mut p = vec![0.0; ns * na * ns];
    let mut r = vec![0.0; ns * na];
    for s in 0..ns {
        for a in 0..na {
            let (next, reward, _) = dynamics(s, a);
            p[(s * na + a) * ns + next] = 1.0;
            r[s * na + a] = reward;
        }
    }
    TabularMdp::new(ns, na, p, r, 0.9).expect("taxi view is a valid MDP")
}

impl EpisodicEnv for Taxi {
    fn name(&self) -> &'static str {
        "taxi"
    }

    fn mdp(&self) -> &TabularMdp<f64> {
        &self.mdp
    }

    fn reset(&self, rng: &mut SimRng) -> usize {
        self.starts[rng.random_range(0..self.starts.len())]
    }

    fn step(&self, state: usize, action: usize, _rng: &mut SimRng) -> StepOutcome {
        let (next_state, reward, terminal) = dynamics(state, action);
        StepOutcome {
            next_state,
            reward,
            terminal,
        }
    }

    fn is_terminal(&self, state: usize) -> bool {
        TaxiState::decode(state).delivered()
    }

    fn is_success(&self, state: usize) -> bool {
        TaxiState::decode(state).delivered()
    }

    fn start_states(&self) -> &[usize] {
        &self.starts
    }
}
