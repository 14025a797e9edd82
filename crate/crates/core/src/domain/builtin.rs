//! Built-in benchmark domains: two-agent Tiger and the chaser/fugitive UAV grid.

use super::{DomainParts, PosgDomain, StateView};

pub const TIGER_NAME: &str = "tiger";
pub const UAV_NAME: &str = "uav";

/// Side length of the UAV grid.
pub const UAV_GRID: usize = 5;

const TIGER_GROWL_ACCURACY: f64 = 0.85;
const TIGER_CREAK_ACCURACY: f64 = 0.9;
const TIGER_HORIZON: usize = 3;

const UAV_MOVE_SUCCESS: f64 = 0.9;
const UAV_OBS_ACCURACY: f64 = 0.8;
const UAV_CAPTURE_REWARD: f64 = 100.0;
const UAV_ESCAPE_REWARD: f64 = 100.0;
const UAV_STEP_COST: f64 = -1.0;
const UAV_HORIZON: usize = 3;
const UAV_SAFE_HOUSE: UavCell = UavCell { x: 4, y: 4 };
const UAV_START_I: UavCell = UavCell { x: 2, y: 2 };
const UAV_START_J: UavCell = UavCell { x: 0, y: 0 };

/// Looks up a builtin domain by name.
pub fn builtin(name: &str) -> Option<PosgDomain> {
    match name {
        TIGER_NAME => Some(builtin_tiger()),
        UAV_NAME => Some(builtin_uav()),
        _ => None,
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

// Tiger action indices, in declaration order.
const OPEN_LEFT: usize = 0;
const OPEN_RIGHT: usize = 1;
const LISTEN: usize = 2;
const TIGER_LEFT: usize = 0;

fn tiger_reward(s: usize, a: usize) -> f64 {
    match a {
        LISTEN => -1.0,
        OPEN_LEFT if s == TIGER_LEFT => -100.0,
        OPEN_RIGHT if s != TIGER_LEFT => -100.0,
        _ => 10.0,
    }
}

fn growl_probs(listener_action: usize, next: usize) -> [f64; 2] {
    if listener_action != LISTEN {
        return [0.5, 0.5];
    }
    let left = if next == TIGER_LEFT {
        TIGER_GROWL_ACCURACY
    } else {
        1.0 - TIGER_GROWL_ACCURACY
    };
    [left, 1.0 - left]
}

fn creak_probs(peer_action: usize) -> [f64; 3] {
    let miss = (1.0 - TIGER_CREAK_ACCURACY) / 2.0;
    let mut p = [miss; 3];
    // CreakLeft, CreakRight, Silence
    p[match peer_action {
        OPEN_LEFT => 0,
        OPEN_RIGHT => 1,
        _ => 2,
    }] = TIGER_CREAK_ACCURACY;
    p
}

/// The two-agent Tiger game: |S|=2, |A_i|=|A_j|=3, |Ω_i|=6, |Ω_j|=2.
///
/// Agent i hears growls and creaks (growl direction × creak source); agent j
/// hears growls only. Any door opening relocates the tiger uniformly.
pub fn builtin_tiger() -> PosgDomain {
    let states = names(&["TigerLeft", "TigerRight"]);
    let actions = names(&["OpenLeft", "OpenRight", "Listen"]);
    let obs_i = names(&[
        "GrowlLeftCreakLeft",
        "GrowlLeftCreakRight",
        "GrowlLeftSilence",
        "GrowlRightCreakLeft",
        "GrowlRightCreakRight",
        "GrowlRightSilence",
    ]);
    let obs_j = names(&["GrowlLeft", "GrowlRight"]);

    let mut transition = Vec::with_capacity(18);
    let mut o_i = Vec::with_capacity(2 * 3 * 3 * 6);
    let mut o_j = Vec::with_capacity(2 * 3 * 2);
    let mut r_i = Vec::with_capacity(18);
    let mut r_j = Vec::with_capacity(18);
    for s in 0..2 {
        for ai in 0..3 {
            for aj in 0..3 {
                if ai == LISTEN && aj == LISTEN {
                    transition.push(vec![(s, 1.0)]);
                } else {
                    transition.push(vec![(0, 0.5), (1, 0.5)]);
                }
                r_i.push(tiger_reward(s, ai));
                // obs_i is indexed by the post-transition state s' = s here.
                let growl = growl_probs(ai, s);
                let creak = creak_probs(aj);
                for g in growl {
                    for c in creak {
                        o_i.push(g * c);
                    }
                }
            }
        }
        for aj in 0..3 {
            o_j.extend(growl_probs(aj, s));
            for _ai in 0..3 {
                r_j.push(tiger_reward(s, aj));
            }
        }
    }

    PosgDomain::new(DomainParts {
        name: TIGER_NAME.into(),
        states,
        actions_i: actions.clone(),
        actions_j: actions,
        observations_i: obs_i,
        observations_j: obs_j,
        horizon: TIGER_HORIZON,
        transition,
        obs_i: o_i,
        obs_j: o_j,
        reward_i: r_i,
        reward_j: r_j,
        initial_belief: vec![0.5, 0.5],
        view_i: None,
        view_j: None,
    })
    .expect("builtin tiger domain is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct UavCell {
    pub x: usize,
    pub y: usize,
}

impl UavCell {
    fn index(self) -> usize {
        self.y * UAV_GRID + self.x
    }

    fn from_index(k: usize) -> Self {
        UavCell {
            x: k % UAV_GRID,
            y: k / UAV_GRID,
        }
    }

    /// Outcome of a move attempt; moves off the grid leave the cell unchanged.
    fn moved(self, action: usize) -> Self {
        let (x, y) = (self.x as isize, self.y as isize);
        let (nx, ny) = match action {
            0 => (x, y + 1),
            1 => (x, y - 1),
            2 => (x + 1, y),
            3 => (x - 1, y),
            _ => (x, y),
        };
        let limit = UAV_GRID as isize;
        if (0..limit).contains(&nx) && (0..limit).contains(&ny) {
            UavCell {
                x: nx as usize,
                y: ny as usize,
            }
        } else {
            self
        }
    }

    /// Distribution over successor cells under `action`.
    fn successors(self, action: usize) -> Vec<(UavCell, f64)> {
        let target = self.moved(action);
        if target == self {
            vec![(self, 1.0)]
        } else {
            vec![(target, UAV_MOVE_SUCCESS), (self, 1.0 - UAV_MOVE_SUCCESS)]
        }
    }
}

const UAV_CELLS: usize = UAV_GRID * UAV_GRID;
const UAV_DONE: usize = UAV_CELLS * UAV_CELLS;

fn uav_state(i: UavCell, j: UavCell) -> usize {
    i.index() * UAV_CELLS + j.index()
}

/// Positions `(i, j)` encoded by a UAV state, or `None` for the absorbing state.
pub fn uav_cell_of(state: usize) -> Option<(UavCell, UavCell)> {
    (state < UAV_DONE).then(|| {
        (
            UavCell::from_index(state / UAV_CELLS),
            UavCell::from_index(state % UAV_CELLS),
        )
    })
}

/// Offset of j's cell relative to i's cell. Over the grid there are 81
/// distinct offsets, the relative configurations agent i reasons about.
pub fn uav_relative_offset(state: usize) -> Option<(isize, isize)> {
    uav_cell_of(state).map(|(i, j)| (j.x as isize - i.x as isize, j.y as isize - i.y as isize))
}

/// Quadrant index (NE, NW, SE, SW) of `other` as seen from `me`.
fn quadrant(me: UavCell, other: UavCell) -> usize {
    let north = other.y >= me.y;
    let east = other.x >= me.x;
    match (north, east) {
        (true, true) => 0,
        (true, false) => 1,
        (false, true) => 2,
        (false, false) => 3,
    }
}

fn quadrant_obs(correct: Option<usize>) -> [f64; 4] {
    match correct {
        None => [0.25; 4],
        Some(q) => {
            let mut p = [(1.0 - UAV_OBS_ACCURACY) / 3.0; 4];
            p[q] = UAV_OBS_ACCURACY;
            p
        }
    }
}

enum UavStatus {
    Moving,
    Captured,
    Escaped,
    Done,
}

fn uav_status(state: usize) -> UavStatus {
    match uav_cell_of(state) {
        None => UavStatus::Done,
        Some((i, j)) if i == j => UavStatus::Captured,
        Some((_, j)) if j == UAV_SAFE_HOUSE => UavStatus::Escaped,
        Some(_) => UavStatus::Moving,
    }
}

/// The chaser/fugitive UAV game on a 5×5 grid.
///
/// Joint states are `(i cell, j cell)` pairs plus one absorbing `done` state.
/// Co-location (capture) and j at the safe house pay their reward once and
/// move to `done`. Agent j's view groups joint states by j's own cell, giving
/// its level-0 model 25 states; `done` is grouped with the safe-house cell.
pub fn builtin_uav() -> PosgDomain {
    let actions = names(&["North", "South", "East", "West", "Stay"]);
    let observations = names(&["NE", "NW", "SE", "SW"]);
    let na = actions.len();
    let no = observations.len();

    let mut states = Vec::with_capacity(UAV_DONE + 1);
    for k in 0..UAV_DONE {
        let (i, j) = uav_cell_of(k).expect("grid state");
        states.push(format!("i{}{}_j{}{}", i.x, i.y, j.x, j.y));
    }
    states.push("done".to_string());
    let ns = states.len();

    let mut transition = Vec::with_capacity(ns * na * na);
    let mut reward_i = Vec::with_capacity(ns * na * na);
    let mut reward_j = Vec::with_capacity(ns * na * na);
    let mut obs_i = Vec::with_capacity(ns * na * na * no);
    let mut obs_j = Vec::with_capacity(ns * na * no);

    for s in 0..ns {
        let status = uav_status(s);
        let (ri, rj) = match status {
            UavStatus::Moving => (UAV_STEP_COST, UAV_STEP_COST),
            UavStatus::Captured => (UAV_CAPTURE_REWARD, -UAV_CAPTURE_REWARD),
            UavStatus::Escaped => (-UAV_ESCAPE_REWARD, UAV_ESCAPE_REWARD),
            UavStatus::Done => (0.0, 0.0),
        };
        let cells = uav_cell_of(s);
        let (q_i, q_j) = match cells {
            Some((i, j)) => (Some(quadrant(i, j)), Some(quadrant(j, i))),
            None => (None, None),
        };
        for ai in 0..na {
            for aj in 0..na {
                let row = match (&status, cells) {
                    (UavStatus::Moving, Some((i, j))) => {
                        let mut row = Vec::with_capacity(4);
                        for (ni, pi) in i.successors(ai) {
                            for (nj, pj) in j.successors(aj) {
                                row.push((uav_state(ni, nj), pi * pj));
                            }
                        }
                        row.sort_by_key(|&(t, _)| t);
                        row
                    }
                    _ => vec![(UAV_DONE, 1.0)],
                };
                transition.push(row);
                reward_i.push(ri);
                reward_j.push(rj);
                obs_i.extend(quadrant_obs(q_i));
            }
            obs_j.extend(quadrant_obs(q_j));
        }
    }

    let mut initial_belief = vec![0.0; ns];
    initial_belief[uav_state(UAV_START_I, UAV_START_J)] = 1.0;

    let view_j = StateView {
        labels: (0..UAV_CELLS)
            .map(|k| {
                let c = UavCell::from_index(k);
                format!("j{}{}", c.x, c.y)
            })
            .collect(),
        assignment: (0..ns)
            .map(|s| match uav_cell_of(s) {
                Some((_, j)) => j.index(),
                None => UAV_SAFE_HOUSE.index(),
            })
            .collect(),
    };

    PosgDomain::new(DomainParts {
        name: UAV_NAME.into(),
        states,
        actions_i: actions.clone(),
        actions_j: actions,
        observations_i: observations.clone(),
        observations_j: observations,
        horizon: UAV_HORIZON,
        transition,
        obs_i,
        obs_j,
        reward_i,
        reward_j,
        initial_belief,
        view_i: None,
        view_j: Some(view_j),
    })
    .expect("builtin uav domain is valid")
}
