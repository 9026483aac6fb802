//! Deterministic cliff grid world and its optimal-policy oracle.
//!
//! Coordinates are `(x, y)` with `y = 0` on the top row. Moving off the grid
//! leaves the agent in place; entering a cliff or the goal ends the episode.

use std::collections::VecDeque;
use std::fmt;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sarsa::QTable;

/// The repository's default 10x10 map.
pub const DEFAULT_MAP_JSON: &str = include_str!("../data/default_map.json");

/// Tolerance for treating two action values as equally good.
pub const BEST_ACTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub x: usize,
    pub y: usize,
}

impl Pos {
    pub const fn new(x: usize, y: usize) -> Self {
        Pos { x, y }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    /// Fixed order, also used to break ties deterministically.
    pub const ALL: [Action; 4] = [Action::Up, Action::Down, Action::Left, Action::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Action::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }

    pub fn arrow(self) -> char {
        match self {
            Action::Up => '^',
            Action::Down => 'v',
            Action::Left => '<',
            Action::Right => '>',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown action `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cell {
    Normal,
    Cliff,
    Goal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Continue,
    Cliff,
    Goal,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        !matches!(self, Outcome::Continue)
    }
}

/// On-disk map description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    pub width: usize,
    pub height: usize,
    pub goal: Pos,
    #[serde(default)]
    pub cliffs: Vec<Pos>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    goal: Pos,
    /// Shortest number of moves to the goal through normal cells.
    distance: Vec<Option<usize>>,
    start_pool: Vec<Pos>,
}

impl GridMap {
    /// Builds a map. Normal cells that cannot reach the goal are kept on the
    /// grid but left out of the start pool; see [`GridMap::unreachable_cells`].
    pub fn from_spec(spec: &MapSpec) -> Result<Self> {
        let (w, h) = (spec.width, spec.height);
        if w == 0 || h == 0 {
            return Err(Error::InvalidMap(format!("dimensions must be positive, got {w}x{h}")));
        }
        let in_bounds = |p: Pos| p.x < w && p.y < h;
        if !in_bounds(spec.goal) {
            return Err(Error::InvalidMap(format!("goal {} is outside the grid", spec.goal)));
        }
        let mut cells = vec![Cell::Normal; w * h];
        cells[spec.goal.y * w + spec.goal.x] = Cell::Goal;
        for &c in &spec.cliffs {
            if !in_bounds(c) {
                return Err(Error::InvalidMap(format!("cliff {c} is outside the grid")));
            }
            if c == spec.goal {
                return Err(Error::InvalidMap(format!("cliff {c} overlaps the goal")));
            }
            cells[c.y * w + c.x] = Cell::Cliff;
        }
        let mut map = GridMap {
            width: w,
            height: h,
            cells,
            goal: spec.goal,
            distance: Vec::new(),
            start_pool: Vec::new(),
        };
        map.distance = map.bfs_from_goal();
        map.start_pool = map
            .positions()
            .filter(|&p| map.cell(p) == Cell::Normal && map.distance[map.idx(p)].is_some())
            .collect();
        if map.start_pool.is_empty() {
            return Err(Error::InvalidMap(
                "no normal cell can reach the goal".to_owned(),
            ));
        }
        Ok(map)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: MapSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Like [`GridMap::load`], but also rejects maps with normal cells
    /// that cannot reach the goal.
    pub fn load_strict(path: &Path) -> Result<Self> {
        let map = Self::load(path)?;
        map.ensure_fully_reachable()?;
        Ok(map)
    }

    pub fn default_map() -> Self {
        Self::from_json(DEFAULT_MAP_JSON).expect("bundled default map is valid")
    }

    /// Empty `w`x`h` map with the goal at `goal`.
    pub fn open(width: usize, height: usize, goal: Pos) -> Result<Self> {
        Self::from_spec(&MapSpec {
            width,
            height,
            goal,
            cliffs: Vec::new(),
        })
    }

    pub fn to_spec(&self) -> MapSpec {
        MapSpec {
            width: self.width,
            height: self.height,
            goal: self.goal,
            cliffs: self
                .positions()
                .filter(|&p| self.cell(p) == Cell::Cliff)
                .collect(),
        }
    }

    pub fn write_json<W: io::Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, &self.to_spec())?;
        Ok(())
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn goal(&self) -> Pos {
        self.goal
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn idx(&self, p: Pos) -> usize {
        p.y * self.width + p.x
    }

    pub fn cell(&self, p: Pos) -> Cell {
        self.cells[self.idx(p)]
    }

    pub fn contains(&self, p: Pos) -> bool {
        p.x < self.width && p.y < self.height
    }

    pub fn positions(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| Pos::new(x, y)))
    }

    /// Normal cells from which the goal is reachable, in row-major order.
    pub fn start_pool(&self) -> &[Pos] {
        &self.start_pool
    }

    /// Normal cells with no path to the goal.
    pub fn unreachable_cells(&self) -> Vec<Pos> {
        self.positions()
            .filter(|&p| self.cell(p) == Cell::Normal && self.distance[self.idx(p)].is_none())
            .collect()
    }

    pub fn ensure_fully_reachable(&self) -> Result<()> {
        match self.unreachable_cells().first() {
            Some(p) => Err(Error::UnreachableCell { x: p.x, y: p.y }),
            None => Ok(()),
        }
    }

    /// Number of moves on a shortest safe path to the goal.
    pub fn shortest_path_len(&self, p: Pos) -> Option<usize> {
        self.distance[self.idx(p)]
    }

    /// Target cell of a move, before terminal checks.
    fn target(&self, p: Pos, a: Action) -> Pos {
        match a {
            Action::Up if p.y > 0 => Pos::new(p.x, p.y - 1),
            Action::Down if p.y + 1 < self.height => Pos::new(p.x, p.y + 1),
            Action::Left if p.x > 0 => Pos::new(p.x - 1, p.y),
            Action::Right if p.x + 1 < self.width => Pos::new(p.x + 1, p.y),
            _ => p,
        }
    }

    pub fn step(&self, state: Pos, action: Action) -> (Pos, Outcome) {
        let next = self.target(state, action);
        let outcome = match self.cell(next) {
            Cell::Normal => Outcome::Continue,
            Cell::Cliff => Outcome::Cliff,
            Cell::Goal => Outcome::Goal,
        };
        (next, outcome)
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Pos> {
        if self.start_pool.is_empty() {
            return Err(Error::EmptyStartPool);
        }
        Ok(self.start_pool[rng.random_range(0..self.start_pool.len())])
    }

    fn bfs_from_goal(&self) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_cells()];
        dist[self.idx(self.goal)] = Some(0);
        let mut queue = VecDeque::from([self.goal]);
        while let Some(p) = queue.pop_front() {
            let d = dist[self.idx(p)].unwrap_or(0);
            // Moves are reversible, so predecessors are the in-grid neighbours.
            for a in Action::ALL {
                let n = self.target(p, a);
                if n == p || self.cell(n) != Cell::Normal {
                    continue;
                }
                let i = self.idx(n);
                if dist[i].is_none() {
                    dist[i] = Some(d + 1);
                    queue.push_back(n);
                }
            }
        }
        dist
    }

    /// ASCII rendering: `.` normal, `#` cliff, `G` goal, `?` unreachable.
    pub fn render(&self) -> String {
        self.render_with(|_| None)
    }

    /// ASCII rendering with the greedy action arrow drawn on each pool cell.
    pub fn render_policy(&self, q: &QTable) -> String {
        self.render_with(|p| Some(q.greedy_action(p).arrow()))
    }

    pub(crate) fn render_with(&self, mut glyph: impl FnMut(Pos) -> Option<char>) -> String {
        let mut out = String::with_capacity((self.width * 2 + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let p = Pos::new(x, y);
                let c = match self.cell(p) {
                    Cell::Cliff => '#',
                    Cell::Goal => 'G',
                    Cell::Normal if self.distance[self.idx(p)].is_none() => '?',
                    Cell::Normal => glyph(p).unwrap_or('.'),
                };
                out.push(c);
                if x + 1 < self.width {
                    out.push(' ');
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Environment reward shape used only to build the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRewards {
    pub step: f64,
    pub cliff: f64,
    pub goal: f64,
    pub gamma: f64,
}

impl Default for OracleRewards {
    fn default() -> Self {
        OracleRewards {
            step: -1.0,
            cliff: -100.0,
            goal: 0.0,
            gamma: 0.99,
        }
    }
}

impl OracleRewards {
    fn reward(&self, outcome: Outcome) -> f64 {
        match outcome {
            Outcome::Continue => self.step,
            Outcome::Cliff => self.cliff,
            Outcome::Goal => self.goal,
        }
    }
}

const VI_TOLERANCE: f64 = 1e-10;
const VI_MAX_SWEEPS: usize = 1_000_000;

/// Exact optimal action values by value iteration.
///
/// Terminal cells keep value zero. Iteration stops once a full sweep moves
/// no state value by more than 1e-10.
pub fn optimal_q(map: &GridMap, rewards: OracleRewards) -> Result<QTable> {
    if !(rewards.gamma > 0.0 && rewards.gamma < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must lie in (0, 1), got {}",
            rewards.gamma
        )));
    }
    let normal: Vec<Pos> = map
        .positions()
        .filter(|&p| map.cell(p) == Cell::Normal)
        .collect();
    let mut v = vec![0.0f64; map.n_cells()];
    let backup = |v: &[f64], p: Pos, a: Action| {
        let (n, outcome) = map.step(p, a);
        let future = if outcome.is_terminal() { 0.0 } else { v[map.idx(n)] };
        rewards.reward(outcome) + rewards.gamma * future
    };
    let mut converged = false;
    for _ in 0..VI_MAX_SWEEPS {
        let mut delta = 0.0f64;
        let prev = v.clone();
        for &p in &normal {
            let best = Action::ALL
                .into_iter()
                .map(|a| backup(&prev, p, a))
                .fold(f64::NEG_INFINITY, f64::max);
            delta = delta.max((best - prev[map.idx(p)]).abs());
            v[map.idx(p)] = best;
        }
        if delta < VI_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::InvalidArgument(
            "value iteration did not converge".to_owned(),
        ));
    }
    let mut q = QTable::zeros(map);
    for &p in &normal {
        for a in Action::ALL {
            q.set(p, a, backup(&v, p, a));
        }
    }
    Ok(q)
}

/// Whether `action` is within [`BEST_ACTION_TOL`] of the best value at `state`.
pub fn is_best_action(optimal: &QTable, state: Pos, action: Action) -> bool {
    optimal.get(state, action) >= optimal.max_value(state) - BEST_ACTION_TOL
}
