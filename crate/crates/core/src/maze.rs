//! Square text mazes: generation, text format, move verification and a BFS oracle.
//!
//! Grid characters: `S` start, `E` end, `*` walkable, `.` wall.
//! The file format is a `size=<n>` header line followed by `n` rows of `n`
//! characters, lines separated by a single `\n`, no trailing whitespace.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const MIN_GENERATED_SIZE: usize = 5;
pub const MAX_GENERATED_SIZE: usize = 41;

/// Maze sizes of the training split.
pub const TRAIN_SIZES: [usize; 4] = [9, 11, 13, 15];
/// Maze sizes of the test split (training sizes plus out-of-distribution ones).
pub const TEST_SIZES: [usize; 8] = [7, 9, 11, 13, 15, 17, 19, 21];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Start,
    End,
    Open,
    Wall,
}

impl Cell {
    pub fn to_char(self) -> char {
        match self {
            Cell::Start => 'S',
            Cell::End => 'E',
            Cell::Open => '*',
            Cell::Wall => '.',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'S' => Some(Cell::Start),
            'E' => Some(Cell::End),
            '*' => Some(Cell::Open),
            '.' => Some(Cell::Wall),
            _ => None,
        }
    }

    pub fn is_walkable(self) -> bool {
        self != Cell::Wall
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Move {
    Up,
    Down,
    Left,
    Right,
}

impl Move {
    pub const ALL: [Move; 4] = [Move::Up, Move::Down, Move::Left, Move::Right];

    pub fn to_char(self) -> char {
        match self {
            Move::Up => 'U',
            Move::Down => 'D',
            Move::Left => 'L',
            Move::Right => 'R',
        }
    }

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            'U' => Ok(Move::Up),
            'D' => Ok(Move::Down),
            'L' => Ok(Move::Left),
            'R' => Ok(Move::Right),
            other => Err(Error::domain(format!("invalid move symbol `{other}`"))),
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Applies the move; `None` when it leaves the `size x size` grid.
    pub fn step(self, (row, col): (usize, usize), size: usize) -> Option<(usize, usize)> {
        match self {
            Move::Up => row.checked_sub(1).map(|r| (r, col)),
            Move::Down => (row + 1 < size).then_some((row + 1, col)),
            Move::Left => col.checked_sub(1).map(|c| (row, c)),
            Move::Right => (col + 1 < size).then_some((row, col + 1)),
        }
    }
}

/// A string over `{U, D, L, R}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct MoveSequence(pub Vec<Move>);

impl MoveSequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn moves(&self) -> &[Move] {
        &self.0
    }
}

impl FromStr for MoveSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.trim()
            .chars()
            .map(Move::from_char)
            .collect::<Result<Vec<_>>>()
            .map(MoveSequence)
    }
}

impl fmt::Display for MoveSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.0 {
            write!(f, "{}", m.to_char())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Maze {
    size: usize,
    grid: Vec<Cell>,
    start: (usize, usize),
    end: (usize, usize),
}

impl Maze {
    /// Builds a maze from rows of grid characters.
    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        let size = rows.len();
        if size < 2 {
            return Err(Error::Parse("maze needs at least 2 rows".into()));
        }
        let mut grid = Vec::with_capacity(size * size);
        let mut start = None;
        let mut end = None;
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            let cells = row
                .chars()
                .map(|c| {
                    Cell::from_char(c).ok_or_else(|| {
                        Error::Parse(format!("invalid maze character `{c}` in row {r}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if cells.len() != size {
                return Err(Error::Parse(format!(
                    "row {r} has {} characters, expected {size}",
                    cells.len()
                )));
            }
            for (c, cell) in cells.iter().enumerate() {
                let slot = match cell {
                    Cell::Start => &mut start,
                    Cell::End => &mut end,
                    _ => continue,
                };
                if slot.replace((r, c)).is_some() {
                    return Err(Error::Parse(format!(
                        "more than one `{}` in maze",
                        cell.to_char()
                    )));
                }
            }
            grid.extend(cells);
        }
        let start = start.ok_or_else(|| Error::Parse("maze has no `S`".into()))?;
        let end = end.ok_or_else(|| Error::Parse("maze has no `E`".into()))?;
        Ok(Self {
            size,
            grid,
            start,
            end,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn start(&self) -> (usize, usize) {
        self.start
    }

    pub fn end(&self) -> (usize, usize) {
        self.end
    }

    pub fn cell(&self, (row, col): (usize, usize)) -> Cell {
        self.grid[row * self.size + col]
    }

    pub fn is_walkable(&self, pos: (usize, usize)) -> bool {
        self.cell(pos).is_walkable()
    }

    pub fn open_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.size)
            .flat_map(move |r| (0..self.size).map(move |c| (r, c)))
            .filter(move |&p| self.is_walkable(p))
    }

    /// The `n` grid rows joined by `\n`.
    pub fn grid_text(&self) -> String {
        let mut out = String::with_capacity(self.size * (self.size + 1));
        for r in 0..self.size {
            if r > 0 {
                out.push('\n');
            }
            out.extend(
                self.grid[r * self.size..(r + 1) * self.size]
                    .iter()
                    .map(|c| c.to_char()),
            );
        }
        out
    }

    /// File form: `size=<n>` header, then the grid.
    pub fn serialize(&self) -> String {
        format!("size={}\n{}", self.size, self.grid_text())
    }

    /// Parses the file form. A headerless grid is accepted too.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines: Vec<&str> = text.lines().collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        let declared = match lines.first() {
            Some(first) if first.starts_with("size=") => {
                let n = first["size=".len()..]
                    .trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad size header `{first}`: {e}")))?;
                lines.remove(0);
                Some(n)
            }
            _ => None,
        };
        let maze = Self::from_rows(&lines)?;
        if let Some(n) = declared {
            if n != maze.size {
                return Err(Error::Parse(format!(
                    "header declares size {n} but grid has {} rows",
                    maze.size
                )));
            }
        }
        Ok(maze)
    }
}

impl fmt::Display for Maze {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl FromStr for Maze {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Maze::parse(s)
    }
}

/// Randomised depth-first-search perfect maze, with `S` and `E` at the two
/// ends of its longest path.
pub fn generate(size: usize, seed: u64) -> Result<Maze> {
    if size.is_multiple_of(2) || !(MIN_GENERATED_SIZE..=MAX_GENERATED_SIZE).contains(&size) {
        return Err(Error::domain(format!(
            "maze size must be odd and within [{MIN_GENERATED_SIZE}, {MAX_GENERATED_SIZE}], got {size}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grid = vec![Cell::Wall; size * size];
    let rooms = (size - 1) / 2;
    let room = |i: usize| 2 * i + 1;

    let first = (rng.random_range(0..rooms), rng.random_range(0..rooms));
    let mut visited = vec![false; rooms * rooms];
    visited[first.0 * rooms + first.1] = true;
    grid[room(first.0) * size + room(first.1)] = Cell::Open;
    let mut stack = vec![first];
    while let Some(&(r, c)) = stack.last() {
        let mut next: Vec<(usize, usize)> = Vec::with_capacity(4);
        if r > 0 {
            next.push((r - 1, c));
        }
        if r + 1 < rooms {
            next.push((r + 1, c));
        }
        if c > 0 {
            next.push((r, c - 1));
        }
        if c + 1 < rooms {
            next.push((r, c + 1));
        }
        next.retain(|&(nr, nc)| !visited[nr * rooms + nc]);
        match next.choose(&mut rng) {
            Some(&(nr, nc)) => {
                visited[nr * rooms + nc] = true;
                let wall = (room(r) + room(nr)) / 2 * size + (room(c) + room(nc)) / 2;
                grid[wall] = Cell::Open;
                grid[room(nr) * size + room(nc)] = Cell::Open;
                stack.push((nr, nc));
            }
            None => {
                stack.pop();
            }
        }
    }

    // The carved cells form a tree, so two BFS sweeps find its diameter.
    let seed_cell = (room(first.0), room(first.1));
    let a = farthest_open(&grid, size, seed_cell);
    let b = farthest_open(&grid, size, a);
    grid[a.0 * size + a.1] = Cell::Start;
    grid[b.0 * size + b.1] = Cell::End;
    Ok(Maze {
        size,
        grid,
        start: a,
        end: b,
    })
}

fn farthest_open(grid: &[Cell], size: usize, from: (usize, usize)) -> (usize, usize) {
    let dist = bfs_distances(size, from, |p| grid[p.0 * size + p.1].is_walkable());
    let mut best = from;
    let mut best_d = 0;
    for r in 0..size {
        for c in 0..size {
            if let Some(d) = dist[r * size + c] {
                if d > best_d {
                    best_d = d;
                    best = (r, c);
                }
            }
        }
    }
    best
}

fn bfs_distances(
    size: usize,
    from: (usize, usize),
    walkable: impl Fn((usize, usize)) -> bool,
) -> Vec<Option<usize>> {
    let mut dist = vec![None; size * size];
    dist[from.0 * size + from.1] = Some(0);
    let mut queue = VecDeque::from([from]);
    while let Some(p) = queue.pop_front() {
        let d = dist[p.0 * size + p.1].unwrap_or(0);
        for m in Move::ALL {
            if let Some(q) = m.step(p, size) {
                if walkable(q) && dist[q.0 * size + q.1].is_none() {
                    dist[q.0 * size + q.1] = Some(d + 1);
                    queue.push_back(q);
                }
            }
        }
    }
    dist
}

/// Walks `moves` from the start; `true` iff the walk stays on walkable cells
/// and its final cell is the end. A walk that reaches the end and keeps
/// moving fails, even if it returns there.
pub fn verify(maze: &Maze, moves: &MoveSequence) -> bool {
    let mut pos = maze.start;
    for m in moves.moves() {
        if pos == maze.end {
            return false;
        }
        match m.step(pos, maze.size) {
            Some(next) if maze.is_walkable(next) => pos = next,
            _ => return false,
        }
    }
    pos == maze.end
}

/// [`verify`] on a raw move string; malformed symbols are a domain error.
pub fn verify_str(maze: &Maze, moves: &str) -> Result<bool> {
    Ok(verify(maze, &moves.parse()?))
}

/// A shortest move sequence from start to end, if one exists.
pub fn bfs_solve(maze: &Maze) -> Option<MoveSequence> {
    let size = maze.size;
    let mut came_from: Vec<Option<((usize, usize), Move)>> = vec![None; size * size];
    let mut seen = vec![false; size * size];
    seen[maze.start.0 * size + maze.start.1] = true;
    let mut queue = VecDeque::from([maze.start]);
    while let Some(p) = queue.pop_front() {
        if p == maze.end {
            let mut moves = Vec::new();
            let mut cur = p;
            while let Some((prev, m)) = came_from[cur.0 * size + cur.1] {
                moves.push(m);
                cur = prev;
            }
            moves.reverse();
            return Some(MoveSequence(moves));
        }
        for m in Move::ALL {
            if let Some(q) = m.step(p, size) {
                let idx = q.0 * size + q.1;
                if maze.is_walkable(q) && !seen[idx] {
                    seen[idx] = true;
                    came_from[idx] = Some((p, m));
                    queue.push_back(q);
                }
            }
        }
    }
    None
}

/// Drops exact-grid duplicates, keeping first occurrences in order.
pub fn dedup(mazes: Vec<Maze>) -> Vec<Maze> {
    let mut seen = HashSet::new();
    mazes
        .into_iter()
        .filter(|m| seen.insert(m.grid.clone()))
        .collect()
}
