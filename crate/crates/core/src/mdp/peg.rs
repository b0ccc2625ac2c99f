use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;

use super::{Mdp, Transition};
use crate::error::{Error, Result};

pub const BOARD_SIDE: usize = 4;
pub const BOARD_CELLS: usize = BOARD_SIDE * BOARD_SIDE;

/// Occupancy of the 4×4 board; bit `r * 4 + c` is cell `(r, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PegBoard(pub u16);

/// A jump from `from` over `over` onto `to`, as cell indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Move {
    pub from: u8,
    pub over: u8,
    pub to: u8,
}

const fn cell(r: usize, c: usize) -> u8 {
    (r * BOARD_SIDE + c) as u8
}

/// Every geometrically possible jump, in (from, direction) order.
const CANDIDATES: [Move; 32] = {
    let mut out = [Move { from: 0, over: 0, to: 0 }; 32];
    let mut n = 0;
    let mut r = 0;
    while r < BOARD_SIDE {
        let mut c = 0;
        while c < BOARD_SIDE {
            // Up, down, left, right.
            if r >= 2 {
                out[n] = Move { from: cell(r, c), over: cell(r - 1, c), to: cell(r - 2, c) };
                n += 1;
            }
            if r + 2 < BOARD_SIDE {
                out[n] = Move { from: cell(r, c), over: cell(r + 1, c), to: cell(r + 2, c) };
                n += 1;
            }
            if c >= 2 {
                out[n] = Move { from: cell(r, c), over: cell(r, c - 1), to: cell(r, c - 2) };
                n += 1;
            }
            if c + 2 < BOARD_SIDE {
                out[n] = Move { from: cell(r, c), over: cell(r, c + 1), to: cell(r, c + 2) };
                n += 1;
            }
            c += 1;
        }
        r += 1;
    }
    assert!(n == 32);
    out
};

impl PegBoard {
    pub fn from_cells(cells: &[(usize, usize)]) -> Result<Self> {
        let mut bits = 0u16;
        for &(r, c) in cells {
            if r >= BOARD_SIDE || c >= BOARD_SIDE {
                return Err(Error::InvalidInput(format!("cell ({r}, {c}) is off the board")));
            }
            bits |= 1 << cell(r, c);
        }
        Ok(Self(bits))
    }

    /// `pegs` distinct cells chosen uniformly at random.
    pub fn random<R: Rng + ?Sized>(pegs: usize, rng: &mut R) -> Self {
        assert!(pegs <= BOARD_CELLS, "{pegs} pegs do not fit on the board");
        let mut bits = 0u16;
        for i in sample(rng, BOARD_CELLS, pegs) {
            bits |= 1 << i;
        }
        Self(bits)
    }

    pub fn pegs(&self) -> u32 {
        self.0.count_ones()
    }

    pub fn occupied(&self, cell: u8) -> bool {
        self.0 >> cell & 1 == 1
    }
}

impl fmt::Display for PegBoard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..BOARD_SIDE {
            for c in 0..BOARD_SIDE {
                f.write_str(if self.occupied(cell(r, c)) { "#" } else { "." })?;
            }
            f.write_str("\n")?;
        }
        Ok(())
    }
}

impl FromStr for PegBoard {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows: Vec<&str> = s.lines().collect();
        if rows.len() != BOARD_SIDE {
            return Err(Error::InvalidInput(format!("board needs {BOARD_SIDE} rows, got {}", rows.len())));
        }
        let mut bits = 0u16;
        for (r, row) in rows.iter().enumerate() {
            let chars: Vec<char> = row.chars().collect();
            if chars.len() != BOARD_SIDE {
                return Err(Error::InvalidInput(format!("row {r} has {} cells", chars.len())));
            }
            for (c, ch) in chars.into_iter().enumerate() {
                match ch {
                    '#' => bits |= 1 << cell(r, c),
                    '.' => {}
                    other => return Err(Error::InvalidInput(format!("unexpected character {other:?} in board"))),
                }
            }
        }
        Ok(Self(bits))
    }
}

pub fn peg_legal_moves(board: &PegBoard) -> Vec<Move> {
    CANDIDATES
        .iter()
        .filter(|m| board.occupied(m.from) && board.occupied(m.over) && !board.occupied(m.to))
        .copied()
        .collect()
}

/// Panics if the move is not legal on `board`.
pub fn peg_apply(board: &PegBoard, mv: &Move) -> PegBoard {
    assert!(
        board.occupied(mv.from) && board.occupied(mv.over) && !board.occupied(mv.to),
        "illegal move {mv:?}"
    );
    PegBoard(board.0 & !(1 << mv.from) & !(1 << mv.over) | (1 << mv.to))
}

/// Peg solitaire on the 4×4 board: +1 per jump, undiscounted, terminal when
/// no jump is possible.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PegSolitaire;

impl Mdp for PegSolitaire {
    type State = PegBoard;
    type Action = Move;

    fn actions(&self, state: &PegBoard) -> Vec<Move> {
        peg_legal_moves(state)
    }

    fn transitions(&self, state: &PegBoard, action: &Move) -> Vec<Transition<PegBoard>> {
        vec![Transition::new(peg_apply(state, action), 1.0, 1.0)]
    }

    fn gamma(&self) -> f64 {
        1.0
    }

    fn step<R: Rng + ?Sized>(&self, state: &PegBoard, action: &Move, _rng: &mut R) -> (PegBoard, f64) {
        (peg_apply(state, action), 1.0)
    }
}

/// Fewest pegs reachable from `board` by exhaustive search.
pub fn peg_min_reachable(board: &PegBoard) -> u32 {
    peg_legal_moves(board)
        .iter()
        .map(|m| peg_min_reachable(&peg_apply(board, m)))
        .min()
        .unwrap_or_else(|| board.pegs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent enumerator: every cell, every unit direction, check the
    /// landing square is on the board by coordinates.
    fn brute_force_moves(board: &PegBoard) -> Vec<Move> {
        let mut out = Vec::new();
        let on = |r: i32, c: i32| (0..4).contains(&r) && (0..4).contains(&c);
        for r in 0..4i32 {
            for c in 0..4i32 {
                for (dr, dc) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
                    let (r1, c1, r2, c2) = (r + dr, c + dc, r + 2 * dr, c + 2 * dc);
                    if !on(r2, c2) {
                        continue;
                    }
                    let idx = |r: i32, c: i32| (r * 4 + c) as u8;
                    let m = Move { from: idx(r, c), over: idx(r1, c1), to: idx(r2, c2) };
                    if board.occupied(m.from) && board.occupied(m.over) && !board.occupied(m.to) {
                        out.push(m);
                    }
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn trivial_boards() {
        assert!(peg_legal_moves(&PegBoard::from_cells(&[(2, 1)]).unwrap()).is_empty());
        assert!(peg_legal_moves(&PegBoard(u16::MAX)).is_empty());
        assert!(PegSolitaire.is_terminal(&PegBoard(u16::MAX)));
    }

    #[test]
    fn corner_pair_has_one_move() {
        let b = PegBoard::from_cells(&[(0, 0), (0, 1)]).unwrap();
        let moves = peg_legal_moves(&b);
        assert_eq!(moves, vec![Move { from: 0, over: 1, to: 2 }]);
        assert_eq!(moves, brute_force_moves(&b));
        let after = peg_apply(&b, &moves[0]);
        assert_eq!(after, PegBoard::from_cells(&[(0, 2)]).unwrap());
        assert_eq!(after.0, 0b100);
    }

    #[test]
    fn text_round_trip() {
        let text = "#..#\n.##.\n....\n#...\n";
        let b: PegBoard = text.parse().unwrap();
        assert_eq!(b.pegs(), 5);
        assert_eq!(b.to_string(), text);
        assert!("###\n".parse::<PegBoard>().is_err());
        assert!("#..x\n....\n....\n....\n".parse::<PegBoard>().is_err());
    }

    #[test]
    fn random_boards() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let b = PegBoard::random(9, &mut rng);
            assert_eq!(b.pegs(), 9);
            let mut s = b;
            let (mut len, mut total) = (0, 0.0);
            while !PegSolitaire.is_terminal(&s) {
                let moves = PegSolitaire.actions(&s);
                let m = moves[rng.random_range(0..moves.len())];
                let (next, r) = PegSolitaire.step(&s, &m, &mut rng);
                s = next;
                total += r;
                len += 1;
            }
            assert!(len <= 8);
            assert_eq!(total, (b.pegs() - s.pegs()) as f64);
        }
    }

    #[test]
    fn min_reachable_on_solvable_fixture() {
        let b: PegBoard = "##..\n....\n....\n....\n".parse().unwrap();
        assert_eq!(peg_min_reachable(&b), 1);
        let b: PegBoard = "#.#.\n....\n#..#\n....\n".parse().unwrap();
        assert_eq!(peg_min_reachable(&b), 4);
    }

    proptest! {
        #[test]
        fn moves_match_brute_force(bits in any::<u16>()) {
            let b = PegBoard(bits);
            let mut fast = peg_legal_moves(&b);
            fast.sort();
            prop_assert_eq!(&fast, &brute_force_moves(&b));
            for m in fast {
                let next = peg_apply(&b, &m);
                prop_assert_eq!(next.pegs() + 1, b.pegs());
                let reverse = Move { from: m.to, over: m.over, to: m.from };
                prop_assert!(!peg_legal_moves(&next).contains(&reverse));
            }
        }
    }
}
