//! 4-adic squares of the unit square.
//!
//! A [`Cell`] of level `i` is `[col·4^{-i}, (col+1)·4^{-i}] × [row·4^{-i}, (row+1)·4^{-i}]`.
//! Points are assigned to cells half-open in each axis, with `x = 1` and
//! `y = 1` belonging to the last column/row.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rat::Rat;

/// Deepest level whose indices fit in `u64` with room for neighbour arithmetic.
pub const MAX_CELL_LEVEL: u32 = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub level: u32,
    pub col: u64,
    pub row: u64,
}

impl Cell {
    pub fn new(level: u32, col: u64, row: u64) -> Result<Self> {
        if level > MAX_CELL_LEVEL {
            return Err(Error::InvalidCell(format!(
                "level {level} exceeds {MAX_CELL_LEVEL}"
            )));
        }
        let side = side_count(level);
        if col >= side || row >= side {
            return Err(Error::InvalidCell(format!(
                "({level}, {col}, {row}) outside 0..{side}"
            )));
        }
        Ok(Cell { level, col, row })
    }

    /// The level-`level` cell containing `(x, y)`.
    pub fn containing(x: &Rat, y: &Rat, level: u32) -> Result<Self> {
        let col = axis_index(x, level)?;
        let row = axis_index(y, level)?;
        Cell::new(level, col, row)
    }

    pub fn parent(&self) -> Option<Cell> {
        (self.level > 0).then(|| Cell {
            level: self.level - 1,
            col: self.col >> 2,
            row: self.row >> 2,
        })
    }

    /// The 16 children in row-major order (row outer, column inner).
    pub fn children(&self) -> Result<Vec<Cell>> {
        if self.level >= MAX_CELL_LEVEL {
            return Err(Error::InvalidCell(format!(
                "children of level {} exceed {MAX_CELL_LEVEL}",
                self.level
            )));
        }
        let mut out = Vec::with_capacity(16);
        for dr in 0..4 {
            for dc in 0..4 {
                out.push(Cell {
                    level: self.level + 1,
                    col: self.col * 4 + dc,
                    row: self.row * 4 + dr,
                });
            }
        }
        Ok(out)
    }

    /// Base-4 digit of the column at step `i` (`1 ≤ i ≤ level`), most significant first.
    pub fn col_digit(&self, i: u32) -> u8 {
        debug_assert!(i >= 1 && i <= self.level);
        ((self.col >> (2 * (self.level - i))) & 3) as u8
    }

    pub fn area(&self) -> Rat {
        Rat::inv_pow4(2 * self.level as u64)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.level, self.col, self.row)
    }
}

/// Number of cells per axis at `level`.
pub fn side_count(level: u32) -> u64 {
    1u64 << (2 * level)
}

fn axis_index(v: &Rat, level: u32) -> Result<u64> {
    if v.is_negative() || *v > Rat::one() {
        return Err(Error::InvalidCell(format!("coordinate {v} outside [0,1]")));
    }
    if level > MAX_CELL_LEVEL {
        return Err(Error::InvalidCell(format!(
            "level {level} exceeds {MAX_CELL_LEVEL}"
        )));
    }
    let side = side_count(level);
    let scaled = v * &Rat::from(side);
    let idx: u64 = scaled.floor().try_into().expect("index bounded by 4^31");
    Ok(idx.min(side - 1))
}

/// Axis-parallel rectangle with rational corners.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RectQ {
    pub l: Rat,
    pub r: Rat,
    pub b: Rat,
    pub t: Rat,
}

impl RectQ {
    pub fn new(l: Rat, r: Rat, b: Rat, t: Rat) -> Result<Self> {
        let zero = Rat::zero();
        let one = Rat::one();
        if !(zero <= l && l < r && r <= one && zero <= b && b < t && t <= one) {
            return Err(Error::InvalidRect(format!("[{l},{r}]x[{b},{t}]")));
        }
        Ok(RectQ { l, r, b, t })
    }

    pub fn unit() -> Self {
        RectQ {
            l: Rat::zero(),
            r: Rat::one(),
            b: Rat::zero(),
            t: Rat::one(),
        }
    }

    pub fn width(&self) -> Rat {
        &self.r - &self.l
    }

    pub fn height(&self) -> Rat {
        &self.t - &self.b
    }

    pub fn area(&self) -> Rat {
        self.width() * self.height()
    }

    /// Smallest level at which all four corners are integer multiples of `4^{-level}`.
    pub fn alignment_level(&self) -> Option<u64> {
        [&self.l, &self.r, &self.b, &self.t]
            .iter()
            .map(|v| v.four_adic_level())
            .try_fold(0u64, |acc, lv| lv.map(|lv| acc.max(lv)))
    }

    pub fn is_aligned_at(&self, level: u64) -> bool {
        self.alignment_level().is_some_and(|a| a <= level)
    }

    pub fn contains_rect(&self, other: &RectQ) -> bool {
        self.l <= other.l && other.r <= self.r && self.b <= other.b && other.t <= self.t
    }
}

impl fmt::Display for RectQ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]x[{},{}]", self.l, self.r, self.b, self.t)
    }
}

pub fn cell_bounds(c: &Cell) -> RectQ {
    let side = Rat::from(side_count(c.level));
    RectQ {
        l: Rat::from(c.col) / &side,
        r: Rat::from(c.col + 1) / &side,
        b: Rat::from(c.row) / &side,
        t: Rat::from(c.row + 1) / &side,
    }
}

/// Closed squares intersect: edge or corner contact, or the same cell.
pub fn adjacent(a: &Cell, b: &Cell) -> Result<bool> {
    if a.level != b.level {
        return Err(Error::LevelMismatch(a.level, b.level));
    }
    Ok(a.col.abs_diff(b.col) <= 1 && a.row.abs_diff(b.row) <= 1)
}

/// Whether two same-level cells share an edge (not just a corner).
pub fn edge_adjacent(a: &Cell, b: &Cell) -> Result<bool> {
    if a.level != b.level {
        return Err(Error::LevelMismatch(a.level, b.level));
    }
    Ok(a.col.abs_diff(b.col) + a.row.abs_diff(b.row) == 1)
}

/// Is level-`i` column `col` one of the two middle quarters of its level-`(i-1)` parent?
pub fn a_membership(i: u32, col: u64) -> bool {
    debug_assert!(i >= 1);
    matches!(col & 3, 1 | 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rat {
        Rat::new(n, d)
    }

    #[test]
    fn bounds_examples() {
        assert_eq!(cell_bounds(&Cell::new(0, 0, 0).unwrap()), RectQ::unit());
        let b = cell_bounds(&Cell::new(1, 2, 3).unwrap());
        assert_eq!((b.l, b.r, b.b, b.t), (r(1, 2), r(3, 4), r(3, 4), r(1, 1)));
        let b = cell_bounds(&Cell::new(2, 5, 0).unwrap());
        assert_eq!((b.l, b.r, b.b, b.t), (r(5, 16), r(6, 16), r(0, 1), r(1, 16)));
    }

    #[test]
    fn adjacency_examples() {
        let c = |l, x, y| Cell::new(l, x, y).unwrap();
        assert!(adjacent(&c(1, 0, 0), &c(1, 1, 1)).unwrap());
        assert!(!adjacent(&c(1, 0, 0), &c(1, 2, 0)).unwrap());
        assert!(adjacent(&c(1, 3, 3), &c(1, 3, 3)).unwrap());
        assert!(!edge_adjacent(&c(1, 0, 0), &c(1, 1, 1)).unwrap());
        assert_eq!(
            adjacent(&c(1, 0, 0), &c(2, 0, 0)),
            Err(Error::LevelMismatch(1, 2))
        );
    }

    #[test]
    fn a_membership_examples() {
        let got: Vec<bool> = (0..4).map(|c| a_membership(1, c)).collect();
        assert_eq!(got, vec![false, true, true, false]);
        assert!(a_membership(2, 6));
        assert!(!a_membership(3, 32));
    }

    #[test]
    fn interior_cell_has_eight_neighbours() {
        let centre = Cell::new(2, 5, 6).unwrap();
        let n = (0..16)
            .flat_map(|x| (0..16).map(move |y| Cell::new(2, x, y).unwrap()))
            .filter(|c| *c != centre && adjacent(&centre, c).unwrap())
            .count();
        assert_eq!(n, 8);
    }

    #[test]
    fn point_location_is_half_open_closed_at_one() {
        let c = Cell::containing(&r(1, 4), &r(1, 1), 1).unwrap();
        assert_eq!((c.col, c.row), (1, 3));
        let c = Cell::containing(&r(1, 1), &r(0, 1), 2).unwrap();
        assert_eq!((c.col, c.row), (15, 0));
        assert!(Cell::containing(&r(5, 4), &r(0, 1), 2).is_err());
    }

    #[test]
    fn invalid_cells_rejected() {
        assert!(Cell::new(1, 4, 0).is_err());
        assert!(Cell::new(32, 0, 0).is_err());
        assert!(RectQ::new(r(1, 2), r(1, 2), r(0, 1), r(1, 1)).is_err());
    }

    proptest! {
        #[test]
        fn children_partition_area(level in 0u32..12, col in any::<u64>(), row in any::<u64>()) {
            let side = side_count(level);
            let c = Cell::new(level, col % side, row % side).unwrap();
            let kids = c.children().unwrap();
            let total: Rat = kids.iter().map(|k| cell_bounds(k).area()).sum();
            prop_assert_eq!(total, cell_bounds(&c).area());
            for k in &kids {
                prop_assert!(cell_bounds(&c).contains_rect(&cell_bounds(k)));
                prop_assert_eq!(k.parent(), Some(c));
            }
        }

        #[test]
        fn adjacency_symmetric(level in 1u32..8, a in any::<(u64, u64)>(), d in (0u64..3, 0u64..3)) {
            let side = side_count(level);
            let ca = Cell::new(level, a.0 % side, a.1 % side).unwrap();
            let col = (ca.col + d.0).saturating_sub(1).min(side - 1);
            let row = (ca.row + d.1).saturating_sub(1).min(side - 1);
            let cb = Cell::new(level, col, row).unwrap();
            prop_assert_eq!(adjacent(&ca, &cb).unwrap(), adjacent(&cb, &ca).unwrap());
            prop_assert!(adjacent(&ca, &cb).unwrap());
        }

        #[test]
        fn a_membership_periodic_and_half(i in 1u32..10, col in 0u64..1_000_000) {
            prop_assert_eq!(a_membership(i, col), a_membership(i, col + 4));
            let marked = (0..16).filter(|c| a_membership(i, col * 16 + c)).count();
            prop_assert_eq!(marked, 8);
        }
    }
}
