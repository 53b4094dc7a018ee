//! Table-driven evaluation of weight words for exhaustive sweeps.
//!
//! A [`Lattice`] caches the band masks of every row and the `A`-masks of
//! every column up to a fixed depth, so the word of any cell is two lookups
//! and a few bit operations. Masses are scaled to integers so sweeps can sum
//! them exactly without rational arithmetic.

use std::ops::{Add, Mul, Sub};

use num_bigint::{BigInt, BigUint};
use num_traits::{One, Zero};

use crate::construction::{col_amask, row_runs, RowMasks, WeightValue, WeightWord};
use crate::error::{Error, Result};
use crate::grid::{side_count, Cell, MAX_CELL_LEVEL};
use crate::rat::Rat;
use crate::schedule::Params;

/// A single corrupted weight, used to exercise the conservation checks.
///
/// The weight of step `cell.level` is replaced by `value` on `cell` and on
/// all of its descendants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Fault {
    pub cell: Cell,
    pub value: WeightValue,
}

#[derive(Clone, Debug)]
pub struct Lattice {
    params: Params,
    depth: u32,
    rows: Vec<Vec<RowMasks>>,
    cols: Vec<Vec<u64>>,
    fault: Option<Fault>,
}

impl Lattice {
    pub fn new(params: &Params, depth: u32) -> Result<Self> {
        if depth > MAX_CELL_LEVEL.min(16) {
            return Err(Error::SweepTooLarge {
                needed: 1u128 << (4 * depth.min(31)),
                limit: 1u128 << 64,
            });
        }
        let mut rows = Vec::with_capacity(depth as usize + 1);
        let mut cols = Vec::with_capacity(depth as usize + 1);
        for level in 0..=depth {
            let mut masks = vec![RowMasks::default(); side_count(level) as usize];
            for run in row_runs(level, params)? {
                run.class.check_defined(params)?;
                masks[run.start as usize..run.end as usize].fill(run.class.masks());
            }
            rows.push(masks);
            cols.push((0..side_count(level)).map(|c| col_amask(level, c)).collect());
        }
        Ok(Lattice {
            params: params.clone(),
            depth,
            rows,
            cols,
            fault: None,
        })
    }

    pub fn with_fault(params: &Params, depth: u32, fault: Fault) -> Result<Self> {
        if fault.cell.level == 0 || fault.cell.level > depth {
            return Err(Error::InvalidCell(format!(
                "fault cell {} must have level in 1..={depth}",
                fault.cell
            )));
        }
        let mut lattice = Lattice::new(params, depth)?;
        lattice.fault = Some(fault);
        Ok(lattice)
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn row_masks(&self, level: u32, row: u64) -> RowMasks {
        self.rows[level as usize][row as usize]
    }

    pub fn amask(&self, level: u32, col: u64) -> u64 {
        self.cols[level as usize][col as usize]
    }

    pub fn word(&self, level: u32, col: u64, row: u64) -> WeightWord {
        let mut w = WeightWord::combine(level, self.row_masks(level, row), self.amask(level, col));
        if let Some(f) = &self.fault {
            let fl = f.cell.level;
            if level >= fl {
                let shift = 2 * (level - fl);
                if col >> shift == f.cell.col && row >> shift == f.cell.row {
                    let bit = 1u64 << (fl - 1);
                    w.pmask &= !bit;
                    w.qmask &= !bit;
                    match f.value {
                        WeightValue::P => w.pmask |= bit,
                        WeightValue::Q => w.qmask |= bit,
                        WeightValue::One => {}
                    }
                }
            }
        }
        w
    }
}

/// Integer types usable as exact mass accumulators.
pub trait Exact:
    Clone
    + Ord
    + Zero
    + One
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + From<u64>
{
    fn to_big(&self) -> BigInt;
}

impl Exact for u128 {
    fn to_big(&self) -> BigInt {
        BigInt::from(*self)
    }
}

impl Exact for BigUint {
    fn to_big(&self) -> BigInt {
        BigInt::from(self.clone())
    }
}

fn ipow<T: Exact>(base: &T, e: u32) -> T {
    (0..e).fold(T::one(), |acc, _| acc * base.clone())
}

/// Masses of level-`l` cells (`l ≤ depth`) as integer multiples of
/// `1 / (D^depth · 16^depth)`, where `p = P/D` and `q = Q/D`.
#[derive(Clone, Debug)]
pub struct MassTable<T> {
    depth: u32,
    // [level][a][b]
    table: Vec<Vec<Vec<T>>>,
    scale: BigInt,
}

/// Integer numerators `(P, Q, D)` with `p = P/D`, `q = Q/D`.
pub fn common_parts(params: &Params) -> (BigUint, BigUint, BigUint) {
    let p = params.p();
    let d = p.denom().magnitude().clone();
    let big_p = p.numer().magnitude().clone();
    let big_q = &d * 2u32 - &big_p;
    (big_p, big_q, d)
}

/// Whether all sums of a depth-`depth` sweep fit in `u128`.
pub fn fits_u128(params: &Params, depth: u32) -> bool {
    let (_, big_q, d) = common_parts(params);
    let base_bits = big_q.bits().max(d.bits()) as u32;
    // per-cell mass times 16^depth cells, plus headroom for child sums
    base_bits * depth + 8 * depth + 8 < 127
}

impl<T: Exact> MassTable<T> {
    pub fn new(params: &Params, depth: u32, convert: impl Fn(&BigUint) -> T) -> Self {
        let (big_p, big_q, d) = common_parts(params);
        let (tp, tq, td) = (convert(&big_p), convert(&big_q), convert(&d));
        let sixteen = T::from(16u64);
        let mut table = Vec::with_capacity(depth as usize + 1);
        for level in 0..=depth {
            let lscale = ipow(&sixteen, depth - level);
            let mut by_a = Vec::with_capacity(level as usize + 1);
            for a in 0..=level {
                let pa = ipow(&tp, a);
                let row: Vec<T> = (0..=level - a)
                    .map(|b| {
                        pa.clone() * ipow(&tq, b) * ipow(&td, depth - a - b) * lscale.clone()
                    })
                    .collect();
                by_a.push(row);
            }
            table.push(by_a);
        }
        let scale = BigInt::from(num_traits::Pow::pow(&d, depth))
            * (BigInt::one() << (4 * depth as u64));
        MassTable {
            depth,
            table,
            scale,
        }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn mass(&self, w: &WeightWord) -> &T {
        &self.table[w.level as usize][w.p_count() as usize][w.q_count() as usize]
    }

    pub fn to_rat(&self, v: &T) -> Rat {
        Rat::new(v.to_big(), self.scale.clone())
    }
}
