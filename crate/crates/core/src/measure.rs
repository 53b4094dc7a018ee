//! Exact values of the measure on 4-adic cells and aligned rectangles, and
//! the exhaustive conservation sweep.
//!
//! The mass of a level-`L` cell is its density `Π w_i` times `16^{-L}`;
//! refining a cell never changes its mass, so this is also the mass under
//! the limit measure.

use num_bigint::BigUint;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::{row_runs, weight_word, RowMasks, WeightValue};
use crate::error::{Error, Result};
use crate::grid::{a_membership, side_count, Cell, RectQ, MAX_CELL_LEVEL};
use crate::lattice::{fits_u128, Exact, Lattice, MassTable};
use crate::rat::Rat;
use crate::schedule::Params;

/// Density of `μ_L` on a level-`L` cell: `p^p_exp · q^q_exp`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DensityValue {
    pub value: Rat,
    pub p_exp: u32,
    pub q_exp: u32,
}

pub fn density(cell: &Cell, params: &Params) -> Result<DensityValue> {
    let w = weight_word(cell, params)?;
    Ok(DensityValue {
        value: w.density(params),
        p_exp: w.p_count(),
        q_exp: w.q_count(),
    })
}

pub fn mu_cell(cell: &Cell, params: &Params) -> Result<Rat> {
    Ok(density(cell, params)?.value * cell.area())
}

/// Factor of step `i` for a column digit `d` in a row with the given band masks.
fn step_factor(masks: RowMasks, i: u32, d: u64, p: &Rat, q: &Rat) -> Rat {
    let bit = 1u64 << (i - 1);
    let w = WeightValue::from_case(
        masks.upper & bit != 0,
        masks.lower & bit != 0,
        a_membership(i, d),
    );
    match w {
        WeightValue::P => p.clone(),
        WeightValue::Q => q.clone(),
        WeightValue::One => Rat::one(),
    }
}

/// `Σ_{c' < c} Π_i g_i(d_i(c'))` over level-`level` columns.
///
/// Every step averages to 1 over the four digits, so a free suffix of `r`
/// digits contributes exactly `4^r`.
fn column_prefix_sum(masks: RowMasks, level: u32, c: u64, p: &Rat, q: &Rat) -> Rat {
    if c >= side_count(level) {
        return Rat::from(side_count(level));
    }
    let mut total = Rat::zero();
    let mut prefix = Rat::one();
    for i in 1..=level {
        let d = (c >> (2 * (level - i))) & 3;
        let below: Rat = (0..d).map(|e| step_factor(masks, i, e, p, q)).sum();
        if !below.is_zero() {
            total = total + &prefix * &below * Rat::from(side_count(level - i));
        }
        prefix = prefix * step_factor(masks, i, d, p, q);
    }
    total
}

/// Exact mass of a rectangle whose corners lie on the `4^{-level}` grid for
/// some `level ≤ M_K` (deeper corners are allowed where the rectangle only
/// meets left-over strips).
pub fn mu_rect(rect: &RectQ, params: &Params) -> Result<Rat> {
    let level = rect.alignment_level().ok_or_else(|| {
        Error::InvalidRect(format!("{rect} has corners off the 4-adic grid"))
    })?;
    if level > MAX_CELL_LEVEL as u64 {
        return Err(Error::DepthExceeded {
            requested: level,
            max: MAX_CELL_LEVEL as u64,
        });
    }
    mu_rect_at(rect, level as u32, params)
}

/// [`mu_rect`] evaluated on the level-`level` grid, which must be at least
/// as fine as the rectangle's own alignment.
pub fn mu_rect_at(rect: &RectQ, level: u32, params: &Params) -> Result<Rat> {
    if !rect.is_aligned_at(level as u64) || level > MAX_CELL_LEVEL {
        return Err(Error::InvalidRect(format!("{rect} is not aligned at level {level}")));
    }
    let idx = |v: &Rat| v.to_grid_index(level).expect("aligned corner");
    let (c0, c1) = (idx(&rect.l), idx(&rect.r));
    let (r0, r1) = (idx(&rect.b), idx(&rect.t));
    let (p, q) = (params.p().clone(), params.q());

    let mut groups: Vec<(RowMasks, u64)> = Vec::new();
    for run in row_runs(level, params)? {
        let lo = run.start.max(r0);
        let hi = run.end.min(r1);
        if lo >= hi {
            continue;
        }
        run.class.check_defined(params)?;
        let m = run.class.masks();
        match groups.iter_mut().find(|(g, _)| *g == m) {
            Some((_, n)) => *n += hi - lo,
            None => groups.push((m, hi - lo)),
        }
    }
    let total: Rat = groups
        .iter()
        .map(|(m, rows)| {
            let cols = column_prefix_sum(*m, level, c1, &p, &q)
                - column_prefix_sum(*m, level, c0, &p, &q);
            cols * Rat::from(*rows)
        })
        .sum();
    Ok(total * Rat::inv_pow4(2 * level as u64))
}

/// Interval known to contain the mass of an arbitrary rational rectangle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enclosure {
    pub lower: Rat,
    pub upper: Rat,
}

impl Enclosure {
    pub fn width(&self) -> Rat {
        &self.upper - &self.lower
    }

    pub fn is_exact(&self) -> bool {
        self.lower == self.upper
    }
}

fn round_to_grid(v: &Rat, level: u32, up: bool) -> Rat {
    let side = Rat::from(side_count(level));
    let scaled = v * &side;
    let mut idx = scaled.floor();
    if up && Rat::from_int(idx.clone()) != scaled {
        idx += 1;
    }
    Rat::from_int(idx) / side
}

/// Inner and outer `cap`-aligned approximations of `rect`. Fails with
/// `CapTooCoarse` when the enclosure is wider than `tolerance`.
pub fn mu_rect_enclosure(
    rect: &RectQ,
    cap: u32,
    tolerance: &Rat,
    params: &Params,
) -> Result<Enclosure> {
    if cap > MAX_CELL_LEVEL {
        return Err(Error::DepthExceeded {
            requested: cap as u64,
            max: MAX_CELL_LEVEL as u64,
        });
    }
    if rect.is_aligned_at(cap as u64) {
        let v = mu_rect_at(rect, cap, params)?;
        return Ok(Enclosure {
            lower: v.clone(),
            upper: v,
        });
    }
    let outer = RectQ::new(
        round_to_grid(&rect.l, cap, false),
        round_to_grid(&rect.r, cap, true),
        round_to_grid(&rect.b, cap, false),
        round_to_grid(&rect.t, cap, true),
    )?;
    let upper = mu_rect_at(&outer, cap, params)?;
    let (il, ir) = (round_to_grid(&rect.l, cap, true), round_to_grid(&rect.r, cap, false));
    let (ib, it) = (round_to_grid(&rect.b, cap, true), round_to_grid(&rect.t, cap, false));
    let lower = if il < ir && ib < it {
        mu_rect_at(&RectQ::new(il, ir, ib, it)?, cap, params)?
    } else {
        Rat::zero()
    };
    let enc = Enclosure { lower, upper };
    if enc.width() > *tolerance {
        return Err(Error::CapTooCoarse {
            width: enc.width().to_string(),
            tolerance: tolerance.to_string(),
            cap,
        });
    }
    Ok(enc)
}

/// Default cap on exhaustive sweeps: `16^6` cells.
pub const DEFAULT_EXHAUSTIVE_LIMIT: u128 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub exhaustive_limit: u128,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            exhaustive_limit: DEFAULT_EXHAUSTIVE_LIMIT,
        }
    }
}

impl SweepOptions {
    pub fn check(&self, depth: u32) -> Result<()> {
        let needed = 1u128.checked_shl(4 * depth).unwrap_or(u128::MAX);
        if depth > 31 || needed > self.exhaustive_limit {
            return Err(Error::SweepTooLarge {
                needed,
                limit: self.exhaustive_limit,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureReport {
    pub depth: u32,
    pub total_mass: Rat,
    /// Cells whose mass differs from the sum of their 16 children.
    pub violations: u64,
    pub max_child_sum_error: Rat,
    pub first_violation: Option<Cell>,
    /// Cells where some child disagrees with the parent on an earlier weight.
    pub constancy_violations: u64,
    pub first_constancy_violation: Option<Cell>,
}

impl MeasureReport {
    pub fn conserves(&self) -> bool {
        self.violations == 0 && self.total_mass == Rat::one()
    }

    pub fn constant_on_cells(&self) -> bool {
        self.constancy_violations == 0
    }
}

/// Exhaustive conservation sweep over every cell of level `< depth`.
pub fn diagnostics(depth: u32, params: &Params, opts: &SweepOptions) -> Result<MeasureReport> {
    opts.check(depth)?;
    let lattice = Lattice::new(params, depth)?;
    diagnostics_on(&lattice)
}

/// The same sweep over a prepared lattice (possibly carrying a fault).
pub fn diagnostics_on(lattice: &Lattice) -> Result<MeasureReport> {
    let depth = lattice.depth();
    if fits_u128(lattice.params(), depth) {
        let table = MassTable::<u128>::new(lattice.params(), depth, |v| {
            u128::try_from(v).expect("checked by fits_u128")
        });
        Ok(sweep(lattice, &table))
    } else {
        let table = MassTable::<BigUint>::new(lattice.params(), depth, |v| v.clone());
        Ok(sweep(lattice, &table))
    }
}

#[derive(Clone)]
struct Partial<T> {
    violations: u64,
    max_err: T,
    first: Option<Cell>,
    constancy: u64,
    first_constancy: Option<Cell>,
}

impl<T: Exact> Partial<T> {
    fn empty() -> Self {
        Partial {
            violations: 0,
            max_err: T::zero(),
            first: None,
            constancy: 0,
            first_constancy: None,
        }
    }

    fn merge(self, o: Self) -> Self {
        let min_cell = |a: Option<Cell>, b: Option<Cell>| match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        };
        Partial {
            violations: self.violations + o.violations,
            max_err: self.max_err.max(o.max_err),
            first: min_cell(self.first, o.first),
            constancy: self.constancy + o.constancy,
            first_constancy: min_cell(self.first_constancy, o.first_constancy),
        }
    }
}

fn sweep<T: Exact>(lattice: &Lattice, table: &MassTable<T>) -> MeasureReport {
    let depth = lattice.depth();
    let mut acc = Partial::<T>::empty();
    for level in 0..depth {
        let side = side_count(level);
        let low_bits = (1u64 << level) - 1;
        let part = (0..side)
            .into_par_iter()
            .map(|row| {
                let mut part = Partial::<T>::empty();
                for col in 0..side {
                    let parent = lattice.word(level, col, row);
                    let mut sum = T::zero();
                    let mut constant = true;
                    for dr in 0..4 {
                        for dc in 0..4 {
                            let w = lattice.word(level + 1, col * 4 + dc, row * 4 + dr);
                            sum = sum + table.mass(&w).clone();
                            if w.pmask & low_bits != parent.pmask || w.qmask & low_bits != parent.qmask
                            {
                                constant = false;
                            }
                        }
                    }
                    let pm = table.mass(&parent).clone();
                    let cell = Cell { level, col, row };
                    if sum != pm {
                        let err = if sum > pm { sum - pm } else { pm - sum };
                        part.violations += 1;
                        part.max_err = part.max_err.max(err);
                        part.first = Some(part.first.map_or(cell, |c| c.min(cell)));
                    }
                    if !constant {
                        part.constancy += 1;
                        part.first_constancy =
                            Some(part.first_constancy.map_or(cell, |c| c.min(cell)));
                    }
                }
                part
            })
            .reduce(Partial::empty, Partial::merge);
        acc = acc.merge(part);
    }

    let side = side_count(depth);
    let total = (0..side)
        .into_par_iter()
        .map(|row| {
            (0..side).fold(T::zero(), |s, col| {
                s + table.mass(&lattice.word(depth, col, row)).clone()
            })
        })
        .reduce(T::zero, |a, b| a + b);

    MeasureReport {
        depth,
        total_mass: table.to_rat(&total),
        violations: acc.violations,
        max_child_sum_error: table.to_rat(&acc.max_err),
        first_violation: acc.first,
        constancy_violations: acc.constancy,
        first_constancy_violation: acc.first_constancy,
    }
}
