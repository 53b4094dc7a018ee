//! Construction rectangles, bands and the stage weights `w_i`.
//!
//! Level-`k` construction rectangles all share the height `h_k` and the width
//! `4^{-M_k}`; their vertical placement depends only on the chain of
//! upper/lower choices leading to them, so the horizontal and vertical
//! structure are handled separately. A horizontal row of cells is classified
//! once (which bands contain it, which rectangle chain or left-over strip it
//! sits in) and combined with the base-4 digits of each column.

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{a_membership, side_count, Cell, RectQ, MAX_CELL_LEVEL};
use crate::rat::Rat;
use crate::schedule::{Params, PhaseKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Half {
    Root,
    Upper,
    Lower,
}

/// A construction rectangle of level `k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CRect {
    pub level: usize,
    /// Column index at level `M_k`.
    #[serde(serialize_with = "ser_biguint")]
    pub column: BigUint,
    pub half: Half,
    pub bounds: RectQ,
}

fn ser_biguint<S: serde::Serializer>(v: &BigUint, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

impl CRect {
    pub fn root() -> Self {
        CRect {
            level: 0,
            column: BigUint::zero(),
            half: Half::Root,
            bounds: RectQ::unit(),
        }
    }

    pub fn midline(&self) -> Rat {
        (&self.bounds.b + &self.bounds.t) / Rat::from(2i64)
    }

    /// The level-`(k+1)` child in `column` (indexed at level `M_{k+1}`) and `half`.
    pub fn child(&self, column: &BigUint, half: Half, params: &Params) -> Result<CRect> {
        let k = self.level;
        if k + 1 > params.stage_count() {
            return Err(Error::DepthExceeded {
                requested: k as u64 + 1,
                max: params.stage_count() as u64,
            });
        }
        let st = params.stage(k + 1);
        if (column >> (2 * (st.m + st.n))) != self.column {
            return Err(Error::InvalidCell(format!(
                "column {column} is not inside level-{k} rectangle column {}",
                self.column
            )));
        }
        let (b, t) = child_y_range(&self.bounds.b, &self.bounds.t, k, half, params);
        let big_m = params.big_m(k + 1);
        let width = Rat::inv_pow4(big_m);
        let l = Rat::from_int(column.clone()) * &width;
        let r = &l + &width;
        Ok(CRect {
            level: k + 1,
            column: column.clone(),
            half,
            bounds: RectQ { l, r, b, t },
        })
    }
}

impl fmt::Display for CRect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "level {} column {} {:?} {}",
            self.level, self.column, self.half, self.bounds
        )
    }
}

/// Vertical extent of the `half` child of a level-`k` rectangle spanning `[b, t]`.
pub fn child_y_range(b: &Rat, t: &Rat, k: usize, half: Half, params: &Params) -> (Rat, Rat) {
    let inset = Rat::inv_pow4(params.uniform_end(k + 1));
    let mid = (b + t) / Rat::from(2i64);
    match half {
        Half::Upper => (&mid + &inset, t - &inset),
        Half::Lower => (b + &inset, &mid - &inset),
        Half::Root => panic!("Root is not a child half"),
    }
}

/// Vertical extent `[b, t]` of the rectangle reached by a chain of halves.
pub fn chain_y_range(chain: &[Half], params: &Params) -> (Rat, Rat) {
    let mut b = Rat::zero();
    let mut t = Rat::one();
    for (k, &half) in chain.iter().enumerate() {
        (b, t) = child_y_range(&b, &t, k, half, params);
    }
    (b, t)
}

/// Refuse to materialize more than this many children in one call.
pub const MAX_MATERIALIZED_CHILDREN: u128 = 1 << 22;

/// All `2·4^{m+n}` level-`(k+1)` rectangles inside `parent`, upper ones first.
pub fn crect_children(parent: &CRect, params: &Params) -> Result<Vec<CRect>> {
    let k = parent.level;
    if k + 1 > params.stage_count() {
        return Err(Error::DepthExceeded {
            requested: k as u64 + 1,
            max: params.stage_count() as u64,
        });
    }
    let st = params.stage(k + 1);
    let shift = 2 * (st.m + st.n);
    let count = 1u128.checked_shl(shift as u32).unwrap_or(u128::MAX);
    if shift >= 64 || 2 * count > MAX_MATERIALIZED_CHILDREN {
        return Err(Error::SweepTooLarge {
            needed: 2 * count,
            limit: MAX_MATERIALIZED_CHILDREN,
        });
    }
    let base = &parent.column << shift;
    let mut out = Vec::with_capacity(2 * count as usize);
    for half in [Half::Upper, Half::Lower] {
        for j in 0..count as u64 {
            out.push(parent.child(&(&base + BigUint::from(j)), half, params)?);
        }
    }
    Ok(out)
}

/// The four horizontal strips of `parent` not covered by its children
/// (bottom, below midline, above midline, top), as `(lo, hi)` pairs.
pub fn leftover_strips(parent: &CRect, params: &Params) -> Result<Vec<(Rat, Rat)>> {
    let k = parent.level;
    if k + 1 > params.stage_count() {
        return Err(Error::DepthExceeded {
            requested: k as u64 + 1,
            max: params.stage_count() as u64,
        });
    }
    let inset = Rat::inv_pow4(params.uniform_end(k + 1));
    let (b, t) = (&parent.bounds.b, &parent.bounds.t);
    let mid = parent.midline();
    Ok(vec![
        (b.clone(), b + &inset),
        (&mid - &inset, mid.clone()),
        (mid.clone(), &mid + &inset),
        (t - &inset, t.clone()),
    ])
}

/// The vertical set where step `step` redistributes mass inside one half of a rectangle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Band {
    pub step: u64,
    pub half: Half,
    pub lo: Rat,
    pub hi: Rat,
}

/// `Σ_{j=s+1}^{i-1} 4^{-j}` for step `i` of a stage whose uniform block ends at `s`.
fn band_shrink(s: u64, i: u64) -> Rat {
    (s + 1..i).map(Rat::inv_pow4).sum()
}

/// Upper band `B_i` and its mirrored copy in the lower half of `rect`, for a
/// non-uniform step `i` of stage `rect.level + 1`.
pub fn bands(step: u64, rect: &CRect, params: &Params) -> Result<(Band, Band)> {
    let phase = params.phase_of_step(step)?;
    if phase.stage != rect.level + 1 || !matches!(phase.kind, PhaseKind::NonUniform { .. }) {
        return Err(Error::OutOfRange {
            step,
            max: params.total_steps(),
        });
    }
    let s = params.uniform_end(rect.level + 1);
    let shrink = band_shrink(s, step);
    let mid = rect.midline();
    let upper = Band {
        step,
        half: Half::Upper,
        lo: &mid + &shrink,
        hi: &rect.bounds.t - &shrink,
    };
    let lower = Band {
        step,
        half: Half::Lower,
        lo: &rect.bounds.b + &shrink,
        hi: &mid - &shrink,
    };
    Ok((upper, lower))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WeightValue {
    P,
    Q,
    One,
}

impl WeightValue {
    pub fn value(&self, params: &Params) -> Rat {
        match self {
            WeightValue::P => params.p().clone(),
            WeightValue::Q => params.q(),
            WeightValue::One => Rat::one(),
        }
    }

    pub fn symbol(&self) -> char {
        match self {
            WeightValue::P => 'p',
            WeightValue::Q => 'q',
            WeightValue::One => '1',
        }
    }

    /// Case table: upper bands give `q` on `A_i` and `p` off it; lower bands swap.
    pub fn from_case(upper_band: bool, lower_band: bool, in_a: bool) -> Self {
        match (upper_band, lower_band, in_a) {
            (true, _, true) | (false, true, false) => WeightValue::Q,
            (true, _, false) | (false, true, true) => WeightValue::P,
            (false, false, _) => WeightValue::One,
        }
    }
}

/// Where a horizontal row of cells sits in the rectangle hierarchy.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RowRegion {
    /// Inside a level-`chain.len()` rectangle; deeper rectangles are not
    /// resolvable at this row level.
    InRect { chain: Vec<Half> },
    /// In the left-over part of level `chain.len() + 1`, inside the rectangle reached by `chain`.
    LeftOver { chain: Vec<Half> },
}

/// Band membership of a level-`level` row for every step `1..=level`.
/// Bit `i-1` of `upper` (`lower`) is set when the row lies in the upper
/// (lower) band of step `i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowClass {
    pub level: u32,
    pub upper: u64,
    pub lower: u64,
    pub region: RowRegion,
}

impl RowClass {
    /// Weights beyond `M_K` exist only in left-over parts.
    pub fn check_defined(&self, params: &Params) -> Result<()> {
        let max = params.total_steps();
        if self.level as u64 > max {
            if let RowRegion::InRect { chain } = &self.region {
                if chain.len() == params.stage_count() {
                    return Err(Error::DepthExceeded {
                        requested: self.level as u64,
                        max,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn masks(&self) -> RowMasks {
        RowMasks {
            upper: self.upper,
            lower: self.lower,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RowMasks {
    pub upper: u64,
    pub lower: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Rel {
    Inside,
    Outside,
    Straddle,
}

fn relate(y0: &Rat, y1: &Rat, lo: &Rat, hi: &Rat) -> Rel {
    if lo <= y0 && y1 <= hi {
        Rel::Inside
    } else if y1 <= lo || hi <= y0 {
        Rel::Outside
    } else {
        Rel::Straddle
    }
}

fn check_level(level: u32) -> Result<()> {
    if level > MAX_CELL_LEVEL {
        return Err(Error::InvalidCell(format!(
            "level {level} exceeds {MAX_CELL_LEVEL}"
        )));
    }
    Ok(())
}

/// Classify the level-`level` row `row` (the strip `[row·4^{-level}, (row+1)·4^{-level}]`).
pub fn classify_row(level: u32, row: u64, params: &Params) -> Result<RowClass> {
    check_level(level)?;
    if row >= side_count(level) {
        return Err(Error::InvalidCell(format!("row {row} at level {level}")));
    }
    let lv = level as u64;
    let side = Rat::from(side_count(level));
    let y0 = Rat::from(row) / &side;
    let y1 = Rat::from(row + 1) / &side;
    let straddle = |what: String| Error::Straddle {
        level,
        detail: format!("row {row}: {what}"),
    };

    let mut upper = 0u64;
    let mut lower = 0u64;
    let mut chain = Vec::new();
    let mut b = Rat::zero();
    let mut t = Rat::one();
    let two = Rat::from(2i64);

    for k in 0..params.stage_count() {
        let s = params.uniform_end(k + 1);
        let end = params.big_m(k + 1).min(lv);
        let mid = (&b + &t) / &two;
        let mut shrink = Rat::zero();
        for i in s + 1..=end {
            if i > s + 1 {
                shrink = shrink + Rat::inv_pow4(i - 1);
            }
            let up = relate(&y0, &y1, &(&mid + &shrink), &(&t - &shrink));
            let lo = relate(&y0, &y1, &(&b + &shrink), &(&mid - &shrink));
            if up == Rel::Straddle || lo == Rel::Straddle {
                return Err(straddle(format!("band of step {i}")));
            }
            if up == Rel::Inside {
                upper |= 1 << (i - 1);
            }
            if lo == Rel::Inside {
                lower |= 1 << (i - 1);
            }
        }
        if lv < s {
            break;
        }
        let (ub, ut) = child_y_range(&b, &t, k, Half::Upper, params);
        let (lb, lt) = child_y_range(&b, &t, k, Half::Lower, params);
        match (relate(&y0, &y1, &ub, &ut), relate(&y0, &y1, &lb, &lt)) {
            (Rel::Inside, _) => {
                chain.push(Half::Upper);
                (b, t) = (ub, ut);
            }
            (_, Rel::Inside) => {
                chain.push(Half::Lower);
                (b, t) = (lb, lt);
            }
            (Rel::Outside, Rel::Outside) => {
                return Ok(RowClass {
                    level,
                    upper,
                    lower,
                    region: RowRegion::LeftOver { chain },
                });
            }
            _ => return Err(straddle(format!("edge of a level-{} rectangle", k + 1))),
        }
    }
    Ok(RowClass {
        level,
        upper,
        lower,
        region: RowRegion::InRect { chain },
    })
}

fn collect_breaks(
    b: &Rat,
    t: &Rat,
    k: usize,
    level: u32,
    params: &Params,
    out: &mut Vec<Rat>,
) {
    out.push(b.clone());
    out.push(t.clone());
    if k == params.stage_count() {
        return;
    }
    let lv = level as u64;
    let s = params.uniform_end(k + 1);
    let mid = (b + t) / Rat::from(2i64);
    let end = params.big_m(k + 1).min(lv);
    for i in s + 1..=end {
        let shrink = band_shrink(s, i);
        out.push(&mid + &shrink);
        out.push(t - &shrink);
        out.push(b + &shrink);
        out.push(&mid - &shrink);
    }
    if lv >= s {
        for half in [Half::Upper, Half::Lower] {
            let (cb, ct) = child_y_range(b, t, k, half, params);
            collect_breaks(&cb, &ct, k + 1, level, params, out);
        }
    }
}

/// Maximal runs `[start, end)` of level-`level` rows sharing one classification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowRun {
    pub start: u64,
    pub end: u64,
    pub class: RowClass,
}

/// Partition all rows of `level` into runs of identical classification.
///
/// Classifications only change where a band or rectangle edge falls, so the
/// number of runs is independent of `4^level`.
pub fn row_runs(level: u32, params: &Params) -> Result<Vec<RowRun>> {
    check_level(level)?;
    let mut ys = Vec::new();
    collect_breaks(&Rat::zero(), &Rat::one(), 0, level, params, &mut ys);
    let mut breaks: Vec<u64> = ys
        .iter()
        .map(|y| {
            y.to_grid_index(level).ok_or_else(|| Error::Straddle {
                level,
                detail: format!("edge {y} is not on the level-{level} grid"),
            })
        })
        .collect::<Result<_>>()?;
    breaks.sort_unstable();
    breaks.dedup();

    let mut runs: Vec<RowRun> = Vec::with_capacity(breaks.len());
    for w in breaks.windows(2) {
        let class = classify_row(level, w[0], params)?;
        match runs.last_mut() {
            Some(last) if last.class == class => last.end = w[1],
            _ => runs.push(RowRun {
                start: w[0],
                end: w[1],
                class,
            }),
        }
    }
    Ok(runs)
}

/// Bit `i-1` is set when the column's digit at step `i` lies in `A_i`.
pub fn col_amask(level: u32, col: u64) -> u64 {
    let mut mask = 0u64;
    for i in 1..=level {
        let digit = (col >> (2 * (level - i))) & 3;
        if a_membership(i, digit) {
            mask |= 1 << (i - 1);
        }
    }
    mask
}

/// The weights `w_1..w_level` of one cell, packed as bit masks over steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct WeightWord {
    pub level: u32,
    pub pmask: u64,
    pub qmask: u64,
}

impl WeightWord {
    pub fn combine(level: u32, row: RowMasks, amask: u64) -> Self {
        WeightWord {
            level,
            pmask: (row.upper & !amask) | (row.lower & amask),
            qmask: (row.upper & amask) | (row.lower & !amask),
        }
    }

    pub fn p_count(&self) -> u32 {
        self.pmask.count_ones()
    }

    pub fn q_count(&self) -> u32 {
        self.qmask.count_ones()
    }

    pub fn get(&self, i: u32) -> WeightValue {
        let bit = 1u64 << (i - 1);
        if self.pmask & bit != 0 {
            WeightValue::P
        } else if self.qmask & bit != 0 {
            WeightValue::Q
        } else {
            WeightValue::One
        }
    }

    /// Number of steps where the two words disagree.
    pub fn divergence(&self, other: &WeightWord) -> u32 {
        ((self.pmask ^ other.pmask) | (self.qmask ^ other.qmask)).count_ones()
    }

    pub fn density(&self, params: &Params) -> Rat {
        params.p().powu(self.p_count() as u64) * params.q().powu(self.q_count() as u64)
    }
}

impl fmt::Display for WeightWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 1..=self.level {
            write!(f, "{}", self.get(i).symbol())?;
        }
        Ok(())
    }
}

/// All weights `w_1..w_L` of a level-`L` cell.
pub fn weight_word(cell: &Cell, params: &Params) -> Result<WeightWord> {
    let class = classify_row(cell.level, cell.row, params)?;
    class.check_defined(params)?;
    Ok(WeightWord::combine(
        cell.level,
        class.masks(),
        col_amask(cell.level, cell.col),
    ))
}

/// The constant value of `w_i` on `cell`.
pub fn weight(i: u64, cell: &Cell, params: &Params) -> Result<WeightValue> {
    if i == 0 || i > cell.level as u64 {
        return Err(Error::Unaligned {
            step: i,
            level: cell.level,
            col: cell.col,
            row: cell.row,
        });
    }
    let class = classify_row(cell.level, cell.row, params)?;
    if i > params.total_steps() {
        return match class.region {
            RowRegion::LeftOver { chain } if params.big_m(chain.len() + 1) < i => {
                Ok(WeightValue::One)
            }
            _ => Err(Error::OutOfRange {
                step: i,
                max: params.total_steps(),
            }),
        };
    }
    if let PhaseKind::Uniform { .. } = params.phase_of_step(i)?.kind {
        return Ok(WeightValue::One);
    }
    let bit = 1u64 << (i - 1);
    let digit = cell.col_digit(i as u32) as u64;
    Ok(WeightValue::from_case(
        class.upper & bit != 0,
        class.lower & bit != 0,
        a_membership(i as u32, digit),
    ))
}

/// Region of a cell relative to the level-`k` construction rectangles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RegionClass {
    InRect {
        rect: CRect,
        /// Non-uniform steps of stage `k+1` at or below the cell's level.
        band_steps: u64,
        /// How many of those steps have a band containing the cell.
        bands_containing: u64,
    },
    LeftOver {
        level: usize,
    },
}

impl RegionClass {
    pub fn in_all_bands(&self) -> bool {
        matches!(self, RegionClass::InRect { band_steps, bands_containing, .. } if band_steps == bands_containing)
    }
}

pub fn locate(cell: &Cell, k: usize, params: &Params) -> Result<RegionClass> {
    if k > params.stage_count() {
        return Err(Error::DepthExceeded {
            requested: k as u64,
            max: params.stage_count() as u64,
        });
    }
    let lv = cell.level as u64;
    if k >= 1 && lv < params.uniform_end(k) {
        return Err(Error::Straddle {
            level: cell.level,
            detail: format!(
                "level-{k} rectangle edges need cell level >= {}",
                params.uniform_end(k)
            ),
        });
    }
    let class = classify_row(cell.level, cell.row, params)?;
    let chain: Vec<Half> = match &class.region {
        RowRegion::LeftOver { chain } if chain.len() < k => {
            return Ok(RegionClass::LeftOver {
                level: chain.len() + 1,
            })
        }
        RowRegion::LeftOver { chain } | RowRegion::InRect { chain } => {
            chain.iter().copied().take(k).collect()
        }
    };
    debug_assert_eq!(chain.len(), k);

    let big_m = params.big_m(k);
    if lv < big_m {
        return Err(Error::Straddle {
            level: cell.level,
            detail: format!("cell spans several level-{k} rectangle columns (level < {big_m})"),
        });
    }
    let column = BigUint::from(cell.col >> (2 * (lv - big_m)));
    let mut rect = CRect::root();
    for (j, &half) in chain.iter().enumerate() {
        let st = params.stage(j + 1);
        let col_j = &column >> (2 * (big_m - params.big_m(j + 1)));
        debug_assert_eq!((&col_j >> (2 * (st.m + st.n))), rect.column);
        rect = rect.child(&col_j, half, params)?;
    }

    let (mut band_steps, mut bands_containing) = (0, 0);
    if k < params.stage_count() {
        let s = params.uniform_end(k + 1);
        for i in s + 1..=params.big_m(k + 1).min(lv) {
            band_steps += 1;
            if (class.upper | class.lower) & (1 << (i - 1)) != 0 {
                bands_containing += 1;
            }
        }
    }
    Ok(RegionClass::InRect {
        rect,
        band_steps,
        bands_containing,
    })
}

/// Column index of a level-`level` cell as a big integer (used where `M_k` exceeds `u64`).
pub fn column_at(x: &Rat, level: u64) -> BigUint {
    let side = BigUint::one() << (2 * level);
    let scaled = x * &Rat::from_int(num_bigint::BigInt::from(side.clone()));
    let idx = scaled.floor().to_biguint().unwrap_or_default();
    if idx >= side {
        side - 1u32
    } else {
        idx
    }
}
