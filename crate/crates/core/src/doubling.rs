//! Finite-depth checks of the doubling hypotheses: constant density on
//! cells, conservation under refinement, and a bound on the mass ratio of
//! adjacent equal-size squares.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::construction::weight_word;
use crate::error::{Error, Result};
use crate::grid::{adjacent, side_count, Cell, RectQ};
use crate::lattice::Lattice;
use crate::measure::{diagnostics_on, mu_rect, MeasureReport, SweepOptions};
use crate::rat::Rat;
use crate::schedule::Params;

/// Number of steps at which two adjacent same-level cells carry different weights.
pub fn weight_divergence(a: &Cell, b: &Cell, params: &Params) -> Result<u32> {
    if !adjacent(a, b)? {
        return Err(Error::NotAdjacent(a.to_string(), b.to_string()));
    }
    Ok(weight_word(a, params)?.divergence(&weight_word(b, params)?))
}

// (level, col_a, row_a, col_b, row_b); the derived order picks witnesses.
type PairKey = (u32, u64, u64, u64, u64);

fn pair_cells(k: PairKey) -> (Cell, Cell) {
    (
        Cell {
            level: k.0,
            col: k.1,
            row: k.2,
        },
        Cell {
            level: k.0,
            col: k.3,
            row: k.4,
        },
    )
}

/// Extremes of the adjacent-pair statistics at one adjacency notion.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    /// Largest `μ(Q)/μ(G)` over adjacent same-level pairs `(Q, G)`.
    pub max_ratio: Rat,
    pub witness: (Cell, Cell),
    pub max_divergence: u32,
    pub divergence_witness: (Cell, Cell),
    pub pairs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjacentRatios {
    pub depth: u32,
    /// Pairs sharing an edge or only a corner.
    pub all: PairStats,
    /// Pairs sharing an edge.
    pub edge: PairStats,
}

// Ratio of two cell masses depends only on the exponent differences
// (Δa, Δb), so each worker keeps the first witness per difference.
#[derive(Clone)]
struct Table {
    span: i64,
    slots: Vec<Option<PairKey>>,
    max_div: u32,
    div_witness: Option<PairKey>,
    pairs: u64,
}

impl Table {
    fn new(depth: u32) -> Self {
        let span = 2 * depth as i64 + 1;
        Table {
            span,
            slots: vec![None; (span * span) as usize],
            max_div: 0,
            div_witness: None,
            pairs: 0,
        }
    }

    fn slot(&self, da: i64, db: i64) -> usize {
        let off = (self.span - 1) / 2;
        ((da + off) * self.span + (db + off)) as usize
    }

    fn record(&mut self, da: i64, db: i64, key: PairKey) {
        let s = self.slot(da, db);
        self.slots[s] = Some(self.slots[s].map_or(key, |k| k.min(key)));
    }

    fn record_div(&mut self, div: u32, key: PairKey) {
        match self.div_witness {
            Some(k) if div < self.max_div || (div == self.max_div && k <= key) => {}
            _ => {
                self.max_div = div;
                self.div_witness = Some(key);
            }
        }
    }

    fn merge(mut self, o: Table) -> Table {
        for (a, b) in self.slots.iter_mut().zip(o.slots) {
            *a = match (*a, b) {
                (Some(x), Some(y)) => Some(x.min(y)),
                (x, y) => x.or(y),
            };
        }
        if let Some(k) = o.div_witness {
            self.record_div(o.max_div, k);
        }
        self.pairs += o.pairs;
        self
    }

    fn finish(self, params: &Params) -> PairStats {
        let off = (self.span - 1) / 2;
        let (p, q) = (params.p().clone(), params.q());
        let mut best: Option<(Rat, PairKey)> = None;
        for da in -off..=off {
            for db in -off..=off {
                let Some(key) = self.slots[self.slot(da, db)] else {
                    continue;
                };
                let ratio = p.pow(da as i32) * q.pow(db as i32);
                let better = match &best {
                    None => true,
                    Some((r, k)) => ratio > *r || (ratio == *r && key < *k),
                };
                if better {
                    best = Some((ratio, key));
                }
            }
        }
        let self_pair = (0, 0, 0, 0, 0);
        let (max_ratio, key) = best.unwrap_or((Rat::one(), self_pair));
        PairStats {
            max_ratio,
            witness: pair_cells(key),
            max_divergence: self.max_div,
            divergence_witness: pair_cells(self.div_witness.unwrap_or(self_pair)),
            pairs: self.pairs,
        }
    }
}

/// Exact maximum of `μ(Q)/μ(G)` over all adjacent same-level cells of every
/// level `≤ depth`, for corner and edge adjacency separately.
pub fn max_adjacent_ratio(depth: u32, params: &Params, opts: &SweepOptions) -> Result<AdjacentRatios> {
    opts.check(depth)?;
    let lattice = Lattice::new(params, depth)?;
    Ok(adjacent_ratios_on(&lattice))
}

pub fn adjacent_ratios_on(lattice: &Lattice) -> AdjacentRatios {
    let depth = lattice.depth();
    let empty = || (Table::new(depth), Table::new(depth));
    let (all, edge) = (0..=depth)
        .flat_map(|level| (0..side_count(level)).map(move |row| (level, row)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(level, row)| {
            let (mut all, mut edge) = empty();
            let side = side_count(level);
            for col in 0..side {
                let w = lattice.word(level, col, row);
                let neighbours = [
                    (col + 1 < side).then(|| (col + 1, row, true)),
                    (row + 1 < side).then(|| (col, row + 1, true)),
                    (col + 1 < side && row + 1 < side).then(|| (col + 1, row + 1, false)),
                    (col + 1 < side && row > 0).then(|| (col + 1, row - 1, false)),
                ];
                for (nc, nr, is_edge) in neighbours.into_iter().flatten() {
                    let v = lattice.word(level, nc, nr);
                    let da = w.p_count() as i64 - v.p_count() as i64;
                    let db = w.q_count() as i64 - v.q_count() as i64;
                    let div = w.divergence(&v);
                    let fwd = (level, col, row, nc, nr);
                    let back = (level, nc, nr, col, row);
                    let mut tables = vec![&mut all];
                    if is_edge {
                        tables.push(&mut edge);
                    }
                    for t in tables {
                        t.record(da, db, fwd);
                        t.record(-da, -db, back);
                        t.record_div(div, fwd.min(back));
                        t.pairs += 1;
                    }
                }
            }
            (all, edge)
        })
        .reduce(empty, |a, b| (a.0.merge(b.0), a.1.merge(b.1)));
    AdjacentRatios {
        depth,
        all: all.finish(lattice.params()),
        edge: edge.finish(lattice.params()),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conditions {
    /// Density is constant on every cell of level `≤ depth`.
    pub c1: bool,
    /// Every cell of level `< depth` carries the mass of its 16 children.
    pub c2: bool,
    /// Largest adjacent mass ratio observed (all adjacency).
    pub c3_epsilon: Rat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoublingReport {
    pub depth: u32,
    pub q_over_p: Rat,
    pub max_ratio: Rat,
    pub witness: (Cell, Cell),
    pub max_divergence_count: u32,
    pub divergence_witness: (Cell, Cell),
    pub edge_max_ratio: Rat,
    pub edge_witness: (Cell, Cell),
    pub edge_max_divergence: u32,
    pub edge_divergence_witness: (Cell, Cell),
    pub conditions: Conditions,
    /// `c3_epsilon ≤ q/p`.
    pub ratio_within_q_over_p: bool,
    /// Adjacent cells never differ in more than one weight.
    pub divergence_within_one: bool,
    pub measure: MeasureReport,
    pub sampled_cells: u64,
    pub sampled_general_ratio: Option<SampleSummary>,
}

impl DoublingReport {
    pub fn passed(&self) -> bool {
        self.conditions.c1
            && self.conditions.c2
            && self.ratio_within_q_over_p
            && self.divergence_within_one
    }
}

/// Cross-check the lattice words against the per-cell evaluator on a
/// deterministic sample, probing each sampled cell through an interior point.
fn sampled_constancy(lattice: &Lattice, count: u64, seed: u64) -> Result<bool> {
    let depth = lattice.depth();
    let side = side_count(depth);
    let resolution = Rat::from(side_count(depth) * 64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let col = rng.gen_range(0..side);
        let row = rng.gen_range(0..side);
        let ox = rng.gen_range(1..64u64);
        let oy = rng.gen_range(1..64u64);
        let x = Rat::from(col * 64 + ox) / &resolution;
        let y = Rat::from(row * 64 + oy) / &resolution;
        let cell = Cell::containing(&x, &y, depth)?;
        if (cell.col, cell.row) != (col, row)
            || weight_word(&cell, lattice.params())? != lattice.word(depth, col, row)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

const CONSTANCY_SAMPLES: u64 = 512;

/// Exhaustive verification of the three hypotheses at `depth`.
pub fn verify_lemma(depth: u32, params: &Params, opts: &SweepOptions) -> Result<DoublingReport> {
    opts.check(depth)?;
    let lattice = Lattice::new(params, depth)?;
    verify_on(&lattice)
}

pub fn verify_on(lattice: &Lattice) -> Result<DoublingReport> {
    let params = lattice.params();
    let measure = diagnostics_on(lattice)?;
    let ratios = adjacent_ratios_on(lattice);
    let sampled = sampled_constancy(lattice, CONSTANCY_SAMPLES, lattice.depth() as u64)?;
    let q_over_p = params.ratio_q_over_p();
    Ok(DoublingReport {
        depth: lattice.depth(),
        ratio_within_q_over_p: ratios.all.max_ratio <= q_over_p,
        divergence_within_one: ratios.all.max_divergence <= 1,
        q_over_p,
        conditions: Conditions {
            c1: measure.constant_on_cells() && sampled,
            c2: measure.conserves(),
            c3_epsilon: ratios.all.max_ratio.clone(),
        },
        max_ratio: ratios.all.max_ratio,
        witness: ratios.all.witness,
        max_divergence_count: ratios.all.max_divergence,
        divergence_witness: ratios.all.divergence_witness,
        edge_max_ratio: ratios.edge.max_ratio,
        edge_witness: ratios.edge.witness,
        edge_max_divergence: ratios.edge.max_divergence,
        edge_divergence_witness: ratios.edge.divergence_witness,
        measure,
        sampled_cells: CONSTANCY_SAMPLES,
        sampled_general_ratio: None,
    })
}

/// Empirical, non-certifying estimate of the doubling constant from random
/// adjacent square pairs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub trials: u64,
    pub seed: u64,
    /// Square corners are multiples of `4^{-resolution}`.
    pub resolution: u32,
    pub max_ratio: Option<Rat>,
    pub max_ratio_estimate: Option<String>,
    pub witness: Option<(RectQ, RectQ)>,
    /// Largest ratio among pairs that are 4-adic cells of one level.
    pub grid_aligned_max_ratio: Option<Rat>,
    pub certifying: bool,
}

struct Trial {
    ratio: Rat,
    pair: (RectQ, RectQ),
    grid_aligned: bool,
}

fn random_pair(rng: &mut ChaCha8Rng, resolution: u32) -> Result<(RectQ, RectQ, bool)> {
    let n = side_count(resolution);
    let j = rng.gen_range(1..=resolution);
    let unit = side_count(resolution - j);
    let mult = rng.gen_range(1..=3u64);
    let mut side = unit * mult;
    let dirs = [(-1i64, -1i64), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];
    let (dx, dy) = dirs[rng.gen_range(0..dirs.len())];
    let span = |d: i64, side: u64| if d == 0 { side } else { 2 * side };
    while span(dx, side) > n || span(dy, side) > n {
        side /= 2;
    }
    let x = rng.gen_range(0..=n - span(dx, side));
    let y = rng.gen_range(0..=n - span(dy, side));
    let (ax, bx) = if dx < 0 { (x + side, x) } else { (x, x + side * dx as u64) };
    let (ay, by) = if dy < 0 { (y + side, y) } else { (y, y + side * dy as u64) };
    let sq = |cx: u64, cy: u64| {
        let d = Rat::from(n);
        RectQ::new(
            Rat::from(cx) / &d,
            Rat::from(cx + side) / &d,
            Rat::from(cy) / &d,
            Rat::from(cy + side) / &d,
        )
    };
    let aligned = side.is_power_of_two()
        && side.trailing_zeros() % 2 == 0
        && [ax, ay, bx, by].iter().all(|v| v % side == 0);
    Ok((sq(ax, ay)?, sq(bx, by)?, aligned))
}

/// Random adjacent equal-side square pairs with corners on the
/// `4^{-resolution}` grid; the reported maximum is a lower bound for the
/// doubling constant over arbitrary squares and certifies nothing.
pub fn sampled_doubling_estimate(
    resolution: u32,
    trials: u64,
    seed: u64,
    params: &Params,
) -> Result<SampleSummary> {
    if resolution == 0 || resolution > params.total_steps().min(15) as u32 {
        return Err(Error::DepthExceeded {
            requested: resolution as u64,
            max: params.total_steps().min(15),
        });
    }
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t);
            let (a, b, grid_aligned) = random_pair(&mut rng, resolution)?;
            let (ma, mb) = (mu_rect(&a, params)?, mu_rect(&b, params)?);
            let (ratio, pair) = if ma >= mb {
                (ma / mb, (a, b))
            } else {
                (mb / ma, (b, a))
            };
            Ok(Trial {
                ratio,
                pair,
                grid_aligned,
            })
        })
        .collect::<Result<_>>()?;

    let mut best: Option<&Trial> = None;
    let mut aligned_max: Option<Rat> = None;
    for t in &results {
        if best.is_none_or(|b| t.ratio > b.ratio) {
            best = Some(t);
        }
        if t.grid_aligned {
            aligned_max = Some(aligned_max.map_or(t.ratio.clone(), |m| m.max(t.ratio.clone())));
        }
    }
    Ok(SampleSummary {
        trials,
        seed,
        resolution,
        max_ratio: best.map(|b| b.ratio.clone()),
        max_ratio_estimate: best.map(|b| format!("{:.6}", b.ratio.to_f64())),
        witness: best.map(|b| b.pair.clone()),
        grid_aligned_max_ratio: aligned_max,
        certifying: false,
    })
}
