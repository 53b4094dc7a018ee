//! The approximations `S_k` of the graph: in every construction rectangle
//! keep the child (upper or lower) whose column collects more `q` weights.
//!
//! Each column of level `M_k` thus owns exactly one chain of chosen
//! rectangles, and the limit of the nested vertical extents defines `f`.

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::construction::{column_at, CRect, Half, MAX_MATERIALIZED_CHILDREN};
use crate::error::{Error, Result};
use crate::grid::side_count;
use crate::lattice::Lattice;
use crate::measure::SweepOptions;
use crate::rat::Rat;
use crate::schedule::Params;

fn check_k(k: usize, params: &Params) -> Result<()> {
    if k > params.stage_count() {
        return Err(Error::DepthExceeded {
            requested: k as u64,
            max: params.stage_count() as u64,
        });
    }
    Ok(())
}

/// Number of `A`-digits of `column` (indexed at level `M_{k+1}`) over the
/// non-uniform steps of stage `k + 1`.
pub fn q_count(k: usize, column: &BigUint, params: &Params) -> u64 {
    let st = params.stage(k + 1);
    (0..st.n)
        .filter(|t| {
            let d = (column >> (2 * t)) & BigUint::from(3u32);
            d == BigUint::from(1u32) || d == BigUint::from(2u32)
        })
        .count() as u64
}

/// Choose between the two children of `parent` in `column`: upper iff the
/// column is in `A_i` at more than half of the stage's band steps.
pub fn chosen_half(parent: &CRect, column: &BigUint, params: &Params) -> Result<(Half, u64)> {
    check_k(parent.level + 1, params)?;
    let st = params.stage(parent.level + 1);
    if (column >> (2 * (st.m + st.n))) != parent.column {
        return Err(Error::InvalidCell(format!(
            "column {column} is not inside {parent}"
        )));
    }
    let a = q_count(parent.level, column, params);
    let half = if 2 * a > st.n { Half::Upper } else { Half::Lower };
    Ok((half, a))
}

/// The product form of the choice: the upper child is kept iff its density
/// factor `q^a p^{n-a}` exceeds `(pq)^{n/2}`, compared after squaring.
pub fn product_criterion(a: u64, n: u64, params: &Params) -> Half {
    let (p, q) = (params.p(), params.q());
    let upper = q.powu(a) * p.powu(n - a);
    let pq = p * &q;
    if &upper * &upper > pq.powu(n) {
        Half::Upper
    } else {
        Half::Lower
    }
}

/// The chain of chosen rectangles above a column of level `M_k`.
pub fn chosen_chain(k: usize, column: &BigUint, params: &Params) -> Result<Vec<CRect>> {
    check_k(k, params)?;
    let big_m = params.big_m(k);
    let mut rect = CRect::root();
    let mut chain = Vec::with_capacity(k);
    for j in 1..=k {
        let col_j = column >> (2 * (big_m - params.big_m(j)));
        let (half, _) = chosen_half(&rect, &col_j, params)?;
        rect = rect.child(&col_j, half, params)?;
        chain.push(rect.clone());
    }
    Ok(chain)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FEnclosure {
    pub x: Rat,
    pub k: usize,
    pub lo: Rat,
    pub hi: Rat,
}

impl FEnclosure {
    pub fn width(&self) -> Rat {
        &self.hi - &self.lo
    }

    pub fn contains(&self, other: &FEnclosure) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }
}

/// Vertical extent of the chosen level-`k` rectangle above `x`.
pub fn f_enclosure(x: &Rat, k: usize, params: &Params) -> Result<FEnclosure> {
    check_k(k, params)?;
    if x.is_negative() || *x > Rat::one() {
        return Err(Error::InvalidCell(format!("x = {x} outside [0,1]")));
    }
    let column = column_at(x, params.big_m(k));
    let (lo, hi) = match chosen_chain(k, &column, params)?.last() {
        Some(r) => (r.bounds.b.clone(), r.bounds.t.clone()),
        None => (Rat::zero(), Rat::one()),
    };
    Ok(FEnclosure {
        x: x.clone(),
        k,
        lo,
        hi,
    })
}

/// Per-stage terms of the lower bound on `μ(S_K)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageBounds {
    pub stage: usize,
    pub m: u64,
    pub n: u64,
    /// `½ (pq)^{(n-1)/2}`.
    pub tail_term: Rat,
    /// `2^{-n} Σ_{i ≤ (n-1)/2} C(n,i) q^i p^{n-i}`: the fraction of a
    /// rectangle's band mass that lands in the rejected child.
    pub tail_exact: Rat,
    pub retention: Rat,
    pub tail_ok: bool,
    /// `4^{-(m-1)}`.
    pub leftover_term: Rat,
    /// Mass of the whole left-over part of this level.
    pub leftover_exact: Rat,
    /// Share of each parent rectangle's mass lost to left-over strips.
    pub leftover_fraction: Rat,
    pub leftover_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundsLedger {
    pub p: Rat,
    pub q: Rat,
    pub pq: Rat,
    /// `pq == 1 − (1−p)²` and `pq < 1`.
    pub pq_identity: bool,
    pub stages: Vec<StageBounds>,
    /// `1 − Σ tail_term − Σ leftover_term`.
    pub total: Rat,
}

impl BoundsLedger {
    pub fn all_ok(&self) -> bool {
        self.pq_identity && self.stages.iter().all(|s| s.tail_ok && s.leftover_ok)
    }
}

fn binomial(n: u64, k: u64) -> BigUint {
    let mut c = BigUint::one();
    for i in 0..k {
        c = c * (n - i) / (i + 1);
    }
    c
}

/// `2^{-n} Σ_{i ≤ (n-1)/2} C(n,i) q^i p^{n-i}`.
pub fn tail_exact(n: u64, p: &Rat) -> Rat {
    let q = Rat::from(2i64) - p;
    let sum: Rat = (0..=(n - 1) / 2)
        .map(|i| Rat::from_int(binomial(n, i)) * q.powu(i) * p.powu(n - i))
        .sum();
    sum * Rat::inv_pow2(n)
}

pub fn tail_term(n: u64, p: &Rat) -> Rat {
    let q = Rat::from(2i64) - p;
    Rat::new(1, 2) * (p * &q).powu((n - 1) / 2)
}

pub fn bounds(params: &Params) -> BoundsLedger {
    let p = params.p().clone();
    let q = params.q();
    let pq = &p * &q;
    let one_minus = Rat::one() - &p;
    let pq_identity = pq == Rat::one() - &one_minus * &one_minus && pq < Rat::one();

    let mut total = Rat::one();
    let mut stages = Vec::with_capacity(params.stage_count());
    for k in 1..=params.stage_count() {
        let st = params.stage(k);
        let te = tail_exact(st.n, &p);
        let tt = tail_term(st.n, &p);
        let inset = Rat::inv_pow4(params.uniform_end(k));
        let lt = Rat::inv_pow4(st.m - 1);
        let le = Rat::from_int(num_bigint::BigInt::one() << (k + 1)) * &inset;
        let lf = Rat::from(4i64) * &inset / params.height(k - 1);
        total = total - &tt - &lt;
        stages.push(StageBounds {
            stage: k,
            m: st.m,
            n: st.n,
            tail_ok: te <= tt,
            retention: Rat::one() - &te,
            tail_term: tt,
            tail_exact: te,
            leftover_ok: le <= lt,
            leftover_term: lt,
            leftover_exact: le,
            leftover_fraction: lf,
        });
    }
    BoundsLedger {
        p,
        q,
        pq,
        pq_identity,
        stages,
        total,
    }
}

/// `μ(S_k)`: each stage keeps `2 h_j / h_{j-1}` of a chosen rectangle's
/// height, and of that the better child retains `1 − tail_exact`.
pub fn mu_s(k: usize, params: &Params) -> Result<Rat> {
    check_k(k, params)?;
    let mut mass = Rat::one();
    for j in 1..=k {
        let st = params.stage(j);
        let keep = Rat::from(2i64) * params.height(j) / params.height(j - 1);
        mass = mass * keep * (Rat::one() - tail_exact(st.n, params.p()));
    }
    Ok(mass)
}

/// Mass bookkeeping for one stage of the approximation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Discard {
    pub stage: usize,
    pub before: Rat,
    pub after: Rat,
    /// Mass of the rejected children inside `S_{k-1}`.
    pub unchosen: Rat,
    /// Mass of the level-`k` left-over strips inside `S_{k-1}`.
    pub leftover: Rat,
}

pub fn discard_accounting(k: usize, params: &Params) -> Result<Discard> {
    check_k(k, params)?;
    if k == 0 {
        return Err(Error::DepthExceeded {
            requested: 0,
            max: params.stage_count() as u64,
        });
    }
    let before = mu_s(k - 1, params)?;
    let after = mu_s(k, params)?;
    let st = params.stage(k);
    let h_prev = params.height(k - 1);
    let leftover = &before * &Rat::from(4i64) * Rat::inv_pow4(params.uniform_end(k)) / h_prev;
    let both = &before * &Rat::from(2i64) * params.height(k) / h_prev;
    let unchosen = both * tail_exact(st.n, params.p());
    Ok(Discard {
        stage: k,
        before,
        after,
        unchosen,
        leftover,
    })
}

/// `μ(S_k)` by summing cell masses over every column of level `M_k` inside
/// its chosen rectangle. Exhaustive; for cross-checking small schedules.
pub fn mu_s_enumerated(k: usize, params: &Params, opts: &SweepOptions) -> Result<Rat> {
    check_k(k, params)?;
    let depth = params.big_m(k) as u32;
    opts.check(depth)?;
    if k == 0 {
        return Ok(Rat::one());
    }
    let lattice = Lattice::new(params, depth)?;
    let side = side_count(depth);
    let mut total = Rat::zero();
    // sum densities by exponent pair, then convert once
    let mut counts = vec![vec![0u64; depth as usize + 1]; depth as usize + 1];
    for col in 0..side {
        let chain = chosen_chain(k, &BigUint::from(col), params)?;
        let r = &chain.last().expect("k >= 1").bounds;
        let r0 = r.b.to_grid_index(depth).expect("aligned");
        let r1 = r.t.to_grid_index(depth).expect("aligned");
        for row in r0..r1 {
            let w = lattice.word(depth, col, row);
            counts[w.p_count() as usize][w.q_count() as usize] += 1;
        }
    }
    let (p, q) = (params.p(), params.q());
    for (a, row) in counts.iter().enumerate() {
        for (b, &n) in row.iter().enumerate() {
            if n > 0 {
                total = total + Rat::from(n) * p.powu(a as u64) * q.powu(b as u64);
            }
        }
    }
    Ok(total * Rat::inv_pow4(2 * depth as u64))
}

/// All chosen level-`k` rectangles, left to right.
pub fn chosen_rects(k: usize, params: &Params) -> Result<Vec<CRect>> {
    check_k(k, params)?;
    let big_m = params.big_m(k);
    let count = 1u128.checked_shl(2 * big_m as u32).unwrap_or(u128::MAX);
    if big_m >= 32 || count > MAX_MATERIALIZED_CHILDREN {
        return Err(Error::SweepTooLarge {
            needed: count,
            limit: MAX_MATERIALIZED_CHILDREN,
        });
    }
    (0..count as u64)
        .map(|c| {
            let chain = chosen_chain(k, &BigUint::from(c), params)?;
            Ok(chain.last().cloned().unwrap_or_else(CRect::root))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSample {
    pub x: Rat,
    pub lo: Rat,
    pub hi: Rat,
    pub mid: Rat,
}

/// Piecewise-linear curve through sample midpoints, for plotting only.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interpolant {
    pub knots: Vec<(Rat, Rat)>,
}

impl Interpolant {
    pub fn eval(&self, x: &Rat) -> Option<Rat> {
        let first = self.knots.first()?;
        if *x <= first.0 {
            return Some(first.1.clone());
        }
        for w in self.knots.windows(2) {
            let ((x0, y0), (x1, y1)) = (&w[0], &w[1]);
            if x <= x1 {
                let t = (x - x0) / (x1 - x0);
                return Some(y0 + &(t * (y1 - y0)));
            }
        }
        self.knots.last().map(|k| k.1.clone())
    }
}

/// Enclosures at the centres of `resolution` equal columns.
pub fn sample_graph(
    k: usize,
    resolution: u64,
    params: &Params,
) -> Result<(Vec<GraphSample>, Interpolant)> {
    check_k(k, params)?;
    if resolution == 0 {
        return Err(Error::InvalidCell("resolution must be positive".into()));
    }
    let two = Rat::from(2i64);
    let samples: Vec<GraphSample> = (0..resolution)
        .map(|j| {
            let x = Rat::new(2 * j as i64 + 1, 2 * resolution as i64);
            let e = f_enclosure(&x, k, params)?;
            let mid = (&e.lo + &e.hi) / &two;
            Ok(GraphSample {
                x,
                lo: e.lo,
                hi: e.hi,
                mid,
            })
        })
        .collect::<Result<_>>()?;
    let knots = samples.iter().map(|s| (s.x.clone(), s.mid.clone())).collect();
    Ok((samples, Interpolant { knots }))
}
