#![allow(dead_code)]

use fatgraph_core::{Params, Rat};

/// Brute-force density of a level-`level` cell for a single-stage schedule
/// `[(m, n)]`, computed from the band geometry in integer units of `4^{-level}`.
/// Returns `(#p, #q)`.
pub fn single_stage_exponents(m: u64, n: u64, level: u32, col: u64, row: u64) -> (u32, u32) {
    assert!(level as u64 <= m + n);
    let side = 4u128.pow(level);
    // doubled coordinates so the cell center is an integer
    let y2 = 2 * row as u128 + 1;
    let (mut a, mut b) = (0, 0);
    for i in (m + 1)..=(level as u64) {
        let shrink: u128 = ((m + 1)..i).map(|j| side / 4u128.pow(j as u32)).sum();
        let in_upper = y2 > 2 * (side / 2 + shrink) && y2 < 2 * (side - shrink);
        let in_lower = y2 > 2 * shrink && y2 < 2 * (side / 2 - shrink);
        let digit = (col >> (2 * (level as u64 - i))) & 3;
        let in_a = digit == 1 || digit == 2;
        match (in_upper, in_lower, in_a) {
            (true, _, true) | (_, true, false) => b += 1,
            (true, _, false) | (_, true, true) => a += 1,
            _ => {}
        }
    }
    (a, b)
}

pub fn density_from(a: u32, b: u32, p: &Rat) -> Rat {
    let q = Rat::from(2i64) - p;
    p.powu(a as u64) * q.powu(b as u64)
}

/// Oracle density grid, row-major, for a single-stage schedule.
pub fn oracle_grid(params: &Params, level: u32) -> Vec<Rat> {
    let st = params.stage(1);
    let side = 1u64 << (2 * level);
    let mut out = Vec::with_capacity((side * side) as usize);
    for row in 0..side {
        for col in 0..side {
            let (a, b) = single_stage_exponents(st.m, st.n, level, col, row);
            out.push(density_from(a, b, params.p()));
        }
    }
    out
}
