//! Acceptance run. Prints one `criterion N: PASS|FAIL` line per criterion
//! and exits nonzero when any of them fails.

use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use fatgraph_core::construction::{leftover_strips, CRect, Half};
use fatgraph_core::doubling::verify_lemma;
use fatgraph_core::graph::{
    bounds, chosen_chain, f_enclosure, mu_s, mu_s_enumerated, product_criterion, q_count,
    tail_exact, tail_term,
};
use fatgraph_core::grid::{side_count, RectQ};
use fatgraph_core::measure::{diagnostics, mu_rect, SweepOptions};
use fatgraph_core::schedule::plan_schedule;
use fatgraph_core::{Params, Rat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, what: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.into())
    }
}

fn reference() -> Params {
    Params::reference()
}

fn p_values() -> [Rat; 3] {
    [Rat::new(1, 2), Rat::new(3, 4), Rat::new(9, 10)]
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let r = diagnostics(6, &reference(), &SweepOptions::default()).map_err(|e| e.to_string())?;
    check(r.total_mass == Rat::one(), format!("total mass {}", r.total_mass))?;
    check(
        r.violations == 0,
        format!("{} violations, first {:?}", r.violations, r.first_violation),
    )?;
    Ok(format!("mass 1/1, 0 violations, {:.1}s", start.elapsed().as_secs_f64()))
}

fn criterion_2() -> Outcome {
    let mut notes = Vec::new();
    let mut failures = Vec::new();
    for (p, expected) in [(Rat::new(1, 2), Rat::new(3, 1)), (Rat::new(9, 10), Rat::new(11, 9))] {
        let params = Params::new(p.clone(), &[(3, 3)]).unwrap();
        // q/p computed directly
        assert_eq!(expected, (Rat::from(2i64) - &p) / &p);
        let r = verify_lemma(6, &params, &SweepOptions::default()).map_err(|e| e.to_string())?;
        let line = format!(
            "p={p}: c1={} c2={} c3_epsilon={} (expected {expected}) max_divergence={} witness {:?}",
            r.conditions.c1,
            r.conditions.c2,
            r.conditions.c3_epsilon,
            r.max_divergence_count,
            r.witness
        );
        let ok = r.conditions.c1
            && r.conditions.c2
            && r.conditions.c3_epsilon == expected
            && r.max_divergence_count <= 1;
        if ok {
            notes.push(line);
        } else {
            failures.push(line);
        }
    }
    if failures.is_empty() {
        Ok(notes.join("; "))
    } else {
        Err(failures.join("; "))
    }
}

/// `μ(S_1)` for p = 1/2, stages [(3,3)], counted row by row on the level-6 grid.
fn graph_mass_oracle() -> Rat {
    const SIDE: i64 = 4096;
    let mid = SIDE / 2;
    // band shrink at steps 4, 5, 6 in units of 4^{-6}
    let shrink = [0i64, 16, 20];
    let inset = 64;
    // weights scaled by 2: p → 1, q → 3, 1 → 2
    let mut total: i64 = 0;
    for col in 0..SIDE {
        let digits = [(col >> 4) & 3, (col >> 2) & 3, col & 3];
        let in_a = digits.map(|d| d == 1 || d == 2);
        let hits = in_a.iter().filter(|&&a| a).count();
        let upper = 2 * hits > 3;
        let (lo, hi) = if upper { (mid + inset, SIDE - inset) } else { (inset, mid - inset) };
        for row in lo..hi {
            let mut w = 1i64;
            for s in 0..3 {
                let in_band = if upper {
                    row >= mid + shrink[s] && row < SIDE - shrink[s]
                } else {
                    row >= shrink[s] && row < mid - shrink[s]
                };
                w *= match (in_band, upper == in_a[s]) {
                    (false, _) => 2,
                    (true, true) => 3,
                    (true, false) => 1,
                };
            }
            total += w;
        }
    }
    Rat::from(total) / Rat::from(8 * SIDE * SIDE)
}

fn criterion_3() -> Outcome {
    let params = reference();
    let expected = Rat::new(405, 512);
    let factorized = mu_s(1, &params).map_err(|e| e.to_string())?;
    let enumerated = mu_s_enumerated(1, &params, &SweepOptions::default()).map_err(|e| e.to_string())?;
    let oracle = graph_mass_oracle();
    check(oracle == expected, format!("oracle {oracle}"))?;
    check(factorized == expected, format!("factorized {factorized}"))?;
    check(enumerated == factorized, format!("enumerated {enumerated} vs {factorized}"))?;
    Ok(format!("mu_S(1) = {factorized} by both routes"))
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1, |c, i| c * (n - i) / (i + 1))
}

fn criterion_4() -> Outcome {
    for n in [3u64, 5, 7, 9] {
        for p in p_values() {
            let q = Rat::from(2i64) - &p;
            let sum: Rat = (0..=(n - 1) / 2)
                .map(|i| Rat::from(binomial(n, i)) * q.powu(i) * p.powu(n - i))
                .sum();
            let lhs = sum * Rat::inv_pow2(n);
            let rhs = Rat::new(1, 2) * (&p * &q).powu((n - 1) / 2);
            check(lhs == tail_exact(n, &p), format!("tail_exact({n},{p})"))?;
            check(rhs == tail_term(n, &p), format!("tail_term({n},{p})"))?;
            check(lhs <= rhs, format!("n={n} p={p}: {lhs} > {rhs}"))?;
        }
    }
    let params = reference();
    let ledger = bounds(&params);
    let expected = Rat::one() - Rat::new(3, 8) - Rat::new(1, 16);
    check(expected == Rat::new(9, 16), "9/16")?;
    check(ledger.total == expected, format!("bound total {}", ledger.total))?;
    let m = mu_s(1, &params).map_err(|e| e.to_string())?;
    check(m >= expected, format!("mu_S(1) = {m} < 9/16"))?;
    for p in p_values() {
        let q = Rat::from(2i64) - &p;
        let one_minus = Rat::one() - &p;
        check(&p * &q == Rat::one() - &one_minus * &one_minus, format!("pq identity at {p}"))?;
        let l = bounds(&Params::new(p.clone(), &[(3, 3)]).unwrap());
        check(l.pq_identity, format!("ledger pq identity at {p}"))?;
    }
    Ok("12 tail pairs, bound 9/16 <= mu_S(1) = 405/512".into())
}

/// Mass of the left-over strips of every level-`k-1` rectangle, as full-width strips.
fn leftover_mass(k: usize, params: &Params) -> Result<Rat, String> {
    // every level-(k-1) rectangle of one column chain shares its y-range
    // with the rectangles of all other columns, so walk one per half-chain
    let mut rects = vec![CRect::root()];
    for _ in 1..k {
        let mut next = Vec::new();
        for r in &rects {
            let st = params.stage(r.level + 1);
            let col = &r.column << (2 * (st.m + st.n) as usize);
            for half in [Half::Upper, Half::Lower] {
                next.push(r.child(&col, half, params).map_err(|e| e.to_string())?);
            }
        }
        rects = next;
    }
    let mut total = Rat::zero();
    for r in &rects {
        for (lo, hi) in leftover_strips(r, params).map_err(|e| e.to_string())? {
            let strip = RectQ::new(Rat::zero(), Rat::one(), lo, hi).map_err(|e| e.to_string())?;
            total = total + mu_rect(&strip, params).map_err(|e| e.to_string())?;
        }
    }
    Ok(total)
}

fn criterion_5() -> Outcome {
    let params = reference();
    let one = leftover_mass(1, &params)?;
    let m1 = params.stage(1).m;
    check(one == Rat::new(1, 16), format!("level-1 left-over {one}"))?;
    check(one == Rat::inv_pow4(m1 - 1), "4^{-(m_1-1)}")?;
    check(bounds(&params).stages[0].leftover_exact == one, "ledger level-1 exact")?;

    let two_stage = Params::new(Rat::new(1, 2), &[(3, 3), (3, 3)]).unwrap();
    let two = leftover_mass(2, &two_stage)?;
    let cap = Rat::inv_pow4(two_stage.stage(2).m - 1);
    check(two <= cap, format!("level-2 left-over {two} > {cap}"))?;
    check(bounds(&two_stage).stages[1].leftover_exact == two, "ledger level-2 exact")?;
    Ok(format!("level 1: {one}; level 2: {two} <= {cap}"))
}

fn criterion_6() -> Outcome {
    let params = reference();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut failures = Vec::new();
    for _ in 0..20 {
        let level = rng.gen_range(0..=6u32);
        let side = side_count(level);
        let a = rng.gen_range(0..side);
        let b = rng.gen_range(a + 1..=side);
        let n = Rat::from(side);
        let (lo, hi) = (Rat::from(a) / &n, Rat::from(b) / &n);
        let len = &hi - &lo;
        let y = RectQ::new(Rat::zero(), Rat::one(), lo.clone(), hi.clone()).unwrap();
        let x = RectQ::new(lo.clone(), hi.clone(), Rat::zero(), Rat::one()).unwrap();
        let my = mu_rect(&y, &params).map_err(|e| e.to_string())?;
        let mx = mu_rect(&x, &params).map_err(|e| e.to_string())?;
        if my != len {
            failures.push(format!("y [{lo},{hi}]: {my}"));
        }
        if mx != len {
            failures.push(format!("x [{lo},{hi}] (level {level}): {mx} != {len}"));
        }
    }
    if failures.is_empty() {
        Ok("20 intervals on both axes".into())
    } else {
        Err(format!("{} mismatches: {}", failures.len(), failures.join("; ")))
    }
}

fn criterion_7() -> Outcome {
    let params = Params::new(Rat::new(1, 2), &[(3, 3), (3, 3)]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut columns = 0;
    for _ in 0..100 {
        let level = rng.gen_range(1..=14u32);
        let side = side_count(level);
        let x = Rat::from(rng.gen_range(0..=side)) / Rat::from(side);
        let e1 = f_enclosure(&x, 1, &params).map_err(|e| e.to_string())?;
        let e2 = f_enclosure(&x, 2, &params).map_err(|e| e.to_string())?;
        check(e1.contains(&e2), format!("x={x}: not nested"))?;
        check(e1.width() < Rat::inv_pow2(1), format!("x={x}: width at k=1 {}", e1.width()))?;
        check(e2.width() < Rat::inv_pow2(2), format!("x={x}: width at k=2 {}", e2.width()))?;

        let column = fatgraph_core::construction::column_at(&x, params.big_m(2));
        let chain = chosen_chain(2, &column, &params).map_err(|e| e.to_string())?;
        for (j, rect) in chain.iter().enumerate() {
            let col_j = &column >> (2 * (params.big_m(2) - params.big_m(j + 1)) as usize);
            let a = q_count(j, &col_j, &params);
            let product = product_criterion(a, params.stage(j + 1).n, &params);
            check(rect.half == product, format!("x={x} stage {}: digit vs product", j + 1))?;
            columns += 1;
        }
    }
    Ok(format!("100 points nested, {columns} column choices agree"))
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fatgraph")
}

fn run_bin(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn fatgraph")
}

fn criterion_8() -> Outcome {
    let eps = Rat::new(1, 5);
    let params = plan_schedule(&eps, 3).map_err(|e| e.to_string())?;
    let ratio = params.ratio_q_over_p();
    check(ratio <= Rat::new(6, 5), format!("q/p = {ratio}"))?;
    let total = bounds(&params).total;
    check(total > Rat::new(4, 5), format!("bound total {total}"))?;
    let a = run_bin(&["plan", "--epsilon", "1/5", "--stages", "3"]);
    let b = run_bin(&["plan", "--epsilon", "1/5", "--stages", "3"]);
    check(a.status.success(), format!("plan exited {:?}", a.status.code()))?;
    check(a.stdout == b.stdout, "plan output differs between runs")?;
    Ok(format!("q/p = {ratio}, total ~ {:.6}", total.to_f64()))
}

fn artifact(args: &[&str], threads: Option<&str>, file: Option<&Path>) -> (Option<i32>, Vec<u8>, Vec<u8>) {
    let mut full: Vec<&str> = Vec::new();
    if let Some(t) = threads {
        full.extend(["--threads", t]);
    }
    full.extend(args);
    let out = run_bin(&full);
    let bytes = file.map(|f| std::fs::read(f).expect("artifact written")).unwrap_or_default();
    (out.status.code(), out.stdout, bytes)
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let pgm = dir.path().join("d.pgm");
    let pgm_s = pgm.to_str().unwrap();
    let cases: [(&str, Vec<&str>, Option<&Path>); 3] = [
        ("verify", vec!["verify", "--depth", "6"], None),
        ("report", vec!["report", "--depth", "6"], None),
        ("heatmap", vec!["heatmap", "--depth", "4", "--out", pgm_s], Some(pgm.as_path())),
    ];
    for (name, args, file) in &cases {
        let runs = [
            artifact(args, None, *file),
            artifact(args, None, *file),
            artifact(args, Some("1"), *file),
            artifact(args, Some("4"), *file),
        ];
        for r in &runs[1..] {
            check(*r == runs[0], format!("{name}: artifacts differ"))?;
        }
        check(!runs[0].1.is_empty(), format!("{name}: empty output"))?;
    }
    Ok("verify, report, heatmap identical over 4 runs (threads default/default/1/4)".into())
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        match f() {
            Ok(note) => println!("criterion {n}: PASS ({note})"),
            Err(why) => {
                failed += 1;
                println!("criterion {n}: FAIL ({why})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
