//! Construction parameters: the base weight `p`, its partner `q = 2 − p`,
//! and the stage sequence `(m_k, n_k)`.
//!
//! Stage `k` occupies the global steps `M_{k-1} < i ≤ M_k`, where
//! `M_k = Σ_{j≤k} (m_j + n_j)`. Its first `m_k` steps are uniform (weight 1)
//! and the remaining `n_k` steps redistribute mass inside shrinking bands.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rat::Rat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Stage {
    pub m: u64,
    pub n: u64,
}

/// Unvalidated parameters, as read from a JSON config.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawParams {
    pub p: Rat,
    pub stages: Vec<Stage>,
}

/// Validated parameters. Immutable; every derived quantity is consistent with `p` and `stages`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct Params {
    p: Rat,
    stages: Vec<Stage>,
    // M_0..=M_K
    cumulative: Vec<u64>,
    // h_0..=h_K
    heights: Vec<Rat>,
}

impl TryFrom<RawParams> for Params {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        validate(raw)
    }
}

impl From<Params> for RawParams {
    fn from(p: Params) -> Self {
        RawParams {
            p: p.p,
            stages: p.stages,
        }
    }
}

impl Params {
    /// `p = 1/2`, one stage `(3, 3)`.
    pub fn reference() -> Self {
        validate(RawParams {
            p: Rat::new(1, 2),
            stages: vec![Stage { m: 3, n: 3 }],
        })
        .expect("reference parameters are valid")
    }

    pub fn new(p: Rat, stages: &[(u64, u64)]) -> Result<Self> {
        validate(RawParams {
            p,
            stages: stages.iter().map(|&(m, n)| Stage { m, n }).collect(),
        })
    }

    pub fn p(&self) -> &Rat {
        &self.p
    }

    pub fn q(&self) -> Rat {
        Rat::from(2i64) - &self.p
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Number of configured stages `K`.
    pub fn stage_count(&self) -> usize {
        self.stages.len()
    }

    /// Stage `k` (1-based).
    pub fn stage(&self, k: usize) -> Stage {
        self.stages[k - 1]
    }

    /// `M_k`, with `M_0 = 0`.
    pub fn big_m(&self, k: usize) -> u64 {
        self.cumulative[k]
    }

    /// `M_K`: the last step with a configured weight.
    pub fn total_steps(&self) -> u64 {
        *self.cumulative.last().expect("at least M_0")
    }

    /// `M_{k-1} + m_k`: the last uniform step of stage `k`. Level-`k` construction
    /// rectangles are inset from their parent by `4^{-uniform_end(k)}`.
    pub fn uniform_end(&self, k: usize) -> u64 {
        self.cumulative[k - 1] + self.stages[k - 1].m
    }

    /// Height `h_k` shared by all level-`k` construction rectangles.
    pub fn height(&self, k: usize) -> &Rat {
        &self.heights[k]
    }

    pub fn ratio_q_over_p(&self) -> Rat {
        self.q() / &self.p
    }

    pub fn phase_of_step(&self, i: u64) -> Result<Phase> {
        phase_of_step(i, self)
    }
}

pub fn validate(raw: RawParams) -> Result<Params> {
    let RawParams { p, stages } = raw;
    if !(p.is_positive() && p < Rat::one()) {
        return Err(Error::RejectP(p.to_string()));
    }
    if stages.is_empty() {
        return Err(Error::NoStages);
    }
    for (idx, st) in stages.iter().enumerate() {
        for (which, value) in [("m", st.m), ("n", st.n)] {
            if value < 3 || value % 2 == 0 {
                return Err(Error::RejectParity {
                    stage: idx + 1,
                    which,
                    value,
                });
            }
        }
    }

    let mut cumulative = Vec::with_capacity(stages.len() + 1);
    cumulative.push(0u64);
    for st in &stages {
        let prev = *cumulative.last().unwrap();
        cumulative.push(prev + st.m + st.n);
    }

    let mut heights = Vec::with_capacity(stages.len() + 1);
    heights.push(Rat::one());
    for (k, st) in stages.iter().enumerate() {
        let inset = Rat::inv_pow4(cumulative[k] + st.m);
        let next = &heights[k] / &Rat::from(2i64) - &inset * &Rat::from(2i64);
        if !next.is_positive() {
            return Err(Error::RejectHeight {
                stage: k + 1,
                height: next.to_string(),
            });
        }
        heights.push(next);
    }

    Ok(Params {
        p,
        stages,
        cumulative,
        heights,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PhaseKind {
    /// Offset `1..=m_k` within the uniform block.
    Uniform { offset: u64 },
    /// Offset `t` in `1..=n_k`, so `i = M_{k-1} + m_k + t`.
    NonUniform { t: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Phase {
    pub stage: usize,
    pub kind: PhaseKind,
}

pub fn phase_of_step(i: u64, params: &Params) -> Result<Phase> {
    let max = params.total_steps();
    if i == 0 || i > max {
        return Err(Error::OutOfRange { step: i, max });
    }
    // cumulative is strictly increasing
    let k = params.cumulative.partition_point(|&mk| mk < i);
    let offset = i - params.cumulative[k - 1];
    let m = params.stages[k - 1].m;
    let kind = if offset <= m {
        PhaseKind::Uniform { offset }
    } else {
        PhaseKind::NonUniform { t: offset - m }
    };
    Ok(Phase { stage: k, kind })
}

/// Deterministic minimal schedule for a target `epsilon`.
///
/// `p = max(2/(2+ε), 1/2)` so that `q/p ≤ 1 + ε`; stage `k` gets the
/// smallest odd `n_k, m_k ≥ 3` whose tail and left-over terms fit in the
/// budget `ε·2^{-(k+2)}`.
pub fn plan_schedule(epsilon: &Rat, stage_count: usize) -> Result<Params> {
    if !epsilon.is_positive() {
        return Err(Error::RejectEps(epsilon.to_string()));
    }
    if stage_count == 0 {
        return Err(Error::NoStages);
    }
    let two = Rat::from(2i64);
    let p = (&two / &(&two + epsilon)).max(Rat::new(1, 2));
    let q = &two - &p;
    let pq = &p * &q;
    let half = Rat::new(1, 2);

    let mut stages = Vec::with_capacity(stage_count);
    for k in 1..=stage_count {
        let budget = epsilon * &Rat::inv_pow2(k as u64 + 2);

        let mut n = 3u64;
        let mut pow = pq.clone();
        while &half * &pow > budget {
            n += 2;
            pow = pow * &pq;
        }

        let mut m = 3u64;
        let mut leftover = Rat::inv_pow4(2);
        while leftover > budget {
            m += 2;
            leftover = leftover * Rat::inv_pow4(2);
        }
        stages.push(Stage { m, n });
    }
    validate(RawParams { p, stages })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(p: Rat, stages: &[(u64, u64)]) -> RawParams {
        RawParams {
            p,
            stages: stages.iter().map(|&(m, n)| Stage { m, n }).collect(),
        }
    }

    #[test]
    fn validate_examples() {
        let ok = validate(raw(Rat::new(1, 2), &[(3, 3)])).unwrap();
        assert_eq!(ok.q(), Rat::new(3, 2));
        assert_eq!(ok.big_m(1), 6);
        assert_eq!(ok.height(1), &Rat::new(15, 32));

        assert!(matches!(
            validate(raw(Rat::new(1, 2), &[(3, 4)])),
            Err(Error::RejectParity { which: "n", value: 4, .. })
        ));
        assert!(matches!(
            validate(raw(Rat::one(), &[(3, 3)])),
            Err(Error::RejectP(_))
        ));
        assert!(matches!(
            validate(raw(Rat::zero(), &[(3, 3)])),
            Err(Error::RejectP(_))
        ));
        assert!(matches!(
            validate(raw(Rat::new(1, 2), &[(1, 3)])),
            Err(Error::RejectParity { which: "m", value: 1, .. })
        ));
        assert_eq!(validate(raw(Rat::new(1, 2), &[])), Err(Error::NoStages));
    }

    #[test]
    fn heights_follow_recursion() {
        let params = Params::new(Rat::new(1, 2), &[(3, 3), (3, 3)]).unwrap();
        let h1 = Rat::new(1, 2) - Rat::new(2, 64);
        let h2 = &h1 / &Rat::from(2i64) - Rat::new(2, 1 << 18);
        assert_eq!(params.height(1), &h1);
        assert_eq!(params.height(2), &h2);
        assert_eq!(params.uniform_end(2), 9);
        assert_eq!(params.total_steps(), 12);
    }

    #[test]
    fn phase_examples() {
        let one = Params::reference();
        assert_eq!(
            one.phase_of_step(2).unwrap(),
            Phase { stage: 1, kind: PhaseKind::Uniform { offset: 2 } }
        );
        assert_eq!(
            one.phase_of_step(4).unwrap(),
            Phase { stage: 1, kind: PhaseKind::NonUniform { t: 1 } }
        );
        let two = Params::new(Rat::new(1, 2), &[(3, 3), (3, 3)]).unwrap();
        assert_eq!(
            two.phase_of_step(7).unwrap(),
            Phase { stage: 2, kind: PhaseKind::Uniform { offset: 1 } }
        );
        assert_eq!(
            one.phase_of_step(7),
            Err(Error::OutOfRange { step: 7, max: 6 })
        );
        assert!(one.phase_of_step(0).is_err());
    }

    #[test]
    fn phase_is_a_bijection() {
        let params = Params::new(Rat::new(3, 4), &[(3, 5), (5, 3), (3, 3)]).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for i in 1..=params.total_steps() {
            let ph = params.phase_of_step(i).unwrap();
            let (stage, off) = match ph.kind {
                PhaseKind::Uniform { offset } => (ph.stage, offset),
                PhaseKind::NonUniform { t } => (ph.stage, params.stage(ph.stage).m + t),
            };
            assert_eq!(params.big_m(stage - 1) + off, i);
            assert!(seen.insert((stage, off)));
        }
        assert_eq!(seen.len() as u64, params.total_steps());
    }

    /// Minimality oracle: check the inequality by direct exponentiation at `n` and `n - 2`.
    fn tail_fits(pq: &Rat, n: u64, budget: &Rat) -> bool {
        &Rat::new(1, 2) * &pq.powu((n - 1) / 2) <= *budget
    }

    #[test]
    fn plan_half_one_stage() {
        let eps = Rat::new(1, 2);
        let params = plan_schedule(&eps, 1).unwrap();
        assert_eq!(params.p(), &Rat::new(4, 5));
        assert_eq!(params.ratio_q_over_p(), Rat::new(3, 2));
        assert_eq!(params.stage(1).m, 3);
        let pq = params.p() * &params.q();
        assert_eq!(pq, Rat::new(24, 25));
        let budget = Rat::new(1, 16);
        let n = params.stage(1).n;
        assert!(tail_fits(&pq, n, &budget));
        assert!(!tail_fits(&pq, n - 2, &budget));
        // (24/25)^51 ≤ 1/8 < (24/25)^50
        assert_eq!(n, 103);
    }

    #[test]
    fn plan_rejects_nonpositive_eps() {
        assert!(matches!(
            plan_schedule(&Rat::zero(), 1),
            Err(Error::RejectEps(_))
        ));
        assert!(plan_schedule(&Rat::new(-1, 3), 2).is_err());
    }

    #[test]
    fn plan_large_eps_uses_floor() {
        let params = plan_schedule(&Rat::from(5i64), 2).unwrap();
        assert_eq!(params.p(), &Rat::new(1, 2));
        assert_eq!(params.q(), Rat::from(2i64) - params.p());
        assert_eq!(params.stage(1), Stage { m: 3, n: 3 });
    }

    #[test]
    fn json_schema_roundtrip() {
        let json = r#"{"p":"1/2","stages":[{"m":3,"n":3},{"m":5,"n":7}]}"#;
        let params: Params = serde_json::from_str(json).unwrap();
        assert_eq!(params.total_steps(), 18);
        assert_eq!(serde_json::to_string(&params).unwrap(), json);
        let bad = r#"{"p":"1/2","stages":[{"m":3,"n":4}]}"#;
        assert!(serde_json::from_str::<Params>(bad).is_err());
    }
}
