//! Local-hidden-variable adversary with time tags: enumerate deterministic
//! strategies, evaluate postselected correlators under different selection
//! rules, maximize the postselected CHSH value, and search (by linear
//! programming) for mixtures that reproduce the quantum postselected
//! statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::quantum::{coincidence_probabilities, werner_like, MeasurementSettings};
use crate::simplex::{solve, Lp, LpOutcome};

/// Time tag a photon can carry: which emission slot it claims to belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tag {
    Early,
    Late,
}

/// Deterministic per-party response: for each of the two settings, a time
/// tag and a +-1 outcome. 16 per party.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartyStrategy {
    /// Indexed by setting (0 = unprimed, 1 = primed).
    pub responses: [(Tag, i8); 2],
}

impl PartyStrategy {
    pub fn from_index(index: usize) -> Self {
        assert!(index < 16);
        let pick = |bits: usize| {
            let tag = if bits & 0b10 == 0 { Tag::Early } else { Tag::Late };
            let out = if bits & 0b01 == 0 { 1 } else { -1 };
            (tag, out)
        };
        Self {
            responses: [pick(index & 0b11), pick((index >> 2) & 0b11)],
        }
    }

    pub fn tag(&self, setting: usize) -> Tag {
        self.responses[setting].0
    }

    pub fn outcome(&self, setting: usize) -> i8 {
        self.responses[setting].1
    }
}

/// A joint deterministic strategy for both parties. 256 in total.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointStrategy {
    pub index: usize,
    pub alice: PartyStrategy,
    pub bob: PartyStrategy,
}

/// Exhaustive, ordered enumeration of the 256 joint strategies
/// (index = 16 * alice_index + bob_index).
pub fn enumerate_joint_strategies() -> Vec<JointStrategy> {
    (0..256)
        .map(|index| JointStrategy {
            index,
            alice: PartyStrategy::from_index(index / 16),
            bob: PartyStrategy::from_index(index % 16),
        })
        .collect()
}

/// Coincidence selection rule applied to a joint event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PostselectionRule {
    /// Keep everything.
    None,
    /// Franson-style: keep the event iff the two time tags agree. Whether a
    /// pair survives can then depend on both settings.
    TagMatch,
    /// Hug-style: acceptance is a function of the hidden strategy alone.
    /// A strategy is kept iff its tags do not depend on the setting and
    /// agree between the parties.
    SettingIndependent,
}

impl PostselectionRule {
    pub fn accepts(&self, strategy: &JointStrategy, setting_a: usize, setting_b: usize) -> bool {
        match self {
            PostselectionRule::None => true,
            PostselectionRule::TagMatch => {
                strategy.alice.tag(setting_a) == strategy.bob.tag(setting_b)
            }
            PostselectionRule::SettingIndependent => {
                strategy.alice.tag(0) == strategy.alice.tag(1)
                    && strategy.bob.tag(0) == strategy.bob.tag(1)
                    && strategy.alice.tag(0) == strategy.bob.tag(0)
            }
        }
    }
}

/// Probability weights over the 256 joint strategies.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyMixture {
    weights: Vec<f64>,
}

impl StrategyMixture {
    /// Normalizes the given nonnegative weights. The stored weights sum to 1.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() != 256 {
            return Err(Error::Domain("mixture must have 256 weights".into()));
        }
        if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Domain("weights must not all be zero".into()));
        }
        Ok(Self {
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn pure(index: usize) -> Self {
        let mut weights = vec![0.0; 256];
        weights[index] = 1.0;
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nonzero entries, for serialization.
    pub fn support(&self) -> Vec<(usize, f64)> {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 1e-12)
            .map(|(i, &w)| (i, w))
            .collect()
    }
}

/// The four setting pairs of a CHSH run as (setting_A, setting_B) indices,
/// in the order (A,B), (A',B), (A,B'), (A',B').
pub const SETTING_PAIRS: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// Postselected correlator and selection rate at each of the four setting
/// pairs.
pub fn postselected_correlators(
    mixture: &StrategyMixture,
    rule: PostselectionRule,
) -> Result<[(f64, f64); 4]> {
    let strategies = enumerate_joint_strategies();
    let mut out = [(0.0, 0.0); 4];
    for (k, &(sa, sb)) in SETTING_PAIRS.iter().enumerate() {
        let mut rate = 0.0;
        let mut corr = 0.0;
        for s in &strategies {
            let w = mixture.weights[s.index];
            if w == 0.0 || !rule.accepts(s, sa, sb) {
                continue;
            }
            rate += w;
            corr += w * f64::from(s.alice.outcome(sa) * s.bob.outcome(sb));
        }
        if rate <= 1e-12 {
            return Err(Error::Domain(format!(
                "zero selection rate at setting pair {k}"
            )));
        }
        out[k] = (corr / rate, rate);
    }
    Ok(out)
}

/// Unconditional accepted joint-outcome probabilities at one setting pair,
/// indexed (++, +-, -+, --), plus the selection rate.
pub fn postselected_joint_distribution(
    mixture: &StrategyMixture,
    rule: PostselectionRule,
    setting_a: usize,
    setting_b: usize,
) -> ([f64; 4], f64) {
    let strategies = enumerate_joint_strategies();
    let mut dist = [0.0; 4];
    let mut rate = 0.0;
    for s in &strategies {
        let w = mixture.weights[s.index];
        if w == 0.0 || !rule.accepts(s, setting_a, setting_b) {
            continue;
        }
        rate += w;
        let idx = match (s.alice.outcome(setting_a), s.bob.outcome(setting_b)) {
            (1, 1) => 0,
            (1, -1) => 1,
            (-1, 1) => 2,
            _ => 3,
        };
        dist[idx] += w;
    }
    (dist, rate)
}

/// CHSH combination of four postselected correlators in
/// [`SETTING_PAIRS`] order.
pub fn chsh_of(correlators: &[(f64, f64); 4]) -> f64 {
    correlators[0].0 + correlators[1].0 + correlators[2].0 - correlators[3].0
}

/// Maximize the postselected CHSH value over strategy mixtures.
///
/// Pure strategies are scanned exhaustively; on top of that every
/// equal-weight two-strategy mixture is scanned, which suffices to reach the
/// algebraic maximum 4 under tag-match selection (complementary acceptance
/// patterns at the four setting pairs).
pub fn max_postselected_chsh(rule: PostselectionRule) -> (f64, StrategyMixture) {
    let strategies = enumerate_joint_strategies();

    // Acceptance pattern and per-pair outcome product for every strategy.
    let mut accept = vec![[false; 4]; 256];
    let mut product = vec![[0i8; 4]; 256];
    for s in &strategies {
        for (k, &(sa, sb)) in SETTING_PAIRS.iter().enumerate() {
            accept[s.index][k] = rule.accepts(s, sa, sb);
            product[s.index][k] = s.alice.outcome(sa) * s.bob.outcome(sb);
        }
    }

    let mut best_s = f64::NEG_INFINITY;
    let mut best = StrategyMixture::pure(0);

    for i in 0..256 {
        if accept[i].iter().all(|&a| a) {
            let s = f64::from(product[i][0] + product[i][1] + product[i][2] - product[i][3]);
            if s > best_s {
                best_s = s;
                best = StrategyMixture::pure(i);
            }
        }
    }

    for i in 0..256 {
        for j in (i + 1)..256 {
            if (0..4).any(|k| !accept[i][k] && !accept[j][k]) {
                continue;
            }
            let mut s = 0.0;
            for k in 0..4 {
                let mut rate = 0.0;
                let mut corr = 0.0;
                if accept[i][k] {
                    rate += 0.5;
                    corr += 0.5 * f64::from(product[i][k]);
                }
                if accept[j][k] {
                    rate += 0.5;
                    corr += 0.5 * f64::from(product[j][k]);
                }
                let e = corr / rate;
                s += if k == 3 { -e } else { e };
            }
            if s > best_s {
                best_s = s;
                let mut w = vec![0.0; 256];
                w[i] = 0.5;
                w[j] = 0.5;
                best = StrategyMixture::new(w).expect("valid two-point mixture");
            }
        }
    }

    (best_s, best)
}

/// Search for a mixture whose postselected statistics equal the quantum
/// predictions at visibility `v`: at every setting pair the unconditional
/// accepted joint-outcome probabilities must equal rate * q_ij with q the
/// quantum coincidence probabilities and a common selection rate (1/2 is
/// tried first, then 1/4, 3/4, 1).
pub fn reproduce_quantum_statistics(
    rule: PostselectionRule,
    settings: &MeasurementSettings,
    v: f64,
) -> Result<StrategyMixture> {
    let rho = werner_like(v)?;
    let strategies = enumerate_joint_strategies();
    let phase_pairs = settings.setting_pairs();

    for rate in [0.5, 0.25, 0.75, 1.0] {
        // 16 joint-probability constraints plus normalization.
        let mut a = Vec::with_capacity(17);
        let mut b = Vec::with_capacity(17);
        for (k, &(sa, sb)) in SETTING_PAIRS.iter().enumerate() {
            let (pa, pb) = phase_pairs[k];
            let q = coincidence_probabilities(&rho, pa, pb).as_array();
            for (out_idx, &target) in q.iter().enumerate() {
                let mut row = vec![0.0; 256];
                for s in &strategies {
                    if !rule.accepts(s, sa, sb) {
                        continue;
                    }
                    let idx = match (s.alice.outcome(sa), s.bob.outcome(sb)) {
                        (1, 1) => 0,
                        (1, -1) => 1,
                        (-1, 1) => 2,
                        _ => 3,
                    };
                    if idx == out_idx {
                        row[s.index] = 1.0;
                    }
                }
                a.push(row);
                b.push(rate * target);
            }
        }
        a.push(vec![1.0; 256]);
        b.push(1.0);

        let lp = Lp {
            a,
            b,
            c: vec![0.0; 256],
        };
        match solve(&lp)? {
            LpOutcome::Optimal { x, .. } => return StrategyMixture::new(x),
            LpOutcome::Infeasible => continue,
            LpOutcome::Unbounded => {
                return Err(Error::Numeric("feasibility LP reported unbounded".into()))
            }
        }
    }
    Err(Error::Infeasible(format!(
        "no strategy mixture reproduces the quantum statistics at V = {v} under {rule:?}"
    )))
}

/// Serializable summary of an adversary search.
#[derive(Debug, Clone, Serialize)]
pub struct WitnessEntry {
    pub strategy_index: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LhvReport {
    pub rule: PostselectionRule,
    pub s_star: f64,
    pub selection_rates: [f64; 4],
    pub witness: Vec<WitnessEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quantum_target: Option<QuantumTargetReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuantumTargetReport {
    pub visibility: f64,
    pub feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mixture: Option<Vec<WitnessEntry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection_rates: Option<[f64; 4]>,
}

impl LhvReport {
    pub fn build(rule: PostselectionRule, quantum_target: Option<(f64, &MeasurementSettings)>) -> Result<Self> {
        let (s_star, witness) = max_postselected_chsh(rule);
        let correlators = postselected_correlators(&witness, rule)?;
        let selection_rates = correlators.map(|(_, r)| r);
        let quantum_target = match quantum_target {
            None => None,
            Some((v, settings)) => match reproduce_quantum_statistics(rule, settings, v) {
                Ok(mixture) => {
                    let rates = postselected_correlators(&mixture, rule)?.map(|(_, r)| r);
                    Some(QuantumTargetReport {
                        visibility: v,
                        feasible: true,
                        mixture: Some(
                            mixture
                                .support()
                                .into_iter()
                                .map(|(strategy_index, weight)| WitnessEntry {
                                    strategy_index,
                                    weight,
                                })
                                .collect(),
                        ),
                        selection_rates: Some(rates),
                    })
                }
                Err(Error::Infeasible(_)) => Some(QuantumTargetReport {
                    visibility: v,
                    feasible: false,
                    mixture: None,
                    selection_rates: None,
                }),
                Err(e) => return Err(e),
            },
        };
        Ok(Self {
            rule,
            s_star,
            selection_rates,
            witness: witness
                .support()
                .into_iter()
                .map(|(strategy_index, weight)| WitnessEntry {
                    strategy_index,
                    weight,
                })
                .collect(),
            quantum_target,
        })
    }
}
