//! Regret traces, source/target dissimilarity and closed-form regret bounds.

use crate::cone::ConeSpec;
use crate::environment::{DistributionSpec, EnvError, MixtureComponent, ShiftSchedule, SyntheticInstance};
use crate::pareto::{pareto_subset, pref_distance, GapSolverConfig, ParetoError};
use crate::partition::{cell_of, BinId};
use crate::policy::StepRecord;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Largest number of cells enumerated by [`dissimilarity`].
pub const MAX_CELLS: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error(transparent)]
    Pareto(#[from] ParetoError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error("invalid bound parameter `{field}`: {reason}")]
    InvalidBound { field: &'static str, reason: String },
    #[error("dimension {d} does not match distribution dimension {dist}")]
    DimensionMismatch { d: usize, dist: usize },
    #[error("depth {depth} in dimension {d} exceeds the cell budget")]
    TooManyCells { depth: u32, d: usize },
    #[error("schedule has no source phase")]
    NoSourcePhase,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
}

/// What a round's regret compares against the oracle front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMeasure {
    /// The mean vector of the arm actually played.
    #[default]
    PlayedArm,
    /// The non-dominated true means of the round's support.
    ActiveSupport,
}

/// Preference distance between a policy front and the oracle front.
pub fn instant_regret<V: AsRef<[f64]>, U: AsRef<[f64]>>(
    policy_front: &[V],
    oracle_front: &[U],
    cone: &ConeSpec,
    cfg: &GapSolverConfig,
) -> Result<f64, AnalysisError> {
    Ok(pref_distance(policy_front, oracle_front, cone, cfg)?)
}

/// True mean vectors of `support` that no other member of `support` dominates.
pub fn policy_front(support: &[usize], means: &[Vec<f64>], cone: &ConeSpec) -> Vec<Vec<f64>> {
    pareto_subset(means, support, cone)
        .into_iter()
        .map(|k| means[k].clone())
        .collect()
}

/// Regret of one recorded round against the instance's true means.
pub fn step_regret(
    record: &StepRecord,
    instance: &SyntheticInstance,
    cone: &ConeSpec,
    cfg: &GapSolverConfig,
    measure: RegretMeasure,
) -> Result<f64, AnalysisError> {
    let means = instance.all_means(&record.context)?;
    let (_, oracle) = instance.oracle_pareto(&record.context, cone)?;
    let support: &[usize] = match measure {
        RegretMeasure::PlayedArm => std::slice::from_ref(&record.played),
        RegretMeasure::ActiveSupport => record.support(),
    };
    let front = policy_front(support, &means, cone);
    instant_regret(&front, &oracle, cone, cfg)
}

/// Per-round regret over the target phase and its running sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretTrace {
    pub seed: u64,
    pub config_hash: String,
    /// Round of the first entry.
    pub first_round: u64,
    pub instant: Vec<f64>,
    pub cumulative: Vec<f64>,
}

impl RegretTrace {
    pub fn new(seed: u64, config_hash: impl Into<String>, first_round: u64) -> Self {
        Self {
            seed,
            config_hash: config_hash.into(),
            first_round,
            instant: Vec::new(),
            cumulative: Vec::new(),
        }
    }

    pub fn push(&mut self, r: f64) {
        let total = self.total() + r;
        self.instant.push(r);
        self.cumulative.push(total);
    }

    pub fn len(&self) -> usize {
        self.instant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instant.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.cumulative.last().copied().unwrap_or(0.0)
    }

    /// Mean instantaneous regret over entries `[from, to)`.
    pub fn window_mean(&self, from: usize, to: usize) -> f64 {
        let w = &self.instant[from.min(self.len())..to.min(self.len())];
        if w.is_empty() {
            0.0
        } else {
            w.iter().sum::<f64>() / w.len() as f64
        }
    }

    /// Columns `t, instant, cumulative`, full round-trip precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), AnalysisError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "instant", "cumulative"])?;
        for (i, (a, c)) in self.instant.iter().zip(&self.cumulative).enumerate() {
            w.write_record([
                (self.first_round + i as u64).to_string(),
                format!("{a:?}"),
                format!("{c:?}"),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a trace written by [`RegretTrace::write_csv`].
    pub fn read_csv<R: Read>(input: R, seed: u64, config_hash: &str) -> Result<Self, AnalysisError> {
        let mut r = csv::Reader::from_reader(input);
        let mut trace = RegretTrace::new(seed, config_hash, 0);
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let field = |j: usize| -> Result<&str, AnalysisError> {
                rec.get(j)
                    .ok_or_else(|| AnalysisError::MalformedTrace(format!("row {i} has no column {j}")))
            };
            let t: u64 = field(0)?
                .parse()
                .map_err(|e| AnalysisError::MalformedTrace(format!("row {i}: {e}")))?;
            let parse = |s: &str| -> Result<f64, AnalysisError> {
                s.parse()
                    .map_err(|e| AnalysisError::MalformedTrace(format!("row {i}: {e}")))
            };
            if i == 0 {
                trace.first_round = t;
            }
            trace.instant.push(parse(field(1)?)?);
            trace.cumulative.push(parse(field(2)?)?);
        }
        Ok(trace)
    }
}

/// `Σ_i Q(B_i)/P(B_i)` over depth-`h` cells, or unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dissimilarity {
    Finite(f64),
    Unbounded,
}

impl Dissimilarity {
    pub fn value(&self) -> f64 {
        match self {
            Self::Finite(v) => *v,
            Self::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, Self::Finite(_))
    }
}

fn check_dim(dist: &DistributionSpec, d: usize) -> Result<(), AnalysisError> {
    dist.validate()?;
    if dist.dim() != d {
        return Err(AnalysisError::DimensionMismatch { d, dist: dist.dim() });
    }
    Ok(())
}

fn cell_count(h: u32, d: usize) -> Result<u64, AnalysisError> {
    let bits = h as u64 * d as u64;
    if d == 0 || bits > 24 || (1u64 << bits) > MAX_CELLS {
        return Err(AnalysisError::TooManyCells { depth: h, d });
    }
    Ok(1u64 << bits)
}

/// Tree-cell dissimilarity of `q` with respect to `p` at depth `h`, using exact cell masses.
pub fn dissimilarity(p: &DistributionSpec, q: &DistributionSpec, h: u32, d: usize) -> Result<Dissimilarity, AnalysisError> {
    check_dim(p, d)?;
    check_dim(q, d)?;
    let n = cell_count(h, d)?;
    let mut total = 0.0;
    for index in 0..n {
        let cell = cell_of(BinId::new(h, index), d).map_err(|_| AnalysisError::TooManyCells { depth: h, d })?;
        let qm = q.box_mass(&cell.lo, &cell.hi);
        if qm <= 0.0 {
            continue;
        }
        let pm = p.box_mass(&cell.lo, &cell.hi);
        if pm <= 0.0 {
            return Ok(Dissimilarity::Unbounded);
        }
        total += qm / pm;
    }
    Ok(Dissimilarity::Finite(total))
}

/// Monte Carlo estimate of [`dissimilarity`] from `samples` draws of each distribution.
pub fn dissimilarity_monte_carlo<R: Rng + ?Sized>(
    p: &DistributionSpec,
    q: &DistributionSpec,
    h: u32,
    d: usize,
    samples: usize,
    rng: &mut R,
) -> Result<Dissimilarity, AnalysisError> {
    check_dim(p, d)?;
    check_dim(q, d)?;
    let n = cell_count(h, d)? as usize;
    let side = 1u64 << h;
    let index_of = |x: &[f64]| -> usize {
        x.iter().fold(0u64, |acc, &v| {
            let c = ((v * side as f64) as u64).min(side - 1);
            acc * side + c
        }) as usize
    };
    let mut pc = vec![0u64; n];
    let mut qc = vec![0u64; n];
    for _ in 0..samples {
        pc[index_of(&p.sample(rng))] += 1;
        qc[index_of(&q.sample(rng))] += 1;
    }
    let mut total = 0.0;
    for (pn, qn) in pc.iter().zip(&qc) {
        if *qn == 0 {
            continue;
        }
        if *pn == 0 {
            return Ok(Dissimilarity::Unbounded);
        }
        total += *qn as f64 / *pn as f64;
    }
    Ok(Dissimilarity::Finite(total))
}

/// Mixture of the source phases weighted by duration; a single phase is returned as is.
pub fn effective_mixture(schedule: &ShiftSchedule) -> Result<DistributionSpec, AnalysisError> {
    let total = schedule.change_point();
    if schedule.phases.is_empty() || total == 0 {
        return Err(AnalysisError::NoSourcePhase);
    }
    if schedule.phases.len() == 1 {
        return Ok(schedule.phases[0].dist.clone());
    }
    Ok(DistributionSpec::Mixture {
        components: schedule
            .phases
            .iter()
            .map(|p| MixtureComponent {
                weight: p.duration as f64 / total as f64,
                dist: p.dist.clone(),
            })
            .collect(),
    })
}

/// Problem-class parameters for the regret bounds. Unit constants throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundParams {
    pub alpha: f64,
    pub c_alpha: f64,
    pub beta: f64,
    pub c_beta: f64,
    pub gamma: f64,
    pub c_gamma: f64,
    pub arms: usize,
    pub objectives: usize,
    pub delta: f64,
    pub change_point: u64,
    pub horizon: u64,
    pub rho_pq: f64,
    pub rho_qq: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let bad = |field, reason: &str| {
            Err(AnalysisError::InvalidBound {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha", "must be positive");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta", "must lie in (0, 1]");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma", "must be positive");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if self.arms == 0 || self.objectives == 0 {
            return bad("arms", "arms and objectives must be at least 1");
        }
        if self.horizon == 0 {
            return bad("horizon", "must be at least 1");
        }
        if self.change_point > self.horizon {
            return bad("change_point", "must not exceed horizon");
        }
        if !(self.rho_pq > 0.0) || self.rho_pq.is_nan() {
            return bad("rho_pq", "must be positive");
        }
        if !(self.rho_qq > 0.0) || self.rho_qq.is_nan() {
            return bad("rho_qq", "must be positive");
        }
        Ok(())
    }

    /// `K log(KM/δ)`
    pub fn complexity(&self) -> f64 {
        self.arms as f64 * (self.arms as f64 * self.objectives as f64 / self.delta).ln()
    }

    fn source(&self) -> f64 {
        self.change_point as f64
    }

    fn target(&self) -> f64 {
        (self.horizon - self.change_point) as f64
    }
}

fn positive(field: &'static str, v: f64) -> Result<f64, AnalysisError> {
    if v > 0.0 && !v.is_nan() {
        Ok(v)
    } else {
        Err(AnalysisError::InvalidBound {
            field,
            reason: format!("base {v} is not positive"),
        })
    }
}

fn finite(v: f64) -> Result<f64, AnalysisError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(AnalysisError::InvalidBound {
            field: "horizon",
            reason: "bound diverges for an empty target phase".into(),
        })
    }
}

/// `(L/max{t_p, T-t_p})^{(α+1)/β} + [L·min{ρ_PQ/t_p, ρ_QQ/(T-t_p)}]^{((α+1)/α)((β+1)/β)}`
/// with `L = K log(KM/δ)`; a ratio with zero denominator counts as `+∞`.
pub fn bound_single_shift(p: &BoundParams) -> Result<f64, AnalysisError> {
    p.validate()?;
    let l = p.complexity();
    let (a, b) = (p.alpha, p.beta);
    let exploration = positive("exploration", l / p.source().max(p.target()))?;
    let adaptation = positive("adaptation", l * (p.rho_pq / p.source()).min(p.rho_qq / p.target()))?;
    finite(exploration.powf((a + 1.0) / b) + adaptation.powf(((a + 1.0) / a) * ((b + 1.0) / b)))
}

/// `[L·min{1/t_p, 1/(T-t_p)}]^{((α+1)/α)(γ(β+1)/β)}·(L/(T-t_p))^{1/α} + [L·min{1/t_p, 1/(T-t_p)}]^{(α+1)/β}`
pub fn bound_special_family(p: &BoundParams) -> Result<f64, AnalysisError> {
    p.validate()?;
    let l = p.complexity();
    let (a, b, g) = (p.alpha, p.beta, p.gamma);
    let rate = positive("rate", l * (1.0 / p.source()).min(1.0 / p.target()))?;
    let target = positive("target", l / p.target())?;
    finite(
        rate.powf(((a + 1.0) / a) * (g * (b + 1.0) / b)) * target.powf(1.0 / a)
            + rate.powf((a + 1.0) / b),
    )
}

/// Single-shift bound with `ρ_PQ` replaced by the depth-`h` dissimilarity of the
/// target with respect to the duration-weighted source mixture.
pub fn bound_multiple_shift(p: &BoundParams, schedule: &ShiftSchedule, h: u32) -> Result<f64, AnalysisError> {
    let mixture = effective_mixture(schedule)?;
    let rho = dissimilarity(&mixture, &schedule.target, h, schedule.dim())?.value();
    bound_single_shift(&BoundParams { rho_pq: rho, ..*p })
}

/// [`bound_multiple_shift`] times the leading factor `(L/(T-t_p))^{1/α}`.
pub fn bound_multiple_shift_with_factor(p: &BoundParams, schedule: &ShiftSchedule, h: u32) -> Result<f64, AnalysisError> {
    let mixture = effective_mixture(schedule)?;
    let rho = dissimilarity(&mixture, &schedule.target, h, schedule.dim())?.value();
    let q = BoundParams { rho_pq: rho, ..*p };
    q.validate()?;
    let l = q.complexity();
    let (a, b) = (q.alpha, q.beta);
    let lead = positive("target", l / q.target())?.powf(1.0 / a);
    let exploration = positive("exploration", l / q.source().max(q.target()))?;
    let adaptation = positive("adaptation", l * (q.rho_pq / q.source()).min(q.rho_qq / q.target()))?;
    finite(lead * exploration.powf((a + 1.0) / b) + adaptation.powf(((a + 1.0) / a) * ((b + 1.0) / b)))
}

/// All bound evaluations for a run, as embedded in its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundOverlay {
    pub params: BoundParams,
    pub depth: u32,
    pub single_shift: Option<f64>,
    pub special_family: Option<f64>,
    pub multiple_shift: Option<f64>,
}

impl BoundOverlay {
    pub fn evaluate(params: BoundParams, schedule: &ShiftSchedule, depth: u32) -> Self {
        Self {
            params,
            depth,
            single_shift: bound_single_shift(&params).ok(),
            special_family: bound_special_family(&params).ok(),
            multiple_shift: bound_multiple_shift(&params, schedule, depth).ok(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::Phase;

    fn params() -> BoundParams {
        BoundParams {
            alpha: 0.2,
            c_alpha: 1.0,
            beta: 1.0,
            c_beta: 1.0,
            gamma: 1.0,
            c_gamma: 2.0,
            arms: 20,
            objectives: 2,
            delta: 1e-4,
            change_point: 2000,
            horizon: 50000,
            rho_pq: 3.0,
            rho_qq: 32.0,
        }
    }

    #[test]
    fn ln2_regret() {
        let o = ConeSpec::orthant(2).unwrap();
        let r = instant_regret(&[vec![0.5, 0.5]], &[vec![1.0, 1.0]], &o, &GapSolverConfig::default()).unwrap();
        assert!((r - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn empty_front_is_an_error() {
        let o = ConeSpec::orthant(2).unwrap();
        let empty: Vec<Vec<f64>> = vec![];
        assert!(instant_regret(&empty, &[vec![1.0, 1.0]], &o, &GapSolverConfig::default()).is_err());
    }

    #[test]
    fn dissimilarity_closed_forms() {
        let u = DistributionSpec::uniform(1);
        for h in 0..=10 {
            assert_eq!(dissimilarity(&u, &u, h, 1).unwrap(), Dissimilarity::Finite((1u64 << h) as f64));
        }
        let p = DistributionSpec::power_law(1.0);
        let v = dissimilarity(&p, &u, 1, 1).unwrap().value();
        assert!((v - 8.0 / 3.0).abs() < 1e-12);
        assert_eq!(dissimilarity(&p, &u, 0, 1).unwrap(), Dissimilarity::Finite(1.0));
    }

    #[test]
    fn vanishing_source_mass_is_unbounded() {
        let steep = DistributionSpec::power_law(5000.0);
        let u = DistributionSpec::uniform(1);
        assert_eq!(dissimilarity(&steep, &u, 1, 1).unwrap(), Dissimilarity::Unbounded);
        assert!(dissimilarity(&DistributionSpec::uniform(2), &u, 1, 1).is_err());
    }

    #[test]
    fn mixture_weights() {
        let s = ShiftSchedule {
            phases: vec![
                Phase {
                    dist: DistributionSpec::power_law(1.0),
                    duration: 1000,
                },
                Phase {
                    dist: DistributionSpec::power_law(2.0),
                    duration: 3000,
                },
            ],
            target: DistributionSpec::uniform(1),
            horizon: 10000,
        };
        match effective_mixture(&s).unwrap() {
            DistributionSpec::Mixture { components } => {
                assert_eq!(components[0].weight, 0.25);
                assert_eq!(components[1].weight, 0.75);
            }
            other => panic!("unexpected {other:?}"),
        }
        let none = ShiftSchedule {
            phases: vec![],
            target: DistributionSpec::uniform(1),
            horizon: 10,
        };
        assert!(matches!(effective_mixture(&none), Err(AnalysisError::NoSourcePhase)));
    }

    #[test]
    fn no_shift_form() {
        let p = BoundParams {
            change_point: 0,
            ..params()
        };
        let l = p.complexity();
        let t = p.horizon as f64;
        let expected = (l / t).powf(1.2) + (l * p.rho_qq / t).powf(6.0 * 2.0);
        assert_eq!(bound_single_shift(&p).unwrap(), expected);
    }

    #[test]
    fn more_target_rounds_shrink_exploration() {
        let a = BoundParams {
            change_point: 100,
            horizon: 1100,
            rho_pq: 1e-9,
            ..params()
        };
        let b = BoundParams { horizon: 2100, ..a };
        let first = |p: &BoundParams| (p.complexity() / p.source().max(p.target())).powf((p.alpha + 1.0) / p.beta);
        assert!(first(&b) < first(&a));
    }

    #[test]
    fn single_phase_multiple_equals_single() {
        let s = ShiftSchedule::single_shift(DistributionSpec::power_law(2.0), 2000, DistributionSpec::uniform(1), 50000);
        let rho = dissimilarity(&DistributionSpec::power_law(2.0), &DistributionSpec::uniform(1), 5, 1).unwrap().value();
        let p = BoundParams { rho_pq: rho, ..params() };
        assert_eq!(
            bound_multiple_shift(&p, &s, 5).unwrap().to_bits(),
            bound_single_shift(&p).unwrap().to_bits()
        );
    }

    #[test]
    fn invalid_bounds() {
        assert!(bound_single_shift(&BoundParams { alpha: 0.0, ..params() }).is_err());
        assert!(bound_single_shift(&BoundParams { change_point: 60000, ..params() }).is_err());
        assert!(bound_special_family(&BoundParams { change_point: 50000, ..params() }).is_err());
    }

    #[test]
    fn trace_round_trip() {
        let mut t = RegretTrace::new(7, "abc", 11);
        for r in [0.1, 0.0, 1.0 / 3.0] {
            t.push(r);
        }
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let back = RegretTrace::read_csv(buf.as_slice(), 7, "abc").unwrap();
        assert_eq!(back, t);
    }
}
