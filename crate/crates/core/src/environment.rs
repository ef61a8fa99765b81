//! Context distributions, shift schedules and synthetic reward instances.

use crate::cone::{ConeSpec, RewardVector};
use crate::pareto::{clamp_mean, pareto_indices, ArmMeanTable, ParetoError};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest context value emitted by the samplers.
pub const CONTEXT_MAX: f64 = 1.0 - 1e-9;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("round {t} outside horizon 1..={horizon}")]
    RoundOutOfHorizon { t: u64, horizon: u64 },
    #[error("arm {arm} out of range for {arms} arms")]
    ArmOutOfRange { arm: usize, arms: usize },
    #[error("context {0:?} outside the instance domain")]
    ContextOutOfDomain(Vec<f64>),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error(transparent)]
    Pareto(#[from] ParetoError),
}

/// A context distribution on `[0,1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Uniform {
        #[serde(default = "one")]
        dim: usize,
    },
    /// Density `(ν+1) x^ν` on `[0,1]`.
    PowerLaw { nu: f64 },
    Mixture { components: Vec<MixtureComponent> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureComponent {
    pub weight: f64,
    pub dist: DistributionSpec,
}

fn one() -> usize {
    1
}

impl DistributionSpec {
    pub fn uniform(dim: usize) -> Self {
        Self::Uniform { dim }
    }

    pub fn power_law(nu: f64) -> Self {
        Self::PowerLaw { nu }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Uniform { dim } => *dim,
            Self::PowerLaw { .. } => 1,
            Self::Mixture { components } => components.first().map_or(0, |c| c.dist.dim()),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            Self::Uniform { dim } if *dim == 0 => {
                Err(EnvError::InvalidDistribution("uniform dimension must be >= 1".into()))
            }
            Self::Uniform { .. } => Ok(()),
            Self::PowerLaw { nu } if !(nu.is_finite() && *nu > -1.0) => Err(
                EnvError::InvalidDistribution(format!("power law exponent {nu} must exceed -1")),
            ),
            Self::PowerLaw { .. } => Ok(()),
            Self::Mixture { components } => {
                if components.is_empty() {
                    return Err(EnvError::InvalidDistribution("empty mixture".into()));
                }
                let dim = components[0].dist.dim();
                let mut total = 0.0;
                for c in components {
                    if !(c.weight > 0.0 && c.weight.is_finite()) {
                        return Err(EnvError::InvalidDistribution(format!(
                            "mixture weight {} must be positive",
                            c.weight
                        )));
                    }
                    c.dist.validate()?;
                    if c.dist.dim() != dim {
                        return Err(EnvError::InvalidDistribution(
                            "mixture components differ in dimension".into(),
                        ));
                    }
                    total += c.weight;
                }
                if (total - 1.0).abs() > 1e-9 {
                    return Err(EnvError::InvalidDistribution(format!(
                        "mixture weights sum to {total}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Draws one context. Power laws use the inverse CDF `U^{1/(ν+1)}`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = match self {
            Self::Uniform { dim } => (0..*dim).map(|_| rng.random::<f64>()).collect(),
            Self::PowerLaw { nu } => vec![rng.random::<f64>().powf(1.0 / (nu + 1.0))],
            Self::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &components[components.len() - 1].dist;
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = &c.dist;
                        break;
                    }
                }
                chosen.sample(rng)
            }
        };
        for v in &mut x {
            *v = v.clamp(0.0, CONTEXT_MAX);
        }
        x
    }

    /// Probability of the box `[lo, hi]` (boundaries carry no mass).
    pub fn box_mass(&self, lo: &[f64], hi: &[f64]) -> f64 {
        match self {
            Self::Uniform { .. } => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| (h.min(1.0) - l.max(0.0)).max(0.0))
                .product(),
            Self::PowerLaw { nu } => {
                let e = nu + 1.0;
                let (l, h) = (lo[0].clamp(0.0, 1.0), hi[0].clamp(0.0, 1.0));
                (h.powf(e) - l.powf(e)).max(0.0)
            }
            Self::Mixture { components } => components
                .iter()
                .map(|c| c.weight * c.dist.box_mass(lo, hi))
                .sum(),
        }
    }

    /// `E[x]` for one-dimensional distributions, per axis otherwise.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Uniform { dim } => vec![0.5; *dim],
            Self::PowerLaw { nu } => vec![(nu + 1.0) / (nu + 2.0)],
            Self::Mixture { components } => {
                let mut out = vec![0.0; self.dim()];
                for c in components {
                    for (o, m) in out.iter_mut().zip(c.dist.mean()) {
                        *o += c.weight * m;
                    }
                }
                out
            }
        }
    }
}

/// A source phase: a distribution held for `duration` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub dist: DistributionSpec,
    pub duration: u64,
}

/// Source phases followed by the target distribution until the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftSchedule {
    #[serde(default)]
    pub phases: Vec<Phase>,
    pub target: DistributionSpec,
    pub horizon: u64,
}

impl ShiftSchedule {
    pub fn single_shift(source: DistributionSpec, change_point: u64, target: DistributionSpec, horizon: u64) -> Self {
        let phases = if change_point == 0 {
            Vec::new()
        } else {
            vec![Phase {
                dist: source,
                duration: change_point,
            }]
        };
        Self {
            phases,
            target,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.target.validate()?;
        let dim = self.target.dim();
        for p in &self.phases {
            p.dist.validate()?;
            if p.duration == 0 {
                return Err(EnvError::InvalidSchedule("phase duration must be >= 1".into()));
            }
            if p.dist.dim() != dim {
                return Err(EnvError::InvalidSchedule(
                    "source and target dimensions differ".into(),
                ));
            }
        }
        if self.horizon == 0 {
            return Err(EnvError::InvalidSchedule("horizon must be >= 1".into()));
        }
        if self.change_point() > self.horizon {
            return Err(EnvError::InvalidSchedule(format!(
                "change point {} exceeds horizon {}",
                self.change_point(),
                self.horizon
            )));
        }
        Ok(())
    }

    /// `t_p`, the total source duration.
    pub fn change_point(&self) -> u64 {
        self.phases.iter().map(|p| p.duration).sum()
    }

    pub fn dim(&self) -> usize {
        self.target.dim()
    }

    /// Distribution in force at round `t` (1-based).
    pub fn distribution_at(&self, t: u64) -> Result<&DistributionSpec, EnvError> {
        if t == 0 || t > self.horizon {
            return Err(EnvError::RoundOutOfHorizon {
                t,
                horizon: self.horizon,
            });
        }
        let mut end = 0;
        for p in &self.phases {
            end += p.duration;
            if t <= end {
                return Ok(&p.dist);
            }
        }
        Ok(&self.target)
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, t: u64, rng: &mut R) -> Result<Vec<f64>, EnvError> {
        Ok(self.distribution_at(t)?.sample(rng))
    }
}

/// Piecewise-linear bumps on `[0,1]^d`: arm `k`'s mean is
/// `base_k + Σ_j heights[k][j] · max(0, 1 - ‖x - c_j‖_∞ / width)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TentMixture {
    pub base: Vec<Vec<f64>>,
    pub centers: Vec<Vec<f64>>,
    /// `heights[k][j]` is the `M`-vector added by bump `j` to arm `k`.
    pub heights: Vec<Vec<Vec<f64>>>,
    pub width: f64,
}

impl TentMixture {
    /// A Lipschitz constant in the sup-norm over objectives.
    pub fn lipschitz(&self) -> f64 {
        self.heights
            .iter()
            .map(|arm| {
                let m = arm.first().map_or(0, Vec::len);
                (0..m)
                    .map(|obj| arm.iter().map(|h| h[obj].abs()).sum::<f64>())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
            / self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SyntheticInstance {
    /// Two objectives on `[0,1)` with arm number `k = index + 1`:
    /// `μ1 = max{0, 1 - 5(1/k - 1/k1(x))}`, `k1 = 5/(4(1-x))`;
    /// `μ2 = max{0, 1 - 5(1/k2(x) - 1/k)}` if `k > k2(x)` else `max{0, (1/k - 1/k2(x))/4}`,
    /// `k2 = 5/(5-4x)`.
    AppendixBiobjective { arms: usize },
    /// Means that do not depend on the context.
    TableFixed {
        table: ArmMeanTable,
        #[serde(default = "one")]
        dim: usize,
    },
    TentMixture(TentMixture),
}

impl SyntheticInstance {
    pub fn appendix(arms: usize) -> Self {
        Self::AppendixBiobjective { arms }
    }

    pub fn table_fixed(table: ArmMeanTable, dim: usize) -> Self {
        Self::TableFixed { table, dim }
    }

    pub fn arms(&self) -> usize {
        match self {
            Self::AppendixBiobjective { arms } => *arms,
            Self::TableFixed { table, .. } => table.len(),
            Self::TentMixture(t) => t.base.len(),
        }
    }

    pub fn objectives(&self) -> usize {
        match self {
            Self::AppendixBiobjective { .. } => 2,
            Self::TableFixed { table, .. } => table.dim(),
            Self::TentMixture(t) => t.base.first().map_or(0, Vec::len),
        }
    }

    pub fn context_dim(&self) -> usize {
        match self {
            Self::AppendixBiobjective { .. } => 1,
            Self::TableFixed { dim, .. } => *dim,
            Self::TentMixture(t) => t.centers.first().map_or(0, Vec::len),
        }
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        match self {
            Self::AppendixBiobjective { arms } if *arms == 0 => {
                Err(EnvError::InvalidInstance("arms must be >= 1".into()))
            }
            Self::TableFixed { dim, .. } if *dim == 0 => {
                Err(EnvError::InvalidInstance("dim must be >= 1".into()))
            }
            Self::TentMixture(t) => {
                let k = t.base.len();
                let m = self.objectives();
                let d = self.context_dim();
                if k == 0 || m == 0 || d == 0 {
                    return Err(EnvError::InvalidInstance("empty tent mixture".into()));
                }
                if !(t.width > 0.0 && t.width.is_finite()) {
                    return Err(EnvError::InvalidInstance("tent width must be positive".into()));
                }
                let ok = t.base.iter().all(|b| b.len() == m)
                    && t.centers.iter().all(|c| c.len() == d)
                    && t.heights.len() == k
                    && t.heights
                        .iter()
                        .all(|arm| arm.len() == t.centers.len() && arm.iter().all(|h| h.len() == m));
                if ok {
                    Ok(())
                } else {
                    Err(EnvError::InvalidInstance("tent mixture shapes disagree".into()))
                }
            }
            _ => Ok(()),
        }
    }

    fn check_context(&self, x: &[f64]) -> Result<(), EnvError> {
        let upper_ok = |v: f64| match self {
            Self::AppendixBiobjective { .. } => v < 1.0,
            _ => v <= 1.0,
        };
        if x.len() != self.context_dim() || x.iter().any(|&v| !(v >= 0.0 && upper_ok(v))) {
            return Err(EnvError::ContextOutOfDomain(x.to_vec()));
        }
        Ok(())
    }

    /// True mean vector of arm `arm` (0-based) at context `x`.
    pub fn mean_reward(&self, arm: usize, x: &[f64]) -> Result<RewardVector, EnvError> {
        if arm >= self.arms() {
            return Err(EnvError::ArmOutOfRange {
                arm,
                arms: self.arms(),
            });
        }
        self.check_context(x)?;
        Ok(RewardVector(self.mean_unchecked(arm, x)))
    }

    fn mean_unchecked(&self, arm: usize, x: &[f64]) -> Vec<f64> {
        match self {
            Self::AppendixBiobjective { .. } => {
                let k = (arm + 1) as f64;
                let x = x[0];
                let k1 = 5.0 / (4.0 * (1.0 - x));
                let k2 = 5.0 / (5.0 - 4.0 * x);
                let first = (1.0 - 5.0 * (1.0 / k - 1.0 / k1)).max(0.0);
                let second = if k > k2 {
                    (1.0 - 5.0 * (1.0 / k2 - 1.0 / k)).max(0.0)
                } else {
                    (0.25 * (1.0 / k - 1.0 / k2)).max(0.0)
                };
                vec![first, second]
            }
            Self::TableFixed { table, .. } => table.mean(arm).to_vec(),
            Self::TentMixture(t) => {
                let mut out = t.base[arm].clone();
                for (c, h) in t.centers.iter().zip(&t.heights[arm]) {
                    let dist = c
                        .iter()
                        .zip(x)
                        .map(|(ci, xi)| (ci - xi).abs())
                        .fold(0.0, f64::max);
                    let w = (1.0 - dist / t.width).max(0.0);
                    for (o, hv) in out.iter_mut().zip(h) {
                        *o += hv * w;
                    }
                }
                out
            }
        }
    }

    /// All `K` mean vectors at `x`.
    pub fn all_means(&self, x: &[f64]) -> Result<Vec<Vec<f64>>, EnvError> {
        self.check_context(x)?;
        Ok((0..self.arms()).map(|k| self.mean_unchecked(k, x)).collect())
    }

    /// Mean plus independent `N(0, σ²)` noise per component.
    pub fn draw_reward<R: Rng + ?Sized>(
        &self,
        arm: usize,
        x: &[f64],
        sigma: f64,
        rng: &mut R,
    ) -> Result<RewardVector, EnvError> {
        let mut r = self.mean_reward(arm, x)?;
        if sigma > 0.0 {
            let noise = Normal::new(0.0, sigma)
                .map_err(|e| EnvError::InvalidInstance(format!("noise scale: {e}")))?;
            for v in r.0.iter_mut() {
                *v += noise.sample(rng);
            }
        }
        Ok(r)
    }

    /// Brute-force Pareto set at `x` with the clamped mean vectors of its members.
    pub fn oracle_pareto(&self, x: &[f64], cone: &ConeSpec) -> Result<(Vec<usize>, Vec<Vec<f64>>), EnvError> {
        let means = self.all_means(x)?;
        if cone.dim() != self.objectives() {
            return Err(ParetoError::Cone(crate::cone::ConeError::DimensionMismatch {
                expected: cone.dim(),
                got: self.objectives(),
            })
            .into());
        }
        let front = pareto_indices(&means, cone);
        let vectors = front
            .iter()
            .map(|&k| clamp_mean(&means[k]))
            .collect::<Result<_, _>>()?;
        Ok((front, vectors))
    }
}

/// Compares the enumerated front of the two-objective instance with the index
/// interval `[⌊k1(x)⌋, ⌈k2(x)⌉]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalDiagnostic {
    pub x: f64,
    pub interval: (usize, usize),
    /// 1-based arm numbers.
    pub enumerated: Vec<usize>,
    pub matches: bool,
}

pub fn appendix_interval_diagnostic(arms: usize, x: f64, cone: &ConeSpec) -> Result<IntervalDiagnostic, EnvError> {
    let inst = SyntheticInstance::appendix(arms);
    let (front, _) = inst.oracle_pareto(&[x], cone)?;
    let k1 = 5.0 / (4.0 * (1.0 - x));
    let k2 = 5.0 / (5.0 - 4.0 * x);
    let interval = (k1.floor() as usize, (k2.ceil() as usize).min(arms));
    let enumerated: Vec<usize> = front.iter().map(|k| k + 1).collect();
    let expected: Vec<usize> = (interval.0.max(1)..=interval.1).collect();
    Ok(IntervalDiagnostic {
        x,
        interval,
        matches: expected == enumerated,
        enumerated,
    })
}
