//! Adaptive-discretization elimination policy and a uniform-random baseline.
//!
//! Each round the policy routes the context to a leaf of the dyadic tree, builds
//! an optimistic Pareto front from upper confidence vectors, drops arms that some
//! front member dominates with confidence, and plays uniformly among the
//! survivors. A leaf is split once its sampling error falls below its width.

use crate::cone::ConeSpec;
use crate::partition::{BinId, PartitionError, TreeState};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("invalid policy parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("arm {arm} is not active in bin ({},{})", bin.depth, bin.index)]
    InactiveArm { arm: usize, bin: BinId },
    #[error("cone dimension {cone} does not match {objectives} objectives")]
    ConeDimension { cone: usize, objectives: usize },
    #[error("reward has {got} components, expected {expected}")]
    RewardDimension { expected: usize, got: usize },
    #[error(transparent)]
    Partition(#[from] PartitionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyParams {
    pub arms: usize,
    pub objectives: usize,
    /// Confidence level δ in (0, 1).
    pub delta: f64,
    /// Hölder exponent β in (0, 1].
    pub beta: f64,
    /// Hölder constant C_β.
    pub c_beta: f64,
    /// Noise scale σ.
    pub sigma: f64,
    /// Bias coefficient.
    pub c1: f64,
    /// Deviation coefficient.
    pub c2: f64,
    /// Overrides `ceil(8 K log(K M / δ))`.
    pub warmup_rounds: Option<u64>,
    #[serde(default)]
    pub refine_rule: RefineRule,
}

/// Elimination test applied to active arms outside the optimistic front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefineRule {
    /// Drop `k` if some front member leads it by more than `2 r_k` in some component.
    #[default]
    Deficit,
    /// Drop `k` only if some front member `k'` leads on every cone row by more
    /// than `(r_k + r_{k'})·‖a_i‖_1`.
    ConfidentDominance,
}

impl PolicyParams {
    pub fn new(arms: usize, objectives: usize, delta: f64) -> Self {
        Self {
            arms,
            objectives,
            delta,
            beta: 1.0,
            c_beta: 1.0,
            sigma: 1.0,
            c1: 1.0,
            c2: 2.0,
            warmup_rounds: None,
            refine_rule: RefineRule::Deficit,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |field, reason: &str| {
            Err(PolicyError::InvalidParam {
                field,
                reason: reason.to_string(),
            })
        };
        if self.arms == 0 {
            return bad("arms", "must be at least 1");
        }
        if self.objectives == 0 {
            return bad("objectives", "must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return bad("beta", "must lie in (0, 1]");
        }
        if !(self.c_beta > 0.0 && self.c_beta.is_finite()) {
            return bad("c_beta", "must be positive");
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad("sigma", "must be nonnegative");
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return bad("c1", "must be positive");
        }
        if !(self.c2 > 0.0 && self.c2.is_finite()) {
            return bad("c2", "must be positive");
        }
        Ok(())
    }

    /// `log(K M / δ)`
    pub fn log_term(&self) -> f64 {
        (self.arms as f64 * self.objectives as f64 / self.delta).ln()
    }

    pub fn warmup(&self) -> u64 {
        self.warmup_rounds
            .unwrap_or_else(|| (8.0 * self.arms as f64 * self.log_term()).ceil() as u64)
    }

    /// Scalar confidence radius for an arm observed `n` times in a bin of width `width`.
    /// With no observations the root width and `n = 1` are used.
    pub fn radius(&self, width: f64, n: u64) -> f64 {
        let (width, n) = if n == 0 { (1.0, 1) } else { (width, n) };
        self.c1 * self.c_beta * width.powf(self.beta)
            + self.c2 * self.sigma * (self.log_term() / n as f64).sqrt()
    }

    /// Bin expansion test `sqrt(8 K log(KM/δ) / n) < V_h^β`; never fires at `n = 0`.
    pub fn should_split(&self, width: f64, visits: u64) -> bool {
        visits > 0
            && (8.0 * self.arms as f64 * self.log_term() / visits as f64).sqrt()
                < width.powf(self.beta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    WarmUp,
    Adaptive,
    Baseline,
}

/// Trace of a single round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub round: u64,
    pub context: Vec<f64>,
    pub bin: BinId,
    pub phase: Phase,
    pub estimated_front: Vec<usize>,
    pub active_set: Vec<usize>,
    pub played: usize,
    pub reward: Vec<f64>,
    pub split: bool,
}

impl StepRecord {
    /// Arms with positive probability under the round's decision rule.
    pub fn support(&self) -> &[usize] {
        match self.phase {
            Phase::WarmUp => std::slice::from_ref(&self.played),
            Phase::Adaptive | Phase::Baseline => &self.active_set,
        }
    }
}

/// Counters of runtime invariant violations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    /// A bin was selected after it had been split.
    pub depth_monotonicity: u64,
    /// An active set grew, or a child's set escaped its parent's.
    pub nested_active: u64,
    /// Children did not tile their parent, or a leaf lost its arms.
    pub partition: u64,
}

impl InvariantReport {
    pub fn total(&self) -> u64 {
        self.depth_monotonicity + self.nested_active + self.partition
    }

    pub fn merge(&mut self, other: &InvariantReport) {
        self.depth_monotonicity += other.depth_monotonicity;
        self.nested_active += other.nested_active;
        self.partition += other.partition;
    }
}

/// Anything that picks an arm for a context and learns from the reward.
pub trait Policy {
    fn step(
        &mut self,
        x: &[f64],
        reward: &mut dyn FnMut(usize) -> Vec<f64>,
    ) -> Result<StepRecord, PolicyError>;

    fn invariants(&self) -> InvariantReport {
        InvariantReport::default()
    }
}

/// State of the tree-based elimination policy.
#[derive(Debug, Clone)]
pub struct PolicyState {
    params: PolicyParams,
    tree: TreeState,
    cone: ConeSpec,
    round: u64,
    rng: ChaCha8Rng,
    report: InvariantReport,
}

impl PolicyState {
    pub fn new(
        params: PolicyParams,
        context_dim: usize,
        cone: ConeSpec,
        rng: ChaCha8Rng,
    ) -> Result<Self, PolicyError> {
        params.validate()?;
        if cone.dim() != params.objectives {
            return Err(PolicyError::ConeDimension {
                cone: cone.dim(),
                objectives: params.objectives,
            });
        }
        Ok(Self {
            tree: TreeState::new(context_dim, params.arms, params.objectives)?,
            params,
            cone,
            round: 0,
            rng,
            report: InvariantReport::default(),
        })
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn tree(&self) -> &TreeState {
        &self.tree
    }

    pub fn cone(&self) -> &ConeSpec {
        &self.cone
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    fn bin_stats(&self, bin: BinId) -> Result<&crate::partition::BinStats, PolicyError> {
        self.tree.stats(bin).ok_or_else(|| {
            PolicyError::Partition(PartitionError::UnknownBin {
                depth: bin.depth,
                index: bin.index,
            })
        })
    }

    /// Scalar radius of `arm` in `bin`.
    pub fn radius(&self, bin: BinId, arm: usize) -> Result<f64, PolicyError> {
        let stats = self.bin_stats(bin)?;
        Ok(self.params.radius(bin.width(), stats.arm_counts[arm]))
    }

    /// Upper confidence vector: the estimate plus the radius on every component.
    pub fn ucb(&self, bin: BinId, arm: usize) -> Result<Vec<f64>, PolicyError> {
        let stats = self.bin_stats(bin)?;
        if arm >= self.params.arms || !stats.is_active(arm) {
            return Err(PolicyError::InactiveArm { arm, bin });
        }
        let r = self.params.radius(bin.width(), stats.arm_counts[arm]);
        Ok(stats.mean(arm).into_iter().map(|m| m + r).collect())
    }

    /// Active arms whose upper confidence vector is not strictly dominated by another's.
    pub fn optimistic_front(&self, bin: BinId) -> Result<Vec<usize>, PolicyError> {
        let stats = self.bin_stats(bin)?;
        let ucbs: Vec<Vec<f64>> = stats
            .active_arms
            .iter()
            .map(|&k| self.ucb(bin, k))
            .collect::<Result<_, _>>()?;
        let front = (0..ucbs.len())
            .filter(|&i| {
                !(0..ucbs.len()).any(|j| j != i && self.cone.strictly_dominates_unchecked(&ucbs[j], &ucbs[i]))
            })
            .map(|i| stats.active_arms[i])
            .collect();
        Ok(front)
    }

    /// Active arms that survive [`RefineRule`] against every front member.
    /// Front members are always kept.
    pub fn refine_active(&self, bin: BinId, front: &[usize]) -> Result<Vec<usize>, PolicyError> {
        let stats = self.bin_stats(bin)?;
        let dim = self.params.objectives;
        let norms: Vec<f64> = (0..dim)
            .map(|i| self.cone.normal(i).iter().map(|a| a.abs()).sum())
            .collect();
        let radius = |k: usize| self.params.radius(bin.width(), stats.arm_counts[k]);
        let front_info: Vec<(Vec<f64>, f64)> =
            front.iter().map(|&k| (stats.mean(k), radius(k))).collect();
        let eliminated = |mu_k: &[f64], r_k: f64, mu_f: &[f64], r_f: f64| match self.params.refine_rule {
            RefineRule::Deficit => (0..dim).any(|m| mu_f[m] - mu_k[m] > 2.0 * r_k),
            RefineRule::ConfidentDominance => (0..dim).all(|i| {
                let diff: f64 = self
                    .cone
                    .normal(i)
                    .iter()
                    .enumerate()
                    .map(|(m, a)| a * (mu_f[m] - mu_k[m]))
                    .sum();
                diff > (r_k + r_f) * norms[i]
            }),
        };
        let kept: Vec<usize> = stats
            .active_arms
            .iter()
            .copied()
            .filter(|&k| {
                if front.contains(&k) {
                    return true;
                }
                let mu_k = stats.mean(k);
                let r_k = radius(k);
                !front_info.iter().any(|(mu_f, r_f)| eliminated(&mu_k, r_k, mu_f, *r_f))
            })
            .collect();
        Ok(kept)
    }

    /// Current estimate of `arm` in `bin`.
    pub fn estimate(&self, bin: BinId, arm: usize) -> Result<Vec<f64>, PolicyError> {
        Ok(self.bin_stats(bin)?.mean(arm))
    }

    fn check_reward(&self, r: &[f64]) -> Result<(), PolicyError> {
        if r.len() != self.params.objectives {
            return Err(PolicyError::RewardDimension {
                expected: self.params.objectives,
                got: r.len(),
            });
        }
        Ok(())
    }

    /// One round of the policy.
    pub fn step_with(
        &mut self,
        x: &[f64],
        reward: &mut dyn FnMut(usize) -> Vec<f64>,
    ) -> Result<StepRecord, PolicyError> {
        let bin = self.tree.locate(x)?;
        if !self.tree.is_leaf(bin) {
            self.report.depth_monotonicity += 1;
        }
        let round = self.round;
        let k = self.params.arms as u64;

        if round < self.params.warmup() {
            let played = (round % k) as usize;
            let r = reward(played);
            self.check_reward(&r)?;
            let stats = self.tree.stats_mut(bin).expect("located bin exists");
            stats.record(played, &r);
            let active_set = stats.active_arms.clone();
            self.round += 1;
            return Ok(StepRecord {
                round,
                context: x.to_vec(),
                bin,
                phase: Phase::WarmUp,
                estimated_front: Vec::new(),
                active_set,
                played,
                reward: r,
                split: false,
            });
        }

        // Children inherit their parent's set at split time and only ever shrink it,
        // so the stored set equals the intersection over the ancestor path.
        let front = self.optimistic_front(bin)?;
        let refined = self.refine_active(bin, &front)?;
        let stats = self.tree.stats_mut(bin).expect("located bin exists");
        if refined.is_empty() || !refined.iter().all(|a| stats.is_active(*a)) {
            self.report.nested_active += 1;
        }
        stats.active_arms = refined.clone();

        let played = refined[self.rng.random_range(0..refined.len())];
        let r = reward(played);
        self.check_reward(&r)?;
        let stats = self.tree.stats_mut(bin).expect("located bin exists");
        stats.record(played, &r);
        let visits = stats.visits;

        let mut split = false;
        if self.params.should_split(bin.width(), visits) && bin.depth < self.tree.max_depth() {
            let children = self.tree.split(bin)?;
            split = true;
            let parent = self.tree.stats(bin).expect("split bin exists").clone();
            let parent_cell = crate::partition::cell_of(bin, self.tree.dim())?;
            let mut child_volume = 0.0;
            for c in &children {
                let cs = self.tree.stats(*c).expect("child exists");
                if !cs.active_arms.iter().all(|a| parent.is_active(*a)) {
                    self.report.nested_active += 1;
                }
                child_volume += crate::partition::cell_of(*c, self.tree.dim())?.volume();
            }
            if child_volume != parent_cell.volume() {
                self.report.partition += 1;
            }
        }

        self.round += 1;
        Ok(StepRecord {
            round,
            context: x.to_vec(),
            bin,
            phase: Phase::Adaptive,
            estimated_front: front,
            active_set: refined,
            played,
            reward: r,
            split,
        })
    }
}

impl Policy for PolicyState {
    fn step(
        &mut self,
        x: &[f64],
        reward: &mut dyn FnMut(usize) -> Vec<f64>,
    ) -> Result<StepRecord, PolicyError> {
        self.step_with(x, reward)
    }

    fn invariants(&self) -> InvariantReport {
        self.report
    }
}

/// Plays a uniformly random arm every round.
#[derive(Debug, Clone)]
pub struct RandomArmPolicy {
    arms: usize,
    context_dim: usize,
    round: u64,
    rng: ChaCha8Rng,
}

impl RandomArmPolicy {
    pub fn new(arms: usize, context_dim: usize, rng: ChaCha8Rng) -> Self {
        Self {
            arms,
            context_dim,
            round: 0,
            rng,
        }
    }
}

impl Policy for RandomArmPolicy {
    fn step(
        &mut self,
        x: &[f64],
        reward: &mut dyn FnMut(usize) -> Vec<f64>,
    ) -> Result<StepRecord, PolicyError> {
        if x.len() != self.context_dim {
            return Err(PartitionError::DimensionMismatch {
                expected: self.context_dim,
                got: x.len(),
            }
            .into());
        }
        if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(PartitionError::OutOfDomain(x.to_vec()).into());
        }
        let played = self.rng.random_range(0..self.arms);
        let r = reward(played);
        let round = self.round;
        self.round += 1;
        Ok(StepRecord {
            round,
            context: x.to_vec(),
            bin: BinId::ROOT,
            phase: Phase::Baseline,
            estimated_front: Vec::new(),
            active_set: (0..self.arms).collect(),
            played,
            reward: r,
            split: false,
        })
    }
}
