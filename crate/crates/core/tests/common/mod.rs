#![allow(dead_code)]

use cone_bandit::cone::ConeSpec;
use cone_bandit::pareto::ArmMeanTable;

/// Ten two-objective arms `A0..A9`.
pub const ARMS: [[f64; 2]; 10] = [
    [0.80, 0.90],
    [1.20, 0.50],
    [0.60, 1.10],
    [1.00, 0.70],
    [1.10, 1.00],
    [0.90, 1.20],
    [1.40, 0.60],
    [0.70, 0.80],
    [1.25, 1.05],
    [0.95, 1.15],
];

pub fn arm_table() -> ArmMeanTable {
    ArmMeanTable::from_means(ARMS.iter().map(|a| a.to_vec()).collect()).unwrap()
}

pub fn orthant2() -> ConeSpec {
    ConeSpec::orthant(2).unwrap()
}

/// Cone spanned by `(1, 0.6)` and `(0.6, 1)`.
pub fn narrow_cone() -> ConeSpec {
    ConeSpec::from_generators(&[vec![1.0, 0.6], vec![0.6, 1.0]]).unwrap()
}

/// Two-objective synthetic instance under a power-law to uniform shift.
pub fn study_toml(arms: usize, horizon: u64, change_point: u64, seeds: &[u64]) -> String {
    format!(
        r#"
schema_version = 1
name = "study"
policy = "algorithm1"
seeds = {seeds:?}
noise_sigma = 1.0

[instance]
kind = "appendix_biobjective"
arms = {arms}

[schedule]
horizon = {horizon}
target = {{ kind = "uniform" }}
phases = [{{ dist = {{ kind = "power_law", nu = 2.0 }}, duration = {change_point} }}]

[cone]
kind = "orthant"

[policy_params]
c1 = 1.0
c_beta = 1.0
c2 = 1.0
"#
    )
}
