//! Pareto sets, the scale-independent gap and the preference distance between fronts.
//!
//! The gap of a vector `v` to a front `F` is the smallest sup-norm of a
//! component-wise log-inflation `log ε >= 0` such that `v ⊙ ε` is not strictly
//! dominated by any member of `F`. Under the orthant this has a closed form;
//! for other cones it is found by searching a grid in log-space.

use crate::cone::{ConeError, ConeSpec};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

/// Components below this value are raised to it before taking logarithms.
pub const MU_MIN: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum ParetoError {
    #[error("arm table is empty")]
    EmptyTable,
    #[error("front is empty")]
    EmptyFront,
    #[error("arm {index} has dimension {got}, expected {expected}")]
    Ragged {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("{labels} labels for {means} mean vectors")]
    LabelCount { labels: usize, means: usize },
    #[error("arm index {index} out of range for {len} arms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("mean component {value} is negative or not finite")]
    InvalidMean { value: f64 },
    #[error("gap exceeds the search bound log-inflation {bound}")]
    ExceedsInflationBound { bound: f64 },
    #[error("invalid gap solver config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Cone(#[from] ConeError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Mean reward vectors of `K` arms, with labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmMeanTable {
    labels: Vec<String>,
    means: Vec<Vec<f64>>,
}

impl ArmMeanTable {
    pub fn new(labels: Vec<String>, means: Vec<Vec<f64>>) -> Result<Self, ParetoError> {
        if means.is_empty() {
            return Err(ParetoError::EmptyTable);
        }
        if labels.len() != means.len() {
            return Err(ParetoError::LabelCount {
                labels: labels.len(),
                means: means.len(),
            });
        }
        let expected = means[0].len();
        if expected == 0 {
            return Err(ParetoError::Ragged {
                index: 0,
                expected: 1,
                got: 0,
            });
        }
        for (index, m) in means.iter().enumerate() {
            if m.len() != expected {
                return Err(ParetoError::Ragged {
                    index,
                    expected,
                    got: m.len(),
                });
            }
            if let Some(&value) = m.iter().find(|v| !v.is_finite()) {
                return Err(ParetoError::InvalidMean { value });
            }
        }
        Ok(Self { labels, means })
    }

    /// Labels default to `A0, A1, ...`.
    pub fn from_means(means: Vec<Vec<f64>>) -> Result<Self, ParetoError> {
        let labels = (0..means.len()).map(|k| format!("A{k}")).collect();
        Self::new(labels, means)
    }

    /// Reads `label,r1,...,rM` rows (header required).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, ParetoError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut labels = Vec::new();
        let mut means = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let mut fields = rec.iter();
            let label = fields.next().unwrap_or_default().to_string();
            let row = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| ParetoError::InvalidMean { value: f64::NAN })
                })
                .collect::<Result<Vec<_>, _>>()?;
            labels.push(label);
            means.push(row);
        }
        Self::new(labels, means)
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.means[0].len()
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k]
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    pub fn label(&self, k: usize) -> &str {
        &self.labels[k]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Multiplies every component of every arm by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            labels: self.labels.clone(),
            means: self
                .means
                .iter()
                .map(|m| m.iter().map(|v| v * alpha).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    OrthantClosedForm,
    GridOracle,
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GapSolverConfig {
    /// Step of the log-inflation grid.
    pub grid_resolution: f64,
    /// Upper end of the searched log-inflation range per axis.
    pub max_log_inflation: f64,
    pub mode: GapMode,
}

impl Default for GapSolverConfig {
    fn default() -> Self {
        Self {
            grid_resolution: 1e-4,
            max_log_inflation: std::f64::consts::LN_10,
            mode: GapMode::Auto,
        }
    }
}

impl GapSolverConfig {
    pub fn validate(&self) -> Result<(), ParetoError> {
        if !(self.grid_resolution > 0.0 && self.grid_resolution.is_finite()) {
            return Err(ParetoError::InvalidConfig("grid_resolution must be > 0".into()));
        }
        if !(self.max_log_inflation > 0.0 && self.max_log_inflation.is_finite()) {
            return Err(ParetoError::InvalidConfig("max_log_inflation must be > 0".into()));
        }
        if self.grid_resolution > self.max_log_inflation {
            return Err(ParetoError::InvalidConfig(
                "grid_resolution must not exceed max_log_inflation".into(),
            ));
        }
        Ok(())
    }

    pub fn grid_oracle() -> Self {
        Self {
            mode: GapMode::GridOracle,
            ..Self::default()
        }
    }
}

/// Raises components in `[0, MU_MIN)` to `MU_MIN`; rejects negative or non-finite values.
pub fn clamp_mean(v: &[f64]) -> Result<Vec<f64>, ParetoError> {
    v.iter()
        .map(|&x| {
            if !x.is_finite() || x < 0.0 {
                Err(ParetoError::InvalidMean { value: x })
            } else {
                Ok(x.max(MU_MIN))
            }
        })
        .collect()
}

/// Indices of vectors not dominated by any other vector. Equal vectors never
/// dominate each other, so duplicates are all retained.
pub fn pareto_indices<V: AsRef<[f64]>>(vectors: &[V], cone: &ConeSpec) -> Vec<usize> {
    (0..vectors.len())
        .filter(|&k| {
            let vk = vectors[k].as_ref();
            !vectors
                .iter()
                .enumerate()
                .any(|(j, vj)| j != k && cone.dominates_unchecked(vj.as_ref(), vk))
        })
        .collect()
}

/// Indices of `subset` whose vectors are not dominated within `subset`.
pub fn pareto_subset<V: AsRef<[f64]>>(vectors: &[V], subset: &[usize], cone: &ConeSpec) -> Vec<usize> {
    subset
        .iter()
        .copied()
        .filter(|&k| {
            !subset
                .iter()
                .any(|&j| j != k && cone.dominates_unchecked(vectors[j].as_ref(), vectors[k].as_ref()))
        })
        .collect()
}

fn check_dims<V: AsRef<[f64]>>(vs: &[V], dim: usize) -> Result<(), ParetoError> {
    for v in vs {
        let got = v.as_ref().len();
        if got != dim {
            return Err(ConeError::DimensionMismatch { expected: dim, got }.into());
        }
    }
    Ok(())
}

/// Pareto set of an arm table under `cone`.
pub fn pareto_set(table: &ArmMeanTable, cone: &ConeSpec) -> Result<Vec<usize>, ParetoError> {
    if table.is_empty() {
        return Err(ParetoError::EmptyTable);
    }
    check_dims(table.means(), cone.dim())?;
    Ok(pareto_indices(table.means(), cone))
}

/// Gap of arm `k` to the front given by indices into `table`. Exactly 0 for front members.
pub fn gap(
    k: usize,
    front: &[usize],
    table: &ArmMeanTable,
    cone: &ConeSpec,
    cfg: &GapSolverConfig,
) -> Result<f64, ParetoError> {
    if k >= table.len() {
        return Err(ParetoError::IndexOutOfRange { index: k, len: table.len() });
    }
    if front.is_empty() {
        return Err(ParetoError::EmptyFront);
    }
    if let Some(&bad) = front.iter().find(|&&j| j >= table.len()) {
        return Err(ParetoError::IndexOutOfRange { index: bad, len: table.len() });
    }
    if front.contains(&k) {
        return Ok(0.0);
    }
    let members: Vec<&[f64]> = front.iter().map(|&j| table.mean(j)).collect();
    gap_to_front(table.mean(k), &members, cone, cfg)
}

/// Gap of the vector `v` to the set of vectors `front`.
pub fn gap_to_front<V: AsRef<[f64]>>(
    v: &[f64],
    front: &[V],
    cone: &ConeSpec,
    cfg: &GapSolverConfig,
) -> Result<f64, ParetoError> {
    if front.is_empty() {
        return Err(ParetoError::EmptyFront);
    }
    check_dims(std::slice::from_ref(&v), cone.dim())?;
    check_dims(front, cone.dim())?;
    let v = clamp_mean(v)?;
    let front: Vec<Vec<f64>> = front
        .iter()
        .map(|f| clamp_mean(f.as_ref()))
        .collect::<Result<_, _>>()?;
    match cfg.mode {
        GapMode::OrthantClosedForm => {
            if !cone.is_orthant() {
                return Err(ParetoError::InvalidConfig(
                    "orthant_closed_form requires the orthant cone".into(),
                ));
            }
            Ok(orthant_gap(&v, &front))
        }
        GapMode::Auto if cone.is_orthant() => Ok(orthant_gap(&v, &front)),
        _ => {
            cfg.validate()?;
            GridSearch::new(&v, &front, cone, cfg).solve()
        }
    }
}

/// `max_{f ∈ F} min_m [log(f_m / v_m)]_+` on clamped inputs.
fn orthant_gap(v: &[f64], front: &[Vec<f64>]) -> f64 {
    front
        .iter()
        .map(|f| {
            f.iter()
                .zip(v)
                .map(|(fm, vm)| (fm / vm).ln().max(0.0))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Search for the smallest grid box `[0, s·r]^M` of log-inflations that holds a
/// point escaping strict domination by every front member.
///
/// Boxes are nested, so feasibility is monotone in `s` and a doubling plus
/// bisection search finds the same `s` as scanning shells in order. Inside a box
/// the first `M-1` log-coordinates are enumerated on the grid; along the last
/// axis each front member strictly dominates on one contiguous run of grid
/// indices, which is found in closed form.
struct GridSearch<'a> {
    v: &'a [f64],
    front: &'a [Vec<f64>],
    cone: &'a ConeSpec,
    /// `exp(g·r)` for every grid index.
    scale: Vec<f64>,
    resolution: f64,
    bound: f64,
}

impl<'a> GridSearch<'a> {
    fn new(v: &'a [f64], front: &'a [Vec<f64>], cone: &'a ConeSpec, cfg: &GapSolverConfig) -> Self {
        let steps = (cfg.max_log_inflation / cfg.grid_resolution).floor() as usize;
        let scale = (0..=steps)
            .map(|g| (g as f64 * cfg.grid_resolution).exp())
            .collect();
        Self {
            v,
            front,
            cone,
            scale,
            resolution: cfg.grid_resolution,
            bound: cfg.max_log_inflation,
        }
    }

    fn solve(&self) -> Result<f64, ParetoError> {
        let max_s = self.scale.len() - 1;
        if self.box_feasible(0) {
            return Ok(0.0);
        }
        let mut lo = 0;
        let mut hi = 1.min(max_s);
        while !self.box_feasible(hi) {
            if hi == max_s {
                return Err(ParetoError::ExceedsInflationBound { bound: self.bound });
            }
            lo = hi;
            hi = (hi * 2).min(max_s);
        }
        // invariant: box(lo) infeasible, box(hi) feasible
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.box_feasible(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi as f64 * self.resolution)
    }

    fn box_feasible(&self, s: usize) -> bool {
        let last = self.v.len() - 1;
        let mut prefix = vec![0usize; last];
        loop {
            if self.line_feasible(&prefix, s) {
                return true;
            }
            let mut pos = 0;
            loop {
                if pos == last {
                    return false;
                }
                prefix[pos] += 1;
                if prefix[pos] <= s {
                    break;
                }
                prefix[pos] = 0;
                pos += 1;
            }
        }
    }

    /// Is some grid index `g <= s` on the last axis uncovered by every front member?
    fn line_feasible(&self, prefix: &[usize], s: usize) -> bool {
        let dim = self.v.len();
        let last = dim - 1;
        let scaled: Vec<f64> = prefix
            .iter()
            .enumerate()
            .map(|(m, &g)| self.v[m] * self.scale[g])
            .collect();
        let mut ranges: Vec<(usize, usize)> = Vec::with_capacity(self.front.len());
        let mut rows = Vec::with_capacity(dim);
        for f in self.front {
            rows.clear();
            for i in 0..dim {
                let a = self.cone.normal(i);
                let mut c = crate::cone::dot(a, f);
                for m in 0..last {
                    c -= a[m] * scaled[m];
                }
                rows.push((c, a[last] * self.v[last]));
            }
            if let Some(r) = self.covered_range(&rows, s) {
                ranges.push(r);
            }
        }
        ranges.sort_unstable();
        let mut next = 0usize;
        for (a, b) in ranges {
            if a > next {
                break;
            }
            next = next.max(b + 1);
            if next > s {
                return false;
            }
        }
        next <= s
    }

    /// Strict domination on the line holds at index `g` iff `c_i - b_i·exp(g r) > tol` for all rows.
    fn strictly_dominated_at(rows: &[(f64, f64)], y: f64) -> bool {
        rows.iter().all(|&(c, b)| c - b * y > crate::cone::BOUNDARY_TOL)
    }

    fn covered_range(&self, rows: &[(f64, f64)], s: usize) -> Option<(usize, usize)> {
        let tol = crate::cone::BOUNDARY_TOL;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for &(c, b) in rows {
            if b > 0.0 {
                hi = hi.min((c - tol) / b);
            } else if b < 0.0 {
                lo = lo.max((c - tol) / b);
            } else if c <= tol {
                return None;
            }
        }
        if !(lo < hi) || hi <= 1.0 {
            return None;
        }
        let covered = |g: usize| Self::strictly_dominated_at(rows, self.scale[g]);
        let to_index = |y: f64| -> usize {
            if y <= 1.0 {
                0
            } else if y.is_infinite() {
                s
            } else {
                ((y.ln() / self.resolution).floor().max(0.0) as usize).min(s)
            }
        };
        let mut start = to_index(lo);
        // exact boundary fix-up; the log estimate is off by at most one step
        if covered(start) {
            while start > 0 && covered(start - 1) {
                start -= 1;
            }
        } else {
            let mut found = None;
            for g in start + 1..=(start + 3).min(s) {
                if covered(g) {
                    found = Some(g);
                    break;
                }
            }
            start = found?;
        }
        let mut end = to_index(hi).max(start);
        if covered(end) {
            while end < s && covered(end + 1) {
                end += 1;
            }
        } else {
            while end > start && !covered(end) {
                end -= 1;
            }
        }
        Some((start, end))
    }
}

/// Preference distance between two sets of mean vectors: the larger of the two
/// directed worst-case gaps. Symmetric by construction.
pub fn pref_distance<V: AsRef<[f64]>, U: AsRef<[f64]>>(
    front1: &[V],
    front2: &[U],
    cone: &ConeSpec,
    cfg: &GapSolverConfig,
) -> Result<f64, ParetoError> {
    if front1.is_empty() || front2.is_empty() {
        return Err(ParetoError::EmptyFront);
    }
    let forward = directed_gap(front1, front2, cone, cfg)?;
    let backward = directed_gap(front2, front1, cone, cfg)?;
    Ok(forward.max(backward))
}

fn directed_gap<V: AsRef<[f64]>, U: AsRef<[f64]>>(
    from: &[V],
    to: &[U],
    cone: &ConeSpec,
    cfg: &GapSolverConfig,
) -> Result<f64, ParetoError> {
    from.iter().try_fold(0.0_f64, |acc, v| {
        Ok(acc.max(gap_to_front(v.as_ref(), to, cone, cfg)?))
    })
}

/// One row of a gap table: Pareto membership and gap per cone.
#[derive(Debug, Clone, PartialEq)]
pub struct GapRow {
    pub label: String,
    pub mean: Vec<f64>,
    pub pareto: Vec<bool>,
    pub delta: Vec<f64>,
}

/// Pareto flags and gaps of every arm under each named cone.
pub fn gap_table(
    table: &ArmMeanTable,
    cones: &[(String, ConeSpec)],
    cfg: &GapSolverConfig,
) -> Result<Vec<GapRow>, ParetoError> {
    let fronts = cones
        .iter()
        .map(|(_, c)| pareto_set(table, c))
        .collect::<Result<Vec<_>, _>>()?;
    (0..table.len())
        .map(|k| {
            let mut pareto = Vec::with_capacity(cones.len());
            let mut delta = Vec::with_capacity(cones.len());
            for ((_, cone), front) in cones.iter().zip(&fronts) {
                pareto.push(front.contains(&k));
                delta.push(gap(k, front, table, cone, cfg)?);
            }
            Ok(GapRow {
                label: table.label(k).to_string(),
                mean: table.mean(k).to_vec(),
                pareto,
                delta,
            })
        })
        .collect()
}

/// CSV layout: `label, r1..rM, pareto_<cone>..., delta_<cone>...`.
pub fn write_gap_table<W: Write>(
    out: W,
    rows: &[GapRow],
    cone_names: &[String],
) -> Result<(), ParetoError> {
    let mut w = csv::Writer::from_writer(out);
    let dim = rows.first().map_or(0, |r| r.mean.len());
    let mut header = vec!["label".to_string()];
    header.extend((1..=dim).map(|m| format!("r{m}")));
    header.extend(cone_names.iter().map(|n| format!("pareto_{n}")));
    header.extend(cone_names.iter().map(|n| format!("delta_{n}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.label.clone()];
        rec.extend(r.mean.iter().map(|v| format!("{v}")));
        rec.extend(r.pareto.iter().map(|p| p.to_string()));
        rec.extend(r.delta.iter().map(|d| format!("{d:.4}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
