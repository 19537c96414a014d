//! Offline evaluation: simulate tolerances, run a grid of engine variants
//! over stored profiles, and compare every pair of variants with IoU and
//! RBO.

mod config;

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engines::{Backbone, EngineError, EngineId, EngineSpec, Policy, Recommender, DEFAULT_R};
use crate::metrics::{jaccard, rbo, MetricError, DEFAULT_RBO_P};
use crate::scoring::UserProfile;

pub use config::{apply_eval_key, parse_eval_config, parse_kv, ConfigError};

pub const DEFAULT_RATES: [f64; 3] = [0.0, 0.5, 1.0];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("tolerance rate {0} must be finite and non-negative")]
    InvalidRate(f64),
    #[error("no profiles to evaluate")]
    NoProfiles,
    #[error("profile {index}: {source}")]
    Profile {
        index: usize,
        #[source]
        source: EngineError,
    },
    #[error("grid cell {0:?} is listed twice")]
    DuplicateCell(String),
    #[error("grid cell {cell:?} needs backbone {backbone}, which has no matrix")]
    MissingBackbone { cell: String, backbone: Backbone },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// How a Poisson draw becomes a tolerance in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ToleranceMode {
    /// 0 stays 0, anything else is 1.
    #[default]
    Clamped,
    /// `min(k / 2, 1)`.
    ScaledPoisson,
}

impl FromStr for ToleranceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clamped" => Ok(Self::Clamped),
            "scaled-poisson" => Ok(Self::ScaledPoisson),
            _ => Err(format!("unknown tolerance mode {s:?} (expected clamped or scaled-poisson)")),
        }
    }
}

/// Draws a tolerance from Poisson(`rate`) mapped into [0, 1].
pub fn sample_tolerance<R: Rng + ?Sized>(rate: f64, mode: ToleranceMode, rng: &mut R) -> Result<f64, HarnessError> {
    if !(rate.is_finite() && rate >= 0.0) {
        return Err(HarnessError::InvalidRate(rate));
    }
    if rate == 0.0 {
        return Ok(0.0);
    }
    let k: f64 = Poisson::new(rate).map_err(|_| HarnessError::InvalidRate(rate))?.sample(rng);
    Ok(match mode {
        ToleranceMode::Clamped => k.min(1.0),
        ToleranceMode::ScaledPoisson => (k / 2.0).min(1.0),
    })
}

/// Where a cell's beta or xi comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KnobSource {
    Fixed(f64),
    /// The profile's own value if it has one, otherwise a simulated draw.
    Rate(f64),
}

impl fmt::Display for KnobSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KnobSource::Fixed(v) => write!(f, "={v}"),
            KnobSource::Rate(v) => write!(f, "~{v}"),
        }
    }
}

/// One column of the evaluation: an engine plus where its knobs come from.
///
/// Written as `mosaic-a[b~0.5/x=1]`: `=` fixes a value, `~` names a
/// simulation rate. Knobs the policy ignores are omitted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub engine: EngineId,
    pub beta: KnobSource,
    pub xi: KnobSource,
}

impl GridCell {
    pub fn new(engine: EngineId) -> Self {
        Self {
            engine,
            beta: KnobSource::Fixed(0.0),
            xi: KnobSource::Fixed(0.0),
        }
    }

    pub fn beta(mut self, source: KnobSource) -> Self {
        self.beta = source;
        self
    }

    pub fn xi(mut self, source: KnobSource) -> Self {
        self.xi = source;
        self
    }

    pub fn label(&self) -> String {
        self.to_string()
    }

    fn rates(&self) -> impl Iterator<Item = f64> {
        let policy = self.engine.policy;
        [(policy.uses_beta(), self.beta), (policy.uses_xi(), self.xi)]
            .into_iter()
            .filter_map(|(used, src)| match (used, src) {
                (true, KnobSource::Rate(r)) => Some(r),
                _ => None,
            })
    }
}

impl fmt::Display for GridCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.engine)?;
        let mut knobs = Vec::new();
        if self.engine.policy.uses_beta() {
            knobs.push(format!("b{}", self.beta));
        }
        if self.engine.policy.uses_xi() {
            knobs.push(format!("x{}", self.xi));
        }
        if !knobs.is_empty() {
            write!(f, "[{}]", knobs.join("/"))?;
        }
        Ok(())
    }
}

impl FromStr for GridCell {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (engine, knobs) = match s.split_once('[') {
            Some((e, rest)) => (
                e,
                rest.strip_suffix(']')
                    .ok_or_else(|| format!("grid cell {s:?}: missing ']'"))?,
            ),
            None => (s, ""),
        };
        let engine: EngineId = engine.parse().map_err(|e: EngineError| e.to_string())?;
        let mut cell = GridCell::new(engine);
        for knob in knobs.split(['/', ',']).map(str::trim).filter(|k| !k.is_empty()) {
            let (name, rest) = knob.split_at(1);
            let source = parse_source(rest).ok_or_else(|| format!("grid cell {s:?}: bad knob {knob:?}"))?;
            match name {
                "b" if engine.policy.uses_beta() => cell.beta = source,
                "x" if engine.policy.uses_xi() => cell.xi = source,
                _ => return Err(format!("grid cell {s:?}: knob {knob:?} does not apply to {engine}")),
            }
        }
        Ok(cell)
    }
}

fn parse_source(s: &str) -> Option<KnobSource> {
    let (kind, value) = s.split_at(s.chars().next()?.len_utf8());
    let v: f64 = value.trim().parse().ok()?;
    match kind {
        "=" if (0.0..=1.0).contains(&v) => Some(KnobSource::Fixed(v)),
        "~" if v.is_finite() && v >= 0.0 => Some(KnobSource::Rate(v)),
        _ => None,
    }
}

/// The standard twelve columns for one backbone: the baseline, popularity
/// and diversity engines at each rate, the combined engine at each rate,
/// and the combined engine with one knob fully off and the other fully on.
pub fn default_grid(backbone: Backbone, rates: &[f64]) -> Vec<GridCell> {
    let id = |policy| EngineId::new(policy, backbone);
    let mut grid = vec![GridCell::new(id(Policy::Base))];
    grid.extend(rates.iter().map(|&r| GridCell::new(id(Policy::Pop)).beta(KnobSource::Rate(r))));
    grid.extend(rates.iter().map(|&r| GridCell::new(id(Policy::Fair)).xi(KnobSource::Rate(r))));
    grid.extend(rates.iter().map(|&r| {
        GridCell::new(id(Policy::Mosaic))
            .beta(KnobSource::Rate(r))
            .xi(KnobSource::Rate(r))
    }));
    grid.push(
        GridCell::new(id(Policy::Mosaic))
            .beta(KnobSource::Fixed(0.0))
            .xi(KnobSource::Fixed(1.0)),
    );
    grid.push(
        GridCell::new(id(Policy::Mosaic))
            .beta(KnobSource::Fixed(1.0))
            .xi(KnobSource::Fixed(0.0)),
    );
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub tolerance_rates: Vec<f64>,
    pub tolerance_mode: ToleranceMode,
    pub rbo_p: f64,
    pub r: usize,
    pub seed: u64,
    /// Empty means the default grid for every registered backbone.
    pub grid: Vec<GridCell>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            tolerance_rates: DEFAULT_RATES.to_vec(),
            tolerance_mode: ToleranceMode::Clamped,
            rbo_p: DEFAULT_RBO_P,
            r: DEFAULT_R,
            seed: 0,
            grid: Vec::new(),
        }
    }
}

impl EvalConfig {
    pub fn resolved_grid(&self, recommender: &Recommender) -> Vec<GridCell> {
        if !self.grid.is_empty() {
            return self.grid.clone();
        }
        [Backbone::A, Backbone::B]
            .into_iter()
            .filter(|&b| recommender.has_backbone(b))
            .flat_map(|b| default_grid(b, &self.tolerance_rates))
            .collect()
    }
}

/// A stored preference profile. Missing tolerances are simulated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalProfile {
    pub ratings: BTreeMap<String, u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<f64>,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, sd: f64::NAN, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self { mean, sd, n }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Iou,
    Rbo,
}

impl Measure {
    pub fn as_str(self) -> &'static str {
        match self {
            Measure::Iou => "iou",
            Measure::Rbo => "rbo",
        }
    }
}

/// Rankings for every (profile, cell), the raw material for the tables.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRun {
    pub cells: Vec<GridCell>,
    pub labels: Vec<String>,
    /// `rankings[profile][cell]`, painting indices in rank order.
    pub rankings: Vec<Vec<Vec<usize>>>,
    /// Per cell, how many profiles hit the solver budget.
    pub non_optimal: Vec<usize>,
    pub rbo_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairRow {
    pub engine_a: String,
    pub engine_b: String,
    pub measure: Measure,
    pub mean: f64,
    pub sd: f64,
    pub n_profiles: usize,
}

/// Pairwise comparison table over grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseTable {
    pub labels: Vec<String>,
    /// Upper triangle, `i < j`, row-major, IoU row before RBO row.
    pub rows: Vec<PairRow>,
    pub non_optimal: Vec<usize>,
    iou: Vec<Summary>,
    rbo: Vec<Summary>,
}

impl EvalRun {
    pub fn n_profiles(&self) -> usize {
        self.rankings.len()
    }

    /// Summary of one measure between cells `a` and `b` over all profiles.
    pub fn compare(&self, a: usize, b: usize, measure: Measure) -> Result<Summary, HarnessError> {
        let values = self
            .rankings
            .iter()
            .map(|row| match measure {
                Measure::Iou => Ok(jaccard(&row[a], &row[b])),
                Measure::Rbo => rbo(&row[a], &row[b], self.rbo_p),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Summary::of(&values))
    }

    pub fn table(&self) -> Result<PairwiseTable, HarnessError> {
        let k = self.cells.len();
        let mut rows = Vec::new();
        let mut iou = vec![Summary::of(&[]); k * k];
        let mut rbo_cells = iou.clone();
        for a in 0..k {
            for b in a..k {
                let si = self.compare(a, b, Measure::Iou)?;
                let sr = self.compare(a, b, Measure::Rbo)?;
                iou[a * k + b] = si;
                iou[b * k + a] = si;
                rbo_cells[a * k + b] = sr;
                rbo_cells[b * k + a] = sr;
                if a == b {
                    continue;
                }
                for (measure, s) in [(Measure::Iou, si), (Measure::Rbo, sr)] {
                    rows.push(PairRow {
                        engine_a: self.labels[a].clone(),
                        engine_b: self.labels[b].clone(),
                        measure,
                        mean: s.mean,
                        sd: s.sd,
                        n_profiles: s.n,
                    });
                }
            }
        }
        Ok(PairwiseTable {
            labels: self.labels.clone(),
            rows,
            non_optimal: self.non_optimal.clone(),
            iou,
            rbo: rbo_cells,
        })
    }
}

impl PairwiseTable {
    /// Full symmetric matrix entry, diagonal included.
    pub fn cell(&self, a: usize, b: usize, measure: Measure) -> Summary {
        let k = self.labels.len();
        match measure {
            Measure::Iou => self.iou[a * k + b],
            Measure::Rbo => self.rbo[a * k + b],
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["engine_a", "engine_b", "measure", "mean", "sd", "n_profiles"])?;
        for row in &self.rows {
            w.write_record([
                row.engine_a.as_str(),
                row.engine_b.as_str(),
                row.measure.as_str(),
                &format!("{:.6}", row.mean),
                &format!("{:.6}", row.sd),
                &row.n_profiles.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Aligned `mean ± sd` grid: IoU above the diagonal, RBO below.
    pub fn render_text(&self) -> String {
        let k = self.labels.len();
        let fmt_cell = |s: Summary| format!("{:.2} ± {:.2}", s.mean, s.sd);
        let mut grid = vec![vec![String::new(); k + 1]; k + 1];
        grid[0][0] = "IoU \\ RBO".to_string();
        for (i, label) in self.labels.iter().enumerate() {
            grid[0][i + 1] = label.clone();
            grid[i + 1][0] = label.clone();
            for j in 0..k {
                grid[i + 1][j + 1] = match i.cmp(&j) {
                    std::cmp::Ordering::Less => fmt_cell(self.cell(i, j, Measure::Iou)),
                    std::cmp::Ordering::Greater => fmt_cell(self.cell(i, j, Measure::Rbo)),
                    std::cmp::Ordering::Equal => "-".to_string(),
                };
            }
        }
        let widths: Vec<usize> = (0..=k)
            .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for row in &grid {
            let line: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(s, &w)| format!("{s:>w$}"))
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        let flagged: Vec<String> = self
            .labels
            .iter()
            .zip(&self.non_optimal)
            .filter(|(_, &n)| n > 0)
            .map(|(l, n)| format!("{l}: {n}"))
            .collect();
        if !flagged.is_empty() {
            let _ = writeln!(out, "solver budget reached (profiles per cell): {}", flagged.join(", "));
        }
        out
    }
}

/// Tolerance draws for one profile, keyed by rate, fixed before any engine
/// runs so every cell in the row sees the same values.
struct Draws {
    beta: Vec<(f64, f64)>,
    xi: Vec<(f64, f64)>,
}

impl Draws {
    fn lookup(table: &[(f64, f64)], rate: f64) -> f64 {
        table
            .iter()
            .find(|(r, _)| *r == rate)
            .map(|&(_, v)| v)
            .expect("every grid rate is pre-sampled")
    }
}

fn resolve(source: KnobSource, own: Option<f64>, draws: &[(f64, f64)]) -> f64 {
    match source {
        KnobSource::Fixed(v) => v,
        KnobSource::Rate(rate) => own.unwrap_or_else(|| Draws::lookup(draws, rate)),
    }
}

/// Runs every grid cell for every profile. Deterministic for a fixed seed
/// regardless of thread count.
pub fn run_offline_eval(
    recommender: &Recommender,
    profiles: &[EvalProfile],
    config: &EvalConfig,
) -> Result<EvalRun, HarnessError> {
    if profiles.is_empty() {
        return Err(HarnessError::NoProfiles);
    }
    for &rate in &config.tolerance_rates {
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(HarnessError::InvalidRate(rate));
        }
    }
    let cells = config.resolved_grid(recommender);
    let labels: Vec<String> = cells.iter().map(GridCell::label).collect();
    for (i, label) in labels.iter().enumerate() {
        if labels[..i].contains(label) {
            return Err(HarnessError::DuplicateCell(label.clone()));
        }
        let backbone = cells[i].engine.backbone;
        if !recommender.has_backbone(backbone) {
            return Err(HarnessError::MissingBackbone {
                cell: label.clone(),
                backbone,
            });
        }
    }
    let mut rates: Vec<f64> = config.tolerance_rates.clone();
    for rate in cells.iter().flat_map(GridCell::rates) {
        if !rates.contains(&rate) {
            rates.push(rate);
        }
    }

    let per_profile: Vec<(Vec<Vec<usize>>, Vec<bool>)> = profiles
        .par_iter()
        .enumerate()
        .map(|(index, profile)| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(index as u64));
            let mut draws = Draws {
                beta: Vec::with_capacity(rates.len()),
                xi: Vec::with_capacity(rates.len()),
            };
            for &rate in &rates {
                draws.beta.push((rate, sample_tolerance(rate, config.tolerance_mode, &mut rng)?));
                draws.xi.push((rate, sample_tolerance(rate, config.tolerance_mode, &mut rng)?));
            }
            let mut row = Vec::with_capacity(cells.len());
            let mut optimal = Vec::with_capacity(cells.len());
            for cell in &cells {
                let user = UserProfile {
                    ratings: profile.ratings.clone(),
                    beta: resolve(cell.beta, profile.beta, &draws.beta),
                    xi: resolve(cell.xi, profile.xi, &draws.xi),
                };
                let out = recommender
                    .recommend(EngineSpec::new(cell.engine).with_r(config.r), &user)
                    .map_err(|source| HarnessError::Profile { index, source })?;
                optimal.push(out.optimal);
                row.push(out.indices);
            }
            Ok((row, optimal))
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut non_optimal = vec![0; cells.len()];
    let mut rankings = Vec::with_capacity(per_profile.len());
    for (row, optimal) in per_profile {
        for (count, ok) in non_optimal.iter_mut().zip(optimal) {
            *count += usize::from(!ok);
        }
        rankings.push(row);
    }
    Ok(EvalRun {
        cells,
        labels,
        rankings,
        non_optimal,
        rbo_p: config.rbo_p,
    })
}
