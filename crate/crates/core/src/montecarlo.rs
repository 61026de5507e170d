//! Seeded Monte Carlo estimates of the exact market capitalisation under a
//! given holdings matrix.
//!
//! Samples are generated in shards of [`SHARD_SIZE`]. Shard `j` draws from a
//! ChaCha8 stream seeded with `seed` and stream id `j`, so the output does
//! not depend on how many worker threads run the shards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::efficient::{diversified, min_distance_solution, solve_f_efficient, FeasibilitySpec};
use crate::error::{Error, Result};
use crate::model::MarketModel;
use crate::numerics::{dot, frobenius_norm, Matrix};
use crate::scenarios::ScenarioConfig;

pub const SHARD_SIZE: usize = 8192;

/// Allowed deviation of holdings row and column sums from the scenario's.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HoldingsLabel {
    FEfficient,
    Diversified,
    Custom,
}

impl HoldingsLabel {
    pub fn name(self) -> &'static str {
        match self {
            HoldingsLabel::FEfficient => "f_efficient",
            HoldingsLabel::Diversified => "diversified",
            HoldingsLabel::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunSummary {
    pub samples: usize,
    pub mean_mc_e: f64,
    pub var_mc_e: f64,
    /// Sample mean of `(MC^e - MC^f)^2`.
    pub mean_sq_dev: f64,
    pub mean_d: f64,
    /// Sample mean of the first-order deviation `(Q v)' Z`.
    pub mean_d_first_order: f64,
    /// Sample mean of its square.
    pub mean_sq_dev_first_order: f64,
    pub distance_from_diversification: f64,
    pub se_mean_mc_e: f64,
    pub se_var_mc_e: f64,
    pub se_mean_sq_dev: f64,
    pub se_mean_d_first_order: f64,
    pub se_mean_sq_dev_first_order: f64,
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario: String,
    pub label: HoldingsLabel,
    pub holdings: Matrix,
    pub seed: u64,
    pub mc_e: Vec<f64>,
    pub mc_f: Vec<f64>,
    /// `MC^e - MC^f` per sample.
    pub d_exact: Vec<f64>,
    pub d_first_order: Vec<f64>,
    pub summary: RunSummary,
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased variance and fourth central moment.
fn central_moments(x: &[f64], m: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let (mut s2, mut s4) = (0.0, 0.0);
    for v in x {
        let d = v - m;
        let d2 = d * d;
        s2 += d2;
        s4 += d2 * d2;
    }
    let var = if x.len() > 1 { s2 / (n - 1.0) } else { 0.0 };
    (var, s4 / n)
}

fn se_of_mean(x: &[f64]) -> f64 {
    let m = mean(x);
    let (var, _) = central_moments(x, m);
    (var / x.len() as f64).sqrt()
}

/// Recomputes the summary statistics of a run from its samples.
pub fn summarize(mc_e: &[f64], d_exact: &[f64], d_first: &[f64], distance: f64) -> RunSummary {
    let n = mc_e.len();
    let nf = n as f64;
    let mean_mc_e = mean(mc_e);
    let (var_mc_e, m4) = central_moments(mc_e, mean_mc_e);
    let sq: Vec<f64> = d_exact.iter().map(|d| d * d).collect();
    let sq_first: Vec<f64> = d_first.iter().map(|d| d * d).collect();
    let biased = var_mc_e * (nf - 1.0) / nf;
    RunSummary {
        samples: n,
        mean_mc_e,
        var_mc_e,
        mean_sq_dev: mean(&sq),
        mean_d: mean(d_exact),
        mean_d_first_order: mean(d_first),
        mean_sq_dev_first_order: mean(&sq_first),
        distance_from_diversification: distance,
        se_mean_mc_e: (var_mc_e / nf).sqrt(),
        se_var_mc_e: ((m4 - biased * biased).max(0.0) / nf).sqrt(),
        se_mean_sq_dev: se_of_mean(&sq),
        se_mean_d_first_order: se_of_mean(d_first),
        se_mean_sq_dev_first_order: se_of_mean(&sq_first),
    }
}

fn check_feasible(config: &ScenarioConfig, holdings: &Matrix) -> Result<()> {
    let reference = &config.banks.holdings;
    if holdings.shape() != reference.shape() {
        return Err(Error::InfeasibleHoldings(format!(
            "holdings are {}x{}, expected {}x{}",
            holdings.rows(),
            holdings.cols(),
            reference.rows(),
            reference.cols()
        )));
    }
    for (k, (a, b)) in holdings.row_sums().iter().zip(reference.row_sums()).enumerate() {
        if (a - b).abs() > FEASIBILITY_TOLERANCE {
            return Err(Error::InfeasibleHoldings(format!(
                "asset {} row sum {a} differs from {b}",
                k + 1
            )));
        }
    }
    for (i, (a, b)) in holdings.col_sums().iter().zip(&config.banks.budgets).enumerate() {
        if (a - b).abs() > FEASIBILITY_TOLERANCE {
            return Err(Error::InfeasibleHoldings(format!(
                "bank {} column sum {a} differs from budget {b}",
                i + 1
            )));
        }
    }
    Ok(())
}

struct Shard {
    mc_e: Vec<f64>,
    mc_f: Vec<f64>,
    d_exact: Vec<f64>,
    d_first: Vec<f64>,
}

struct Kernel {
    base: f64,
    q_tot: Vec<f64>,
    exact: Vec<f64>,
    gap: Vec<f64>,
    first: Vec<f64>,
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl Kernel {
    fn shard(&self, seed: u64, index: usize, len: usize) -> Shard {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let k = self.mean.len();
        let mut z = vec![0.0; k];
        let mut out = Shard {
            mc_e: Vec::with_capacity(len),
            mc_f: Vec::with_capacity(len),
            d_exact: Vec::with_capacity(len),
            d_first: Vec::with_capacity(len),
        };
        for _ in 0..len {
            for (j, zj) in z.iter_mut().enumerate() {
                let e: f64 = rng.sample(StandardNormal);
                *zj = self.mean[j] + self.sd[j] * e;
            }
            out.mc_e.push(self.base + dot(&self.exact, &z));
            out.mc_f.push(self.base + dot(&self.q_tot, &z));
            out.d_exact.push(dot(&self.gap, &z));
            out.d_first.push(dot(&self.first, &z));
        }
        out
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::validation("VALIDATION_WORKERS", e.to_string()))
}

/// Simulates `config.samples` shocks under `holdings`. `workers = 0` uses
/// one thread per core.
pub fn run_simulation(
    config: &ScenarioConfig,
    holdings: &Matrix,
    label: HoldingsLabel,
    seed: u64,
    workers: usize,
) -> Result<ScenarioRun> {
    config.validate()?;
    check_feasible(config, holdings)?;
    let model = config.model()?.with_holdings(holdings.clone())?;
    simulate_model(&config.name, config, &model, label, seed, workers)
}

fn simulate_model(
    name: &str,
    config: &ScenarioConfig,
    model: &MarketModel,
    label: HoldingsLabel,
    seed: u64,
    workers: usize,
) -> Result<ScenarioRun> {
    if !model.is_stable() {
        return Err(Error::UnstableSystem {
            bound: model.spectral_certificate(),
        });
    }
    let assets = model.assets();
    let exact = model.exact_capitalization_weights()?;
    let kernel = Kernel {
        base: dot(&assets.q_tot, &assets.p0),
        gap: exact.iter().zip(&assets.q_tot).map(|(a, b)| a - b).collect(),
        exact,
        q_tot: assets.q_tot.clone(),
        first: model.network_multiplier(),
        mean: config.shock.mean.clone(),
        sd: config.shock.variance.iter().map(|v| v.sqrt()).collect(),
    };
    let n = config.samples;
    let shards = n.div_ceil(SHARD_SIZE);
    let pool = thread_pool(workers)?;
    let parts: Vec<Shard> = pool.install(|| {
        (0..shards)
            .into_par_iter()
            .map(|j| {
                let len = SHARD_SIZE.min(n - j * SHARD_SIZE);
                kernel.shard(seed, j, len)
            })
            .collect()
    });
    let mut run = ScenarioRun {
        scenario: name.to_string(),
        label,
        holdings: model.banks().holdings.clone(),
        seed,
        mc_e: Vec::with_capacity(n),
        mc_f: Vec::with_capacity(n),
        d_exact: Vec::with_capacity(n),
        d_first_order: Vec::with_capacity(n),
        summary: summarize(&[0.0], &[0.0], &[0.0], 0.0),
    };
    for p in parts {
        run.mc_e.extend(p.mc_e);
        run.mc_f.extend(p.mc_f);
        run.d_exact.extend(p.d_exact);
        run.d_first_order.extend(p.d_first);
    }
    let div = diversified(&model.banks().aggregate_holdings(), &model.banks().budgets)?;
    let distance = frobenius_norm(&run.holdings.try_sub(&div)?);
    run.summary = summarize(&run.mc_e, &run.d_exact, &run.d_first_order, distance);
    Ok(run)
}

/// F-efficient holdings used for comparisons: the unique solution for two
/// banks, otherwise the element closest to full diversification.
pub fn comparison_holdings(config: &ScenarioConfig) -> Result<(Matrix, Matrix, f64)> {
    let model = config.model()?;
    let spec = FeasibilitySpec::from_model(&model)?;
    let set = solve_f_efficient(&spec)?;
    let div = diversified(spec.q(), spec.b())?;
    let efficient = min_distance_solution(&set, &div)?;
    Ok((efficient, div, set.msd_optimal))
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub scenario: String,
    pub efficient: ScenarioRun,
    pub diversified: ScenarioRun,
    pub msd_optimal: f64,
    /// `(Q^div v)' G (Q^div v)`.
    pub msd_diversified: f64,
}

impl Comparison {
    /// Frobenius distance of the efficient holdings from diversification.
    pub fn distance(&self) -> f64 {
        self.efficient.summary.distance_from_diversification
    }
}

/// Runs f-efficient and diversified holdings on the same shocks.
pub fn compare_holdings(config: &ScenarioConfig, seed: u64, workers: usize) -> Result<Comparison> {
    let (efficient, div, msd_optimal) = comparison_holdings(config)?;
    let base = config.model()?;
    let div_model = base.with_holdings(div.clone())?;
    let msd_diversified = div_model.mean_squared_deviation();
    let eff_model = base.with_holdings(efficient)?;
    Ok(Comparison {
        scenario: config.name.clone(),
        efficient: simulate_model(
            &config.name,
            config,
            &eff_model,
            HoldingsLabel::FEfficient,
            seed,
            workers,
        )?,
        diversified: simulate_model(
            &config.name,
            config,
            &div_model,
            HoldingsLabel::Diversified,
            seed,
            workers,
        )?,
        msd_optimal,
        msd_diversified,
    })
}

/// Rows of the scenario statistics table, in display order.
pub const TABLE_ROWS: [&str; 7] = [
    "distance_from_diversification",
    "mean_mc_e_f_efficient",
    "mean_mc_e_diversified",
    "var_mc_e_f_efficient",
    "var_mc_e_diversified",
    "mean_sq_dev_f_efficient",
    "mean_sq_dev_diversified",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub value: f64,
    /// Monte Carlo standard error; zero for deterministic entries.
    pub std_error: f64,
}

/// Cell `row` of the statistics table for one comparison.
pub fn table_cell(c: &Comparison, row: &str) -> Option<TableCell> {
    let (e, d) = (&c.efficient.summary, &c.diversified.summary);
    let (value, std_error) = match row {
        "distance_from_diversification" => (c.distance(), 0.0),
        "mean_mc_e_f_efficient" => (e.mean_mc_e, e.se_mean_mc_e),
        "mean_mc_e_diversified" => (d.mean_mc_e, d.se_mean_mc_e),
        "var_mc_e_f_efficient" => (e.var_mc_e, e.se_var_mc_e),
        "var_mc_e_diversified" => (d.var_mc_e, d.se_var_mc_e),
        "mean_sq_dev_f_efficient" => (e.mean_sq_dev, e.se_mean_sq_dev),
        "mean_sq_dev_diversified" => (d.mean_sq_dev, d.se_mean_sq_dev),
        _ => return None,
    };
    Some(TableCell { value, std_error })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxPlot {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme samples within 1.5 IQR of the quartiles.
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    pub outliers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Density {
    pub centers: Vec<f64>,
    pub densities: Vec<f64>,
    pub bin_width: f64,
    pub boxplot: BoxPlot,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Histogram density estimate and five-number summary.
pub fn empirical_density(samples: &[f64], bins: usize) -> Result<Density> {
    if samples.is_empty() {
        return Err(Error::validation("VALIDATION_SAMPLES", "no samples"));
    }
    if bins < 2 {
        return Err(Error::validation("VALIDATION_BINS", "need at least two bins"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[sorted.len() - 1]);
    let (lo, width) = if max > min {
        (min, (max - min) / bins as f64)
    } else {
        (min - 0.5, 1.0)
    };
    let mut counts = vec![0usize; bins];
    for x in &sorted {
        let idx = (((x - lo) / width) as usize).min(bins - 1);
        counts[idx] += 1;
    }
    let n = sorted.len() as f64;
    let q1 = quantile(&sorted, 0.25);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = sorted
        .iter()
        .copied()
        .filter(|&x| x >= fence_lo && x <= fence_hi)
        .collect();
    Ok(Density {
        centers: (0..bins).map(|i| lo + (i as f64 + 0.5) * width).collect(),
        densities: counts.iter().map(|&c| c as f64 / (n * width)).collect(),
        bin_width: width,
        boxplot: BoxPlot {
            min,
            q1,
            median: quantile(&sorted, 0.5),
            q3,
            max,
            lower_whisker: inside.first().copied().unwrap_or(q1),
            upper_whisker: inside.last().copied().unwrap_or(q3),
            outliers: sorted.len() - inside.len(),
        },
    })
}
