//! The one-period leverage-targeting economy: demand curves, market
//! clearing, the systemicness matrix and the capitalisation measures built
//! on top of it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, solve_vector, spectral_radius_certificate, Matrix};

/// Tolerance on `sum_k alpha[k, i] = 1`.
pub const ALPHA_SUM_TOLERANCE: f64 = 1e-9;

/// Squarings used when the plain row-sum bound is inconclusive.
const CERTIFICATE_SQUARINGS: u32 = 10;

/// Per-asset statistics and liquidity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetUniverse {
    /// Expected shock per asset.
    pub mu: Vec<f64>,
    /// Shock variance per asset.
    pub sigma2: Vec<f64>,
    /// Nonbank demand elasticity.
    pub gamma: Vec<f64>,
    /// Total supply.
    pub q_tot: Vec<f64>,
    /// Nonbank holdings at time zero.
    pub q_nonbank: Vec<f64>,
    /// Prices at time zero.
    pub p0: Vec<f64>,
}

impl AssetUniverse {
    pub fn new(
        mu: Vec<f64>,
        sigma2: Vec<f64>,
        gamma: Vec<f64>,
        q_tot: Vec<f64>,
        q_nonbank: Vec<f64>,
        p0: Vec<f64>,
    ) -> Result<Self> {
        let assets = AssetUniverse {
            mu,
            sigma2,
            gamma,
            q_tot,
            q_nonbank,
            p0,
        };
        assets.validate()?;
        Ok(assets)
    }

    /// Same as [`AssetUniverse::new`] with every initial price set to one.
    pub fn with_unit_prices(
        mu: Vec<f64>,
        sigma2: Vec<f64>,
        gamma: Vec<f64>,
        q_tot: Vec<f64>,
        q_nonbank: Vec<f64>,
    ) -> Result<Self> {
        let k = mu.len();
        AssetUniverse::new(mu, sigma2, gamma, q_tot, q_nonbank, vec![1.0; k])
    }

    pub fn count(&self) -> usize {
        self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.mu.len();
        if k == 0 {
            return Err(Error::validation("VALIDATION_DIMENSION", "no assets given"));
        }
        for (name, v) in [
            ("assets.sigma2", &self.sigma2),
            ("assets.gamma", &self.gamma),
            ("assets.q_tot", &self.q_tot),
            ("assets.q_nonbank", &self.q_nonbank),
            ("assets.p0", &self.p0),
        ] {
            if v.len() != k {
                return Err(Error::validation(
                    "VALIDATION_DIMENSION",
                    format!("{name} has length {}, expected {k}", v.len()),
                ));
            }
        }
        for (name, v) in [
            ("assets.mu", &self.mu),
            ("assets.sigma2", &self.sigma2),
            ("assets.gamma", &self.gamma),
            ("assets.q_tot", &self.q_tot),
            ("assets.q_nonbank", &self.q_nonbank),
            ("assets.p0", &self.p0),
        ] {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(
                    "VALIDATION_NONFINITE",
                    format!("{name}[{i}] is not finite"),
                ));
            }
        }
        positive("assets.sigma2", &self.sigma2, "VALIDATION_SIGMA")?;
        positive("assets.gamma", &self.gamma, "VALIDATION_GAMMA")?;
        positive("assets.q_tot", &self.q_tot, "VALIDATION_SUPPLY")?;
        positive("assets.p0", &self.p0, "VALIDATION_PRICE")?;
        for (k, (&nb, &tot)) in self.q_nonbank.iter().zip(&self.q_tot).enumerate() {
            if nb <= 0.0 || nb > tot {
                return Err(Error::validation(
                    "VALIDATION_NONBANK",
                    format!("assets.q_nonbank[{k}] = {nb} must lie in (0, q_tot = {tot}]"),
                ));
            }
        }
        Ok(())
    }

    /// `Q_tot / (gamma o Q_nb)`, the per-asset price-impact weight.
    pub fn impact_weights(&self) -> Vec<f64> {
        self.q_tot
            .iter()
            .zip(&self.gamma)
            .zip(&self.q_nonbank)
            .map(|((t, g), nb)| t / (g * nb))
            .collect()
    }

    /// `gamma o Q_nb / Q_tot`; larger means more liquid.
    pub fn liquidity_ratios(&self) -> Vec<f64> {
        self.impact_weights().iter().map(|w| 1.0 / w).collect()
    }
}

fn positive(name: &str, v: &[f64], code: &'static str) -> Result<()> {
    match v.iter().position(|&x| x <= 0.0) {
        Some(i) => Err(Error::validation(
            code,
            format!("{name}[{i}] = {} must be positive", v[i]),
        )),
        None => Ok(()),
    }
}

/// `Q_tot - Q 1`: nonbank holdings implied by clearing at time zero.
pub fn derive_nonbank_holdings(q_tot: &[f64], holdings: &Matrix) -> Result<Vec<f64>> {
    if holdings.rows() != q_tot.len() {
        return Err(Error::DimensionMismatch(format!(
            "holdings have {} rows, q_tot has {} entries",
            holdings.rows(),
            q_tot.len()
        )));
    }
    Ok(q_tot
        .iter()
        .zip(holdings.row_sums())
        .map(|(t, q)| t - q)
        .collect())
}

/// Leverage targets, trading strategies, budgets and holdings of the banks.
#[derive(Debug, Clone, PartialEq)]
pub struct BankingSector {
    pub kappa: Vec<f64>,
    /// K x N; column `i` is bank `i`'s trading strategy.
    pub alpha: Matrix,
    pub budgets: Vec<f64>,
    /// K x N unit holdings at time zero.
    pub holdings: Matrix,
}

impl BankingSector {
    pub fn new(kappa: Vec<f64>, alpha: Matrix, budgets: Vec<f64>, holdings: Matrix) -> Result<Self> {
        let banks = BankingSector {
            kappa,
            alpha,
            budgets,
            holdings,
        };
        banks.validate()?;
        Ok(banks)
    }

    /// Budgets taken from the column sums of `holdings`.
    pub fn from_holdings(kappa: Vec<f64>, alpha: Matrix, holdings: Matrix) -> Result<Self> {
        let budgets = holdings.col_sums();
        BankingSector::new(kappa, alpha, budgets, holdings)
    }

    pub fn count(&self) -> usize {
        self.kappa.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kappa.len();
        if n == 0 {
            return Err(Error::validation("VALIDATION_DIMENSION", "no banks given"));
        }
        let k = self.alpha.rows();
        if self.alpha.cols() != n {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!("banks.alpha has {} columns, expected {n}", self.alpha.cols()),
            ));
        }
        if self.holdings.shape() != (k, n) {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!(
                    "banks.holdings is {}x{}, expected {k}x{n}",
                    self.holdings.rows(),
                    self.holdings.cols()
                ),
            ));
        }
        if self.budgets.len() != n {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!("banks.budgets has length {}, expected {n}", self.budgets.len()),
            ));
        }
        if let Some(i) = self
            .kappa
            .iter()
            .chain(&self.budgets)
            .position(|x| !x.is_finite())
        {
            return Err(Error::validation(
                "VALIDATION_NONFINITE",
                format!("bank parameter {i} is not finite"),
            ));
        }
        if let Some(i) = self.kappa.iter().position(|&x| x < 0.0) {
            return Err(Error::validation(
                "VALIDATION_KAPPA",
                format!("banks.kappa[{i}] = {} must be nonnegative", self.kappa[i]),
            ));
        }
        for (i, s) in self.alpha.col_sums().iter().enumerate() {
            if (s - 1.0).abs() > ALPHA_SUM_TOLERANCE {
                return Err(Error::validation(
                    "VALIDATION_ALPHA",
                    format!("alpha column {} sums to {s}", i + 1),
                ));
            }
        }
        for (i, (s, b)) in self.holdings.col_sums().iter().zip(&self.budgets).enumerate() {
            if (s - b).abs() > 1e-9 * b.abs().max(1.0) {
                return Err(Error::validation(
                    "VALIDATION_BUDGET",
                    format!("holdings column {} sums to {s}, budget is {b}", i + 1),
                ));
            }
        }
        Ok(())
    }

    /// Aggregate banking holdings `q = Q 1`.
    pub fn aggregate_holdings(&self) -> Vec<f64> {
        self.holdings.row_sums()
    }

    /// `L^i = kappa^i / (1 + kappa^i)`.
    pub fn leverage_fractions(&self) -> Vec<f64> {
        self.kappa.iter().map(|k| k / (1.0 + k)).collect()
    }

    pub fn with_holdings(&self, holdings: Matrix) -> Result<Self> {
        BankingSector::from_holdings(self.kappa.clone(), self.alpha.clone(), holdings)
    }
}

/// `S[k, l] = sum_i alpha[k, i] kappa[i] Q[l, i] / (gamma[k] Q_nb[k])`.
pub fn systemicness_matrix(assets: &AssetUniverse, banks: &BankingSector) -> Matrix {
    let k = assets.count();
    let mut s = Matrix::zeros(k, k);
    for row in 0..k {
        let denom = assets.gamma[row] * assets.q_nonbank[row];
        for col in 0..k {
            let mut acc = 0.0;
            for (i, kap) in banks.kappa.iter().enumerate() {
                acc += banks.alpha[(row, i)] * kap * banks.holdings[(col, i)];
            }
            s[(row, col)] = acc / denom;
        }
    }
    s
}

/// `v = Diag(kappa) alpha' (Q_tot / (gamma o Q_nb))`.
pub fn systemic_significance(assets: &AssetUniverse, banks: &BankingSector) -> Vec<f64> {
    let w = assets.impact_weights();
    banks
        .kappa
        .iter()
        .enumerate()
        .map(|(i, kap)| kap * dot(&banks.alpha.col(i), &w))
        .collect()
}

/// `G = mu mu' + Diag(sigma2)`.
pub fn shock_statistics_matrix(assets: &AssetUniverse) -> Matrix {
    let k = assets.count();
    let mut g = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            g[(i, j)] = assets.mu[i] * assets.mu[j];
        }
        g[(i, i)] += assets.sigma2[i];
    }
    g
}

/// `MSD = (Q v)' G (Q v)`.
pub fn mean_squared_deviation(q: &Matrix, v: &[f64], g: &Matrix) -> Result<f64> {
    let y = q.matvec(v)?;
    let gy = g.matvec(&y)?;
    Ok(dot(&y, &gy))
}

fn check_prices(p1: &[f64]) -> Result<()> {
    match p1.iter().position(|&p| p.is_nan() || p <= 0.0) {
        Some(k) => Err(Error::NonpositivePrice {
            asset: k,
            price: p1[k],
        }),
        None => Ok(()),
    }
}

fn check_len(name: &str, v: &[f64], k: usize) -> Result<()> {
    if v.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "{name} has length {}, expected {k}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(name.to_string()));
    }
    Ok(())
}

/// Nonbank quantity change `-gamma Q_nb (dP - Z) / P1` per asset.
pub fn nonbank_demand(
    assets: &AssetUniverse,
    p1: &[f64],
    delta_p: &[f64],
    shock: &[f64],
) -> Result<Vec<f64>> {
    let k = assets.count();
    check_len("p1", p1, k)?;
    check_len("delta_p", delta_p, k)?;
    check_len("shock", shock, k)?;
    check_prices(p1)?;
    Ok((0..k)
        .map(|j| -assets.gamma[j] * assets.q_nonbank[j] * (delta_p[j] - shock[j]) / p1[j])
        .collect())
}

/// Market capitalisations after a shock.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketCaps {
    /// `Q_tot' (P0 + (I - S)^-1 Z)`.
    pub exact: f64,
    /// `Q_tot' (P0 + Z)`.
    pub fundamental: f64,
    /// `Q_tot' (P0 + (I + S) Z)`.
    pub approx: f64,
}

/// An assembled economy with its derived matrices cached.
#[derive(Debug, Clone)]
pub struct MarketModel {
    assets: AssetUniverse,
    banks: BankingSector,
    s: Matrix,
    v: Vec<f64>,
    g: Matrix,
    spectral_bound: f64,
    spectral_certificate: f64,
    allow_unstable: bool,
}

impl MarketModel {
    pub fn new(assets: AssetUniverse, banks: BankingSector) -> Result<Self> {
        assets.validate()?;
        banks.validate()?;
        if banks.alpha.rows() != assets.count() {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!(
                    "banks are defined over {} assets, universe has {}",
                    banks.alpha.rows(),
                    assets.count()
                ),
            ));
        }
        let s = systemicness_matrix(&assets, &banks);
        let v = systemic_significance(&assets, &banks);
        let g = shock_statistics_matrix(&assets);
        // abs row sums coincide with the classic bound when S >= 0 and stay
        // valid once short positions make some entries negative
        let spectral_bound = s.norm_inf();
        let spectral_certificate = if spectral_bound < 1.0 {
            spectral_bound
        } else {
            spectral_radius_certificate(&s, CERTIFICATE_SQUARINGS)?
        };
        Ok(MarketModel {
            assets,
            banks,
            s,
            v,
            g,
            spectral_bound,
            spectral_certificate,
            allow_unstable: false,
        })
    }

    /// Lets `price_change` proceed even when stability is not certified.
    pub fn allow_unstable(mut self, allow: bool) -> Self {
        self.allow_unstable = allow;
        self
    }

    /// Same economy with a different holdings matrix.
    pub fn with_holdings(&self, holdings: Matrix) -> Result<Self> {
        let banks = self.banks.with_holdings(holdings)?;
        Ok(MarketModel::new(self.assets.clone(), banks)?.allow_unstable(self.allow_unstable))
    }

    pub fn assets(&self) -> &AssetUniverse {
        &self.assets
    }

    pub fn banks(&self) -> &BankingSector {
        &self.banks
    }

    pub fn systemicness(&self) -> &Matrix {
        &self.s
    }

    pub fn significance(&self) -> &[f64] {
        &self.v
    }

    pub fn shock_statistics(&self) -> &Matrix {
        &self.g
    }

    /// Maximum absolute row sum of `S`.
    pub fn spectral_bound(&self) -> f64 {
        self.spectral_bound
    }

    /// Tightest certified upper bound on the spectral radius of `S`.
    pub fn spectral_certificate(&self) -> f64 {
        self.spectral_certificate
    }

    pub fn is_stable(&self) -> bool {
        self.spectral_certificate < 1.0
    }

    /// `Q v`, the significance-weighted aggregate holdings.
    pub fn network_multiplier(&self) -> Vec<f64> {
        self.banks
            .holdings
            .matvec(&self.v)
            .expect("holdings and significance dimensions agree")
    }

    fn ensure_stable(&self) -> Result<()> {
        if !self.is_stable() && !self.allow_unstable {
            return Err(Error::UnstableSystem {
                bound: self.spectral_certificate,
            });
        }
        Ok(())
    }

    fn i_minus_s(&self) -> Matrix {
        &Matrix::identity(self.assets.count()) - &self.s
    }

    /// `dP = (I - S)^-1 Z`.
    pub fn price_change(&self, shock: &[f64]) -> Result<Vec<f64>> {
        check_len("shock", shock, self.assets.count())?;
        self.ensure_stable()?;
        solve_vector(&self.i_minus_s(), shock)
    }

    /// `(I - S)^-T Q_tot`, so that `MC^e = Q_tot' P0 + w' Z` for every shock.
    pub fn exact_capitalization_weights(&self) -> Result<Vec<f64>> {
        self.ensure_stable()?;
        solve_vector(&self.i_minus_s().transpose(), &self.assets.q_tot)
    }

    /// `Q_tot' (I + S)`, the first-order counterpart of the exact weights.
    pub fn approx_capitalization_weights(&self) -> Vec<f64> {
        let st = self.s.tmatvec(&self.assets.q_tot).expect("square S");
        self.assets.q_tot.iter().zip(st).map(|(a, b)| a + b).collect()
    }

    /// Bank `bank`'s quantity change `alpha^i kappa^i (Q^i' dP) / P1`.
    pub fn bank_incremental_demand(
        &self,
        bank: usize,
        p1: &[f64],
        delta_p: &[f64],
    ) -> Result<Vec<f64>> {
        let k = self.assets.count();
        if bank >= self.banks.count() {
            return Err(Error::DimensionMismatch(format!(
                "bank index {bank} out of range (N = {})",
                self.banks.count()
            )));
        }
        check_len("p1", p1, k)?;
        check_len("delta_p", delta_p, k)?;
        check_prices(p1)?;
        let exposure = dot(&self.banks.holdings.col(bank), delta_p);
        let kap = self.banks.kappa[bank];
        Ok((0..k)
            .map(|j| self.banks.alpha[(j, bank)] * kap * exposure / p1[j])
            .collect())
    }

    /// Net quantity change per asset (banks plus nonbanks) at the clearing
    /// price; zero up to rounding.
    pub fn check_market_clearing(&self, shock: &[f64]) -> Result<Vec<f64>> {
        let dp = self.price_change(shock)?;
        let p1: Vec<f64> = self.assets.p0.iter().zip(&dp).map(|(a, b)| a + b).collect();
        let mut net = nonbank_demand(&self.assets, &p1, &dp, shock)?;
        for i in 0..self.banks.count() {
            for (n, d) in net.iter_mut().zip(self.bank_incremental_demand(i, &p1, &dp)?) {
                *n += d;
            }
        }
        Ok(net)
    }

    pub fn market_capitalizations(&self, shock: &[f64]) -> Result<MarketCaps> {
        let dp = self.price_change(shock)?;
        let base = dot(&self.assets.q_tot, &self.assets.p0);
        let sz = self.s.matvec(shock)?;
        Ok(MarketCaps {
            exact: base + dot(&self.assets.q_tot, &dp),
            fundamental: base + dot(&self.assets.q_tot, shock),
            approx: base + dot(&self.assets.q_tot, shock) + dot(&self.assets.q_tot, &sz),
        })
    }

    /// First-order fire-sale externality `(Q v)' Z`.
    pub fn deviation_first_order(&self, shock: &[f64]) -> Result<f64> {
        check_len("shock", shock, self.assets.count())?;
        Ok(dot(&self.network_multiplier(), shock))
    }

    pub fn mean_squared_deviation(&self) -> f64 {
        mean_squared_deviation(&self.banks.holdings, &self.v, &self.g)
            .expect("model dimensions agree")
    }

    /// `(E[D], Var[D])` of the first-order deviation.
    pub fn deviation_moments(&self) -> (f64, f64) {
        let y = self.network_multiplier();
        let mean = dot(&y, &self.assets.mu);
        let var = y
            .iter()
            .zip(&self.assets.sigma2)
            .map(|(yk, s)| yk * yk * s)
            .sum();
        (mean, var)
    }
}
