//! Liquidation strategies `alpha` that minimise the mean squared deviation
//! for fixed holdings.

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::model::{shock_statistics_matrix, AssetUniverse, MarketModel};
use crate::numerics::{dot, Matrix};

/// Relative tolerance for ties in the liquidity ratio.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Radius of the perturbations drawn by [`LiquidationProblem::verify_local_minimum`].
pub const PERTURBATION_RADIUS: f64 = 1e-3;

const STRATEGY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct LiquidationProblem {
    holdings: Matrix,
    kappa: Vec<f64>,
    w: Vec<f64>,
    liquidity: Vec<f64>,
    g: Matrix,
    c: Matrix,
}

impl LiquidationProblem {
    pub fn new(assets: &AssetUniverse, holdings: Matrix, kappa: Vec<f64>) -> Result<Self> {
        assets.validate()?;
        let k = assets.count();
        if holdings.rows() != k || holdings.cols() != kappa.len() {
            return Err(Error::DimensionMismatch(format!(
                "holdings are {}x{}, expected {k}x{}",
                holdings.rows(),
                holdings.cols(),
                kappa.len()
            )));
        }
        let g = shock_statistics_matrix(assets);
        let n = kappa.len();
        // columns Q Diag(kappa) e_i
        let exposures: Vec<Vec<f64>> = (0..n)
            .map(|i| holdings.col(i).iter().map(|x| x * kappa[i]).collect())
            .collect();
        let g_exp: Vec<Vec<f64>> = exposures
            .iter()
            .map(|e| g.matvec(e).expect("square G"))
            .collect();
        let mut c = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                c[(i, j)] = 2.0 * dot(&exposures[i], &g_exp[j]);
            }
        }
        Ok(LiquidationProblem {
            holdings,
            kappa,
            w: assets.impact_weights(),
            liquidity: assets.liquidity_ratios(),
            g,
            c,
        })
    }

    pub fn from_model(model: &MarketModel) -> Result<Self> {
        LiquidationProblem::new(
            model.assets(),
            model.banks().holdings.clone(),
            model.banks().kappa.clone(),
        )
    }

    /// `C[i, j] = 2 (Q Diag(kappa) e_i)' G (Q Diag(kappa) e_j)`.
    pub fn c(&self) -> &Matrix {
        &self.c
    }

    /// `Q_tot / (gamma o Q_nb)`.
    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// `gamma o Q_nb / Q_tot`.
    pub fn liquidity(&self) -> &[f64] {
        &self.liquidity
    }

    pub fn assets(&self) -> usize {
        self.w.len()
    }

    pub fn banks(&self) -> usize {
        self.kappa.len()
    }

    pub fn check_strategy(&self, alpha: &Matrix) -> Result<()> {
        if alpha.shape() != (self.assets(), self.banks()) {
            return Err(Error::InvalidStrategy(format!(
                "alpha is {}x{}, expected {}x{}",
                alpha.rows(),
                alpha.cols(),
                self.assets(),
                self.banks()
            )));
        }
        if let Some(&x) = alpha.as_slice().iter().find(|&&x| x < 0.0) {
            return Err(Error::InvalidStrategy(format!("negative weight {x}")));
        }
        for (i, s) in alpha.col_sums().iter().enumerate() {
            if (s - 1.0).abs() > STRATEGY_TOLERANCE {
                return Err(Error::InvalidStrategy(format!(
                    "column {} sums to {s}",
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// `1/2 vec(alpha)' (C (x) w w') vec(alpha)`, evaluated blockwise as
    /// `1/2 a' C a` with `a_i = alpha_i' w`.
    pub fn msd_of_strategy(&self, alpha: &Matrix) -> Result<f64> {
        self.check_strategy(alpha)?;
        Ok(self.objective(alpha))
    }

    fn objective(&self, alpha: &Matrix) -> f64 {
        let a = alpha.tmatvec(&self.w).expect("checked shape");
        0.5 * dot(&a, &self.c.matvec(&a).expect("square C"))
    }

    /// `(Q v)' G (Q v)` with `v` recomputed under `alpha`.
    pub fn direct_msd(&self, alpha: &Matrix) -> Result<f64> {
        self.check_strategy(alpha)?;
        let v: Vec<f64> = (0..self.banks())
            .map(|i| self.kappa[i] * dot(&alpha.col(i), &self.w))
            .collect();
        crate::model::mean_squared_deviation(&self.holdings, &v, &self.g)
    }

    /// Indices of the most liquid assets, ties within [`TIE_TOLERANCE`].
    pub fn most_liquid_assets(&self) -> Vec<usize> {
        let best = self.liquidity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.liquidity
            .iter()
            .enumerate()
            .filter(|(_, &r)| r >= best - TIE_TOLERANCE * best.abs())
            .map(|(k, _)| k)
            .collect()
    }

    /// Every bank sells only the most liquid asset(s), in equal parts.
    pub fn most_liquid_strategy(&self) -> Matrix {
        let support = self.most_liquid_assets();
        let share = 1.0 / support.len() as f64;
        let mut alpha = Matrix::zeros(self.assets(), self.banks());
        for &k in &support {
            for i in 0..self.banks() {
                alpha[(k, i)] = share;
            }
        }
        alpha
    }

    /// Multipliers `(lambda, s)` of the most-liquid strategy: one equality
    /// multiplier per bank and a K x N matrix for the sign constraints.
    pub fn kkt_multipliers(&self) -> (Vec<f64>, Matrix) {
        let m = self.liquidity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let n = self.banks();
        let row_sums = self.c.row_sums();
        let lambda = row_sums.iter().map(|r| r / (m * m)).collect();
        let mut s = Matrix::zeros(self.assets(), n);
        for i in 0..n {
            for (k, wk) in self.w.iter().enumerate() {
                s[(k, i)] = row_sums[i] / m * (wk - 1.0 / m);
            }
        }
        (lambda, s)
    }

    /// Largest violation of stationarity and complementarity at `alpha`
    /// for the given multipliers.
    pub fn kkt_residual(&self, alpha: &Matrix, lambda: &[f64], s: &Matrix) -> Result<f64> {
        self.check_strategy(alpha)?;
        let a = alpha.tmatvec(&self.w)?;
        let ca = self.c.matvec(&a)?;
        let mut worst: f64 = 0.0;
        for i in 0..self.banks() {
            for k in 0..self.assets() {
                let grad = ca[i] * self.w[k];
                worst = worst.max((grad - lambda[i] - s[(k, i)]).abs());
                worst = worst.max((s[(k, i)] * alpha[(k, i)]).abs());
                worst = worst.max((-s[(k, i)]).max(0.0));
            }
        }
        Ok(worst)
    }

    /// Draws `trials` feasible perturbations of norm at most
    /// [`PERTURBATION_RADIUS`] and reports whether none lowers the objective.
    /// With `bank_independent` set, perturbations keep all columns equal.
    pub fn verify_local_minimum<R: Rng + ?Sized>(
        &self,
        alpha: &Matrix,
        trials: usize,
        bank_independent: bool,
        rng: &mut R,
    ) -> Result<bool> {
        self.check_strategy(alpha)?;
        if bank_independent && !columns_equal(alpha) {
            return Err(Error::InvalidStrategy(
                "bank-independent check needs identical columns".into(),
            ));
        }
        let base = self.objective(alpha);
        for _ in 0..trials {
            let target = if bank_independent {
                let col = random_simplex_point(self.assets(), rng);
                replicate(&col, self.banks())
            } else {
                let mut t = Matrix::zeros(self.assets(), self.banks());
                for i in 0..self.banks() {
                    for (k, x) in random_simplex_point(self.assets(), rng).iter().enumerate() {
                        t[(k, i)] = *x;
                    }
                }
                t
            };
            let dir = &target - alpha;
            let norm = dir.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                continue;
            }
            let step = (PERTURBATION_RADIUS * rng.random::<f64>() / norm).min(1.0);
            let candidate = alpha + &dir.scale(step);
            if self.objective(&candidate) < base - 1e-12 {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `(alpha' w)^2 (Q kappa)' G (Q kappa)` for a strategy shared by all banks.
    pub fn bank_independent_msd(&self, column: &[f64]) -> Result<f64> {
        let alpha = replicate(column, self.banks());
        self.check_strategy(&alpha)?;
        let a = dot(column, &self.w);
        let total: f64 = self.c.as_slice().iter().sum();
        Ok(0.5 * a * a * total)
    }
}

fn columns_equal(alpha: &Matrix) -> bool {
    let first = alpha.col(0);
    (1..alpha.cols()).all(|i| alpha.col(i) == first)
}

/// `N` copies of `column` side by side.
pub fn replicate(column: &[f64], n: usize) -> Matrix {
    let mut m = Matrix::zeros(column.len(), n);
    for (k, x) in column.iter().enumerate() {
        for i in 0..n {
            m[(k, i)] = *x;
        }
    }
    m
}

/// A point on the unit simplex: a vertex half of the time, otherwise a
/// uniform (flat Dirichlet) draw.
pub fn random_simplex_point<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<f64> {
    if rng.random::<bool>() {
        let mut e = vec![0.0; k];
        e[rng.random_range(0..k)] = 1.0;
        return e;
    }
    let raw: Vec<f64> = (0..k).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|x| x / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::kronecker;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn assets(gamma: Vec<f64>) -> AssetUniverse {
        let k = gamma.len();
        AssetUniverse::with_unit_prices(
            (0..k).map(|i| 0.05 * i as f64).collect(),
            (0..k).map(|i| 0.1 + 0.05 * i as f64).collect(),
            gamma,
            vec![1.0; k],
            vec![0.9; k],
        )
        .unwrap()
    }

    fn random_problem(rng: &mut impl rand::Rng, k: usize, n: usize) -> LiquidationProblem {
        let a = AssetUniverse::with_unit_prices(
            (0..k).map(|_| rng.random_range(-0.3..0.3)).collect(),
            (0..k).map(|_| rng.random_range(0.01..0.5)).collect(),
            (0..k).map(|_| rng.random_range(0.5..10.0)).collect(),
            (0..k).map(|_| rng.random_range(0.5..2.0)).collect(),
            vec![0.4; k],
        )
        .unwrap();
        let q = Matrix::new(k, n, (0..k * n).map(|_| rng.random_range(0.0..0.1)).collect()).unwrap();
        let kappa = (0..n).map(|_| rng.random_range(0.0..15.0)).collect();
        LiquidationProblem::new(&a, q, kappa).unwrap()
    }

    fn random_strategy(rng: &mut impl rand::Rng, k: usize, n: usize) -> Matrix {
        let mut m = Matrix::zeros(k, n);
        for i in 0..n {
            for (r, x) in random_simplex_point(k, rng).iter().enumerate() {
                m[(r, i)] = *x;
            }
        }
        m
    }

    #[test]
    fn zero_leverage_gives_zero() {
        let p = LiquidationProblem::new(
            &assets(vec![1.0, 2.0]),
            Matrix::new(2, 2, vec![0.05; 4]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let alpha = Matrix::new(2, 2, vec![0.5; 4]).unwrap();
        assert_eq!(p.msd_of_strategy(&alpha).unwrap(), 0.0);
    }

    #[test]
    fn scalar_case() {
        let a = assets(vec![2.0]);
        let p = LiquidationProblem::new(&a, Matrix::from_rows(&[[0.1]]).unwrap(), vec![3.0]).unwrap();
        let w = 1.0 / (2.0 * 0.9);
        let c = 2.0 * (0.3f64).powi(2) * 0.1;
        let msd = p.msd_of_strategy(&Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert!((msd - 0.5 * c * w * w).abs() < 1e-15);
    }

    #[test]
    fn strict_maximum_concentrates_on_one_asset() {
        let p = LiquidationProblem::new(
            &assets(vec![5.0, 2.0, 1.0]),
            Matrix::new(3, 2, vec![0.05; 6]).unwrap(),
            vec![1.0, 2.0],
        )
        .unwrap();
        let alpha = p.most_liquid_strategy();
        assert_eq!(alpha.row(0), &[1.0, 1.0]);
        assert_eq!(alpha.row(1), &[0.0, 0.0]);
        assert_eq!(alpha.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn ties_split_evenly() {
        let p = LiquidationProblem::new(
            &assets(vec![4.0, 4.0, 1.0]),
            Matrix::new(3, 2, vec![0.05; 6]).unwrap(),
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_eq!(p.most_liquid_assets(), vec![0, 1]);
        let alpha = p.most_liquid_strategy();
        assert_eq!(alpha.col(0), vec![0.5, 0.5, 0.0]);
        let flat = LiquidationProblem::new(
            &assets(vec![3.0; 4]),
            Matrix::new(4, 1, vec![0.05; 4]).unwrap(),
            vec![1.0],
        )
        .unwrap();
        assert_eq!(flat.most_liquid_strategy().col(0), vec![0.25; 4]);
    }

    #[test]
    fn invalid_strategies_rejected() {
        let p = LiquidationProblem::new(
            &assets(vec![1.0, 2.0]),
            Matrix::new(2, 1, vec![0.05; 2]).unwrap(),
            vec![1.0],
        )
        .unwrap();
        let bad_sum = Matrix::from_rows(&[[0.5], [0.4]]).unwrap();
        assert!(matches!(p.msd_of_strategy(&bad_sum), Err(Error::InvalidStrategy(_))));
        let negative = Matrix::from_rows(&[[1.5], [-0.5]]).unwrap();
        assert!(matches!(p.msd_of_strategy(&negative), Err(Error::InvalidStrategy(_))));
    }

    #[test]
    fn local_minimum_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LiquidationProblem::new(
            &assets(vec![6.0, 3.0, 1.0]),
            Matrix::new(3, 3, vec![0.03; 9]).unwrap(),
            vec![5.0, 8.0, 12.0],
        )
        .unwrap();
        let best = p.most_liquid_strategy();
        assert!(p.verify_local_minimum(&best, 2000, false, &mut rng).unwrap());
        assert!(p.verify_local_minimum(&best, 2000, true, &mut rng).unwrap());
        let mut worst = Matrix::zeros(3, 3);
        for i in 0..3 {
            worst[(2, i)] = 1.0;
        }
        assert!(!p.verify_local_minimum(&worst, 2000, false, &mut rng).unwrap());
    }

    #[test]
    fn bank_independent_global_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_problem(&mut rng, 5, 3);
        let best = p.most_liquid_strategy();
        let best_msd = p.bank_independent_msd(&best.col(0)).unwrap();
        assert!((best_msd - p.msd_of_strategy(&best).unwrap()).abs() < 1e-14);
        for _ in 0..1000 {
            let col = random_simplex_point(5, &mut rng);
            assert!(p.bank_independent_msd(&col).unwrap() >= best_msd - 1e-15);
        }
    }

    proptest! {
        #[test]
        fn kronecker_and_direct_paths_agree(seed in any::<u64>(), k in 1usize..5, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, k, n);
            let alpha = random_strategy(&mut rng, k, n);
            let blocked = p.msd_of_strategy(&alpha).unwrap();
            let direct = p.direct_msd(&alpha).unwrap();
            let wmat = Matrix::column(p.weights()).unwrap();
            let wwt = wmat.matmul(&wmat.transpose()).unwrap();
            let big = kronecker(p.c(), &wwt);
            let va = alpha.vectorize();
            let full = 0.5 * dot(&va, &big.matvec(&va).unwrap());
            let scale = direct.abs().max(1e-12);
            prop_assert!((blocked - direct).abs() <= 1e-10 * scale);
            prop_assert!((full - direct).abs() <= 1e-10 * scale);
        }

        #[test]
        fn c_is_symmetric(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, 4, 3);
            prop_assert!(p.c().is_symmetric(1e-15));
        }

        #[test]
        fn kkt_triplet_vanishes(seed in any::<u64>(), k in 1usize..6, n in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, k, n);
            let alpha = p.most_liquid_strategy();
            let (lambda, s) = p.kkt_multipliers();
            let res = p.kkt_residual(&alpha, &lambda, &s).unwrap();
            let scale = p.c().max_abs().max(1.0) * p.weights().iter().cloned().fold(1.0, f64::max).powi(2);
            prop_assert!(res <= 1e-10 * scale, "residual {}", res);
        }

        #[test]
        fn most_liquid_columns_identical(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_problem(&mut rng, 4, 3);
            let alpha = p.most_liquid_strategy();
            prop_assert!(columns_equal(&alpha));
            prop_assert!(alpha.col_sums().iter().all(|s| (s - 1.0).abs() < 1e-15));
        }
    }
}
