//! Holding matrices that minimise the mean squared deviation between exact
//! and fundamental market capitalisation, subject to fixed aggregate
//! holdings and bank budgets.
//!
//! The minimiser is found in two steps: first the optimal aggregate
//! `y* = Q v`, then any allocation `Q` with the prescribed row sums, column
//! sums and `Q v = y*`. The allocation is unique for two banks; with more
//! banks the solutions form an affine set `Q^p + span(O)`.

use crate::error::{Error, Result};
use crate::model::{mean_squared_deviation, MarketModel};
use crate::numerics::{dot, least_squares, norm2, solve_vector, Matrix};

/// Default relative tolerance of [`is_diversification_efficient`].
pub const DEPENDENCE_TOLERANCE: f64 = 1e-9;

const AGGREGATION_FLOOR: f64 = 1e-12;

/// Aggregate holdings, budgets, significance and shock statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilitySpec {
    q: Vec<f64>,
    b: Vec<f64>,
    v: Vec<f64>,
    g: Matrix,
    total: f64,
}

impl FeasibilitySpec {
    pub fn new(q: Vec<f64>, b: Vec<f64>, v: Vec<f64>, g: Matrix) -> Result<Self> {
        let k = q.len();
        if k == 0 || b.is_empty() {
            return Err(Error::DimensionMismatch("empty holdings or budgets".into()));
        }
        if b.len() != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} budgets but {} significance values",
                b.len(),
                v.len()
            )));
        }
        if g.shape() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "G is {}x{}, expected {k}x{k}",
                g.rows(),
                g.cols()
            )));
        }
        if q.iter().chain(&b).chain(&v).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feasibility inputs".into()));
        }
        let total: f64 = q.iter().sum();
        let budget: f64 = b.iter().sum();
        if (total - budget).abs() > 1e-9 * total.abs().max(budget.abs()).max(1.0) {
            return Err(Error::AssumptionViolated(format!(
                "aggregate holdings sum to {total} but budgets sum to {budget}"
            )));
        }
        if distinct_partner(&v).is_none() {
            return Err(Error::AssumptionViolated(
                "all banks have the same systemic significance".into(),
            ));
        }
        if dot(&b, &v) == 0.0 {
            return Err(Error::AssumptionViolated("b'v = 0".into()));
        }
        Ok(FeasibilitySpec { q, b, v, g, total })
    }

    /// Aggregates, budgets, significance and `G` of an assembled model.
    pub fn from_model(model: &MarketModel) -> Result<Self> {
        FeasibilitySpec::new(
            model.banks().aggregate_holdings(),
            model.banks().budgets.clone(),
            model.significance().to_vec(),
            model.shock_statistics().clone(),
        )
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn g(&self) -> &Matrix {
        &self.g
    }

    /// `T = sum q = sum b`.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn assets(&self) -> usize {
        self.q.len()
    }

    pub fn banks(&self) -> usize {
        self.b.len()
    }

    /// `b' v`.
    pub fn weighted_budget(&self) -> f64 {
        dot(&self.b, &self.v)
    }
}

/// Lowest index `j > 0` with `v[j] != v[0]`.
fn distinct_partner(v: &[f64]) -> Option<usize> {
    v.iter().skip(1).position(|&x| x != v[0]).map(|p| p + 1)
}

/// Bank order in which the first two banks differ in significance.
fn bank_order(v: &[f64]) -> Result<Vec<usize>> {
    let j = distinct_partner(v).ok_or_else(|| {
        Error::AssumptionViolated("all banks have the same systemic significance".into())
    })?;
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.swap(1, j);
    Ok(order)
}

/// Solution set of the allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EfficientSolutionSet {
    pub particular: Matrix,
    /// `(K N) x ((K - 1)(N - 2))`, columns are vectorised null directions.
    pub null_basis: Matrix,
    pub y_star: Vec<f64>,
    pub msd_optimal: f64,
}

impl EfficientSolutionSet {
    /// Dimension of the affine solution set.
    pub fn dimension(&self) -> usize {
        self.null_basis.cols()
    }

    /// `Q^p + reshape(O lambda)`.
    pub fn element(&self, lambda: &[f64]) -> Result<Matrix> {
        let step = self.null_basis.matvec(lambda)?;
        let (k, n) = self.particular.shape();
        self.particular.try_add(&Matrix::from_column_major(k, n, &step)?)
    }

    /// Positions `(asset, bank)` of short positions in the particular solution.
    pub fn short_positions(&self) -> Vec<(usize, usize)> {
        short_positions(&self.particular)
    }
}

/// Positions `(asset, bank)` with negative holdings.
pub fn short_positions(q: &Matrix) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..q.rows() {
        for j in 0..q.cols() {
            if q[(i, j)] < 0.0 {
                out.push((i, j));
            }
        }
    }
    out
}

/// `z = G^-1 1`.
fn inverse_times_ones(g: &Matrix) -> Result<Vec<f64>> {
    solve_vector(g, &vec![1.0; g.rows()])
}

/// `y* = (b'v / 1'z) z` with `z = G^-1 1`.
pub fn aggregate_weighted_holdings(spec: &FeasibilitySpec) -> Result<Vec<f64>> {
    let z = inverse_times_ones(&spec.g)?;
    let s: f64 = z.iter().sum();
    if s.abs() < AGGREGATION_FLOOR {
        return Err(Error::DegenerateAggregation(s));
    }
    let c = spec.weighted_budget() / s;
    Ok(z.iter().map(|x| c * x).collect())
}

/// Closed-form inverse of `mu mu' + Diag(sigma2)`.
pub fn sherman_morrison_inverse(mu: &[f64], sigma2: &[f64]) -> Result<Matrix> {
    if mu.len() != sigma2.len() {
        return Err(Error::DimensionMismatch("mu and sigma2 lengths differ".into()));
    }
    let u: Vec<f64> = mu.iter().zip(sigma2).map(|(m, s)| m / s).collect();
    let denom = 1.0 + dot(&u, mu);
    let k = mu.len();
    let mut inv = Matrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            inv[(i, j)] = -u[i] * u[j] / denom;
        }
        inv[(i, i)] += 1.0 / sigma2[i];
    }
    Ok(inv)
}

/// Particular allocation `Q^p` with `Q^p v = y_star`.
pub fn allocate(spec: &FeasibilitySpec, y_star: &[f64]) -> Result<Matrix> {
    let k = spec.assets();
    let n = spec.banks();
    if y_star.len() != k {
        return Err(Error::DimensionMismatch(format!(
            "y* has length {}, expected {k}",
            y_star.len()
        )));
    }
    let order = bank_order(&spec.v)?;
    let (v1, v2) = (spec.v[order[0]], spec.v[order[1]]);
    let dv = v2 - v1;
    let (mut shift1, mut shift2) = (0.0, 0.0);
    for &i in &order[2..] {
        shift1 += (v2 - spec.v[i]) * spec.b[i];
        shift2 += (spec.v[i] - v1) * spec.b[i];
    }
    let mut q = Matrix::zeros(k, n);
    for r in 0..k {
        q[(r, order[0])] = (v2 * spec.q[r] - y_star[r]) / dv;
        q[(r, order[1])] = (y_star[r] - v1 * spec.q[r]) / dv;
    }
    q[(0, order[0])] -= shift1 / dv;
    q[(0, order[1])] -= shift2 / dv;
    for &i in &order[2..] {
        q[(0, i)] = spec.b[i];
    }
    Ok(q)
}

/// Basis of the directions that keep row sums, column sums and `Q v` fixed.
pub fn null_space_basis(v: &[f64], k: usize) -> Result<Matrix> {
    let n = v.len();
    if n < 2 || k == 0 {
        return Err(Error::AssumptionViolated(format!(
            "null space needs at least two banks and one asset (N = {n}, K = {k})"
        )));
    }
    let order = bank_order(v)?;
    let (v1, v2) = (v[order[0]], v[order[1]]);
    let dv = v2 - v1;
    let cols = (k - 1) * (n - 2);
    let mut o = Matrix::zeros(k * n, cols);
    for (group, &bank) in order[2..].iter().enumerate() {
        let c1 = (v2 - v[bank]) / dv;
        let c2 = (v[bank] - v1) / dv;
        for r in 1..k {
            let col = group * (k - 1) + (r - 1);
            for (block, c) in [(order[0], c1), (order[1], c2), (bank, -1.0)] {
                o[(block * k, col)] = -c;
                o[(block * k + r, col)] = c;
            }
        }
    }
    Ok(o)
}

/// Linear constraints on `vec(Q)`: row sums, column sums, then `Q v`.
pub fn constraint_matrix(v: &[f64], k: usize) -> Matrix {
    let n = v.len();
    let mut f = Matrix::zeros(2 * k + n, k * n);
    for i in 0..n {
        for r in 0..k {
            let c = i * k + r;
            f[(r, c)] = 1.0;
            f[(k + i, c)] = 1.0;
            f[(k + n + r, c)] = v[i];
        }
    }
    f
}

/// Both steps plus the null basis.
pub fn solve_f_efficient(spec: &FeasibilitySpec) -> Result<EfficientSolutionSet> {
    let z = inverse_times_ones(&spec.g)?;
    let s: f64 = z.iter().sum();
    if s.abs() < AGGREGATION_FLOOR {
        return Err(Error::DegenerateAggregation(s));
    }
    let bv = spec.weighted_budget();
    let y_star: Vec<f64> = z.iter().map(|x| bv / s * x).collect();
    let particular = allocate(spec, &y_star)?;
    let null_basis = null_space_basis(&spec.v, spec.assets())?;
    Ok(EfficientSolutionSet {
        particular,
        null_basis,
        y_star,
        msd_optimal: bv * bv / s,
    })
}

/// `Q^div = q b' / T`.
pub fn diversified_holdings(spec: &FeasibilitySpec) -> Result<Matrix> {
    diversified(&spec.q, &spec.b)
}

/// `q b' / T` for arbitrary aggregates.
pub fn diversified(q: &[f64], b: &[f64]) -> Result<Matrix> {
    let t: f64 = b.iter().sum();
    if t == 0.0 {
        return Err(Error::ZeroTotal);
    }
    let mut m = Matrix::zeros(q.len(), b.len());
    for (r, qr) in q.iter().enumerate() {
        for (c, bc) in b.iter().enumerate() {
            m[(r, c)] = qr * bc / t;
        }
    }
    Ok(m)
}

/// Whether `q` is parallel to `G^-1 1`, in which case full diversification
/// is itself f-efficient.
pub fn is_diversification_efficient(spec: &FeasibilitySpec, tol: f64) -> bool {
    let Ok(z) = inverse_times_ones(&spec.g) else {
        return false;
    };
    let (nq, nz) = (norm2(&spec.q), norm2(&z));
    if nq == 0.0 || nz == 0.0 {
        return false;
    }
    let gap = |sign: f64| {
        let d: Vec<f64> = spec
            .q
            .iter()
            .zip(&z)
            .map(|(a, b)| a / nq - sign * b / nz)
            .collect();
        norm2(&d)
    };
    gap(1.0).min(gap(-1.0)) <= tol
}

/// Element of the solution set closest to `target` in Frobenius norm.
pub fn min_distance_solution(solset: &EfficientSolutionSet, target: &Matrix) -> Result<Matrix> {
    let (k, n) = solset.particular.shape();
    if target.shape() != (k, n) {
        return Err(Error::DimensionMismatch(format!(
            "target is {}x{}, expected {k}x{n}",
            target.rows(),
            target.cols()
        )));
    }
    if solset.dimension() == 0 {
        return Ok(solset.particular.clone());
    }
    let diff = target.try_sub(&solset.particular)?.vectorize();
    let lambda = least_squares(&solset.null_basis, &Matrix::column(&diff)?)?;
    solset.element(&lambda.col(0))
}

/// Feasibility residual of `q_mat`: largest violation among the row-sum,
/// column-sum and `Q v = y` constraints.
pub fn feasibility_residual(spec: &FeasibilitySpec, q_mat: &Matrix, y: &[f64]) -> f64 {
    let rows = q_mat.row_sums();
    let cols = q_mat.col_sums();
    let qv = q_mat.matvec(&spec.v).unwrap_or_default();
    let mut worst: f64 = 0.0;
    for (a, b) in rows.iter().zip(&spec.q) {
        worst = worst.max((a - b).abs());
    }
    for (a, b) in cols.iter().zip(&spec.b) {
        worst = worst.max((a - b).abs());
    }
    for (a, b) in qv.iter().zip(y) {
        worst = worst.max((a - b).abs());
    }
    worst
}

/// `MSD(Q)` under the spec's significance and shock statistics.
pub fn holdings_msd(spec: &FeasibilitySpec, q_mat: &Matrix) -> Result<f64> {
    mean_squared_deviation(q_mat, &spec.v, &spec.g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{inverse, rank};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn g_from(mu: &[f64], sigma2: &[f64]) -> Matrix {
        let k = mu.len();
        let mut g = Matrix::from_diag(sigma2);
        for i in 0..k {
            for j in 0..k {
                g[(i, j)] += mu[i] * mu[j];
            }
        }
        g
    }

    fn fixture() -> FeasibilitySpec {
        FeasibilitySpec::new(
            vec![0.08; 3],
            vec![0.08; 3],
            vec![0.15, 0.1, 0.05],
            g_from(&[0.0; 3], &[0.15, 0.2, 0.3]),
        )
        .unwrap()
    }

    fn scaled(rows: [[f64; 3]; 3], c: f64) -> Matrix {
        Matrix::from_rows(&rows).unwrap().scale(c)
    }

    fn random_spec(rng: &mut impl Rng, k: usize, n: usize) -> FeasibilitySpec {
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
        let t: f64 = b.iter().sum();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
        let rs: f64 = raw.iter().sum();
        let q = raw.iter().map(|x| x * t / rs).collect();
        let v = (0..n).map(|_| rng.random_range(0.01..3.0)).collect();
        let mu: Vec<f64> = (0..k).map(|_| rng.random_range(-0.3..0.3)).collect();
        let s2: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
        FeasibilitySpec::new(q, b, v, g_from(&mu, &s2)).unwrap()
    }

    #[test]
    fn zero_mean_aggregation_is_inverse_variance_weighted() {
        let spec = fixture();
        let y = aggregate_weighted_holdings(&spec).unwrap();
        let w = [1.0 / 0.15, 1.0 / 0.2, 1.0 / 0.3];
        let sw: f64 = w.iter().sum();
        for (yk, wk) in y.iter().zip(w) {
            assert!((yk - 0.024 * wk / sw).abs() < 1e-14);
        }
        let q1 = scaled([[2.0 / 3.0, 1.0 / 3.0, 0.0], [1.0 / 3.0; 3], [0.0, 1.0 / 3.0, 2.0 / 3.0]], 0.08);
        let qv = q1.matvec(spec.v()).unwrap();
        for (a, b) in qv.iter().zip(&y) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn symmetric_two_asset_aggregation() {
        let spec = FeasibilitySpec::new(
            vec![0.5, 0.5],
            vec![0.4, 0.6],
            vec![1.0, 2.0],
            g_from(&[0.0, 0.0], &[0.3, 0.3]),
        )
        .unwrap();
        let y = aggregate_weighted_holdings(&spec).unwrap();
        let half = spec.weighted_budget() / 2.0;
        assert!((y[0] - half).abs() < 1e-14 && (y[1] - half).abs() < 1e-14);
    }

    #[test]
    fn sherman_morrison_agrees_with_solver() {
        let mu = [0.1, -0.2, 0.3, 0.05];
        let s2 = [0.2, 0.1, 0.4, 0.3];
        let sm = sherman_morrison_inverse(&mu, &s2).unwrap();
        let lu = inverse(&g_from(&mu, &s2)).unwrap();
        assert!(sm.max_abs_diff(&lu) < 1e-10);
    }

    #[test]
    fn two_bank_allocation_matches_closed_form() {
        let spec = FeasibilitySpec::new(
            vec![0.3, 0.5],
            vec![0.6, 0.2],
            vec![0.7, 1.9],
            g_from(&[0.1, 0.2], &[0.05, 0.4]),
        )
        .unwrap();
        let set = solve_f_efficient(&spec).unwrap();
        assert_eq!(set.dimension(), 0);
        let (v1, v2) = (0.7, 1.9);
        for r in 0..2 {
            let q = spec.q()[r];
            let y = set.y_star[r];
            assert!((set.particular[(r, 0)] - (v2 * q - y) / (v2 - v1)).abs() < 1e-14);
            assert!((set.particular[(r, 1)] - (y - v1 * q) / (v2 - v1)).abs() < 1e-14);
        }
    }

    #[test]
    fn fixture_null_basis_matches_generators() {
        let o = null_space_basis(&[0.15, 0.1, 0.05], 3).unwrap();
        assert_eq!(o.shape(), (9, 2));
        let g1 = Matrix::from_rows(&[[1.0, -2.0, 1.0], [-1.0, 2.0, -1.0], [0.0; 3]]).unwrap();
        let g2 = Matrix::from_rows(&[[1.0, -2.0, 1.0], [0.0; 3], [-1.0, 2.0, -1.0]]).unwrap();
        let c0 = Matrix::from_column_major(3, 3, &o.col(0)).unwrap();
        let c1 = Matrix::from_column_major(3, 3, &o.col(1)).unwrap();
        assert!(c0.max_abs_diff(&g1) < 1e-14);
        assert!(c1.max_abs_diff(&g2) < 1e-14);
        let f = constraint_matrix(&[0.15, 0.1, 0.05], 3);
        let fo = f.matmul(&o).unwrap();
        assert!(fo.max_abs() < 1e-14);
    }

    #[test]
    fn two_banks_have_empty_basis() {
        let o = null_space_basis(&[1.0, 2.0], 4).unwrap();
        assert_eq!(o.shape(), (8, 0));
    }

    #[test]
    fn fixture_min_distance_selections() {
        let spec = fixture();
        let set = solve_f_efficient(&spec).unwrap();
        let q1 = scaled([[2.0 / 3.0, 1.0 / 3.0, 0.0], [1.0 / 3.0; 3], [0.0, 1.0 / 3.0, 2.0 / 3.0]], 0.08);
        let q2 = scaled([[5.0 / 6.0, 0.0, 1.0 / 6.0], [0.0, 1.0, 0.0], [1.0 / 6.0, 0.0, 5.0 / 6.0]], 0.08);
        let div = diversified_holdings(&spec).unwrap();
        let near_div = min_distance_solution(&set, &div).unwrap();
        assert!(near_div.max_abs_diff(&q1) < 1e-10, "{near_div:?}");
        let near_id = min_distance_solution(&set, &Matrix::identity(3).scale(0.08)).unwrap();
        assert!(near_id.max_abs_diff(&q2) < 1e-10, "{near_id:?}");
        let same = min_distance_solution(&set, &set.particular).unwrap();
        assert!(same.max_abs_diff(&set.particular) < 1e-12);
        // the particular solution lies in the same affine set as Q*1
        let diff = q1.try_sub(&set.particular).unwrap().vectorize();
        let lambda = least_squares(&set.null_basis, &Matrix::column(&diff).unwrap()).unwrap();
        let back = set.element(&lambda.col(0)).unwrap();
        assert!(back.max_abs_diff(&q1) < 1e-10);
    }

    #[test]
    fn reindexing_handles_equal_leading_significance() {
        let spec = FeasibilitySpec::new(
            vec![0.4, 0.6],
            vec![0.2, 0.3, 0.5],
            vec![1.0, 1.0, 2.0],
            g_from(&[0.1, 0.0], &[0.2, 0.3]),
        )
        .unwrap();
        let set = solve_f_efficient(&spec).unwrap();
        assert!(feasibility_residual(&spec, &set.particular, &set.y_star) < 1e-10);
        let f = constraint_matrix(spec.v(), 2);
        assert!(f.matmul(&set.null_basis).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn assumption_errors() {
        let g = g_from(&[0.0, 0.0], &[0.1, 0.1]);
        let same = FeasibilitySpec::new(vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0, 1.0], g.clone());
        assert!(matches!(same, Err(Error::AssumptionViolated(_))));
        let zero = FeasibilitySpec::new(vec![0.5, 0.5], vec![0.5, 0.5], vec![1.0, -1.0], g.clone());
        assert!(matches!(zero, Err(Error::AssumptionViolated(_))));
        let unbalanced = FeasibilitySpec::new(vec![0.5, 0.6], vec![0.5, 0.5], vec![1.0, 2.0], g);
        assert!(unbalanced.is_err());
        assert!(matches!(diversified(&[0.0], &[1.0, -1.0]), Err(Error::ZeroTotal)));
    }

    #[test]
    fn diversified_two_by_two() {
        let d = diversified(&[0.08, 0.08], &[0.08, 0.08]).unwrap();
        assert!(d.max_abs_diff(&Matrix::new(2, 2, vec![0.04; 4]).unwrap()) < 1e-16);
    }

    #[test]
    fn diversification_efficiency_cases() {
        let k = 4;
        let homogeneous = FeasibilitySpec::new(
            vec![0.25; k],
            vec![0.5, 0.5],
            vec![1.0, 2.0],
            g_from(&[0.1; 4], &[0.2; 4]),
        )
        .unwrap();
        assert!(is_diversification_efficient(&homogeneous, DEPENDENCE_TOLERANCE));

        // mean of the last asset shifted by the excluded value -K mu_1
        let mu1 = 0.1;
        let mut mu = vec![mu1; k];
        mu[k - 1] += -(k as f64) * mu1;
        let shifted = FeasibilitySpec::new(
            vec![0.25; k],
            vec![0.5, 0.5],
            vec![1.0, 2.0],
            g_from(&mu, &[0.2; 4]),
        )
        .unwrap();
        assert!(is_diversification_efficient(&shifted, DEPENDENCE_TOLERANCE));

        let mut s2 = vec![0.2; k];
        s2[k - 1] += 0.05;
        let perturbed = FeasibilitySpec::new(
            vec![0.25; k],
            vec![0.5, 0.5],
            vec![1.0, 2.0],
            g_from(&[0.1; 4], &s2),
        )
        .unwrap();
        assert!(!is_diversification_efficient(&perturbed, DEPENDENCE_TOLERANCE));
    }

    /// For K = N = 2 the feasible set is one-dimensional; scan it.
    fn grid_minimum(spec: &FeasibilitySpec) -> f64 {
        let (q, b) = (spec.q(), spec.b());
        let at = |t: f64| {
            let m = Matrix::from_rows(&[[t, q[0] - t], [b[0] - t, q[1] - b[0] + t]]).unwrap();
            holdings_msd(spec, &m).unwrap()
        };
        let (mut lo, mut hi) = (-1e4, 1e4);
        for _ in 0..8 {
            let steps = 2000;
            let mut best = (f64::INFINITY, lo);
            for s in 0..=steps {
                let t = lo + (hi - lo) * s as f64 / steps as f64;
                let val = at(t);
                if val < best.0 {
                    best = (val, t);
                }
            }
            let w = (hi - lo) / steps as f64;
            lo = best.1 - 2.0 * w;
            hi = best.1 + 2.0 * w;
        }
        at(0.5 * (lo + hi))
    }

    proptest! {
        #[test]
        fn particular_is_feasible_and_optimal(seed in any::<u64>(), k in 1usize..6, n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, k, n);
            let set = solve_f_efficient(&spec).unwrap();
            let scale = spec.q().iter().chain(spec.b()).fold(1.0f64, |m, x| m.max(x.abs()));
            prop_assert!(feasibility_residual(&spec, &set.particular, &set.y_star) <= 1e-10 * scale * 10.0);
            let msd = holdings_msd(&spec, &set.particular).unwrap();
            prop_assert!((msd - set.msd_optimal).abs() <= 1e-9 * set.msd_optimal.abs().max(1e-12));
            let ys: f64 = set.y_star.iter().sum();
            prop_assert!((ys - spec.weighted_budget()).abs() <= 1e-10 * ys.abs().max(1.0));
        }

        #[test]
        fn null_directions_preserve_constraints(seed in any::<u64>(), k in 1usize..6, n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, k, n);
            let o = null_space_basis(spec.v(), k).unwrap();
            prop_assert_eq!(o.cols(), (k - 1) * (n - 2));
            prop_assert_eq!(rank(&o, 1e-10), o.cols());
            for c in 0..o.cols() {
                let m = Matrix::from_column_major(k, n, &o.col(c)).unwrap();
                prop_assert!(m.row_sums().iter().all(|x| x.abs() <= 1e-12));
                prop_assert!(m.col_sums().iter().all(|x| x.abs() <= 1e-12));
                prop_assert!(m.matvec(spec.v()).unwrap().iter().all(|x| x.abs() <= 1e-12));
            }
        }

        #[test]
        fn affine_set_is_closed(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, 3, 4);
            let set = solve_f_efficient(&spec).unwrap();
            for _ in 0..100 {
                let lambda: Vec<f64> = (0..set.dimension()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let q = set.element(&lambda).unwrap();
                prop_assert!(feasibility_residual(&spec, &q, &set.y_star) <= 1e-9);
                let msd = holdings_msd(&spec, &q).unwrap();
                prop_assert!((msd - set.msd_optimal).abs() <= 1e-9 * set.msd_optimal.max(1.0));
            }
        }

        #[test]
        fn constraint_rank(seed in any::<u64>(), k in 1usize..6, n in 2usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut v: Vec<f64> = Vec::new();
            while v.len() < n {
                let x: f64 = rng.random_range(0.1..3.0);
                if v.iter().all(|y| (x - y).abs() > 1e-3) {
                    v.push(x);
                }
            }
            prop_assert_eq!(rank(&constraint_matrix(&v, k), 1e-9), 2 * k + n - 2);
        }

        #[test]
        fn monotone_structure_of_fixture(l1 in -10.0f64..10.0, l2 in -10.0f64..10.0) {
            let set = solve_f_efficient(&fixture()).unwrap();
            let q = set.element(&[l1, l2]).unwrap();
            prop_assert!((q[(0, 0)] - q[(0, 2)] - 0.08 * 2.0 / 3.0).abs() <= 1e-12);
            prop_assert!((q[(2, 2)] - q[(2, 0)] - 0.08 * 2.0 / 3.0).abs() <= 1e-12);
        }

        #[test]
        fn diversification_never_beats_optimum(seed in any::<u64>(), k in 1usize..5, n in 2usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, k, n);
            let set = solve_f_efficient(&spec).unwrap();
            let div = holdings_msd(&spec, &diversified_holdings(&spec).unwrap()).unwrap();
            prop_assert!(div >= set.msd_optimal * (1.0 - 1e-10));
            if is_diversification_efficient(&spec, 1e-9) {
                prop_assert!((div - set.msd_optimal).abs() <= 1e-8 * div.max(1e-12));
            }
        }

        #[test]
        fn two_by_two_grid_search_agrees(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = random_spec(&mut rng, 2, 2);
            let set = solve_f_efficient(&spec).unwrap();
            let grid = grid_minimum(&spec);
            prop_assert!((grid - set.msd_optimal).abs() <= 1e-6 * set.msd_optimal.abs().max(1e-12));
        }
    }
}
