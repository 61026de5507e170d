//! Two banks, two assets: closed-form efficient holdings, their distance
//! from full diversification, parameter sweeps and derivative sign checks.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Relative step of the central finite differences.
pub const FD_STEP: f64 = 1e-6;
/// Derivatives smaller than this in magnitude count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-8;
/// Default number of points in a sweep.
pub const SWEEP_POINTS: usize = 201;
/// `|v2 - v1|` at or below this is treated as equal significance.
pub const SIGNIFICANCE_GAP: f64 = 1e-12;

const HYPOTHESIS_TOLERANCE: f64 = 1e-12;

/// `q1 = q2 = b1 = b2 = x` together with the shock moments and significance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoByTwoInputs {
    pub x: f64,
    pub mu: [f64; 2],
    pub sigma2: [f64; 2],
    pub v: [f64; 2],
}

impl TwoByTwoInputs {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.x,
            self.mu[0],
            self.mu[1],
            self.sigma2[0],
            self.sigma2[1],
            self.v[0],
            self.v[1],
        ];
        if all.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("2x2 inputs".into()));
        }
        if self.x <= 0.0 {
            return Err(Error::AssumptionViolated(format!("x = {} must be positive", self.x)));
        }
        if self.sigma2.iter().any(|&s| s <= 0.0) {
            return Err(Error::AssumptionViolated("variances must be positive".into()));
        }
        if (self.v[1] - self.v[0]).abs() <= SIGNIFICANCE_GAP {
            return Err(Error::AssumptionViolated("v1 = v2".into()));
        }
        Ok(())
    }

    /// `mu1^2 + mu2^2 - 2 mu1 mu2 + sigma1^2 + sigma2^2`.
    fn denominator(&self) -> f64 {
        let [m1, m2] = self.mu;
        m1 * m1 + m2 * m2 - 2.0 * m1 * m2 + self.sigma2[0] + self.sigma2[1]
    }

    /// `mu1^2 - mu2^2 + sigma1^2 - sigma2^2`.
    fn imbalance(&self) -> f64 {
        let [m1, m2] = self.mu;
        m1 * m1 - m2 * m2 + self.sigma2[0] - self.sigma2[1]
    }

    /// `G^-1 1`.
    pub fn z(&self) -> [f64; 2] {
        let [m1, m2] = self.mu;
        let [s1, s2] = self.sigma2;
        let det = (m1 * m1 + s1) * (m2 * m2 + s2) - (m1 * m2).powi(2);
        [
            (m2 * m2 + s2 - m1 * m2) / det,
            (m1 * m1 + s1 - m1 * m2) / det,
        ]
    }
}

/// First-row entry of bank 1 in closed form.
fn q11(i: &TwoByTwoInputs) -> f64 {
    let [m1, m2] = i.mu;
    let [s1, s2] = i.sigma2;
    let [v1, v2] = i.v;
    i.x * (v2 * (m1 * m1 + s1 - m1 * m2) - v1 * (m2 * m2 + s2 - m1 * m2))
        / ((v2 - v1) * i.denominator())
}

/// The unique efficient holding matrix for two banks and two assets.
pub fn efficient_2x2(inputs: &TwoByTwoInputs) -> Result<Matrix> {
    inputs.validate()?;
    let a = q11(inputs);
    let b = inputs.x - a;
    Matrix::from_rows(&[[a, b], [b, a]])
}

/// Frobenius distance between [`efficient_2x2`] and `x/2` everywhere.
pub fn distance_from_diversification_2x2(inputs: &TwoByTwoInputs) -> Result<f64> {
    inputs.validate()?;
    let [v1, v2] = inputs.v;
    Ok(inputs.x * inputs.imbalance().abs() * (v1 + v2).abs()
        / ((v2 - v1).abs() * inputs.denominator()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma1Sq,
    Mu2,
    V2,
}

impl SweepParameter {
    pub const ALL: [SweepParameter; 3] = [
        SweepParameter::Sigma1Sq,
        SweepParameter::Mu2,
        SweepParameter::V2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Sigma1Sq => "sigma1_sq",
            SweepParameter::Mu2 => "mu2",
            SweepParameter::V2 => "v2",
        }
    }

    /// Base point used when sweeping this parameter.
    pub fn base_inputs(self) -> TwoByTwoInputs {
        match self {
            SweepParameter::Sigma1Sq => TwoByTwoInputs {
                x: 0.08,
                mu: [0.0, 0.0],
                sigma2: [0.2, 0.2],
                v: [0.04, 0.07],
            },
            SweepParameter::Mu2 => TwoByTwoInputs {
                x: 0.08,
                mu: [0.0, 0.0],
                sigma2: [0.1, 0.2],
                v: [0.04, 0.07],
            },
            SweepParameter::V2 => TwoByTwoInputs {
                x: 0.08,
                mu: [0.0, 0.0],
                sigma2: [0.1, 0.2],
                v: [0.04, 0.07],
            },
        }
    }

    pub fn default_range(self) -> (f64, f64) {
        match self {
            SweepParameter::Sigma1Sq => (0.0, 0.4),
            SweepParameter::Mu2 => (-0.5, 0.5),
            SweepParameter::V2 => (0.0, 0.2),
        }
    }

    pub fn apply(self, inputs: &TwoByTwoInputs, value: f64) -> TwoByTwoInputs {
        let mut out = *inputs;
        match self {
            SweepParameter::Sigma1Sq => out.sigma2[0] = value,
            SweepParameter::Mu2 => out.mu[1] = value,
            SweepParameter::V2 => out.v[1] = value,
        }
        out
    }
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepParameter::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                Error::validation(
                    "VALIDATION_PARAMETER",
                    format!("unknown sweep parameter '{s}' (expected sigma1_sq, mu2 or v2)"),
                )
            })
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * (i as f64 / (n - 1) as f64))
            .collect(),
    }
}

/// One sweep point; the numeric fields are `None` where the inputs are
/// inadmissible.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub param: f64,
    pub q11: Option<f64>,
    pub q21: Option<f64>,
    pub distance: Option<f64>,
}

pub fn statics_sweep(
    inputs: &TwoByTwoInputs,
    parameter: SweepParameter,
    grid: &[f64],
) -> Vec<SweepRow> {
    grid.par_iter()
        .map(|&value| {
            let point = parameter.apply(inputs, value);
            match (efficient_2x2(&point), distance_from_diversification_2x2(&point)) {
                (Ok(q), Ok(d)) => SweepRow {
                    param: value,
                    q11: Some(q[(0, 0)]),
                    q21: Some(q[(1, 0)]),
                    distance: Some(d),
                },
                _ => SweepRow {
                    param: value,
                    q11: None,
                    q21: None,
                    distance: None,
                },
            }
        })
        .collect()
}

/// The three comparative-statics results for the 2x2 system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    /// Derivatives with respect to `sigma1` when `mu1 = mu2`.
    Variance,
    /// Derivatives with respect to `mu2` when `sigma1^2 = sigma2^2`, `mu1 = 0`.
    Mean,
    /// Derivative of the distance with respect to `v2`.
    Significance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
}

impl Sign {
    pub fn of(x: f64) -> Sign {
        if x.abs() < ZERO_THRESHOLD {
            Sign::Zero
        } else if x < 0.0 {
            Sign::Negative
        } else {
            Sign::Positive
        }
    }

    fn strict(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Negative
        } else if x > 0.0 {
            Sign::Positive
        } else {
            Sign::Zero
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignCheck {
    /// `"d"` or `"q11"`.
    pub quantity: &'static str,
    /// `"sigma1"`, `"mu2"` or `"v2"`.
    pub parameter: &'static str,
    pub derivative: f64,
    pub expected: Sign,
    pub observed: Sign,
}

impl SignCheck {
    pub fn holds(&self) -> bool {
        self.expected == self.observed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignReport {
    pub lemma: Lemma,
    pub checks: Vec<SignCheck>,
}

impl SignReport {
    pub fn violations(&self) -> Vec<&SignCheck> {
        self.checks.iter().filter(|c| !c.holds()).collect()
    }

    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(SignCheck::holds)
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= HYPOTHESIS_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn central_difference<F>(p: f64, f: F) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let h = FD_STEP * p.abs().max(1.0);
    Ok((f(p + h)? - f(p - h)?) / (2.0 * h))
}

fn check_hypotheses(i: &TwoByTwoInputs, lemma: Lemma) -> Result<()> {
    i.validate()?;
    match lemma {
        Lemma::Variance if !close(i.mu[0], i.mu[1]) => Err(Error::HypothesisNotMet(
            "variance lemma needs mu1 = mu2".into(),
        )),
        Lemma::Mean if !close(i.sigma2[0], i.sigma2[1]) || i.mu[0] != 0.0 => Err(
            Error::HypothesisNotMet("mean lemma needs sigma1^2 = sigma2^2 and mu1 = 0".into()),
        ),
        Lemma::Significance => {
            let z = i.z();
            if i.v[0] <= 0.0 || i.v[1] <= 0.0 {
                Err(Error::HypothesisNotMet(
                    "significance lemma needs v1, v2 > 0".into(),
                ))
            } else if close(z[0].abs(), z[1].abs()) {
                Err(Error::HypothesisNotMet(
                    "significance lemma needs |z1| != |z2|".into(),
                ))
            } else {
                Ok(())
            }
        }
        _ => Ok(()),
    }
}

/// Finite-difference signs at `inputs` compared with the lemma's case table.
pub fn check_derivative_signs(inputs: &TwoByTwoInputs, lemma: Lemma) -> Result<SignReport> {
    check_hypotheses(inputs, lemma)?;
    let distance = |i: TwoByTwoInputs| distance_from_diversification_2x2(&i);
    let entry = |i: TwoByTwoInputs| efficient_2x2(&i).map(|q| q[(0, 0)]);
    let ordered = inputs.v[1] > inputs.v[0] && inputs.v[0] > 0.0;
    let mut checks = Vec::new();
    match lemma {
        Lemma::Variance => {
            let s1 = inputs.sigma2[0].sqrt();
            let with_sigma = |s: f64| {
                let mut i = *inputs;
                i.sigma2[0] = s * s;
                i
            };
            // d has a kink where the variances coincide; the lemma is silent there
            if !close(inputs.sigma2[0], inputs.sigma2[1]) {
                let dd = central_difference(s1, |s| distance(with_sigma(s)))?;
                checks.push(SignCheck {
                    quantity: "d",
                    parameter: "sigma1",
                    derivative: dd,
                    expected: Sign::strict(inputs.sigma2[0] - inputs.sigma2[1]),
                    observed: Sign::of(dd),
                });
            }
            if ordered {
                let dq = central_difference(s1, |s| entry(with_sigma(s)))?;
                checks.push(SignCheck {
                    quantity: "q11",
                    parameter: "sigma1",
                    derivative: dq,
                    expected: Sign::Positive,
                    observed: Sign::of(dq),
                });
            }
        }
        Lemma::Mean => {
            let m2 = inputs.mu[1];
            let with_mu = |m: f64| {
                let mut i = *inputs;
                i.mu[1] = m;
                i
            };
            let expected = if m2.abs() < ZERO_THRESHOLD {
                Sign::Zero
            } else {
                Sign::strict(m2)
            };
            let dd = central_difference(m2, |m| distance(with_mu(m)))?;
            checks.push(SignCheck {
                quantity: "d",
                parameter: "mu2",
                derivative: dd,
                expected,
                observed: Sign::of(dd),
            });
            if ordered {
                let dq = central_difference(m2, |m| entry(with_mu(m)))?;
                let flipped = match expected {
                    Sign::Negative => Sign::Positive,
                    Sign::Positive => Sign::Negative,
                    Sign::Zero => Sign::Zero,
                };
                checks.push(SignCheck {
                    quantity: "q11",
                    parameter: "mu2",
                    derivative: dq,
                    expected: flipped,
                    observed: Sign::of(dq),
                });
            }
        }
        Lemma::Significance => {
            let v2 = inputs.v[1];
            let dd = central_difference(v2, |v| {
                let mut i = *inputs;
                i.v[1] = v;
                distance(i)
            })?;
            checks.push(SignCheck {
                quantity: "d",
                parameter: "v2",
                derivative: dd,
                expected: Sign::strict(inputs.v[0] - v2),
                observed: Sign::of(dd),
            });
        }
    }
    Ok(SignReport { lemma, checks })
}

/// Analytic derivative of `d^2` with respect to the lemma's parameter,
/// valid under that lemma's hypotheses.
pub fn distance_sq_derivative(inputs: &TwoByTwoInputs, lemma: Lemma) -> Result<f64> {
    check_hypotheses(inputs, lemma)?;
    let x2 = inputs.x * inputs.x;
    let [v1, v2] = inputs.v;
    let [s1, s2] = inputs.sigma2;
    let spread = (v1 + v2).powi(2) / (v2 - v1).powi(2);
    Ok(match lemma {
        Lemma::Variance => {
            8.0 * s1.sqrt() * s2 * (s1 - s2) * x2 * spread / (s1 + s2).powi(3)
        }
        Lemma::Mean => {
            let m2 = inputs.mu[1];
            8.0 * s1 * m2.powi(3) * x2 * spread / (m2 * m2 + 2.0 * s1).powi(3)
        }
        Lemma::Significance => {
            let c = x2 * (inputs.imbalance() / inputs.denominator()).powi(2);
            -4.0 * v1 * (v1 + v2) * c / (v2 - v1).powi(3)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::efficient::{solve_f_efficient, FeasibilitySpec};
    use crate::numerics::frobenius_norm;
    use proptest::prelude::*;

    fn inputs(mu: [f64; 2], sigma2: [f64; 2], v: [f64; 2]) -> TwoByTwoInputs {
        TwoByTwoInputs {
            x: 0.08,
            mu,
            sigma2,
            v,
        }
    }

    fn general(i: &TwoByTwoInputs) -> Matrix {
        let mut g = Matrix::from_diag(&i.sigma2);
        for a in 0..2 {
            for b in 0..2 {
                g[(a, b)] += i.mu[a] * i.mu[b];
            }
        }
        let spec = FeasibilitySpec::new(vec![i.x; 2], vec![i.x; 2], i.v.to_vec(), g).unwrap();
        solve_f_efficient(&spec).unwrap().particular
    }

    #[test]
    fn homogeneous_inputs_are_diversified() {
        let i = inputs([0.1, 0.1], [0.2, 0.2], [0.04, 0.07]);
        let q = efficient_2x2(&i).unwrap();
        assert!(q.max_abs_diff(&Matrix::new(2, 2, vec![0.04; 4]).unwrap()) < 1e-15);
        assert_eq!(distance_from_diversification_2x2(&i).unwrap(), 0.0);
    }

    #[test]
    fn figure_one_left_side() {
        let i = inputs([0.0, 0.0], [0.1, 0.2], [0.04, 0.07]);
        let q = efficient_2x2(&i).unwrap();
        // 0.08 (0.07 * 0.1 - 0.04 * 0.2) / (0.03 * 0.3)
        let expected = 0.08 * (0.007 - 0.008) / 0.009;
        assert!((q[(0, 0)] - expected).abs() < 1e-15);
        assert!(q[(0, 0)] < 0.04 && q[(1, 0)] > 0.04);
        assert!(q.max_abs_diff(&general(&i)) < 1e-10);
    }

    #[test]
    fn distance_closed_form_matches_frobenius() {
        let i = inputs([0.05, -0.1], [0.3, 0.15], [0.2, 0.05]);
        let q = efficient_2x2(&i).unwrap();
        let div = Matrix::new(2, 2, vec![0.04; 4]).unwrap();
        let d = frobenius_norm(&q.try_sub(&div).unwrap());
        assert!((d - distance_from_diversification_2x2(&i).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn sweeps_hit_the_expected_landmarks() {
        let p = SweepParameter::Sigma1Sq;
        let (lo, hi) = p.default_range();
        let rows = statics_sweep(&p.base_inputs(), p, &linspace(lo, hi, SWEEP_POINTS));
        assert_eq!(rows.len(), SWEEP_POINTS);
        assert!(rows[0].distance.is_none());
        let at = rows.iter().find(|r| r.param == 0.2).unwrap();
        assert_eq!(at.distance, Some(0.0));

        let p = SweepParameter::Mu2;
        let (lo, hi) = p.default_range();
        let rows = statics_sweep(&p.base_inputs(), p, &linspace(lo, hi, SWEEP_POINTS));
        let best = rows
            .iter()
            .min_by(|a, b| a.distance.unwrap().total_cmp(&b.distance.unwrap()))
            .unwrap();
        assert_eq!(best.param, 0.0);

        let p = SweepParameter::V2;
        let (lo, hi) = p.default_range();
        let rows = statics_sweep(&p.base_inputs(), p, &linspace(lo, hi, SWEEP_POINTS));
        assert!(rows.iter().any(|r| r.distance.is_none()));
        let right: Vec<f64> = rows
            .iter()
            .filter(|r| r.param > 0.04 + 1e-9)
            .filter_map(|r| r.distance)
            .collect();
        assert!(right.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn lemma_examples() {
        let below = inputs([0.0, 0.0], [0.1, 0.2], [0.04, 0.07]);
        let report = check_derivative_signs(&below, Lemma::Variance).unwrap();
        assert!(report.all_hold(), "{report:?}");
        assert_eq!(report.checks[0].observed, Sign::Negative);
        assert_eq!(report.checks[1].observed, Sign::Positive);

        let flat = inputs([0.0, 0.0], [0.2, 0.2], [0.04, 0.07]);
        let report = check_derivative_signs(&flat, Lemma::Mean).unwrap();
        assert!(report.all_hold(), "{report:?}");
        let q = report.checks.iter().find(|c| c.quantity == "q11").unwrap();
        assert!(q.derivative.abs() < 1e-6);

        let report = check_derivative_signs(&below, Lemma::Significance).unwrap();
        assert!(report.all_hold());
        assert!(matches!(
            check_derivative_signs(&below, Lemma::Mean),
            Err(Error::HypothesisNotMet(_))
        ));
        assert!(matches!(
            check_derivative_signs(&flat, Lemma::Significance),
            Err(Error::HypothesisNotMet(_))
        ));
    }

    #[test]
    fn parameter_names_round_trip() {
        for p in SweepParameter::ALL {
            assert_eq!(p.name().parse::<SweepParameter>().unwrap(), p);
        }
        assert!("sigma".parse::<SweepParameter>().is_err());
    }

    fn admissible_v() -> impl Strategy<Value = [f64; 2]> {
        (0.01f64..0.2, 0.01f64..0.2)
            .prop_filter("separated", |(a, b)| (a - b).abs() > 0.01)
            .prop_map(|(a, b)| [a, b])
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn closed_form_matches_general_solver(
            m1 in -0.5f64..0.5, m2 in -0.5f64..0.5,
            s1 in 0.01f64..0.5, s2 in 0.01f64..0.5,
            v in admissible_v(),
        ) {
            let i = inputs([m1, m2], [s1, s2], v);
            let q = efficient_2x2(&i).unwrap();
            prop_assert!(q.max_abs_diff(&general(&i)) <= 1e-10);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn variance_lemma_signs(m in -0.3f64..0.3, s1 in 0.02f64..0.5, s2 in 0.02f64..0.5, v in admissible_v()) {
            prop_assume!((s1 - s2).abs() > 0.01);
            let i = inputs([m, m], [s1, s2], v);
            let report = check_derivative_signs(&i, Lemma::Variance).unwrap();
            prop_assert!(report.all_hold(), "{:?}", report);
            let analytic = distance_sq_derivative(&i, Lemma::Variance).unwrap();
            prop_assert_eq!(Sign::strict(analytic), report.checks[0].observed);
        }

        #[test]
        fn mean_lemma_signs(m2 in -0.5f64..0.5, s in 0.02f64..0.5, v in admissible_v()) {
            prop_assume!(m2.abs() > 0.02);
            let i = inputs([0.0, m2], [s, s], v);
            let report = check_derivative_signs(&i, Lemma::Mean).unwrap();
            prop_assert!(report.all_hold(), "{:?}", report);
            let analytic = distance_sq_derivative(&i, Lemma::Mean).unwrap();
            prop_assert_eq!(Sign::strict(analytic), report.checks[0].observed);
        }

        #[test]
        fn significance_lemma_signs(m in -0.3f64..0.3, s1 in 0.02f64..0.5, s2 in 0.02f64..0.5, v in admissible_v()) {
            prop_assume!((s1 - s2).abs() > 0.01);
            let i = inputs([m, m], [s1, s2], v);
            let report = check_derivative_signs(&i, Lemma::Significance).unwrap();
            prop_assert!(report.all_hold(), "{:?}", report);
            let analytic = distance_sq_derivative(&i, Lemma::Significance).unwrap();
            prop_assert_eq!(Sign::strict(analytic), report.checks[0].observed);
        }

        #[test]
        fn distance_is_scale_free_in_v(
            m1 in -0.5f64..0.5, m2 in -0.5f64..0.5,
            s1 in 0.01f64..0.5, s2 in 0.01f64..0.5,
            v in admissible_v(), c in 0.1f64..10.0,
        ) {
            let i = inputs([m1, m2], [s1, s2], v);
            let scaled = inputs([m1, m2], [s1, s2], [c * v[0], c * v[1]]);
            let a = distance_from_diversification_2x2(&i).unwrap();
            let b = distance_from_diversification_2x2(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
        }

        #[test]
        fn distance_symmetric_under_asset_swap(
            m1 in -0.5f64..0.5, m2 in -0.5f64..0.5,
            s1 in 0.01f64..0.5, s2 in 0.01f64..0.5,
            v in admissible_v(),
        ) {
            let a = distance_from_diversification_2x2(&inputs([m1, m2], [s1, s2], v)).unwrap();
            let b = distance_from_diversification_2x2(&inputs([m2, m1], [s2, s1], v)).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-12));
        }
    }
}
