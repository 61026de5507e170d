//! Scenario configuration: built-in calibrations and JSON scenario files.
//!
//! A file looks like
//!
//! ```json
//! {
//!   "name": "example",
//!   "assets": { "mu": [...], "sigma2": [...], "gamma": [...], "q_tot": [...] },
//!   "banks": { "kappa": [...], "alpha": [[...]], "holdings": [[...]] },
//!   "shock": { "family": "normal", "mean": [...], "variance": [...] },
//!   "run": { "samples": 100000, "seed": 7 }
//! }
//! ```
//!
//! `assets.q_nonbank`, `assets.p0`, `banks.budgets`, `shock` and `run` are
//! optional. Matrices are arrays of rows.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::model::{derive_nonbank_holdings, AssetUniverse, BankingSector, MarketModel};
use crate::numerics::Matrix;

/// Seed used when neither the file nor the caller supplies one.
pub const DEFAULT_SEED: u64 = 20_240_917;
/// Sample count used when the file does not specify one.
pub const DEFAULT_SAMPLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShockFamily {
    #[default]
    Normal,
}

/// Independent per-asset shock distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShockDistribution {
    #[serde(default)]
    pub family: ShockFamily,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub assets: AssetUniverse,
    pub banks: BankingSector,
    pub shock: ShockDistribution,
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetsFile {
    mu: Vec<f64>,
    sigma2: Vec<f64>,
    gamma: Vec<f64>,
    q_tot: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_nonbank: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p0: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BanksFile {
    kappa: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budgets: Option<Vec<f64>>,
    holdings: Vec<Vec<f64>>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    assets: AssetsFile,
    banks: BanksFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shock: Option<ShockDistribution>,
    #[serde(default)]
    run: RunFile,
}

fn matrix_field(name: &str, rows: &[Vec<f64>], cols_hint: usize) -> Result<Matrix> {
    if rows.is_empty() {
        return Err(Error::validation(
            "VALIDATION_DIMENSION",
            format!("{name} has no rows"),
        ));
    }
    if let Some(r) = rows.iter().position(|r| r.len() != rows[0].len()) {
        return Err(Error::validation(
            "VALIDATION_DIMENSION",
            format!(
                "{name} row {} has length {}, expected {}",
                r + 1,
                rows[r].len(),
                rows[0].len()
            ),
        ));
    }
    if rows[0].len() != cols_hint {
        return Err(Error::validation(
            "VALIDATION_DIMENSION",
            format!("{name} has {} columns, expected {cols_hint}", rows[0].len()),
        ));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::validation(
            "VALIDATION_NONFINITE",
            format!("{name} contains a non-finite entry"),
        ));
    }
    Matrix::from_rows(rows)
}

impl ScenarioConfig {
    fn from_file(file: ScenarioFile) -> Result<Self> {
        let n = file.banks.kappa.len();
        let alpha = matrix_field("banks.alpha", &file.banks.alpha, n)?;
        let holdings = matrix_field("banks.holdings", &file.banks.holdings, n)?;
        let k = file.assets.mu.len();
        if holdings.rows() != k || alpha.rows() != k {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!(
                    "banks.alpha has {} rows and banks.holdings {} rows, expected {k}",
                    alpha.rows(),
                    holdings.rows()
                ),
            ));
        }
        if file.assets.q_tot.len() != k {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!("assets.q_tot has length {}, expected {k}", file.assets.q_tot.len()),
            ));
        }
        let q_nonbank = match file.assets.q_nonbank {
            Some(v) => v,
            None => derive_nonbank_holdings(&file.assets.q_tot, &holdings)?,
        };
        let p0 = file.assets.p0.unwrap_or_else(|| vec![1.0; k]);
        let assets = AssetUniverse::new(
            file.assets.mu,
            file.assets.sigma2,
            file.assets.gamma,
            file.assets.q_tot,
            q_nonbank,
            p0,
        )?;
        let budgets = file.banks.budgets.unwrap_or_else(|| holdings.col_sums());
        let banks = BankingSector::new(file.banks.kappa, alpha, budgets, holdings)?;
        let shock = file.shock.unwrap_or_else(|| ShockDistribution {
            family: ShockFamily::Normal,
            mean: assets.mu.clone(),
            variance: assets.sigma2.clone(),
        });
        let config = ScenarioConfig {
            name: file.name,
            assets,
            banks,
            shock,
            samples: file.run.samples.unwrap_or(DEFAULT_SAMPLES),
            seed: file.run.seed.unwrap_or(DEFAULT_SEED),
        };
        config.validate()?;
        Ok(config)
    }

    /// Fields equal to their derived defaults are left out so that
    /// overrides of the underlying inputs carry through.
    fn to_file(&self) -> ScenarioFile {
        let derived_nonbank =
            derive_nonbank_holdings(&self.assets.q_tot, &self.banks.holdings).ok();
        let shock_is_default =
            self.shock.mean == self.assets.mu && self.shock.variance == self.assets.sigma2;
        ScenarioFile {
            name: self.name.clone(),
            assets: AssetsFile {
                mu: self.assets.mu.clone(),
                sigma2: self.assets.sigma2.clone(),
                gamma: self.assets.gamma.clone(),
                q_tot: self.assets.q_tot.clone(),
                q_nonbank: (derived_nonbank.as_ref() != Some(&self.assets.q_nonbank))
                    .then(|| self.assets.q_nonbank.clone()),
                p0: self
                    .assets
                    .p0
                    .iter()
                    .any(|&p| p != 1.0)
                    .then(|| self.assets.p0.clone()),
            },
            banks: BanksFile {
                kappa: self.banks.kappa.clone(),
                alpha: self.banks.alpha.to_rows(),
                budgets: (self.banks.holdings.col_sums() != self.banks.budgets)
                    .then(|| self.banks.budgets.clone()),
                holdings: self.banks.holdings.to_rows(),
            },
            shock: (!shock_is_default).then(|| self.shock.clone()),
            run: RunFile {
                samples: Some(self.samples),
                seed: Some(self.seed),
            },
        }
    }

    /// Checks every invariant, returning the first violation.
    pub fn validate(&self) -> Result<()> {
        self.assets.validate()?;
        self.banks.validate()?;
        let k = self.assets.count();
        if self.banks.alpha.rows() != k {
            return Err(Error::validation(
                "VALIDATION_DIMENSION",
                format!("banks are defined over {} assets, expected {k}", self.banks.alpha.rows()),
            ));
        }
        for (name, v) in [("shock.mean", &self.shock.mean), ("shock.variance", &self.shock.variance)] {
            if v.len() != k {
                return Err(Error::validation(
                    "VALIDATION_DIMENSION",
                    format!("{name} has length {}, expected {k}", v.len()),
                ));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::validation(
                    "VALIDATION_NONFINITE",
                    format!("{name} contains a non-finite entry"),
                ));
            }
        }
        if let Some(i) = self.shock.variance.iter().position(|&s| s <= 0.0) {
            return Err(Error::validation(
                "VALIDATION_SIGMA",
                format!("shock.variance[{i}] = {} must be positive", self.shock.variance[i]),
            ));
        }
        if self.samples == 0 {
            return Err(Error::validation("VALIDATION_SAMPLES", "run.samples must be at least 1"));
        }
        Ok(())
    }

    pub fn model(&self) -> Result<MarketModel> {
        MarketModel::new(self.assets.clone(), self.banks.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serialises")
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self.to_file()).expect("scenario serialises")
    }

    /// Parses and validates a scenario from a JSON tree; `origin` names the
    /// source in error messages.
    pub fn from_value(value: Value, origin: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_value(value).map_err(|e| Error::Parse {
            path: origin.to_string(),
            message: e.to_string(),
        })?;
        ScenarioConfig::from_file(file)
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        ScenarioConfig::from_value(parse_json(text, origin)?, origin)
    }
}

fn parse_json(text: &str, origin: &str) -> Result<Value> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_string(),
        message: e.to_string(),
    })
}

/// Reads, overrides and validates a scenario file.
pub fn load_scenario(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let origin = path.display().to_string();
    let mut value = parse_json(&text, &origin)?;
    for o in overrides {
        apply_override(&mut value, o)?;
    }
    ScenarioConfig::from_value(value, &origin)
}

pub fn save_scenario(config: &ScenarioConfig, path: &Path) -> Result<()> {
    let mut text = config.to_json();
    text.push('\n');
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Applies `a.b.0=value` to a JSON tree. The value is parsed as JSON when
/// possible and taken as a string otherwise. Missing object keys are
/// created; array indices must exist.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let bad = |msg: String| Error::validation("VALIDATION_OVERRIDE", msg);
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| bad(format!("override '{assignment}' is not of the form key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(bad(format!("override '{assignment}' has an empty key")));
    }
    let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    for segment in path.split('.') {
        node = match node {
            Value::Array(items) => {
                let len = items.len();
                let idx: usize = segment
                    .parse()
                    .map_err(|_| bad(format!("'{segment}' in '{path}' is not an array index")))?;
                items
                    .get_mut(idx)
                    .ok_or_else(|| bad(format!("index {idx} in '{path}' out of range (length {len})")))?
            }
            Value::Object(map) => map
                .entry(segment.to_string())
                .or_insert(Value::Object(Default::default())),
            _ => return Err(bad(format!("'{path}' descends into a scalar at '{segment}'"))),
        };
    }
    *node = value;
    Ok(())
}

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_NAMES: [&str; 4] = ["L", "I", "H", "B"];

const TEN_MU: [f64; 10] = [0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.3];

/// Ten assets, two banks with leverage 9 and 10 trading proportionally,
/// 0.08 of each asset held by banks (0.04 each), the rest by nonbanks.
fn ten_asset_economy(name: &str, gamma: [f64; 10], sigma: [f64; 10]) -> ScenarioConfig {
    let k = 10;
    let sigma2: Vec<f64> = sigma.iter().map(|s| s * s).collect();
    let holdings = Matrix::new(k, 2, vec![0.04; 2 * k]).expect("static shape");
    let assets = AssetUniverse::with_unit_prices(
        TEN_MU.to_vec(),
        sigma2.clone(),
        gamma.to_vec(),
        vec![1.0; k],
        vec![0.92; k],
    )
    .expect("static calibration is valid");
    let banks = BankingSector::from_holdings(
        vec![9.0, 10.0],
        Matrix::new(k, 2, vec![0.1; 2 * k]).expect("static shape"),
        holdings,
    )
    .expect("static calibration is valid");
    ScenarioConfig {
        name: name.to_string(),
        assets,
        banks,
        shock: ShockDistribution {
            family: ShockFamily::Normal,
            mean: TEN_MU.to_vec(),
            variance: sigma2,
        },
        samples: DEFAULT_SAMPLES,
        seed: DEFAULT_SEED,
    }
}

/// Three assets and three banks with zero-mean shocks; leverage chosen so
/// that `v = (0.15, 0.1, 0.05)`.
fn three_bank_fixture() -> ScenarioConfig {
    let k = 3;
    let sigma2 = vec![0.15, 0.2, 0.3];
    let assets = AssetUniverse::with_unit_prices(
        vec![0.0; k],
        sigma2.clone(),
        vec![1.0; k],
        vec![1.0; k],
        vec![0.92; k],
    )
    .expect("static calibration is valid");
    let banks = BankingSector::from_holdings(
        vec![0.92 * 0.15, 0.92 * 0.1, 0.92 * 0.05],
        Matrix::new(k, 3, vec![1.0 / 3.0; 9]).expect("static shape"),
        Matrix::new(k, 3, vec![0.08 / 3.0; 9]).expect("static shape"),
    )
    .expect("static calibration is valid");
    ScenarioConfig {
        name: "B".to_string(),
        assets,
        banks,
        shock: ShockDistribution {
            family: ShockFamily::Normal,
            mean: vec![0.0; k],
            variance: sigma2,
        },
        samples: DEFAULT_SAMPLES,
        seed: DEFAULT_SEED,
    }
}

/// `L` (liquidity), `I` (intermediate crisis), `H` (high risk, high
/// illiquidity) or `B` (three-bank fixture); case-insensitive.
pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    match name.to_ascii_uppercase().as_str() {
        "L" => Ok(ten_asset_economy(
            "L",
            [9.0, 9.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 7.0, 7.0],
            [0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 0.3, 0.3],
        )),
        "I" => Ok(ten_asset_economy(
            "I",
            [9.0, 9.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 1.0, 1.0],
            [0.1, 0.1, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2, 1.0, 1.0],
        )),
        "H" => Ok(ten_asset_economy(
            "H",
            [3.0, 3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0],
            [0.9, 0.9, 1.1, 1.1, 1.1, 1.1, 1.1, 1.1, 1.2, 1.2],
        )),
        "B" => Ok(three_bank_fixture()),
        _ => Err(Error::validation(
            "VALIDATION_SCENARIO",
            format!("unknown builtin scenario '{name}' (expected L, I, H or B)"),
        )),
    }
}

/// A builtin name or a path to a scenario file, with overrides applied.
pub fn resolve_scenario(spec: &str, overrides: &[String]) -> Result<ScenarioConfig> {
    if BUILTIN_NAMES.iter().any(|n| n.eq_ignore_ascii_case(spec)) {
        let mut value = builtin_scenario(spec)?.to_value();
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        return ScenarioConfig::from_value(value, spec);
    }
    load_scenario(Path::new(spec), overrides)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid_and_stable() {
        for name in BUILTIN_NAMES {
            let c = builtin_scenario(name).unwrap();
            c.validate().unwrap();
            let m = c.model().unwrap();
            assert!(m.is_stable(), "{name}");
        }
    }

    #[test]
    fn builtin_parameters() {
        let l = builtin_scenario("L").unwrap();
        assert_eq!(l.assets.gamma, vec![9.0, 9.0, 8.0, 8.0, 8.0, 8.0, 8.0, 8.0, 7.0, 7.0]);
        assert!((l.assets.sigma2[9] - 0.09).abs() < 1e-15);
        let i = builtin_scenario("i").unwrap();
        assert_eq!(i.assets.gamma[8..], [1.0, 1.0]);
        assert_eq!(i.assets.sigma2[8..], [1.0, 1.0]);
        let h = builtin_scenario("H").unwrap();
        assert_eq!(h.assets.gamma, vec![3.0, 3.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0, 1.0, 1.0]);
        assert!((h.assets.sigma2[0] - 0.81).abs() < 1e-15);
        assert!((h.assets.sigma2[9] - 1.44).abs() < 1e-15);
        assert_eq!(l.banks.budgets.len(), 2);
        assert!((l.banks.budgets[0] - 0.4).abs() < 1e-12);
        assert!(builtin_scenario("X").is_err());
    }

    #[test]
    fn fixture_significance() {
        let m = builtin_scenario("B").unwrap().model().unwrap();
        for (a, b) in m.significance().iter().zip([0.15, 0.1, 0.05]) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn significance_matches_printed_values() {
        let expected = [("L", [1.23, 1.37]), ("I", [2.91, 3.23]), ("H", [5.54, 6.16])];
        for (name, v) in expected {
            let m = builtin_scenario(name).unwrap().model().unwrap();
            for (a, b) in m.significance().iter().zip(v) {
                assert!((a - b).abs() <= 0.01, "{name}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for name in BUILTIN_NAMES {
            let c = builtin_scenario(name).unwrap();
            let path = dir.path().join(format!("{name}.json"));
            save_scenario(&c, &path).unwrap();
            assert_eq!(load_scenario(&path, &[]).unwrap(), c);
        }
    }

    fn minimal() -> Value {
        serde_json::json!({
            "name": "tiny",
            "assets": {"mu": [0.0, 0.1], "sigma2": [0.1, 0.2], "gamma": [1.0, 2.0], "q_tot": [1.0, 1.0]},
            "banks": {"kappa": [1.0, 2.0], "alpha": [[0.5, 0.4], [0.5, 0.6]], "holdings": [[0.1, 0.2], [0.3, 0.1]]}
        })
    }

    #[test]
    fn optional_fields_are_derived() {
        let c = ScenarioConfig::from_value(minimal(), "mem").unwrap();
        assert!((c.assets.q_nonbank[0] - 0.7).abs() < 1e-15);
        assert!((c.assets.q_nonbank[1] - 0.6).abs() < 1e-15);
        assert_eq!(c.assets.p0, vec![1.0, 1.0]);
        assert!((c.banks.budgets[0] - 0.4).abs() < 1e-15);
        assert_eq!(c.shock.mean, c.assets.mu);
        assert_eq!(c.samples, DEFAULT_SAMPLES);
        assert_eq!(c.seed, DEFAULT_SEED);
    }

    #[test]
    fn validation_errors() {
        let mut v = minimal();
        v["banks"]["alpha"] = serde_json::json!([[0.5, 0.4], [0.47, 0.6]]);
        let err = ScenarioConfig::from_value(v, "mem").unwrap_err();
        assert_eq!(err.code(), "VALIDATION_ALPHA");
        assert_eq!(err.to_string(), "alpha column 1 sums to 0.97");

        let mut v = minimal();
        v["assets"].as_object_mut().unwrap().remove("sigma2");
        let err = ScenarioConfig::from_value(v, "mem").unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(err.to_string().contains("sigma2"));

        let mut v = minimal();
        v["assets"]["sigma2"][0] = serde_json::json!(-0.1);
        assert_eq!(ScenarioConfig::from_value(v, "mem").unwrap_err().code(), "VALIDATION_SIGMA");

        let mut v = minimal();
        v["run"] = serde_json::json!({"samples": 0});
        assert_eq!(ScenarioConfig::from_value(v, "mem").unwrap_err().code(), "VALIDATION_SAMPLES");

        let mut v = minimal();
        v["banks"]["holdings"] = serde_json::json!([[0.1, 0.2], [0.3]]);
        assert_eq!(ScenarioConfig::from_value(v, "mem").unwrap_err().code(), "VALIDATION_DIMENSION");
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ScenarioConfig::from_json("{\n  \"name\": \"x\",\n  oops\n}", "f.json").unwrap_err();
        assert_eq!(err.code(), "PARSE_ERROR");
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn overrides_apply_before_validation() {
        let mut v = minimal();
        apply_override(&mut v, "assets.sigma2.0=0.3").unwrap();
        apply_override(&mut v, "run.seed=42").unwrap();
        apply_override(&mut v, "name=renamed").unwrap();
        let c = ScenarioConfig::from_value(v, "mem").unwrap();
        assert_eq!(c.assets.sigma2[0], 0.3);
        assert_eq!(c.seed, 42);
        assert_eq!(c.name, "renamed");

        let mut v = minimal();
        assert!(apply_override(&mut v, "assets.sigma2.7=0.3").is_err());
        assert!(apply_override(&mut v, "assets.sigma2.0.x=0.3").is_err());
        assert!(apply_override(&mut v, "noequals").is_err());

        let c = resolve_scenario("L", &["assets.sigma2.0=-1".to_string()]).unwrap_err();
        assert_eq!(c.code(), "VALIDATION_SIGMA");
    }
}
