//! Instance files and report envelopes.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nonneg::Flavor;
use crate::polytope::{HPolytope, ProjectGuard};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Arithmetic {
    #[default]
    Float,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub m: u32,
    pub n: usize,
    #[serde(rename = "D", default = "one")]
    pub d: usize,
    #[serde(default = "default_flavor")]
    pub flavor: Flavor,
}

fn one() -> usize {
    1
}

fn default_flavor() -> Flavor {
    Flavor::Cm11
}

/// Constraint attached to one data point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    /// `F(x) = f`.
    Equality(f64),
    /// `F(x) = f` with `F ≥ 0` everywhere.
    Nonneg(f64),
    /// `F(x) ∈ K`, `K` a polytope in `ℝ^D` (rows with `b1 = 0`).
    Target(HPolytope),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPoint {
    pub x: Vec<f64>,
    pub constraint: Constraint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Guards {
    /// Cap on `#S` in subset enumerations.
    pub subsets: usize,
    /// Cap on the number of subsets a scan may solve.
    pub enumeration: usize,
    pub project_eliminated: usize,
    pub project_rows: usize,
    /// Largest admissible `M`; solutions above it count as infeasible.
    pub m_cap: Option<f64>,
}

impl Default for Guards {
    fn default() -> Self {
        let g = ProjectGuard::default();
        Guards {
            subsets: 6,
            enumeration: 200_000,
            project_eliminated: g.max_eliminated,
            project_rows: g.max_rows,
            m_cap: None,
        }
    }
}

impl Guards {
    pub fn project(&self) -> ProjectGuard {
        ProjectGuard {
            max_eliminated: self.project_eliminated,
            max_rows: self.project_rows,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub k_max: Option<usize>,
    pub l_max: usize,
    /// Points per axis of the evaluation grid.
    pub grid: usize,
    pub seed: u64,
    pub arithmetic: Arithmetic,
    pub guards: Guards,
    /// Trials for sampled checks.
    pub trials: usize,
}

impl Default for Options {
    fn default() -> Self {
        Options {
            k_max: None,
            l_max: 2,
            grid: 201,
            seed: 0,
            arithmetic: Arithmetic::Float,
            guards: Guards::default(),
            trials: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub config: Config,
    pub points: Vec<DataPoint>,
    #[serde(default)]
    pub options: Options,
}

/// Scalar or vector problem, as determined by the constraint kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Scalar { nonneg: bool },
    Vector,
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Instance, Error> {
        let inst: Instance = serde_json::from_str(text).map_err(|e| Error::Input(e.to_string()))?;
        inst.validate()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serialises")
    }

    pub fn validate(&self) -> Result<(), Error> {
        let c = &self.config;
        if c.m == 0 || c.n == 0 || c.d == 0 {
            return Err(Error::Input("m, n and D must be positive".into()));
        }
        if self.points.is_empty() {
            return Err(Error::Input("no data points".into()));
        }
        for (i, p) in self.points.iter().enumerate() {
            if p.x.len() != c.n {
                return Err(Error::Input(format!("point {i} has dimension {} ≠ n", p.x.len())));
            }
            if p.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("point {i} is not finite")));
            }
            if self.points[..i].iter().any(|q| q.x == p.x) {
                return Err(Error::Input(format!("duplicate point {:?}", p.x)));
            }
            match &p.constraint {
                Constraint::Equality(v) | Constraint::Nonneg(v) if !v.is_finite() => {
                    return Err(Error::Input(format!("point {i} has a non-finite value")))
                }
                Constraint::Nonneg(v) if *v < 0.0 => {
                    return Err(Error::Input(format!("point {i}: nonnegative datum {v} < 0")))
                }
                Constraint::Target(k) if k.dim != c.d => {
                    return Err(Error::Input(format!("point {i}: target dimension {} ≠ D", k.dim)))
                }
                Constraint::Target(k) if k.rows.iter().any(|r| r.b1 != 0.0) => {
                    return Err(Error::Input(format!("point {i}: target rows must have b1 = 0")))
                }
                _ => {}
            }
        }
        self.mode().map(|_| ())
    }

    pub fn mode(&self) -> Result<Mode, Error> {
        let targets = self
            .points
            .iter()
            .filter(|p| matches!(p.constraint, Constraint::Target(_)))
            .count();
        if targets == self.points.len() {
            return Ok(Mode::Vector);
        }
        if targets > 0 {
            return Err(Error::Input("target constraints cannot be mixed with scalar ones".into()));
        }
        if self.config.d != 1 {
            return Err(Error::Input("scalar constraints require D = 1".into()));
        }
        Ok(Mode::Scalar {
            nonneg: self
                .points
                .iter()
                .any(|p| matches!(p.constraint, Constraint::Nonneg(_))),
        })
    }

    pub fn xs(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.x.clone()).collect()
    }

    /// Scalar data values (targets read as `NaN`).
    pub fn values(&self) -> Vec<f64> {
        self.points
            .iter()
            .map(|p| match p.constraint {
                Constraint::Equality(v) | Constraint::Nonneg(v) => v,
                Constraint::Target(_) => f64::NAN,
            })
            .collect()
    }

    pub fn targets(&self) -> Vec<HPolytope> {
        self.points
            .iter()
            .filter_map(|p| match &p.constraint {
                Constraint::Target(k) => Some(k.clone()),
                _ => None,
            })
            .collect()
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_string(self).expect("instance serialises");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Envelope shared by every report the CLI writes.
#[derive(Clone, Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub library_version: &'static str,
    pub instance_sha256: String,
    pub seed: u64,
    pub arithmetic: Arithmetic,
    pub body: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(inst: &Instance, body: T) -> Self {
        Report {
            library_version: env!("CARGO_PKG_VERSION"),
            instance_sha256: inst.hash(),
            seed: inst.options.seed,
            arithmetic: inst.options.arithmetic,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"config":{"m":1,"n":1},"points":[{"x":[0.0],"constraint":{"kind":"equality","payload":0.5}}]}"#;

    #[test]
    fn parses_with_defaults() {
        let inst = Instance::from_json(MINIMAL).unwrap();
        assert_eq!(inst.config.d, 1);
        assert_eq!(inst.options.guards.subsets, 6);
        assert_eq!(inst.mode().unwrap(), Mode::Scalar { nonneg: false });
        assert_eq!(inst.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_duplicates() {
        let bad = MINIMAL.replace("\"n\":1", "\"n\":1,\"extra\":2");
        assert!(Instance::from_json(&bad).is_err());
        let dup = r#"{"config":{"m":1,"n":1},"points":[
            {"x":[0.0],"constraint":{"kind":"equality","payload":0.5}},
            {"x":[0.0],"constraint":{"kind":"equality","payload":0.7}}]}"#;
        assert!(Instance::from_json(dup).is_err());
    }

    #[test]
    fn target_round_trip() {
        let text = r#"{"config":{"m":2,"n":1,"D":2},"points":[
            {"x":[0.0],"constraint":{"kind":"target","payload":{"dim":2,"rows":[{"a":[1.0,0.0],"b0":1.0}]}}}]}"#;
        let inst = Instance::from_json(text).unwrap();
        assert_eq!(inst.mode().unwrap(), Mode::Vector);
        let again = Instance::from_json(&inst.to_json()).unwrap();
        assert_eq!(inst, again);
    }
}
