//! A transport instance `(X, Y, mu, nu, c)` and its JSON file format.
//!
//! ```json
//! { "X": {"points": ["a", "b"], "dist": [[0, 1], [1, 0]]},
//!   "Y": "same",
//!   "mu": [0.5, 0.5], "nu": [0.5, 0.5],
//!   "cost": [[0, 1], [1, 0]] }
//! ```

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::measure::{CostModel, Marginal, MetricSample, TriangleCheck, CONSTRUCTION_TOL};

/// Version of the problem file schema understood by [`Problem::from_json_str`].
pub const PROBLEM_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    x: MetricSample,
    y: MetricSample,
    mu: Marginal,
    nu: Marginal,
    cost: CostModel,
    same_space: bool,
}

impl Problem {
    pub fn new(x: MetricSample, y: MetricSample, mu: Marginal, nu: Marginal, cost: Array2<f64>) -> Result<Self> {
        Self::build(x, y, mu, nu, cost, false)
    }

    /// An instance with `Y = X` declared explicitly.
    pub fn on_same_space(x: MetricSample, mu: Marginal, nu: Marginal, cost: Array2<f64>) -> Result<Self> {
        let y = x.clone();
        Self::build(x, y, mu, nu, cost, true)
    }

    fn build(
        x: MetricSample,
        y: MetricSample,
        mu: Marginal,
        nu: Marginal,
        cost: Array2<f64>,
        same_space: bool,
    ) -> Result<Self> {
        if mu.len() != x.len() {
            return Err(Error::Validation(format!(
                "mu has {} weights but X has {} points",
                mu.len(),
                x.len()
            )));
        }
        if nu.len() != y.len() {
            return Err(Error::Validation(format!(
                "nu has {} weights but Y has {} points",
                nu.len(),
                y.len()
            )));
        }
        let cost = CostModel::new(cost, &x, &y)?;
        Ok(Self {
            x,
            y,
            mu,
            nu,
            cost,
            same_space,
        })
    }

    pub fn x(&self) -> &MetricSample {
        &self.x
    }

    pub fn y(&self) -> &MetricSample {
        &self.y
    }

    pub fn mu(&self) -> &Marginal {
        &self.mu
    }

    pub fn nu(&self) -> &Marginal {
        &self.nu
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x.len(), self.y.len())
    }

    pub fn same_space(&self) -> bool {
        self.same_space
    }

    /// `Y = X` was declared and the cost equals the distance entrywise.
    pub fn is_distance_cost(&self) -> bool {
        self.same_space
            && self
                .cost
                .cost()
                .iter()
                .zip(self.x.dist().iter())
                .all(|(c, d)| (c - d).abs() <= CONSTRUCTION_TOL)
    }

    pub fn ensure_distance_cost(&self) -> Result<()> {
        if !self.same_space {
            return Err(Error::Argument(
                "distance-cost mode requires Y declared as \"same\"".into(),
            ));
        }
        if !self.is_distance_cost() {
            return Err(Error::Argument("cost does not equal the distance on X".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str, check: TriangleCheck) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_problem(check)
    }

    pub fn to_json_string(&self) -> String {
        let file = ProblemFile::from_problem(self);
        serde_json::to_string_pretty(&file).expect("problem file serializes")
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    #[serde(rename = "X")]
    x: SpaceSpec,
    #[serde(rename = "Y")]
    y: SecondSpace,
    mu: Vec<f64>,
    nu: Vec<f64>,
    cost: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpaceSpec {
    points: Vec<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dist: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum SecondSpace {
    Tag(String),
    Space(SpaceSpec),
}

fn to_table(field: &str, rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != m {
            return Err(Error::Parse(format!(
                "{field}: row {i} has {} entries, expected {m}",
                row.len()
            )));
        }
    }
    Ok(Array2::from_shape_fn((n, m), |(i, j)| rows[i][j]))
}

fn point_labels(points: &[Value]) -> Vec<String> {
    points
        .iter()
        .map(|p| match p {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        })
        .collect()
}

fn space(field: &str, spec: SpaceSpec, check: TriangleCheck) -> Result<MetricSample> {
    let dist = spec
        .dist
        .ok_or_else(|| Error::Parse(format!("{field}: missing field `dist`")))?;
    let dist = to_table(&format!("{field}.dist"), &dist)?;
    MetricSample::with_check(point_labels(&spec.points), dist, check)
        .map_err(|e| Error::Validation(format!("{field}: {e}")))
}

fn table_rows(t: &Array2<f64>) -> Vec<Vec<f64>> {
    t.rows().into_iter().map(|r| r.to_vec()).collect()
}

impl ProblemFile {
    fn into_problem(self, check: TriangleCheck) -> Result<Problem> {
        let x = space("X", self.x, check)?;
        let mu = Marginal::from_vec(self.mu).map_err(|e| Error::Validation(format!("mu: {e}")))?;
        let nu = Marginal::from_vec(self.nu).map_err(|e| Error::Validation(format!("nu: {e}")))?;
        let cost = to_table("cost", &self.cost)?;
        match self.y {
            SecondSpace::Tag(tag) if tag == "same" => Problem::on_same_space(x, mu, nu, cost),
            SecondSpace::Tag(tag) => Err(Error::Parse(format!(
                "Y: expected \"same\" or an object, found \"{tag}\""
            ))),
            SecondSpace::Space(spec) => {
                let y = space("Y", spec, check)?;
                Problem::new(x, y, mu, nu, cost)
            }
        }
    }

    fn from_problem(p: &Problem) -> Self {
        let spec = |s: &MetricSample| SpaceSpec {
            points: s.points().iter().cloned().map(Value::String).collect(),
            dist: Some(table_rows(s.dist())),
        };
        ProblemFile {
            x: spec(&p.x),
            y: if p.same_space {
                SecondSpace::Tag("same".into())
            } else {
                SecondSpace::Space(spec(&p.y))
            },
            mu: p.mu.weights().to_vec(),
            nu: p.nu.weights().to_vec(),
            cost: table_rows(p.cost.cost()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_POINT: &str = r#"{
        "X": {"points": ["a", "b"], "dist": [[0, 1], [1, 0]]},
        "Y": "same",
        "mu": [0.9, 0.1],
        "nu": [0.1, 0.9],
        "cost": [[0, 1], [1, 0]]
    }"#;

    #[test]
    fn parses_same_space_file() {
        let p = Problem::from_json_str(TWO_POINT, TriangleCheck::Enforce).unwrap();
        assert!(p.same_space());
        assert!(p.is_distance_cost());
        assert_eq!(p.shape(), (2, 2));
        assert_eq!(p.x().points(), &["a".to_string(), "b".to_string()]);
        assert_eq!(p.cost().lip_a(), 1.0);
    }

    #[test]
    fn parses_explicit_second_space_with_numeric_labels() {
        let text = r#"{
            "X": {"points": [1], "dist": [[0]]},
            "Y": {"points": [10, 20, 30], "dist": [[0,1,2],[1,0,1],[2,1,0]]},
            "mu": [1.0], "nu": [0.2, 0.3, 0.5],
            "cost": [[1, 2, 3]]
        }"#;
        let p = Problem::from_json_str(text, TriangleCheck::Enforce).unwrap();
        assert!(!p.same_space());
        assert_eq!(p.shape(), (1, 3));
        assert_eq!(p.y().points()[2], "30");
        assert!(p.ensure_distance_cost().is_err());
    }

    #[test]
    fn round_trips_through_json() {
        let p = Problem::from_json_str(TWO_POINT, TriangleCheck::Enforce).unwrap();
        let again = Problem::from_json_str(&p.to_json_string(), TriangleCheck::Enforce).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn reports_parse_context() {
        let err = Problem::from_json_str(r#"{"X": {"points": [1]}}"#, TriangleCheck::Enforce).unwrap_err();
        match err {
            Error::Parse(msg) => assert!(msg.contains("line"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
        let ragged = TWO_POINT.replace("\"cost\": [[0, 1], [1, 0]]", "\"cost\": [[0, 1], [1]]");
        let err = Problem::from_json_str(&ragged, TriangleCheck::Enforce).unwrap_err();
        assert!(matches!(err, Error::Parse(ref m) if m.contains("cost: row 1")), "{err:?}");
        let bad_tag = TWO_POINT.replace("\"same\"", "\"other\"");
        assert!(matches!(
            Problem::from_json_str(&bad_tag, TriangleCheck::Enforce),
            Err(Error::Parse(_))
        ));
    }

    #[test]
    fn reports_invariant_violations() {
        let bad_mu = TWO_POINT.replace("[0.9, 0.1]", "[1.0, 0.0]");
        let err = Problem::from_json_str(&bad_mu, TriangleCheck::Enforce).unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.starts_with("mu")), "{err:?}");
        let missing_dist = TWO_POINT.replace(", \"dist\": [[0, 1], [1, 0]]", "");
        assert!(matches!(
            Problem::from_json_str(&missing_dist, TriangleCheck::Enforce),
            Err(Error::Parse(_))
        ));
    }
}
