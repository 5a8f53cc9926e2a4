//! File formats and output helpers. Graphs and measurements travel as JSON,
//! tabular results as CSV; files are written to a temporary sibling and
//! renamed into place so readers never see partial output.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::abelian::GroupElement;
use crate::error::{Error, Result};
use crate::gaussian::NoiseModel;
use crate::graph::Graph;

/// Graph file: `{"vertices":[...],"edges":[{"id","source","target"},...]}`.
/// Array order in the file defines the matrix index order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeFile {
    pub id: String,
    pub source: String,
    pub target: String,
}

impl GraphFile {
    pub fn from_graph(graph: &Graph) -> Self {
        GraphFile {
            vertices: graph.vertex_ids().to_vec(),
            edges: graph
                .edges()
                .iter()
                .map(|e| EdgeFile {
                    id: e.id.clone(),
                    source: graph.vertex_id(e.source).to_string(),
                    target: graph.vertex_id(e.target).to_string(),
                })
                .collect(),
        }
    }

    pub fn into_graph(self) -> Result<Graph> {
        let edges: Vec<(String, String, String)> =
            self.edges.into_iter().map(|e| (e.id, e.source, e.target)).collect();
        Graph::from_parts(self.vertices, edges)
    }
}

pub fn load_graph(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path)?;
    let file: GraphFile = serde_json::from_str(&text)?;
    file.into_graph()
}

pub fn save_graph(graph: &Graph, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&GraphFile::from_graph(graph))?;
    write_atomic(path, &text)
}

/// One edge's measurement in a file: a scalar, a d-vector, or a product
/// element with angles in radians.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasurementValue {
    Scalar(f64),
    Vector(Vec<f64>),
    Product { linear: Vec<f64>, circular: Vec<f64> },
}

/// Measurement file: `{"space":...,"edges":{"e1":value,...}}`. The optional
/// space tag, when present, must match the requested interpretation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeasurementsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<String>,
    pub edges: BTreeMap<String, MeasurementValue>,
}

fn check_space(file: &MeasurementsFile, wanted: &[&str]) -> Result<()> {
    match &file.space {
        None => Ok(()),
        Some(tag) if wanted.contains(&tag.as_str()) => Ok(()),
        Some(tag) => Err(Error::Parse(format!(
            "measurement file is tagged space={tag}, expected one of {wanted:?}"
        ))),
    }
}

fn edge_values<'f>(
    graph: &Graph,
    file: &'f MeasurementsFile,
) -> Result<Vec<&'f MeasurementValue>> {
    let m = graph.edge_count();
    if file.edges.len() != m {
        return Err(Error::Parse(format!(
            "measurement file has {} edges, graph has {m}",
            file.edges.len()
        )));
    }
    graph
        .edges()
        .iter()
        .map(|e| {
            file.edges
                .get(&e.id)
                .ok_or_else(|| Error::UnknownEdge(format!("no measurement for edge {}", e.id)))
        })
        .collect()
}

pub fn load_measurements(path: &Path) -> Result<MeasurementsFile> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Real-space measurements as an m x d matrix in graph edge order.
pub fn measurements_real(graph: &Graph, file: &MeasurementsFile) -> Result<DMatrix<f64>> {
    check_space(file, &["real", "real_d"])?;
    let values = edge_values(graph, file)?;
    let d = match values[0] {
        MeasurementValue::Scalar(_) => 1,
        MeasurementValue::Vector(v) => v.len(),
        MeasurementValue::Product { .. } => {
            return Err(Error::Parse("product measurement in a real-space file".into()))
        }
    };
    if d == 0 {
        return Err(Error::Parse("empty measurement vectors".into()));
    }
    let mut out = DMatrix::zeros(values.len(), d);
    for (e, value) in values.iter().enumerate() {
        match value {
            MeasurementValue::Scalar(s) if d == 1 => out[(e, 0)] = *s,
            MeasurementValue::Vector(v) if v.len() == d => {
                for (j, x) in v.iter().enumerate() {
                    out[(e, j)] = *x;
                }
            }
            _ => {
                return Err(Error::Parse(format!(
                    "edge {} has inconsistent measurement shape",
                    graph.edges()[e].id
                )))
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse("non-finite measurement".into()));
    }
    Ok(out)
}

/// Circle measurements (radians in the file) as unit phases in edge order.
pub fn measurements_circle(graph: &Graph, file: &MeasurementsFile) -> Result<Vec<Complex64>> {
    check_space(file, &["circle"])?;
    edge_values(graph, file)?
        .iter()
        .zip(graph.edges())
        .map(|(value, edge)| match value {
            MeasurementValue::Scalar(angle) if angle.is_finite() => {
                Ok(Complex64::from_polar(1.0, *angle))
            }
            _ => Err(Error::Parse(format!(
                "edge {} needs a finite angle in radians",
                edge.id
            ))),
        })
        .collect()
}

/// Product measurements as group elements in edge order.
pub fn measurements_product(graph: &Graph, file: &MeasurementsFile) -> Result<Vec<GroupElement>> {
    check_space(file, &["product"])?;
    let values = edge_values(graph, file)?;
    let elements: Vec<GroupElement> = values
        .iter()
        .zip(graph.edges())
        .map(|(value, edge)| match value {
            MeasurementValue::Product { linear, circular } => GroupElement::new(
                linear.clone(),
                circular.iter().map(|a| Complex64::from_polar(1.0, *a)).collect(),
            ),
            _ => Err(Error::Parse(format!(
                "edge {} needs {{\"linear\":[...],\"circular\":[...]}}",
                edge.id
            ))),
        })
        .collect::<Result<_>>()?;
    let dims = elements[0].dims();
    if elements.iter().any(|g| g.dims() != dims) {
        return Err(Error::Parse("inconsistent product measurement shapes".into()));
    }
    Ok(elements)
}

fn angle_of(z: Complex64) -> f64 {
    z.arg().rem_euclid(std::f64::consts::TAU)
}

/// Builders for writing measurement files; angles stored in [0, 2pi).
pub fn measurements_file_real(graph: &Graph, r: &DMatrix<f64>) -> MeasurementsFile {
    let edges = graph
        .edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let value = if r.ncols() == 1 {
                MeasurementValue::Scalar(r[(e, 0)])
            } else {
                MeasurementValue::Vector(r.row(e).iter().copied().collect())
            };
            (edge.id.clone(), value)
        })
        .collect();
    MeasurementsFile { space: Some("real".into()), edges }
}

pub fn measurements_file_circle(graph: &Graph, r: &[Complex64]) -> MeasurementsFile {
    let edges = graph
        .edges()
        .iter()
        .zip(r)
        .map(|(edge, z)| (edge.id.clone(), MeasurementValue::Scalar(angle_of(*z))))
        .collect();
    MeasurementsFile { space: Some("circle".into()), edges }
}

pub fn measurements_file_product(graph: &Graph, r: &[GroupElement]) -> MeasurementsFile {
    let edges = graph
        .edges()
        .iter()
        .zip(r)
        .map(|(edge, g)| {
            let value = MeasurementValue::Product {
                linear: g.linear.clone(),
                circular: g.circular.iter().map(|z| angle_of(*z)).collect(),
            };
            (edge.id.clone(), value)
        })
        .collect();
    MeasurementsFile { space: Some("product".into()), edges }
}

pub fn save_measurements(file: &MeasurementsFile, path: &Path) -> Result<()> {
    write_atomic(path, &serde_json::to_string_pretty(file)?)
}

/// Noise description as it appears in files: dense matrices row-major,
/// variant tagged.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum NoiseSpec {
    IidScalar { sigma2: f64 },
    DiagonalScalar { variances: Vec<f64> },
    FullScalar { covariance: Vec<Vec<f64>> },
    IidVector { covariance: Vec<Vec<f64>> },
    FullVector { covariance: Vec<Vec<f64>> },
}

fn dense_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Parse("covariance rows must form a square matrix".into()));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

impl NoiseSpec {
    pub fn to_model(&self) -> Result<NoiseModel> {
        Ok(match self {
            NoiseSpec::IidScalar { sigma2 } => NoiseModel::IidScalar { sigma2: *sigma2 },
            NoiseSpec::DiagonalScalar { variances } => {
                NoiseModel::DiagonalScalar { variances: variances.clone() }
            }
            NoiseSpec::FullScalar { covariance } => {
                NoiseModel::FullScalar { covariance: dense_from_rows(covariance)? }
            }
            NoiseSpec::IidVector { covariance } => {
                NoiseModel::IidVector { covariance: dense_from_rows(covariance)? }
            }
            NoiseSpec::FullVector { covariance } => {
                NoiseModel::FullVector { covariance: dense_from_rows(covariance)? }
            }
        })
    }
}

pub fn load_noise_spec(path: &Path) -> Result<NoiseSpec> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Formats with 12 significant digits, scientific notation. All floats in
/// CSV output go through this so reruns are byte-identical.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    format!("{x:.11e}")
}

/// Writes to a `.tmp` sibling and renames over the target, so a failed run
/// leaves no partial file behind.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp{}", ext.to_string_lossy(), std::process::id()),
        None => format!("tmp{}", std::process::id()),
    });
    let run = (|| {
        fs::write(&tmp, contents)?;
        fs::rename(&tmp, path)
    })();
    if run.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(run?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn graph_round_trip_preserves_order() {
        let g = Graph::from_parts(
            vec!["b", "a", "c"],
            vec![("e2", "b", "a"), ("e1", "a", "c")],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.json");
        save_graph(&g, &path).unwrap();
        let back = load_graph(&path).unwrap();
        assert_eq!(back.vertex_ids(), g.vertex_ids());
        assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn graph_file_format_parses_the_documented_shape() {
        let text = r#"{"vertices":["v1","v2"],"edges":[{"id":"e1","source":"v1","target":"v2"}]}"#;
        let file: GraphFile = serde_json::from_str(text).unwrap();
        let g = file.into_graph().unwrap();
        assert_eq!(g.vertex_count(), 2);
        assert_eq!(g.edges()[0].id, "e1");
        assert_eq!(g.edges()[0].source, 0);
        assert_eq!(g.edges()[0].target, 1);
    }

    #[test]
    fn real_measurements_round_trip() {
        let g = Graph::ring(3).unwrap();
        let r = DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 0.3, 0.4, -0.5, 0.6]);
        let file = measurements_file_real(&g, &r);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_measurements(&file, &path).unwrap();
        let back = measurements_real(&g, &load_measurements(&path).unwrap()).unwrap();
        assert_relative_eq!((back - r).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn circle_measurements_round_trip_and_enforce_the_tag() {
        let g = Graph::ring(3).unwrap();
        let r: Vec<Complex64> =
            [0.3, -1.2, 2.9].iter().map(|&a| Complex64::from_polar(1.0, a)).collect();
        let file = measurements_file_circle(&g, &r);
        assert_eq!(file.space.as_deref(), Some("circle"));
        let back = measurements_circle(&g, &file).unwrap();
        for (a, b) in back.iter().zip(&r) {
            assert!((a - b).norm() < 1e-12);
        }
        // A circle-tagged file refuses a real-space read and vice versa.
        assert!(measurements_real(&g, &file).is_err());
        let real_file = measurements_file_real(&g, &DMatrix::zeros(3, 1));
        assert!(measurements_circle(&g, &real_file).is_err());
    }

    #[test]
    fn product_measurements_round_trip() {
        let g = Graph::ring(3).unwrap();
        let r: Vec<GroupElement> = (0..3)
            .map(|e| {
                GroupElement::new(
                    vec![e as f64, -1.0],
                    vec![Complex64::from_polar(1.0, 0.7 * e as f64)],
                )
                .unwrap()
            })
            .collect();
        let file = measurements_file_product(&g, &r);
        let back = measurements_product(&g, &file).unwrap();
        for (a, b) in back.iter().zip(&r) {
            assert_eq!(a.linear, b.linear);
            assert!((a.circular[0] - b.circular[0]).norm() < 1e-12);
        }
    }

    #[test]
    fn missing_and_unknown_edges_are_rejected() {
        let g = Graph::ring(3).unwrap();
        let mut file = measurements_file_real(&g, &DMatrix::zeros(3, 1));
        file.edges.remove("e2");
        assert!(matches!(measurements_real(&g, &file), Err(Error::Parse(_))));
        file.edges.insert("e2".into(), MeasurementValue::Scalar(0.0));
        file.edges.insert("e9".into(), MeasurementValue::Scalar(0.0));
        assert!(measurements_real(&g, &file).is_err());
    }

    #[test]
    fn noise_spec_parses_and_validates() {
        let spec: NoiseSpec =
            serde_json::from_str(r#"{"variant":"iid_scalar","sigma2":0.25}"#).unwrap();
        assert!(matches!(spec.to_model().unwrap(), NoiseModel::IidScalar { sigma2 } if sigma2 == 0.25));
        let spec: NoiseSpec = serde_json::from_str(
            r#"{"variant":"full_scalar","covariance":[[2.0,1.0],[1.0,2.0]]}"#,
        )
        .unwrap();
        match spec.to_model().unwrap() {
            NoiseModel::FullScalar { covariance } => {
                assert_eq!(covariance[(0, 1)], 1.0);
                assert_eq!(covariance.nrows(), 2);
            }
            other => panic!("wrong variant {other:?}"),
        }
        let ragged: NoiseSpec =
            serde_json::from_str(r#"{"variant":"full_scalar","covariance":[[1.0],[1.0,2.0]]}"#)
                .unwrap();
        assert!(ragged.to_model().is_err());
    }

    #[test]
    fn atomic_write_leaves_no_temporary() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        write_atomic(&path, "a,b\n").unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "a,b\n");
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.path() != path)
            .collect();
        assert!(leftovers.is_empty(), "{leftovers:?}");
    }

    #[test]
    fn significant_digit_formatting_is_stable() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(format_sig(-2.0), "-2.00000000000e0");
        assert_eq!(format_sig(12345.6789), "1.23456789000e4");
    }
}
