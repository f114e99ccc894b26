//! Dataset directory serialization.
//!
//! A dataset directory holds `data.csv` (header `x0..x{d-1},y0..y{t-1}`,
//! one sample per row, 17 significant digits so values round-trip exactly)
//! and `schema.json` (generator config echo, column typing, version, seed).

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::GeneratorConfig;
use super::generate::SyntheticDataset;
use crate::numkit::Tensor;
use crate::{Error, Result, ARTIFACT_VERSION};

pub const DATA_FILE: &str = "data.csv";
pub const SCHEMA_FILE: &str = "schema.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical { cardinality: usize },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Sidecar describing a dataset directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub version: String,
    pub seed: u64,
    pub n: usize,
    pub config: GeneratorConfig,
    pub features: Vec<ColumnDecl>,
    pub tasks: Vec<ColumnDecl>,
}

/// Write `data.csv` and `schema.json` into `dir` (created if missing).
pub fn save_dataset(ds: &SyntheticDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let schema = DatasetSchema {
        version: ARTIFACT_VERSION.to_string(),
        seed: ds.config.seed(),
        n: ds.sample_count(),
        config: ds.config.clone(),
        features: ds
            .feature_names()
            .into_iter()
            .map(|name| ColumnDecl {
                name,
                kind: ColumnKind::Numeric,
            })
            .collect(),
        tasks: ds
            .task_names()
            .into_iter()
            .map(|name| ColumnDecl {
                name,
                kind: ColumnKind::Numeric,
            })
            .collect(),
    };
    let schema_json = serde_json::to_string_pretty(&schema)?;
    fs::write(dir.join(SCHEMA_FILE), schema_json)?;

    let mut out = BufWriter::new(fs::File::create(dir.join(DATA_FILE))?);
    let header: Vec<String> = ds
        .feature_names()
        .into_iter()
        .chain(ds.task_names())
        .collect();
    writeln!(out, "{}", header.join(","))?;
    let (n, d) = ds.features.dims2();
    let (_, t) = ds.labels.dims2();
    for s in 0..n {
        let mut row = String::with_capacity((d + t) * 26);
        for j in 0..d {
            if j > 0 {
                row.push(',');
            }
            // 17 significant digits: exact f64 round-trip.
            row.push_str(&format!("{:.16e}", ds.features.data()[s * d + j]));
        }
        for i in 0..t {
            row.push(',');
            row.push_str(&format!("{:.16e}", ds.labels.data()[s * t + i]));
        }
        writeln!(out, "{row}")?;
    }
    out.flush()?;
    Ok(())
}

/// Read a dataset directory back, checking the sidecar against the CSV.
pub fn load_dataset(dir: &Path) -> Result<SyntheticDataset> {
    let schema_path = dir.join(SCHEMA_FILE);
    let schema_name = schema_path.display().to_string();
    let schema_text = fs::read_to_string(&schema_path)?;
    let schema: DatasetSchema = serde_json::from_str(&schema_text)
        .map_err(|e| Error::format(&schema_name, e.line(), e.to_string()))?;

    let d = schema.features.len();
    let t = schema.tasks.len();
    if d != schema.config.feature_dim() {
        return Err(Error::format(
            &schema_name,
            1,
            format!(
                "schema lists {d} feature columns but the config declares {}",
                schema.config.feature_dim()
            ),
        ));
    }
    if t != schema.config.task_count() {
        return Err(Error::format(
            &schema_name,
            1,
            format!(
                "schema lists {t} task columns but the config declares {}",
                schema.config.task_count()
            ),
        ));
    }

    let data_path = dir.join(DATA_FILE);
    let data_name = data_path.display().to_string();
    let reader = BufReader::new(fs::File::open(&data_path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&data_name, 1, "missing header line"))??;
    let names: Vec<&str> = header.split(',').collect();
    let expected: Vec<String> = schema
        .features
        .iter()
        .chain(&schema.tasks)
        .map(|c| c.name.clone())
        .collect();
    if names.len() != d + t {
        return Err(Error::format(
            &data_name,
            1,
            format!("header has {} columns, schema declares {}", names.len(), d + t),
        ));
    }
    for (got, want) in names.iter().zip(&expected) {
        if got != want {
            return Err(Error::format(
                &data_name,
                1,
                format!("header column `{got}` does not match schema column `{want}`"),
            ));
        }
    }

    let mut features = Vec::with_capacity(schema.n * d);
    let mut labels = Vec::with_capacity(schema.n * t);
    let mut rows = 0usize;
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2; // 1-based, after the header
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d + t {
            return Err(Error::format(
                &data_name,
                lineno,
                format!("row has {} cells, expected {}", cells.len(), d + t),
            ));
        }
        for (col, cell) in cells.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| {
                Error::format(
                    &data_name,
                    lineno,
                    format!(
                        "column `{}` (index {col}): invalid numeric value `{cell}`",
                        expected[col]
                    ),
                )
            })?;
            if !value.is_finite() {
                return Err(Error::format(
                    &data_name,
                    lineno,
                    format!("column `{}` (index {col}): non-finite value", expected[col]),
                ));
            }
            if col < d {
                features.push(value);
            } else {
                labels.push(value);
            }
        }
        rows += 1;
    }
    if rows != schema.n {
        return Err(Error::format(
            &data_name,
            rows + 1,
            format!("{rows} data rows, schema declares {}", schema.n),
        ));
    }

    Ok(SyntheticDataset {
        features: Tensor::new(vec![rows, d], features),
        labels: Tensor::new(vec![rows, t], labels),
        config: schema.config,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::benchgen::{generate, GenConfig};
    use proptest::prelude::*;

    fn sample_dataset() -> SyntheticDataset {
        generate(&GenConfig::uniform(2, 0.4, 50, 21)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let ds = sample_dataset();
        save_dataset(&ds, dir.path()).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back.features, ds.features);
        assert_eq!(back.labels, ds.labels);
        assert_eq!(back.config, ds.config);
    }

    #[test]
    fn rerun_of_save_is_byte_identical() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let ds = sample_dataset();
        save_dataset(&ds, dir_a.path()).unwrap();
        save_dataset(&ds, dir_b.path()).unwrap();
        let a = fs::read(dir_a.path().join(DATA_FILE)).unwrap();
        let b = fs::read(dir_b.path().join(DATA_FILE)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tampered_task_count_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample_dataset(), dir.path()).unwrap();
        // Drop one task column from the sidecar's task list.
        let path = dir.path().join(SCHEMA_FILE);
        let mut schema: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        schema["tasks"].as_array_mut().unwrap().pop();
        fs::write(&path, serde_json::to_string(&schema).unwrap()).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn non_numeric_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample_dataset(), dir.path()).unwrap();
        let path = dir.path().join(DATA_FILE);
        let mut lines: Vec<String> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        let mut cells: Vec<String> = lines[3].split(',').map(String::from).collect();
        cells[2] = "not-a-number".into();
        lines[3] = cells.join(",");
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        match &err {
            Error::Format { line, message, .. } => {
                assert_eq!(*line, 4);
                assert!(message.contains("x2"), "{message}");
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn ragged_row_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(&sample_dataset(), dir.path()).unwrap();
        let path = dir.path().join(DATA_FILE);
        let mut lines: Vec<String> = fs::read_to_string(&path)
            .unwrap()
            .lines()
            .map(String::from)
            .collect();
        lines[2] = lines[2].rsplit_once(',').unwrap().0.to_string();
        fs::write(&path, lines.join("\n") + "\n").unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("cells"), "{err}");
    }

    proptest! {
        #[test]
        fn written_values_round_trip(values in proptest::collection::vec(-1e12f64..1e12, 1..32)) {
            for &v in &values {
                let text = format!("{:.16e}", v);
                let back: f64 = text.parse().unwrap();
                prop_assert_eq!(back.to_bits(), v.to_bits());
            }
        }
    }
}
