//! CSV persistence for feature tables and image manifests.
//!
//! Feature tables carry one row per sample with the 18 sector statistics in
//! canonical order. Values are written with 17 significant digits, so any
//! finite binary64 survives a write/read cycle unchanged.

use std::collections::HashSet;

use thiserror::Error;

use crate::dataset::{Dataset, DatasetError, Disease, Label, LabeledSample};
use crate::grid::{Eye, FeatureVector, GridError, GridSpec, NUM_FEATURES};
use crate::numfmt::fmt_f64;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("header mismatch: expected '{expected}', found '{found}'")]
    HeaderMismatch { expected: String, found: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
    #[error("row {row}: expected {expected} cells, found {found}")]
    RowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column {column}: '{value}' is not a finite number")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: {message}")]
    InvalidCell { row: usize, message: String },
    #[error("duplicate id '{0}'")]
    DuplicateId(String),
    #[error("feature table needs {NUM_FEATURES} features per row, sample '{id}' has {found}")]
    WrongDimension { id: String, found: usize },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

impl From<csv::Error> for IoError {
    fn from(e: csv::Error) -> Self {
        IoError::Csv(e.to_string())
    }
}

/// Canonical feature-table header.
pub fn feature_header() -> Vec<String> {
    let mut header = vec!["id".to_string(), "label".to_string(), "disease".to_string()];
    header.extend(FeatureVector::column_names());
    header
}

fn header_line(cells: &[String]) -> String {
    cells.join(",")
}

fn reader(bytes: &[u8]) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes)
}

fn parse_number(row: usize, column: &str, cell: &str) -> Result<f64, IoError> {
    match cell.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(IoError::NonNumeric {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        }),
    }
}

fn check_header(found: Option<csv::StringRecord>, expected: &[String]) -> Result<(), IoError> {
    let found: Vec<String> = found
        .map(|r| r.iter().map(|c| c.trim().to_string()).collect())
        .unwrap_or_default();
    if found != expected {
        return Err(IoError::HeaderMismatch {
            expected: header_line(expected),
            found: header_line(&found),
        });
    }
    Ok(())
}

pub fn write_features(data: &Dataset) -> Result<Vec<u8>, IoError> {
    let mut seen = HashSet::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(feature_header())?;
    for s in data.samples() {
        if s.features.len() != NUM_FEATURES {
            return Err(IoError::WrongDimension {
                id: s.id.clone(),
                found: s.features.len(),
            });
        }
        if !seen.insert(s.id.as_str()) {
            return Err(IoError::DuplicateId(s.id.clone()));
        }
        let mut record = vec![s.id.clone(), s.label.to_string(), s.disease.to_string()];
        record.extend(s.features.iter().map(|&v| fmt_f64(v)));
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| IoError::Csv(e.to_string()))
}

/// Reads a feature table. Row numbers in errors count the header as row 1.
pub fn read_features(bytes: &[u8]) -> Result<Dataset, IoError> {
    let header = feature_header();
    let mut records = reader(bytes).into_records();
    check_header(records.next().transpose()?, &header)?;
    let mut seen = HashSet::new();
    let mut samples = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(IoError::RowLength {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = record[0].trim().to_string();
        let label: Label = record[1]
            .parse()
            .map_err(|message| IoError::InvalidCell { row, message })?;
        let disease: Disease = record[2]
            .parse()
            .map_err(|message| IoError::InvalidCell { row, message })?;
        let features = header[3..]
            .iter()
            .zip(record.iter().skip(3))
            .map(|(column, cell)| parse_number(row, column, cell))
            .collect::<Result<Vec<_>, _>>()?;
        if !seen.insert(id.clone()) {
            return Err(IoError::DuplicateId(id));
        }
        samples.push(LabeledSample::new(id, features, label, disease)?);
    }
    Ok(Dataset::new(samples)?)
}

/// Unlabelled feature rows in visit order, e.g. successive examinations of
/// one eye. Accepts either the full feature-table header or `id` followed
/// by the 18 feature columns.
pub fn read_feature_rows(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>, IoError> {
    let full = feature_header();
    let mut short = vec!["id".to_string()];
    short.extend(FeatureVector::column_names());
    let mut records = reader(bytes).into_records();
    let first = records.next().transpose()?;
    let skip = match check_header(first.clone(), &full) {
        Ok(()) => 3,
        Err(_) => {
            check_header(first, &short)?;
            1
        }
    };
    let columns = if skip == 3 { &full } else { &short };
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != columns.len() {
            return Err(IoError::RowLength {
                row,
                expected: columns.len(),
                found: record.len(),
            });
        }
        let id = record[0].trim().to_string();
        let features = columns[skip..]
            .iter()
            .zip(record.iter().skip(skip))
            .map(|(column, cell)| parse_number(row, column, cell))
            .collect::<Result<Vec<_>, _>>()?;
        if !seen.insert(id.clone()) {
            return Err(IoError::DuplicateId(id));
        }
        rows.push((id, features));
    }
    Ok(rows)
}

/// Writes unlabelled rows under the short `id` + 18 feature header read
/// by [`read_feature_rows`].
pub fn write_feature_rows(rows: &[(String, FeatureVector)]) -> Result<Vec<u8>, IoError> {
    let mut header = vec!["id".to_string()];
    header.extend(FeatureVector::column_names());
    let mut seen = HashSet::new();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header)?;
    for (id, fv) in rows {
        if !seen.insert(id.as_str()) {
            return Err(IoError::DuplicateId(id.clone()));
        }
        let mut record = vec![id.clone()];
        record.extend(fv.as_slice().iter().map(|&v| fmt_f64(v)));
        w.write_record(&record)?;
    }
    w.into_inner().map_err(|e| IoError::Csv(e.to_string()))
}

/// Rows of an `id,<name>,<name>,…` table with any number of numeric
/// columns, for models trained on something other than the 18 sector
/// statistics.
pub fn read_vectors(bytes: &[u8]) -> Result<Vec<(String, Vec<f64>)>, IoError> {
    let mut records = reader(bytes).into_records();
    let header: Vec<String> = records
        .next()
        .transpose()?
        .map(|r| r.iter().map(|c| c.trim().to_string()).collect())
        .unwrap_or_default();
    if header.len() < 2 || header[0] != "id" {
        return Err(IoError::HeaderMismatch {
            expected: "id,<column>,...".into(),
            found: header_line(&header),
        });
    }
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(IoError::RowLength {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let id = record[0].trim().to_string();
        let values = header[1..]
            .iter()
            .zip(record.iter().skip(1))
            .map(|(column, cell)| parse_number(row, column, cell))
            .collect::<Result<Vec<_>, _>>()?;
        if !seen.insert(id.clone()) {
            return Err(IoError::DuplicateId(id));
        }
        rows.push((id, values));
    }
    Ok(rows)
}

pub const MANIFEST_HEADER: [&str; 9] = [
    "filename",
    "label",
    "disease",
    "cx",
    "cy",
    "r1",
    "r2",
    "r3",
    "laterality",
];

/// One image of a cohort together with its grid placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub filename: String,
    pub label: Label,
    pub disease: Disease,
    pub grid: GridSpec,
}

pub fn write_manifest(rows: &[ManifestRow]) -> Result<Vec<u8>, IoError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MANIFEST_HEADER)?;
    for r in rows {
        let g = &r.grid;
        w.write_record([
            r.filename.clone(),
            r.label.to_string(),
            r.disease.to_string(),
            g.center_x.to_string(),
            g.center_y.to_string(),
            g.r1.to_string(),
            g.r2.to_string(),
            g.r3.to_string(),
            g.laterality.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| IoError::Csv(e.to_string()))
}

pub fn read_manifest(bytes: &[u8]) -> Result<Vec<ManifestRow>, IoError> {
    let header: Vec<String> = MANIFEST_HEADER.iter().map(|s| s.to_string()).collect();
    let mut records = reader(bytes).into_records();
    check_header(records.next().transpose()?, &header)?;
    let mut rows = Vec::new();
    for (i, record) in records.enumerate() {
        let row = i + 2;
        let record = record?;
        if record.len() != header.len() {
            return Err(IoError::RowLength {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        let invalid = |message: String| IoError::InvalidCell { row, message };
        let filename = record[0].trim().to_string();
        if filename.is_empty() {
            return Err(invalid("empty filename".into()));
        }
        let label: Label = record[1].parse().map_err(invalid)?;
        let disease: Disease = record[2].parse().map_err(invalid)?;
        if disease.label() != label {
            return Err(invalid(format!("label {label} inconsistent with disease {disease}")));
        }
        let num = |k: usize| parse_number(row, &header[k], &record[k]);
        let laterality: Eye = record[8].parse().map_err(invalid)?;
        let grid = GridSpec::new(num(3)?, num(4)?, num(5)?, num(6)?, num(7)?, laterality)
            .map_err(|e: GridError| invalid(e.to_string()))?;
        rows.push(ManifestRow {
            filename,
            label,
            disease,
            grid,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(id: &str, label: Label, disease: Disease, base: f64) -> LabeledSample {
        let features = (0..NUM_FEATURES).map(|k| base + k as f64 / 7.0).collect();
        LabeledSample::new(id, features, label, disease).unwrap()
    }

    fn table() -> Dataset {
        Dataset::new(vec![
            row("a", Label::Healthy, Disease::None, 101.3),
            row("b", Label::Diseased, Disease::Cnvm, -0.1),
            row("c,quoted", Label::Diseased, Disease::Stgd, 1e-300),
        ])
        .unwrap()
    }

    #[test]
    fn header_text() {
        assert_eq!(
            header_line(&feature_header()),
            "id,label,disease,CSF_mean,CSF_std,TIM_mean,TIM_std,SIM_mean,SIM_std,NIM_mean,\
             NIM_std,IIM_mean,IIM_std,TOM_mean,TOM_std,SOM_mean,SOM_std,NOM_mean,NOM_std,\
             IOM_mean,IOM_std"
        );
    }

    #[test]
    fn feature_round_trip() {
        let bytes = write_features(&table()).unwrap();
        let back = read_features(&bytes).unwrap();
        assert_eq!(back, table());
        assert_eq!(write_features(&back).unwrap(), bytes);
    }

    #[test]
    fn seventeen_columns_is_header_mismatch() {
        let text = String::from_utf8(write_features(&table()).unwrap()).unwrap();
        let cut: Vec<String> = text
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect();
        assert!(matches!(
            read_features(cut.join("\n").as_bytes()),
            Err(IoError::HeaderMismatch { .. })
        ));
    }

    #[test]
    fn bad_cells() {
        let text = String::from_utf8(write_features(&table()).unwrap()).unwrap();
        let label2 = text.replacen("a,-1,NONE", "a,2,NONE", 1);
        assert!(matches!(
            read_features(label2.as_bytes()),
            Err(IoError::InvalidCell { row: 2, .. })
        ));
        let first_value = text.lines().nth(1).unwrap().split(',').nth(3).unwrap().to_string();
        let word = text.replacen(&first_value, "abc", 1);
        assert!(matches!(
            read_features(word.as_bytes()),
            Err(IoError::NonNumeric { row: 2, .. })
        ));
        let nan = text.replacen(&first_value, "NaN", 1);
        assert!(matches!(read_features(nan.as_bytes()), Err(IoError::NonNumeric { .. })));
        let dup = text.replacen("b,+1", "a,+1", 1);
        assert!(matches!(read_features(dup.as_bytes()), Err(IoError::DuplicateId(_))));
        let mismatch = text.replacen("b,+1,CNVM", "b,+1,NONE", 1);
        assert!(matches!(read_features(mismatch.as_bytes()), Err(IoError::Dataset(_))));
        assert!(matches!(read_features(b""), Err(IoError::HeaderMismatch { .. })));
    }

    #[test]
    fn visit_rows_accept_both_headers() {
        let bytes = write_features(&table()).unwrap();
        let rows = read_feature_rows(&bytes).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[1].1, table().samples()[1].features);
        let text = String::from_utf8(bytes).unwrap();
        let short = text
            .replacen("id,label,disease,", "id,", 1)
            .replacen("a,-1,NONE,", "a,", 1)
            .replacen("b,+1,CNVM,", "b,", 1)
            .replacen("\"c,quoted\",+1,STGD,", "c,", 1);
        let rows = read_feature_rows(short.as_bytes()).unwrap();
        assert_eq!(rows[2].0, "c");
        assert_eq!(rows[2].1, table().samples()[2].features);

        let fv = |s: &LabeledSample| FeatureVector(s.features.clone().try_into().unwrap());
        let written: Vec<(String, FeatureVector)> =
            table().samples().iter().map(|s| (s.id.clone(), fv(s))).collect();
        let rows = read_feature_rows(&write_feature_rows(&written).unwrap()).unwrap();
        assert_eq!(rows[2], ("c,quoted".to_string(), table().samples()[2].features.clone()));
    }

    #[test]
    fn generic_vectors() {
        let rows = read_vectors(b"id,x,y\np,1,1\nq,-1,-0.5\n").unwrap();
        assert_eq!(rows, vec![("p".into(), vec![1.0, 1.0]), ("q".into(), vec![-1.0, -0.5])]);
        assert!(matches!(read_vectors(b"name,x\np,1\n"), Err(IoError::HeaderMismatch { .. })));
        assert!(matches!(read_vectors(b"id\np\n"), Err(IoError::HeaderMismatch { .. })));
        assert!(matches!(read_vectors(b"id,x\np,1,2\n"), Err(IoError::RowLength { row: 2, .. })));
        assert!(matches!(read_vectors(b"id,x\np,nan\n"), Err(IoError::NonNumeric { .. })));
        assert!(matches!(read_vectors(b"id,x\np,1\np,2\n"), Err(IoError::DuplicateId(_))));
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let rows = vec![
            ManifestRow {
                filename: "syn_0000.pgm".into(),
                label: Label::Healthy,
                disease: Disease::None,
                grid: GridSpec::new(256.5, 250.25, 34.1, 102.3, 204.6, Eye::Od).unwrap(),
            },
            ManifestRow {
                filename: "syn_0001.pgm".into(),
                label: Label::Diseased,
                disease: Disease::Cscr,
                grid: GridSpec::with_outer_radius(0.1 + 0.2, 17.0, 9.0, Eye::Os).unwrap(),
            },
        ];
        let bytes = write_manifest(&rows).unwrap();
        assert_eq!(read_manifest(&bytes).unwrap(), rows);
        let text = String::from_utf8(bytes).unwrap();
        let bad_radii = text.replacen("34.1,102.3", "134.1,102.3", 1);
        assert!(matches!(
            read_manifest(bad_radii.as_bytes()),
            Err(IoError::InvalidCell { row: 2, .. })
        ));
        let bad_eye = text.replacen(",OS", ",XX", 1);
        assert!(read_manifest(bad_eye.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn any_finite_value_round_trips(values in proptest::collection::vec(
            any::<f64>().prop_filter("finite", |v| v.is_finite()), NUM_FEATURES)) {
            let data = Dataset::new(vec![
                LabeledSample::new("x", values, Label::Healthy, Disease::None).unwrap(),
            ]).unwrap();
            let back = read_features(&write_features(&data).unwrap()).unwrap();
            for (a, b) in back.samples()[0].features.iter().zip(&data.samples()[0].features) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
