//! Time-series datasets: ingestion, holdout splitting and subsampled variants.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub id: String,
    pub values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::InvalidDataset(format!("series `{id}` is empty")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!(
                "series `{id}` has non-finite value at position {pos}"
            )));
        }
        Ok(Self { id, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A named collection of series sharing a forecast horizon and season length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub series: Vec<TimeSeries>,
    pub horizon: usize,
    pub season_length: usize,
    /// Original-dataset family; every variant inherits it.
    pub group: String,
}

impl Dataset {
    /// Builds a dataset and checks every invariant.
    pub fn new(
        name: impl Into<String>,
        series: Vec<TimeSeries>,
        horizon: usize,
        season_length: usize,
        group: impl Into<String>,
    ) -> Result<Self> {
        let dataset = Self {
            name: name.into(),
            series,
            horizon,
            season_length,
            group: group.into(),
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::InvalidDataset("empty dataset name".into()));
        }
        if self.group.is_empty() {
            return Err(Error::InvalidDataset(format!(
                "dataset `{}` has an empty group",
                self.name
            )));
        }
        if self.series.is_empty() {
            return Err(Error::InvalidDataset(format!(
                "dataset `{}` has no series",
                self.name
            )));
        }
        if self.horizon == 0 || self.season_length == 0 {
            return Err(Error::InvalidDataset(format!(
                "dataset `{}`: horizon and season_length must be positive",
                self.name
            )));
        }
        let required = self.horizon + self.season_length;
        for s in &self.series {
            if let Some(pos) = s.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidDataset(format!(
                    "series `{}` has non-finite value at position {pos}",
                    s.id
                )));
            }
            if s.len() <= required {
                return Err(Error::SeriesTooShort {
                    series: s.id.clone(),
                    length: s.len(),
                    required,
                });
            }
        }
        Ok(())
    }

    pub fn num_series(&self) -> usize {
        self.series.len()
    }

    /// Number of points forecast when every series is predicted `horizon` steps ahead.
    pub fn num_predictions(&self) -> usize {
        self.series.len() * self.horizon
    }
}

/// Dataset with the last `horizon` points of every series held out.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    /// Training view. Its series are shorter than the parent's by `horizon`,
    /// so the length invariant of [`Dataset`] is not re-checked here.
    pub train: Dataset,
    /// Held-out tails, index-aligned with `train.series`.
    pub test: Vec<Vec<f64>>,
}

pub fn train_test_split(d: &Dataset) -> SplitDataset {
    let mut train_series = Vec::with_capacity(d.series.len());
    let mut test = Vec::with_capacity(d.series.len());
    for s in &d.series {
        let cut = s.len() - d.horizon;
        train_series.push(TimeSeries {
            id: s.id.clone(),
            values: s.values[..cut].to_vec(),
        });
        test.push(s.values[cut..].to_vec());
    }
    SplitDataset {
        train: Dataset {
            name: d.name.clone(),
            series: train_series,
            horizon: d.horizon,
            season_length: d.season_length,
            group: d.group.clone(),
        },
        test,
    }
}

/// Draws one variant per fraction, each holding `ceil(fraction * n)` whole series.
///
/// All draws come from a single ChaCha stream seeded with `seed`, so the
/// result depends only on the inputs.
pub fn subsample_variants(d: &Dataset, fractions: &[f64], seed: u64) -> Result<Vec<Dataset>> {
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no subsampling fractions given".into()));
    }
    let n = d.series.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(fractions.len());
    for &fraction in fractions {
        if !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "subsampling fraction {fraction} outside (0, 1]"
            )));
        }
        let count = (fraction * n as f64).ceil() as usize;
        if count == 0 {
            return Err(Error::InvalidArgument(format!(
                "fraction {fraction} selects no series of `{}`",
                d.name
            )));
        }
        let count = count.min(n);
        let mut picked = index::sample(&mut rng, n, count).into_vec();
        picked.sort_unstable();
        out.push(Dataset {
            name: variant_name(&d.name, fraction),
            series: picked.into_iter().map(|i| d.series[i].clone()).collect(),
            horizon: d.horizon,
            season_length: d.season_length,
            group: d.group.clone(),
        });
    }
    Ok(out)
}

pub fn variant_name(name: &str, fraction: f64) -> String {
    format!("{name}_f{fraction}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub data: PathBuf,
    pub horizon: usize,
    pub season_length: usize,
    pub group: String,
}

/// Loads a dataset from a JSON manifest and the CSV file it references.
///
/// A relative `data` path is resolved against the manifest's directory.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let manifest_path = manifest_path.as_ref();
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let data_path = if manifest.data.is_absolute() {
        manifest.data.clone()
    } else {
        manifest_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(&manifest.data)
    };
    let series = read_series_csv(&data_path)?;
    Dataset::new(
        manifest.name,
        series,
        manifest.horizon,
        manifest.season_length,
        manifest.group,
    )
}

/// Reads `series_id,step,value` rows. Series come back sorted by id.
pub fn read_series_csv(path: &Path) -> Result<Vec<TimeSeries>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let expected = ["series_id", "step", "value"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(
            1,
            format!("expected header `series_id,step,value`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut series: BTreeMap<String, (i64, Vec<f64>)> = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_err(line, e.to_string()))?;
        if record.len() != 3 {
            return Err(parse_err(line, format!("expected 3 fields, found {}", record.len())));
        }
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty series_id".into()));
        }
        let step: i64 = record[1]
            .parse()
            .map_err(|_| parse_err(line, format!("malformed step `{}`", &record[1])))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| parse_err(line, format!("malformed value `{}`", &record[2])))?;
        if !value.is_finite() {
            return Err(parse_err(line, format!("non-finite value `{}`", &record[2])));
        }

        if current.as_deref() != Some(id.as_str()) {
            if series.contains_key(&id) {
                return Err(parse_err(line, format!("rows of series `{id}` are not contiguous")));
            }
            series.insert(id.clone(), (step, vec![value]));
            current = Some(id);
            continue;
        }
        let entry = series.get_mut(&id).expect("current series present");
        if step <= entry.0 {
            return Err(parse_err(line, format!("step {step} does not increase in series `{id}`")));
        }
        entry.0 = step;
        entry.1.push(value);
    }

    series
        .into_iter()
        .map(|(id, (_, values))| TimeSeries::new(id, values))
        .collect()
}

/// Writes a dataset as `<dir>/<name>.csv` plus `<dir>/<name>.json` and returns the manifest path.
pub fn write_dataset(d: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_name = format!("{}.csv", d.name);
    let csv_path = dir.join(&csv_name);
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| Error::Parse {
        path: csv_path.clone(),
        line: 0,
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| Error::Parse {
        path: csv_path.clone(),
        line: 0,
        message: e.to_string(),
    };
    writer.write_record(["series_id", "step", "value"]).map_err(csv_err)?;
    for s in &d.series {
        for (step, v) in s.values.iter().enumerate() {
            writer
                .write_record([s.id.as_str(), &step.to_string(), &v.to_string()])
                .map_err(csv_err)?;
        }
    }
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;

    let manifest = Manifest {
        name: d.name.clone(),
        data: PathBuf::from(csv_name),
        horizon: d.horizon,
        season_length: d.season_length,
        group: d.group.clone(),
    };
    let manifest_path = dir.join(format!("{}.json", d.name));
    let body = serde_json::to_string_pretty(&manifest)?;
    fs::write(&manifest_path, body + "\n").map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

/// Every `*.json` manifest directly inside `dir`, sorted by file name.
pub fn manifest_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|ext| ext == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(id: &str, values: &[f64]) -> TimeSeries {
        TimeSeries::new(id, values.to_vec()).unwrap()
    }

    fn write_case(dir: &Path, horizon: usize, season: usize, csv: &str) -> PathBuf {
        fs::write(dir.join("data.csv"), csv).unwrap();
        let manifest = format!(
            r#"{{"name":"demo","data":"data.csv","horizon":{horizon},"season_length":{season},"group":"demo"}}"#
        );
        let path = dir.join("demo.json");
        fs::write(&path, manifest).unwrap();
        path
    }

    #[test]
    fn loads_single_series() {
        let dir = tempfile::tempdir().unwrap();
        let mut csv = String::from("series_id,step,value\n");
        for t in 0..10 {
            csv.push_str(&format!("a,{t},{}\n", t as f64 * 1.5));
        }
        let d = load_dataset(write_case(dir.path(), 2, 1, &csv)).unwrap();
        assert_eq!(d.num_series(), 1);
        assert_eq!(d.series[0].len(), 10);
        assert_eq!(d.series[0].values[3], 4.5);
    }

    #[test]
    fn nan_value_names_row() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "series_id,step,value\na,0,1\na,1,NaN\na,2,3\n";
        let err = load_dataset(write_case(dir.path(), 1, 1, csv)).unwrap_err();
        match err {
            Error::Parse { line, message, .. } => {
                assert_eq!(line, 3);
                assert!(message.contains("non-finite"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn short_series_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "series_id,step,value\nshort,0,1\nshort,1,2\nshort,2,3\n";
        let err = load_dataset(write_case(dir.path(), 2, 1, csv)).unwrap_err();
        match err {
            Error::SeriesTooShort { series, length, required } => {
                assert_eq!(series, "short");
                assert_eq!(length, 3);
                assert_eq!(required, 3);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_and_non_increasing_rows() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "series_id,step,value\na,0,1\na,1,x\n";
        assert!(matches!(
            load_dataset(write_case(dir.path(), 1, 1, csv)),
            Err(Error::Parse { line: 3, .. })
        ));
        let csv = "series_id,step,value\na,0,1\na,0,2\n";
        assert!(matches!(
            load_dataset(write_case(dir.path(), 1, 1, csv)),
            Err(Error::Parse { line: 3, .. })
        ));
        let csv = "series_id,step,value\na,0,1\nb,0,2\na,1,3\n";
        assert!(matches!(
            load_dataset(write_case(dir.path(), 1, 1, csv)),
            Err(Error::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path().join("nope.json")), Err(Error::Io { .. })));
        let path = dir.path().join("m.json");
        fs::write(&path, r#"{"name":"x","data":"absent.csv","horizon":1,"season_length":1,"group":"g"}"#).unwrap();
        assert!(matches!(load_dataset(&path), Err(Error::Io { .. })));
    }

    #[test]
    fn series_sorted_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "series_id,step,value\nz,0,1\nz,1,2\nz,2,3\na,0,4\na,1,5\na,2,6\n";
        let d = load_dataset(write_case(dir.path(), 1, 1, csv)).unwrap();
        let ids: Vec<_> = d.series.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["a", "z"]);
        assert_eq!(d.series[1].values, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn split_holds_out_tail() {
        let values: Vec<f64> = (1..=10).map(f64::from).collect();
        let d = Dataset::new("d", vec![series("a", &values), series("b", &values)], 2, 1, "g").unwrap();
        let split = train_test_split(&d);
        assert_eq!(split.train.series[0].values, (1..=8).map(f64::from).collect::<Vec<_>>());
        assert_eq!(split.test[0], [9.0, 10.0]);
        assert_eq!(split.test.len(), 2);
    }

    #[test]
    fn precondition_rejects_too_short_for_split() {
        let err = Dataset::new("d", vec![series("a", &[5.0, 7.0])], 1, 1, "g").unwrap_err();
        assert!(matches!(err, Error::SeriesTooShort { .. }));
    }

    fn ten_series() -> Dataset {
        let s = (0..10)
            .map(|i| series(&format!("s{i}"), &[i as f64, 1.0, 2.0, 3.0]))
            .collect();
        Dataset::new("base", s, 1, 1, "fam").unwrap()
    }

    #[test]
    fn subsample_counts_and_group() {
        let d = ten_series();
        let v = subsample_variants(&d, &[0.5], 7).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].num_series(), 5);
        assert_eq!(v[0].group, "fam");
        assert_eq!(v[0].name, "base_f0.5");

        let v = subsample_variants(&d, &[0.2, 0.4, 0.6, 0.8, 1.0], 7).unwrap();
        let counts: Vec<_> = v.iter().map(Dataset::num_series).collect();
        assert_eq!(counts, [2, 4, 6, 8, 10]);
    }

    #[test]
    fn subsample_deterministic() {
        let d = ten_series();
        let a = subsample_variants(&d, &[0.3, 0.7], 11).unwrap();
        let b = subsample_variants(&d, &[0.3, 0.7], 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_rejects_bad_fractions() {
        let d = ten_series();
        assert!(subsample_variants(&d, &[], 1).is_err());
        assert!(subsample_variants(&d, &[0.0], 1).is_err());
        assert!(subsample_variants(&d, &[1.5], 1).is_err());
        assert!(subsample_variants(&d, &[f64::NAN], 1).is_err());
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let d = ten_series();
        let path = write_dataset(&d, dir.path()).unwrap();
        assert_eq!(load_dataset(path).unwrap(), d);
    }
}
