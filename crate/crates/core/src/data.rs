//! UCR archive ingestion and preprocessing.

use crate::error::{Error, Result};
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// One series as read from disk, before imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSeries {
    pub label: i64,
    pub values: Vec<f64>,
}

/// Inputs as a `[n, d]` matrix plus labels in `0..m`.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub x: Tensor,
    pub y: Vec<usize>,
}

impl Split {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Split {
        Split {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub train: Split,
    pub test: Split,
    pub d: usize,
    pub m: usize,
    /// `label_map[k]` is the original label that was remapped to `k`.
    pub label_map: Vec<i64>,
    /// True when some series were shorter than `d` and were edge-filled.
    pub padded: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreprocessPolicy {
    pub z_normalize: bool,
}

impl Default for PreprocessPolicy {
    fn default() -> Self {
        PreprocessPolicy { z_normalize: true }
    }
}

fn parse_label(tok: &str) -> Option<i64> {
    let tok = tok.trim();
    if let Ok(v) = tok.parse::<i64>() {
        return Some(v);
    }
    let v: f64 = tok.parse().ok()?;
    (v.is_finite() && v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

fn parse_value(tok: &str) -> Option<f64> {
    let tok = tok.trim();
    if tok.eq_ignore_ascii_case("nan") || tok.is_empty() {
        return Some(f64::NAN);
    }
    tok.parse().ok()
}

/// Parses UCR text: one series per line, label first, tab separated.
///
/// Comma separated lines (the pre-2018 archive layout) are accepted too.
/// Ragged rows are padded with NaN to the longest row.
pub fn parse_ucr(text: &str, origin: &str) -> Result<Vec<RawSeries>> {
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let sep = if line.contains('\t') { '\t' } else { ',' };
        let mut fields = line.trim_end_matches(sep).split(sep);
        let first = fields.next().unwrap_or("");
        let label = parse_label(first).ok_or_else(|| {
            Error::Data(format!(
                "{origin}:{}:1: cannot parse label '{first}'",
                ln + 1
            ))
        })?;
        let mut values = Vec::new();
        for (col, tok) in fields.enumerate() {
            let v = parse_value(tok).ok_or_else(|| {
                Error::Data(format!(
                    "{origin}:{}:{}: cannot parse value '{tok}'",
                    ln + 1,
                    col + 2
                ))
            })?;
            values.push(v);
        }
        out.push(RawSeries { label, values });
    }
    if out.is_empty() {
        return Err(Error::Data(format!("{origin}: no series found")));
    }
    let d = out.iter().map(|s| s.values.len()).max().unwrap_or(0);
    if d == 0 {
        return Err(Error::Data(format!("{origin}: series have no values")));
    }
    for s in &mut out {
        s.values.resize(d, f64::NAN);
    }
    Ok(out)
}

pub fn load_ucr_tsv(path: impl AsRef<Path>) -> Result<Vec<RawSeries>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_ucr(&text, &path.display().to_string())
}

/// Fills NaNs in place: linear interpolation between finite neighbours and
/// constant extension at the edges.
pub fn impute(values: &mut [f64]) -> Result<()> {
    let finite: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_finite()).collect();
    let (Some(&first), Some(&last)) = (finite.first(), finite.last()) else {
        return Err(Error::Data("series has no finite values".into()));
    };
    for i in 0..first {
        values[i] = values[first];
    }
    for i in last + 1..values.len() {
        values[i] = values[last];
    }
    for w in finite.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (va, vb) = (values[a], values[b]);
        for i in a + 1..b {
            let t = (i - a) as f64 / (b - a) as f64;
            values[i] = va + t * (vb - va);
        }
    }
    Ok(())
}

/// Standardizes to mean 0 and population std 1; near-constant series become zeros.
pub fn z_normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-8 {
        values.fill(0.0);
    } else {
        for v in values.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

fn clean_split(raw: &[RawSeries], d: usize, policy: PreprocessPolicy, what: &str) -> Result<Vec<f64>> {
    let mut data = Vec::with_capacity(raw.len() * d);
    for (i, s) in raw.iter().enumerate() {
        let mut v = s.values.clone();
        v.resize(d, f64::NAN);
        impute(&mut v).map_err(|_| Error::Data(format!("{what} series {} is entirely NaN", i + 1)))?;
        if policy.z_normalize {
            z_normalize(&mut v);
        }
        data.extend(v);
    }
    Ok(data)
}

/// Imputes, normalizes and relabels a train/test pair.
///
/// Labels are remapped to `0..m` in sorted order of the training labels; a
/// test label that never occurs in training is a data error.
pub fn preprocess(
    name: &str,
    train: &[RawSeries],
    test: &[RawSeries],
    policy: PreprocessPolicy,
) -> Result<Dataset> {
    if train.is_empty() {
        return Err(Error::Data(format!("{name}: empty training split")));
    }
    let lens = train.iter().chain(test).map(|s| s.values.len());
    let d = lens.clone().max().unwrap_or(0);
    let ragged = lens.clone().any(|l| l != d)
        || train
            .iter()
            .chain(test)
            .any(|s| s.values.last().is_some_and(|v| v.is_nan()));
    if d == 0 {
        return Err(Error::Data(format!("{name}: series have no values")));
    }
    let labels: BTreeMap<i64, usize> = train
        .iter()
        .map(|s| s.label)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(k, l)| (l, k))
        .collect();
    let label_map: Vec<i64> = labels.keys().copied().collect();
    let remap = |split: &[RawSeries], what: &str| -> Result<Vec<usize>> {
        split
            .iter()
            .enumerate()
            .map(|(i, s)| {
                labels.get(&s.label).copied().ok_or_else(|| {
                    Error::Data(format!(
                        "{name}: {what} series {} has label {} not present in training data",
                        i + 1,
                        s.label
                    ))
                })
            })
            .collect()
    };
    let train_y = remap(train, "train")?;
    let test_y = remap(test, "test")?;
    let train_x = Tensor::new(vec![train.len(), d], clean_split(train, d, policy, "train")?)?;
    let test_x = Tensor::new(vec![test.len(), d], clean_split(test, d, policy, "test")?)?;
    Ok(Dataset {
        name: name.to_string(),
        train: Split { x: train_x, y: train_y },
        test: Split { x: test_x, y: test_y },
        d,
        m: label_map.len(),
        label_map,
        padded: ragged,
    })
}

pub fn split_paths(root: &Path, name: &str) -> (PathBuf, PathBuf) {
    let dir = root.join(name);
    (
        dir.join(format!("{name}_TRAIN.tsv")),
        dir.join(format!("{name}_TEST.tsv")),
    )
}

/// Loads `<root>/<name>/<name>_{TRAIN,TEST}.tsv` and preprocesses it.
pub fn load_dataset(root: impl AsRef<Path>, name: &str) -> Result<Dataset> {
    let (train_path, test_path) = split_paths(root.as_ref(), name);
    let train = load_ucr_tsv(&train_path)?;
    let test = load_ucr_tsv(&test_path)?;
    preprocess(name, &train, &test, PreprocessPolicy::default())
}

/// Dataset directories under `root` that contain a training split, sorted.
pub fn list_datasets(root: impl AsRef<Path>) -> Result<Vec<String>> {
    let root = root.as_ref();
    let entries = fs::read_dir(root)
        .map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
    let mut names = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if split_paths(root, &name).0.is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

pub fn format_ucr(series: &[RawSeries]) -> String {
    let mut out = String::new();
    for s in series {
        write!(out, "{}", s.label).unwrap();
        for v in &s.values {
            if v.is_nan() {
                out.push_str("\tNaN");
            } else {
                write!(out, "\t{v}").unwrap();
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_ucr_tsv(path: impl AsRef<Path>, series: &[RawSeries]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_ucr(series))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Length of a Cylinder-Bell-Funnel series.
pub const CBF_LEN: usize = 128;

/// One Cylinder (label 1), Bell (2) or Funnel (3) series.
///
/// The event starts at integer `a ~ U{16..32}` and lasts `b - a ~ U{32..96}` steps
/// with amplitude `6 + eta`; every point gets independent N(0, 1) noise.
pub fn cbf_series(label: i64, rng: &mut impl Rng) -> RawSeries {
    let a = rng.random_range(16..=32) as f64;
    let b = a + rng.random_range(32..=96) as f64;
    let eta: f64 = rng.sample(StandardNormal);
    let amp = 6.0 + eta;
    let values = (1..=CBF_LEN)
        .map(|t| {
            let t = t as f64;
            let noise: f64 = rng.sample(StandardNormal);
            let inside = (a..=b).contains(&t);
            let shape = if !inside {
                0.0
            } else {
                match label {
                    1 => 1.0,
                    2 => (t - a) / (b - a),
                    _ => (b - t) / (b - a),
                }
            };
            amp * shape + noise
        })
        .collect();
    RawSeries { label, values }
}

/// Synthetic CBF splits with classes cycling 1, 2, 3.
pub fn generate_cbf(n_train: usize, n_test: usize, seed: u64) -> (Vec<RawSeries>, Vec<RawSeries>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |n: usize| -> Vec<RawSeries> {
        (0..n).map(|i| cbf_series(1 + (i % 3) as i64, &mut rng)).collect()
    };
    let train = make(n_train);
    let test = make(n_test);
    (train, test)
}

/// Writes a synthetic CBF dataset (30 train, 900 test) in the archive layout.
pub fn write_cbf_dataset(root: impl AsRef<Path>, seed: u64) -> Result<PathBuf> {
    let root = root.as_ref();
    let dir = root.join("CBF");
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let (train, test) = generate_cbf(30, 900, seed);
    let (train_path, test_path) = split_paths(root, "CBF");
    write_ucr_tsv(train_path, &train)?;
    write_ucr_tsv(test_path, &test)?;
    Ok(dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, proptest};

    #[test]
    fn parses_simple_line() {
        let s = parse_ucr("1\t0.5\t-0.5\n", "t").unwrap();
        assert_eq!(s, vec![RawSeries { label: 1, values: vec![0.5, -0.5] }]);
    }

    #[test]
    fn nan_tokens_and_ragged_rows() {
        let s = parse_ucr("2\t1\tNaN\t3\n-1\t4\n", "t").unwrap();
        assert!(s[0].values[1].is_nan());
        assert_eq!(s[1].label, -1);
        assert_eq!(s[1].values.len(), 3);
        assert!(s[1].values[1].is_nan() && s[1].values[2].is_nan());
        let s = parse_ucr("1.0,2,3\r\n", "t").unwrap();
        assert_eq!(s[0], RawSeries { label: 1, values: vec![2.0, 3.0] });
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_ucr("1\t0.5\n1\t0.5\tabc\n", "f.tsv").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Data(_)));
        assert!(msg.contains("f.tsv:2:3"), "{msg}");
        assert!(parse_ucr("x\t1\n", "f").is_err());
        assert!(parse_ucr("\n\n", "f").is_err());
        assert!(matches!(load_ucr_tsv("/nonexistent/x.tsv"), Err(Error::Io { .. })));
    }

    #[test]
    fn imputation() {
        let mut v = vec![1.0, f64::NAN, 3.0];
        impute(&mut v).unwrap();
        assert_eq!(v, vec![1.0, 2.0, 3.0]);
        let mut v = vec![f64::NAN, 2.0, f64::NAN, f64::NAN, 5.0, f64::NAN];
        impute(&mut v).unwrap();
        assert_eq!(v, vec![2.0, 2.0, 3.0, 4.0, 5.0, 5.0]);
        assert!(impute(&mut [f64::NAN, f64::NAN]).is_err());
    }

    #[test]
    fn constant_series_normalizes_to_zero() {
        let mut v = vec![5.0, 5.0, 5.0];
        z_normalize(&mut v);
        assert_eq!(v, vec![0.0; 3]);
    }

    #[test]
    fn labels_remap_in_sorted_order() {
        let tr = vec![
            RawSeries { label: 1, values: vec![0.0, 1.0] },
            RawSeries { label: -1, values: vec![1.0, 0.0] },
        ];
        let ds = preprocess("x", &tr, &tr, PreprocessPolicy::default()).unwrap();
        assert_eq!(ds.label_map, vec![-1, 1]);
        assert_eq!(ds.train.y, vec![1, 0]);
        assert_eq!(ds.m, 2);
        let bad = vec![RawSeries { label: 7, values: vec![0.0, 1.0] }];
        assert!(matches!(
            preprocess("x", &tr, &bad, PreprocessPolicy::default()),
            Err(Error::Data(_))
        ));
        let all_nan = vec![RawSeries { label: 1, values: vec![f64::NAN; 2] }];
        assert!(preprocess("x", &all_nan, &tr, PreprocessPolicy::default()).is_err());
    }

    #[test]
    fn cbf_generator_shape() {
        let (tr, te) = generate_cbf(30, 900, 0);
        assert_eq!((tr.len(), te.len()), (30, 900));
        assert!(tr.iter().all(|s| s.values.len() == CBF_LEN));
        let text = format_ucr(&tr);
        assert_eq!(parse_ucr(&text, "cbf").unwrap(), tr);
        let ds = preprocess("CBF", &tr, &te, PreprocessPolicy::default()).unwrap();
        assert_eq!((ds.d, ds.m, ds.train.len()), (128, 3, 30));
        assert!(!ds.padded);
        // The cylinder plateau should be visibly higher than the background.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = cbf_series(1, &mut rng);
        let mid: f64 = s.values[40..48].iter().sum::<f64>() / 8.0;
        assert!(mid > 2.0, "{mid}");
    }

    #[test]
    fn dataset_round_trip_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        write_cbf_dataset(dir.path(), 3).unwrap();
        assert_eq!(list_datasets(dir.path()).unwrap(), vec!["CBF".to_string()]);
        let ds = load_dataset(dir.path(), "CBF").unwrap();
        assert_eq!((ds.train.len(), ds.test.len(), ds.d, ds.m), (30, 900, 128, 3));
        assert_eq!(ds.label_map, vec![1, 2, 3]);
    }

    proptest! {
        #[test]
        fn preprocess_normalizes_and_is_idempotent(
            rows in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 6), 1..6),
        ) {
            let raw: Vec<RawSeries> = rows
                .iter()
                .enumerate()
                .map(|(i, v)| RawSeries { label: (i % 2) as i64, values: v.clone() })
                .collect();
            let ds = preprocess("p", &raw, &raw, PreprocessPolicy::default()).unwrap();
            for i in 0..ds.train.len() {
                let r = ds.train.x.row(i);
                let mean = r.iter().sum::<f64>() / 6.0;
                let std = (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0).sqrt();
                prop_assert!(mean.abs() <= 1e-9);
                prop_assert!((std - 1.0).abs() <= 1e-6 || r.iter().all(|v| *v == 0.0));
            }
            let again: Vec<RawSeries> = (0..ds.train.len())
                .map(|i| RawSeries { label: raw[i].label, values: ds.train.x.row(i).to_vec() })
                .collect();
            let ds2 = preprocess("p", &again, &again, PreprocessPolicy::default()).unwrap();
            for (a, b) in ds.train.x.data().iter().zip(ds2.train.x.data()) {
                prop_assert!((a - b).abs() <= 1e-9);
            }
            let mut seen = ds.train.y.clone();
            seen.sort();
            seen.dedup();
            prop_assert!(seen == (0..ds.m).collect::<Vec<_>>());
        }
    }
}
