//! CSV datasets and synthetic Gaussian blobs.
//!
//! A dataset file has one sample per line: an integer label followed by the
//! feature values. A header line is allowed when the caller says so.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use linscale_core::optimizer::Dataset;
use linscale_core::rng::SeededRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub fn load_csv(path: impl AsRef<Path>, has_header: bool) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, has_header)
}

pub fn read_csv(reader: impl std::io::Read, has_header: bool) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let first_row = if has_header { 2 } else { 1 };
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (i, record) in rdr.records().enumerate() {
        let row = first_row + i;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: 0,
            message: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::Parse {
                row,
                column: record.len(),
                message: "expected a label and at least one feature".into(),
            });
        }
        match dim {
            None => dim = Some(record.len() - 1),
            Some(d) if d != record.len() - 1 => {
                return Err(Error::Parse {
                    row,
                    column: record.len(),
                    message: format!("expected {} columns, found {}", d + 1, record.len()),
                })
            }
            Some(_) => {}
        }
        let label = &record[0];
        labels.push(label.parse::<usize>().map_err(|_| Error::Parse {
            row,
            column: 1,
            message: format!("label {label:?} is not a non-negative integer"),
        })?);
        for (j, cell) in record.iter().enumerate().skip(1) {
            let value = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse {
                    row,
                    column: j + 1,
                    message: format!("{cell:?} is not a finite number"),
                })?;
            features.push(value);
        }
    }
    let Some(dim) = dim else {
        return Err(Error::InvalidInput("dataset file has no samples".into()));
    };
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset::new(features, labels, dim, classes)?)
}

/// Writes `data` in the format [`load_csv`] reads, without a header. Values
/// use the shortest representation that parses back to the same `f64`.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = std::io::BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
    write_csv_to(&mut out, data)
        .and_then(|()| out.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_csv_to(out: &mut impl Write, data: &Dataset) -> std::io::Result<()> {
    for i in 0..data.len() {
        write!(out, "{}", data.label(i))?;
        for v in data.sample(i) {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Gaussian clusters around `classes` centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    /// Minimum distance between any two centers, measured before the
    /// coordinate scaling below.
    pub separation: f64,
    /// Standard deviation of each coordinate around its center.
    pub noise: f64,
    /// Ratio between the largest and smallest coordinate scale. Coordinate
    /// `j` of every sample is multiplied by `spread^(-j / (d - 1))`, which
    /// mimics unnormalised features; 1 leaves the clusters isotropic.
    pub spread: f64,
    pub seed: u64,
    /// Fraction of the samples that go to the training set.
    pub split: f64,
}

impl BlobSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Core(linscale_core::Error::InvalidArgument(m)));
        if self.classes < 2 || self.dim == 0 {
            return bad(format!(
                "blobs need at least 2 classes and 1 dimension, got K={} d={}",
                self.classes, self.dim
            ));
        }
        if self.samples < self.classes {
            return bad(format!(
                "{} samples cannot cover {} classes",
                self.samples, self.classes
            ));
        }
        if !(self.separation > 0.0 && self.separation.is_finite())
            || !(self.noise >= 0.0 && self.noise.is_finite())
        {
            return bad(format!(
                "separation must be positive and noise >= 0, got {} and {}",
                self.separation, self.noise
            ));
        }
        if !(self.spread >= 1.0 && self.spread.is_finite()) {
            return bad(format!(
                "coordinate spread must be >= 1, got {}",
                self.spread
            ));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return bad(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split
            ));
        }
        let train = self.train_len();
        if train == 0 || train == self.samples {
            return bad(format!(
                "split {} of {} samples leaves one side empty",
                self.split, self.samples
            ));
        }
        Ok(())
    }

    pub fn train_len(&self) -> usize {
        (self.samples as f64 * self.split).round() as usize
    }
}

/// Class centers with pairwise distance at least `separation`.
///
/// With `K <= d` the centers are orthonormal directions scaled by
/// `separation / sqrt(2)`, so every pair sits at exactly `separation`.
/// Otherwise they are Gaussian draws rescaled so the closest pair does.
pub fn blob_centers(spec: &BlobSpec, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let (k, d) = (spec.classes, spec.dim);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    if k <= d {
        while centers.len() < k {
            let mut v = vec![0.0; d];
            rng.fill_gaussian(&mut v);
            for c in &centers {
                let dot: f64 = v.iter().zip(c).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(c).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-6 {
                centers.push(v.into_iter().map(|a| a / norm).collect());
            }
        }
        let scale = spec.separation / std::f64::consts::SQRT_2;
        centers.iter_mut().flatten().for_each(|a| *a *= scale);
    } else {
        for _ in 0..k {
            let mut v = vec![0.0; d];
            rng.fill_gaussian(&mut v);
            centers.push(v);
        }
        let mut closest = f64::INFINITY;
        for a in 0..k {
            for b in a + 1..k {
                closest = closest.min(distance(&centers[a], &centers[b]));
            }
        }
        let scale = spec.separation / closest.max(f64::MIN_POSITIVE);
        centers.iter_mut().flatten().for_each(|a| *a *= scale);
    }
    centers
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Balanced labels, shuffled, split into disjoint train and test sets.
/// Both sets report all `K` classes even if one happens to miss a label.
pub fn gen_blobs(spec: &BlobSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let centers = blob_centers(spec, &mut rng);
    let mut labels: Vec<usize> = (0..spec.samples).map(|i| i % spec.classes).collect();
    for i in (1..labels.len()).rev() {
        let j = rng.below_inclusive(0, i as u64) as usize;
        labels.swap(i, j);
    }
    let scales: Vec<f64> = (0..spec.dim)
        .map(|j| {
            if spec.dim == 1 {
                1.0
            } else {
                spec.spread.powf(-(j as f64) / (spec.dim - 1) as f64)
            }
        })
        .collect();
    let mut features = Vec::with_capacity(spec.samples * spec.dim);
    for &y in &labels {
        for (c, s) in centers[y].iter().zip(&scales) {
            features.push(s * (c + spec.noise * rng.gaussian()));
        }
    }
    let cut = spec.train_len();
    let (k, d) = (spec.classes, spec.dim);
    let train = Dataset::new(features[..cut * d].to_vec(), labels[..cut].to_vec(), d, k)?;
    let test = Dataset::new(features[cut * d..].to_vec(), labels[cut..].to_vec(), d, k)?;
    Ok((train, test))
}
