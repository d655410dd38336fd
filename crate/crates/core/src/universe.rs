//! Finite data universes, datasets, and their histogram representation.
//!
//! A universe is an ordered list of distinct points in `R^d`. A dataset is a
//! vector of `n` row indices into the universe. Two datasets of equal size are
//! adjacent when they differ in exactly one row (replacement semantics; the
//! row count `n` is fixed). The histogram of a dataset is its normalized count
//! vector, which is how the engine represents both the private data and its
//! public hypothesis.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Tolerance used both when validating that a mass vector sums to one and
/// when deciding whether two universe points coincide.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum UniverseError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty universe")]
    EmptyUniverse,
    #[error("row outside universe: index {index}, universe size {size}")]
    RowOutsideUniverse { index: usize, size: usize },
    #[error("universe points must be distinct (points {0} and {1} coincide)")]
    DuplicatePoint(usize, usize),
    #[error("universe points must share one dimension (point {0} has {1} coordinates, expected {2})")]
    RaggedPoint(usize, usize, usize),
    #[error("universe mismatch: histogram over {0} points vs {1}")]
    UniverseMismatch(usize, usize),
    #[error("histogram mass must be nonnegative (entry {0} is {1})")]
    NegativeMass(usize, f64),
    #[error("histogram mass sums to {0}, expected 1 within {NORMALIZATION_TOL:e}")]
    NotNormalized(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("malformed universe file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// An ordered finite data universe; element order is fixed for the lifetime
/// of the value so histogram indices stay stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Universe {
    points: Vec<Vec<f64>>,
    dim: usize,
}

impl Universe {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self, UniverseError> {
        if points.is_empty() {
            return Err(UniverseError::EmptyUniverse);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(UniverseError::Parse("points must have dimension >= 1".into()));
        }
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(UniverseError::RaggedPoint(i, p.len(), dim));
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(UniverseError::NonFinite("universe point"));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let same = points[i]
                    .iter()
                    .zip(&points[j])
                    .all(|(a, b)| (a - b).abs() <= NORMALIZATION_TOL);
                if same {
                    return Err(UniverseError::DuplicatePoint(i, j));
                }
            }
        }
        Ok(Self { points, dim })
    }

    /// Number of universe elements |X|.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Coordinate dimension of each point.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.points.iter().map(|p| p.as_slice())
    }
}

/// A dataset of `n` rows, each a universe index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    rows: Vec<u32>,
}

impl Dataset {
    pub fn new(rows: Vec<u32>, universe: &Universe) -> Result<Self, UniverseError> {
        if rows.is_empty() {
            return Err(UniverseError::EmptyDataset);
        }
        for &r in &rows {
            if r as usize >= universe.len() {
                return Err(UniverseError::RowOutsideUniverse {
                    index: r as usize,
                    size: universe.len(),
                });
            }
        }
        Ok(Self { rows })
    }

    /// Builds the dataset holding `counts[x]` copies of universe index `x`.
    pub fn from_counts(counts: &[u64], universe: &Universe) -> Result<Self, UniverseError> {
        if counts.len() != universe.len() {
            return Err(UniverseError::UniverseMismatch(counts.len(), universe.len()));
        }
        let n: u64 = counts.iter().sum();
        let mut rows = Vec::with_capacity(n as usize);
        for (x, &c) in counts.iter().enumerate() {
            rows.resize(rows.len() + c as usize, x as u32);
        }
        if rows.is_empty() {
            return Err(UniverseError::EmptyDataset);
        }
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[u32] {
        &self.rows
    }
}

/// Normalized mass vector over a universe; the probability-distribution view
/// of a dataset and the engine's hypothesis representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    mass: Vec<f64>,
}

impl Histogram {
    /// Validates that `mass` is nonnegative and sums to one within
    /// [`NORMALIZATION_TOL`], then renormalizes exactly to absorb rounding.
    pub fn new(mass: Vec<f64>) -> Result<Self, UniverseError> {
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() {
                return Err(UniverseError::NonFinite("histogram mass"));
            }
            if m < 0.0 {
                return Err(UniverseError::NegativeMass(i, m));
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(UniverseError::NotNormalized(sum));
        }
        Ok(Self::rescale(mass, sum))
    }

    /// Normalizes an arbitrary nonnegative weight vector with positive total.
    pub fn normalize(weights: Vec<f64>) -> Result<Self, UniverseError> {
        for (i, &w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(UniverseError::NonFinite("histogram weights"));
            }
            if w < 0.0 {
                return Err(UniverseError::NegativeMass(i, w));
            }
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(UniverseError::NotNormalized(sum));
        }
        Ok(Self::rescale(weights, sum))
    }

    fn rescale(mut mass: Vec<f64>, sum: f64) -> Self {
        for m in &mut mass {
            *m /= sum;
        }
        Self { mass }
    }

    /// The histogram of a dataset: `mass[x]` is the fraction of rows equal to `x`.
    pub fn from_records(ds: &Dataset, universe: &Universe) -> Result<Self, UniverseError> {
        if ds.n() == 0 {
            return Err(UniverseError::EmptyDataset);
        }
        let mut counts = vec![0u64; universe.len()];
        for &r in ds.rows() {
            let i = r as usize;
            if i >= universe.len() {
                return Err(UniverseError::RowOutsideUniverse {
                    index: i,
                    size: universe.len(),
                });
            }
            counts[i] += 1;
        }
        let n = ds.n() as f64;
        Ok(Self {
            mass: counts.iter().map(|&c| c as f64 / n).collect(),
        })
    }

    /// The uniform histogram, the engine's starting hypothesis.
    pub fn uniform(universe: &Universe) -> Self {
        let k = universe.len();
        Self {
            mass: vec![1.0 / k as f64; k],
        }
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, x: usize) -> f64 {
        self.mass[x]
    }
}

/// L1 distance between two histograms over the same universe.
pub fn l1_distance(a: &Histogram, b: &Histogram) -> Result<f64, UniverseError> {
    if a.len() != b.len() {
        return Err(UniverseError::UniverseMismatch(a.len(), b.len()));
    }
    Ok(a.mass
        .iter()
        .zip(&b.mass)
        .map(|(x, y)| (x - y).abs())
        .sum())
}

/// Enumerates every dataset obtained from `ds` by replacing one row with any
/// universe element, including the identical replacement; yields `n * |X|`
/// datasets.
pub fn neighbors<'a>(
    ds: &'a Dataset,
    universe: &'a Universe,
) -> impl Iterator<Item = Dataset> + 'a {
    let size = universe.len() as u32;
    (0..ds.n()).flat_map(move |i| {
        (0..size).map(move |x| {
            let mut rows = ds.rows.clone();
            rows[i] = x;
            Dataset { rows }
        })
    })
}

/// Loads a universe and dataset from the plain-text format used by the CLI:
///
/// ```text
/// d |X|
/// <point 1: d reals, whitespace-separated>
/// ...
/// <point |X|>
/// <row index 1>
/// ...
/// <row index n>
/// ```
///
/// Blank lines and lines starting with `#` are skipped. Non-finite
/// coordinates are rejected.
pub fn load_universe_dataset(path: &Path) -> Result<(Universe, Dataset), UniverseError> {
    let text = std::fs::read_to_string(path)?;
    parse_universe_dataset(&text)
}

pub fn parse_universe_dataset(text: &str) -> Result<(Universe, Dataset), UniverseError> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines
        .next()
        .ok_or_else(|| UniverseError::Parse("missing header line".into()))?;
    let mut fields = header.split_whitespace();
    let dim: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| UniverseError::Parse("header must start with the dimension d".into()))?;
    let size: usize = fields
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| UniverseError::Parse("header must be `d |X|`".into()))?;
    if fields.next().is_some() {
        return Err(UniverseError::Parse("header must be exactly `d |X|`".into()));
    }
    let mut points = Vec::with_capacity(size);
    for i in 0..size {
        let line = lines
            .next()
            .ok_or_else(|| UniverseError::Parse(format!("missing universe point {i}")))?;
        let coords: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let coords =
            coords.map_err(|e| UniverseError::Parse(format!("point {i}: {e}")))?;
        if coords.len() != dim {
            return Err(UniverseError::Parse(format!(
                "point {i} has {} coordinates, expected {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(UniverseError::NonFinite("universe point"));
        }
        points.push(coords);
    }
    let universe = Universe::new(points)?;
    let rows: Result<Vec<u32>, _> = lines.map(str::parse).collect();
    let rows = rows.map_err(|e| UniverseError::Parse(format!("dataset row: {e}")))?;
    let dataset = Dataset::new(rows, &universe)?;
    Ok((universe, dataset))
}

/// Renders a universe and dataset in the format accepted by
/// [`parse_universe_dataset`].
pub fn format_universe_dataset(universe: &Universe, ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", universe.dim(), universe.len());
    for p in universe.points() {
        let coords: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{}", coords.join(" "));
    }
    for &r in ds.rows() {
        let _ = writeln!(out, "{r}");
    }
    out
}


#[cfg(test)]
mod properties {
    use super::*;
    use proptest::prelude::*;

    fn scalar_universe(n: usize) -> Universe {
        Universe::new((0..n).map(|i| vec![i as f64]).collect()).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(512))]

        #[test]
        fn histogram_sums_to_one(
            size in 1usize..12,
            rows in prop::collection::vec(0u32..12, 1..64),
        ) {
            let u = scalar_universe(size);
            let rows: Vec<u32> = rows.into_iter().map(|r| r % size as u32).collect();
            let ds = Dataset::new(rows, &u).unwrap();
            let h = Histogram::from_records(&ds, &u).unwrap();
            prop_assert!((h.mass().iter().sum::<f64>() - 1.0).abs() <= NORMALIZATION_TOL);
        }

        #[test]
        fn every_neighbor_within_two_over_n(
            size in 1usize..6,
            rows in prop::collection::vec(0u32..6, 1..4),
        ) {
            let u = scalar_universe(size);
            let rows: Vec<u32> = rows.into_iter().map(|r| r % size as u32).collect();
            let n = rows.len() as f64;
            let ds = Dataset::new(rows, &u).unwrap();
            let h = Histogram::from_records(&ds, &u).unwrap();
            for nb in neighbors(&ds, &u) {
                let hn = Histogram::from_records(&nb, &u).unwrap();
                prop_assert!(l1_distance(&h, &hn).unwrap() <= 2.0 / n + 1e-12);
            }
        }

        #[test]
        fn histogram_is_permutation_covariant(
            rows in prop::collection::vec(0u32..5, 1..32),
            perm_seed in 0u64..1000,
        ) {
            let size = 5usize;
            let u = scalar_universe(size);
            let rows: Vec<u32> = rows.into_iter().map(|r| r % size as u32).collect();

            // Deterministic permutation of the universe points.
            let mut perm: Vec<usize> = (0..size).collect();
            let mut s = perm_seed;
            for i in (1..size).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                perm.swap(i, j);
            }

            let permuted_points: Vec<Vec<f64>> =
                (0..size).map(|i| vec![perm[i] as f64]).collect();
            let pu = Universe::new(permuted_points).unwrap();
            // Row indices re-labelled through the inverse permutation.
            let mut inverse = vec![0usize; size];
            for (i, &p) in perm.iter().enumerate() {
                inverse[p] = i;
            }
            let prows: Vec<u32> = rows.iter().map(|&r| inverse[r as usize] as u32).collect();

            let h = Histogram::from_records(
                &Dataset::new(rows, &u).unwrap(), &u).unwrap();
            let hp = Histogram::from_records(
                &Dataset::new(prows, &pu).unwrap(), &pu).unwrap();
            for x in 0..size {
                prop_assert!((h.get(x) - hp.get(inverse[x])).abs() < 1e-15);
            }
        }
    }
}
