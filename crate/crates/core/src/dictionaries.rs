//! Sparsifying dictionaries: Daubechies wavelet bases, the Dirac basis and
//! normalised concatenations of orthonormal bases (tight frames).
//!
//! Coefficient layout of a wavelet basis: the coarsest scaling block first,
//! then the (HL, LH, HH) detail subbands of each level from coarsest to
//! finest, every block row-major. HL holds the high-pass response along
//! image rows. A concatenation stacks its bases' coefficient vectors in the
//! order given at construction, each scaled by the normalisation `c`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linops::ImageGrid;
use crate::wavelet::{self, FilterPair};

/// Default decomposition depth.
pub const DEFAULT_LEVELS: usize = 4;

#[derive(Clone, Debug)]
pub enum DictKind {
    Daubechies {
        order: usize,
        levels: usize,
        filters: FilterPair,
    },
    Dirac,
    Concatenation {
        parts: Vec<Dictionary>,
        normalization: f64,
    },
}

#[derive(Clone, Debug)]
pub struct Dictionary {
    rows: usize,
    cols: usize,
    coeff_len: usize,
    kind: DictKind,
}

/// Coefficients tagged with the identifier of the dictionary that owns them.
#[derive(Clone, Debug, PartialEq)]
pub struct CoeffVector {
    pub values: Vec<f64>,
    pub dict_id: String,
}

impl CoeffVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Dictionary {
    pub fn daubechies(rows: usize, cols: usize, order: usize, levels: usize) -> Result<Self> {
        let filters = wavelet::daubechies(order).ok_or_else(|| {
            Error::InvalidParameter(format!("Daubechies order must be in 1..=8, got {order}"))
        })?;
        if levels == 0 {
            return Err(Error::InvalidParameter(
                "wavelet depth must be at least 1".into(),
            ));
        }
        let block = 1usize << levels;
        if rows == 0 || cols == 0 || rows % block != 0 || cols % block != 0 {
            return Err(Error::InvalidParameter(format!(
                "{rows}x{cols} grid is not divisible by 2^{levels}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            coeff_len: rows * cols,
            kind: DictKind::Daubechies {
                order,
                levels,
                filters,
            },
        })
    }

    pub fn dirac(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter("empty grid".into()));
        }
        Ok(Self {
            rows,
            cols,
            coeff_len: rows * cols,
            kind: DictKind::Dirac,
        })
    }

    /// Concatenation of orthonormal bases scaled by `1/sqrt(b)`, which makes
    /// the frame tight.
    pub fn concatenation(parts: Vec<Dictionary>) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty concatenation".into()))?;
        let (rows, cols) = (first.rows, first.cols);
        for p in &parts {
            if p.rows != rows || p.cols != cols {
                return Err(Error::Dimension(
                    "concatenated bases must share one grid".into(),
                ));
            }
            if !p.is_orthonormal() {
                return Err(Error::InvalidParameter(
                    "only orthonormal bases can be concatenated".into(),
                ));
            }
        }
        let coeff_len = parts.iter().map(|p| p.coeff_len).sum();
        let normalization = 1.0 / (parts.len() as f64).sqrt();
        Ok(Self {
            rows,
            cols,
            coeff_len,
            kind: DictKind::Concatenation {
                parts,
                normalization,
            },
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Number of coefficients `L`.
    pub fn coeff_len(&self) -> usize {
        self.coeff_len
    }

    pub fn kind(&self) -> &DictKind {
        &self.kind
    }

    pub fn is_orthonormal(&self) -> bool {
        !matches!(self.kind, DictKind::Concatenation { .. })
    }

    pub fn id(&self) -> String {
        self.to_string()
    }

    pub fn synthesize(&self, a: &CoeffVector) -> Result<ImageGrid> {
        if a.values.len() != self.coeff_len {
            return Err(Error::Dimension(format!(
                "dictionary has {} coefficients, vector has {}",
                self.coeff_len,
                a.values.len()
            )));
        }
        if a.dict_id != self.id() {
            return Err(Error::InvalidParameter(format!(
                "coefficients belong to {}, not {}",
                a.dict_id,
                self.id()
            )));
        }
        Ok(ImageGrid::from_raw(
            self.rows,
            self.cols,
            self.synthesize_slice(&a.values),
        ))
    }

    pub fn analyze(&self, x: &ImageGrid) -> Result<CoeffVector> {
        if x.rows() != self.rows || x.cols() != self.cols {
            return Err(Error::Dimension(format!(
                "dictionary grid is {}x{}, image is {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(self.coeffs(self.analyze_slice(x.values())))
    }

    /// Wrap raw values as coefficients of this dictionary.
    pub fn coeffs(&self, values: Vec<f64>) -> CoeffVector {
        CoeffVector {
            values,
            dict_id: self.id(),
        }
    }

    pub(crate) fn synthesize_slice(&self, a: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), self.coeff_len);
        match &self.kind {
            DictKind::Dirac => a.to_vec(),
            DictKind::Daubechies {
                levels, filters, ..
            } => {
                let mut out = vec![0.0; self.n_pixels()];
                wavelet::inverse_2d(filters, self.rows, self.cols, *levels, a, &mut out);
                out
            }
            DictKind::Concatenation {
                parts,
                normalization,
            } => {
                let mut out = vec![0.0; self.n_pixels()];
                let mut offset = 0;
                for p in parts {
                    let img = p.synthesize_slice(&a[offset..offset + p.coeff_len]);
                    for (o, v) in out.iter_mut().zip(img) {
                        *o += normalization * v;
                    }
                    offset += p.coeff_len;
                }
                out
            }
        }
    }

    pub(crate) fn analyze_slice(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_pixels());
        match &self.kind {
            DictKind::Dirac => x.to_vec(),
            DictKind::Daubechies {
                levels, filters, ..
            } => {
                let mut out = vec![0.0; self.coeff_len];
                wavelet::forward_2d(filters, self.rows, self.cols, *levels, x, &mut out);
                out
            }
            DictKind::Concatenation {
                parts,
                normalization,
            } => {
                let mut out = Vec::with_capacity(self.coeff_len);
                for p in parts {
                    out.extend(p.analyze_slice(x).into_iter().map(|v| normalization * v));
                }
                out
            }
        }
    }
}

impl fmt::Display for Dictionary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            DictKind::Daubechies { order, levels, .. } => {
                write!(f, "db{order}[J={levels}]@{}x{}", self.rows, self.cols)
            }
            DictKind::Dirac => write!(f, "dirac@{}x{}", self.rows, self.cols),
            DictKind::Concatenation { parts, .. } => {
                write!(f, "concat(")?;
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{p}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// DB1..DB8 followed by the Dirac basis, normalised by `1/3`.
pub fn make_sara(rows: usize, cols: usize, levels: usize) -> Result<Dictionary> {
    let mut parts = Vec::with_capacity(9);
    for order in 1..=wavelet::MAX_ORDER {
        parts.push(Dictionary::daubechies(rows, cols, order, levels)?);
    }
    parts.push(Dictionary::dirac(rows, cols)?);
    Dictionary::concatenation(parts)
}

/// Build a dictionary by name: `db1`..`db8`, `dirac` or `sara`.
pub fn dictionary_by_name(name: &str, rows: usize, cols: usize, levels: usize) -> Result<Dictionary> {
    let lower = name.trim().to_ascii_lowercase();
    match lower.as_str() {
        "dirac" => Dictionary::dirac(rows, cols),
        "sara" => make_sara(rows, cols, levels),
        _ => {
            let order = lower
                .strip_prefix("db")
                .and_then(|s| s.parse::<usize>().ok())
                .ok_or_else(|| Error::InvalidParameter(format!("unknown dictionary '{name}'")))?;
            Dictionary::daubechies(rows, cols, order, levels)
        }
    }
}

/// Deepest decomposition `<= DEFAULT_LEVELS` that divides both dimensions.
pub fn default_levels(rows: usize, cols: usize) -> usize {
    (1..=DEFAULT_LEVELS)
        .rev()
        .find(|&j| rows % (1 << j) == 0 && cols % (1 << j) == 0)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{dot, norm};
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    fn random_vec(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = SeededRng::new(seed);
        (0..len).map(|_| rng.standard_normal()).collect()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn dirac_is_identity() {
        let d = Dictionary::dirac(3, 4).unwrap();
        let x = ImageGrid::new(3, 4, random_vec(12, 1)).unwrap();
        let a = d.analyze(&x).unwrap();
        assert_eq!(a.values, x.values());
        assert_eq!(d.synthesize(&a).unwrap(), x);
    }

    #[test]
    fn haar_coarsest_atom_is_flat() {
        let d = Dictionary::daubechies(2, 2, 1, 1).unwrap();
        let a = d.coeffs(vec![1.0, 0.0, 0.0, 0.0]);
        let img = d.synthesize(&a).unwrap();
        for v in img.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn orthonormal_round_trips() {
        for order in 1..=8 {
            let d = Dictionary::daubechies(16, 16, order, 4).unwrap();
            let a = random_vec(256, order as u64);
            let back = d.analyze_slice(&d.synthesize_slice(&a));
            assert!(max_diff(&a, &back) < 1e-10 * norm(&a));
            let x = random_vec(256, 100 + order as u64);
            let xb = d.synthesize_slice(&d.analyze_slice(&x));
            assert!(max_diff(&x, &xb) < 1e-10 * norm(&x));
        }
    }

    #[test]
    fn rectangular_grids_work() {
        let d = Dictionary::daubechies(8, 32, 4, 3).unwrap();
        let x = random_vec(256, 5);
        let a = d.analyze_slice(&x);
        assert!((norm(&a) - norm(&x)).abs() < 1e-10 * norm(&x));
        assert!(max_diff(&x, &d.synthesize_slice(&a)) < 1e-10 * norm(&x));
    }

    #[test]
    fn sara_is_tight_and_overcomplete() {
        let d = make_sara(8, 8, 3).unwrap();
        assert_eq!(d.coeff_len(), 9 * 64);
        let x = random_vec(64, 3);
        let coeffs = d.analyze_slice(&x);
        assert!((norm(&coeffs) - norm(&x)).abs() < 1e-10 * norm(&x));
        assert!(max_diff(&x, &d.synthesize_slice(&coeffs)) < 1e-10 * norm(&x));

        let a = random_vec(9 * 64, 4);
        let back = d.analyze_slice(&d.synthesize_slice(&a));
        assert!(max_diff(&a, &back) > 1e-3);
    }

    #[test]
    fn sara_synthesis_of_stacked_analyses_recovers_image() {
        let d = make_sara(16, 16, 4).unwrap();
        let x = ImageGrid::new(16, 16, random_vec(256, 8)).unwrap();
        let a = d.analyze(&x).unwrap();
        let back = d.synthesize(&a).unwrap();
        assert!(max_diff(x.values(), back.values()) < 1e-10 * x.norm2());
    }

    #[test]
    fn analyze_is_transpose_of_synthesize() {
        let d = make_sara(16, 16, 2).unwrap();
        let a = random_vec(d.coeff_len(), 1);
        let x = random_vec(256, 2);
        let lhs = dot(&d.synthesize_slice(&a), &x);
        let rhs = dot(&a, &d.analyze_slice(&x));
        assert!((lhs - rhs).abs() < 1e-10 * norm(&a) * norm(&x));
    }

    #[test]
    fn invalid_construction() {
        assert!(Dictionary::daubechies(12, 16, 2, 3).is_err());
        assert!(Dictionary::daubechies(16, 16, 9, 1).is_err());
        assert!(Dictionary::daubechies(16, 16, 2, 0).is_err());
        assert!(make_sara(8, 8, 4).is_err());
        let sara = make_sara(8, 8, 2).unwrap();
        assert!(Dictionary::concatenation(vec![sara]).is_err());
        let d = Dictionary::dirac(4, 4).unwrap();
        assert!(d.analyze(&ImageGrid::zeros(4, 5)).is_err());
        assert!(d.synthesize(&d.coeffs(vec![0.0; 3])).is_err());
        let other = Dictionary::daubechies(4, 4, 1, 1).unwrap();
        assert!(d.synthesize(&other.coeffs(vec![0.0; 16])).is_err());
    }

    #[test]
    fn names_resolve() {
        assert_eq!(dictionary_by_name("DB8", 16, 16, 4).unwrap().id(), "db8[J=4]@16x16");
        assert_eq!(dictionary_by_name("sara", 16, 16, 4).unwrap().coeff_len(), 9 * 256);
        assert!(dictionary_by_name("db0", 16, 16, 4).is_err());
        assert!(dictionary_by_name("curvelet", 16, 16, 4).is_err());
        assert_eq!(default_levels(256, 256), 4);
        assert_eq!(default_levels(8, 8), 3);
        assert_eq!(default_levels(12, 8), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn analysis_is_linear(seed in 0u64..10_000, alpha in -3.0f64..3.0, beta in -3.0f64..3.0) {
            let d = make_sara(8, 8, 2).unwrap();
            let x = random_vec(64, seed);
            let y = random_vec(64, seed + 1);
            let combo: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
            let lhs = d.analyze_slice(&combo);
            let ax = d.analyze_slice(&x);
            let ay = d.analyze_slice(&y);
            let rhs: Vec<f64> = ax.iter().zip(&ay).map(|(a, b)| alpha * a + beta * b).collect();
            prop_assert!(max_diff(&lhs, &rhs) <= 1e-10 * (1.0 + norm(&rhs)));
        }
    }
}
