//! Forward operators, images and measurements.
//!
//! Operators act on real images stored row-major and produce complex
//! measurement vectors. The Fourier transforms are unitary (scaled by
//! `1/sqrt(N)` in both directions), so a masked Fourier operator has
//! spectral norm one whenever its mask is non-empty.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::dictionaries::Dictionary;
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Real image on a `rows x cols` grid, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl ImageGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} image",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite pixel at index {pos}"
            )));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
        }
    }

    pub fn constant(rows: usize, cols: usize, value: f64) -> Self {
        let mut img = Self::zeros(rows, cols);
        img.values.fill(value);
        img
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                img.values[r * cols + c] = f(r, c);
            }
        }
        img
    }

    pub(crate) fn from_raw(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn norm2(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `max - min` of the pixel values.
    pub fn dynamic_range(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// Complex observation vector with its noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementVector {
    values: Vec<Complex64>,
    sigma: f64,
}

impl MeasurementVector {
    pub fn new(values: Vec<Complex64>, sigma: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("empty measurement vector".into()));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise level must be positive, got {sigma}"
            )));
        }
        Ok(Self { values, sigma })
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `Re <a, b>` for complex vectors.
pub fn re_dot(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u.re * v.re + u.im * v.im).sum()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Unitary 2-D DFT on a row-major buffer.
pub struct Fft2 {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fft2({}x{})", self.rows, self.cols)
    }
}

impl Fft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            row_fwd: planner.plan_fft_forward(cols),
            row_inv: planner.plan_fft_inverse(cols),
            col_fwd: planner.plan_fft_forward(rows),
            col_inv: planner.plan_fft_inverse(rows),
        }
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_fwd, &self.col_fwd);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.run(buf, &self.row_inv, &self.col_inv);
    }

    fn run(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        assert_eq!(buf.len(), self.rows * self.cols);
        row.process(buf);
        let mut column = vec![Complex64::new(0.0, 0.0); self.rows];
        for c in 0..self.cols {
            for r in 0..self.rows {
                column[r] = buf[r * self.cols + c];
            }
            col.process(&mut column);
            for r in 0..self.rows {
                buf[r * self.cols + c] = column[r];
            }
        }
        let scale = 1.0 / ((self.rows * self.cols) as f64).sqrt();
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }
}

#[derive(Clone, Debug)]
pub enum OpKind {
    Identity,
    /// Unitary DFT followed by selection of the sorted frequency indices in `mask`.
    MaskedFourier { mask: Vec<usize> },
    /// Periodic convolution; `kernel` is embedded at full size with its
    /// origin at pixel (0, 0), `transfer` is its unnormalised DFT.
    Convolution {
        kernel: ImageGrid,
        transfer: Vec<Complex64>,
    },
}

/// Linear measurement operator from `R^N` to `C^M`.
#[derive(Clone, Debug)]
pub struct ForwardOp {
    rows: usize,
    cols: usize,
    kind: OpKind,
    fft: Option<Arc<Fft2>>,
}

impl ForwardOp {
    pub fn identity(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            kind: OpKind::Identity,
            fft: None,
        })
    }

    pub fn masked_fourier(rows: usize, cols: usize, mut mask: Vec<usize>) -> Result<Self> {
        check_dims(rows, cols)?;
        let n = rows * cols;
        if mask.is_empty() {
            return Err(Error::InvalidParameter("empty Fourier mask".into()));
        }
        mask.sort_unstable();
        if mask.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate mask index".into()));
        }
        if let Some(&last) = mask.last() {
            if last >= n {
                return Err(Error::InvalidParameter(format!(
                    "mask index {last} outside a {rows}x{cols} grid"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            kind: OpKind::MaskedFourier { mask },
            fft: Some(Arc::new(Fft2::new(rows, cols))),
        })
    }

    /// Periodic convolution with `kernel`. A kernel smaller than the image is
    /// centred at `(kh / 2, kw / 2)` and wrapped around the origin.
    pub fn convolution(rows: usize, cols: usize, kernel: &ImageGrid) -> Result<Self> {
        check_dims(rows, cols)?;
        if kernel.rows() > rows || kernel.cols() > cols {
            return Err(Error::Dimension(format!(
                "{}x{} kernel larger than {rows}x{cols} image",
                kernel.rows(),
                kernel.cols()
            )));
        }
        let (cr, cc) = (kernel.rows() / 2, kernel.cols() / 2);
        let mut embedded = ImageGrid::zeros(rows, cols);
        for r in 0..kernel.rows() {
            for c in 0..kernel.cols() {
                let rr = (r + rows - cr) % rows;
                let ccol = (c + cols - cc) % cols;
                embedded.values[rr * cols + ccol] += kernel.get(r, c);
            }
        }
        let fft = Arc::new(Fft2::new(rows, cols));
        let mut transfer: Vec<Complex64> = embedded
            .values()
            .iter()
            .map(|&v| Complex64::new(v, 0.0))
            .collect();
        fft.forward(&mut transfer);
        let unnormalise = ((rows * cols) as f64).sqrt();
        for t in transfer.iter_mut() {
            *t *= unnormalise;
        }
        Ok(Self {
            rows,
            cols,
            kind: OpKind::Convolution {
                kernel: embedded,
                transfer,
            },
            fft: Some(fft),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn kind(&self) -> &OpKind {
        &self.kind
    }

    pub fn mask(&self) -> Option<&[usize]> {
        match &self.kind {
            OpKind::MaskedFourier { mask } => Some(mask),
            _ => None,
        }
    }

    /// Pixel count `N`.
    pub fn n_pixels(&self) -> usize {
        self.rows * self.cols
    }

    /// Measurement count `M`.
    pub fn n_measurements(&self) -> usize {
        match &self.kind {
            OpKind::MaskedFourier { mask } => mask.len(),
            _ => self.n_pixels(),
        }
    }

    pub fn apply(&self, x: &ImageGrid) -> Result<Vec<Complex64>> {
        if x.rows() != self.rows || x.cols() != self.cols {
            return Err(Error::Dimension(format!(
                "operator expects {}x{}, image is {}x{}",
                self.rows,
                self.cols,
                x.rows(),
                x.cols()
            )));
        }
        Ok(self.apply_slice(x.values()))
    }

    pub fn adjoint(&self, v: &[Complex64]) -> Result<ImageGrid> {
        if v.len() != self.n_measurements() {
            return Err(Error::Dimension(format!(
                "operator has {} measurements, vector has {}",
                self.n_measurements(),
                v.len()
            )));
        }
        Ok(ImageGrid::from_raw(
            self.rows,
            self.cols,
            self.adjoint_slice(v),
        ))
    }

    pub(crate) fn apply_slice(&self, x: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(x.len(), self.n_pixels());
        let complex: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        match &self.kind {
            OpKind::Identity => complex,
            OpKind::MaskedFourier { mask } => {
                let mut buf = complex;
                self.fft().forward(&mut buf);
                mask.iter().map(|&k| buf[k]).collect()
            }
            OpKind::Convolution { transfer, .. } => {
                let mut buf = complex;
                let fft = self.fft();
                fft.forward(&mut buf);
                for (b, t) in buf.iter_mut().zip(transfer) {
                    *b *= t;
                }
                fft.inverse(&mut buf);
                buf
            }
        }
    }

    /// Real part of `Phi^dagger v`.
    pub(crate) fn adjoint_slice(&self, v: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n_measurements());
        match &self.kind {
            OpKind::Identity => v.iter().map(|c| c.re).collect(),
            OpKind::MaskedFourier { mask } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); self.n_pixels()];
                for (&k, &val) in mask.iter().zip(v) {
                    buf[k] = val;
                }
                self.fft().inverse(&mut buf);
                buf.iter().map(|c| c.re).collect()
            }
            OpKind::Convolution { transfer, .. } => {
                let mut buf = v.to_vec();
                let fft = self.fft();
                fft.forward(&mut buf);
                for (b, t) in buf.iter_mut().zip(transfer) {
                    *b *= t.conj();
                }
                fft.inverse(&mut buf);
                buf.iter().map(|c| c.re).collect()
            }
        }
    }

    /// `Re(Phi^dagger Phi x)`.
    pub(crate) fn normal_slice(&self, x: &[f64]) -> Vec<f64> {
        self.adjoint_slice(&self.apply_slice(x))
    }

    fn fft(&self) -> &Fft2 {
        self.fft.as_deref().expect("Fourier-based operator carries a plan")
    }
}

fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidParameter(format!(
            "operator dimensions must be positive, got {rows}x{cols}"
        )));
    }
    Ok(())
}

pub const OP_NORM_MAX_ITERS: usize = 1000;
const OP_NORM_START_SEED: u64 = 0x6f70_6e6f_726d;

/// Power-method estimate of `||Phi Psi||^2` (or `||Phi||^2` without a
/// dictionary). Stops when the relative change of the estimate drops below `tol`.
pub fn op_norm(op: &ForwardOp, dict: Option<&Dictionary>, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "power-method tolerance must be positive, got {tol}"
        )));
    }
    if let Some(d) = dict {
        if d.rows() != op.rows() || d.cols() != op.cols() {
            return Err(Error::Dimension(
                "dictionary and operator grids differ".into(),
            ));
        }
    }
    let dim = dict.map_or(op.n_pixels(), |d| d.coeff_len());
    let gram = |v: &[f64]| -> Vec<f64> {
        match dict {
            Some(d) => d.analyze_slice(&op.normal_slice(&d.synthesize_slice(v))),
            None => op.normal_slice(v),
        }
    };

    let mut rng = SeededRng::new(OP_NORM_START_SEED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.standard_normal()).collect();
    let n0 = norm(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut estimate = 0.0;
    for _ in 0..OP_NORM_MAX_ITERS {
        let w = gram(&v);
        let next = norm(&w);
        if next == 0.0 {
            return Ok(0.0);
        }
        let done = (next - estimate).abs() <= tol * next;
        estimate = next;
        v = w.into_iter().map(|x| x / next).collect();
        if done {
            return Ok(estimate);
        }
    }
    Err(Error::PowerIteration(OP_NORM_MAX_ITERS))
}

/// Fourier operator keeping `ceil(m_fraction * N)` frequencies drawn uniformly
/// without replacement; the zero frequency is always kept.
pub fn make_masked_fourier(
    rows: usize,
    cols: usize,
    m_fraction: f64,
    seed: u64,
) -> Result<ForwardOp> {
    if !(m_fraction > 0.0 && m_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "m_fraction must lie in (0, 1], got {m_fraction}"
        )));
    }
    check_dims(rows, cols)?;
    let n = rows * cols;
    // guard against 0.1 * 1000 = 100.00000000000001 rounding up
    let m = ((m_fraction * n as f64 - 1e-9).ceil() as usize).clamp(1, n);

    let mut rng = SeededRng::new(seed);
    let mut pool: Vec<usize> = (1..n).collect();
    for i in 0..m - 1 {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut mask = Vec::with_capacity(m);
    mask.push(0);
    mask.extend_from_slice(&pool[..m - 1]);
    ForwardOp::masked_fourier(rows, cols, mask)
}

/// Noise level for a given input SNR in dB: `||x||_inf * 10^(-snr/20)`.
pub fn noise_sigma(x: &ImageGrid, input_snr_db: f64) -> Result<f64> {
    if !input_snr_db.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "input SNR must be finite, got {input_snr_db}"
        )));
    }
    let peak = x.max_abs();
    if peak == 0.0 {
        return Err(Error::InvalidParameter(
            "cannot set a noise level from an all-zero image".into(),
        ));
    }
    let sigma = peak * 10f64.powf(-input_snr_db / 20.0);
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "input SNR {input_snr_db} dB underflows the noise level"
        )));
    }
    Ok(sigma)
}

/// `y = Phi x + n` with circular complex Gaussian noise of total variance
/// `sigma^2` per entry.
pub fn simulate_observation(
    op: &ForwardOp,
    x: &ImageGrid,
    input_snr_db: f64,
    seed: u64,
) -> Result<MeasurementVector> {
    let sigma = noise_sigma(x, input_snr_db)?;
    let mut y = op.apply(x)?;
    let mut rng = SeededRng::new(seed);
    let component = sigma / std::f64::consts::SQRT_2;
    for v in y.iter_mut() {
        let re = rng.standard_normal();
        let im = rng.standard_normal();
        *v += Complex64::new(component * re, component * im);
    }
    MeasurementVector::new(y, sigma)
}
