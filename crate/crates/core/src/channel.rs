//! Complex fading primitives: Rayleigh sampling, MMSE pilot estimation,
//! mutual information and eigenvalue SNR exponents.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use smallvec::SmallVec;

use crate::error::{Error, Result};

type Entries = SmallVec<[Complex64; 16]>;

const EIGEN_FLOOR: f64 = 1e-300;

/// Dense row-major complex matrix, stored inline up to 16 entries.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Entries,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let mut data = Entries::new();
        data.resize(rows * cols, Complex64::new(0.0, 0.0));
        Self { rows, cols, data }
    }

    pub fn identity(k: usize) -> Self {
        let mut out = Self::zeros(k, k);
        for i in 0..k {
            out.set(i, i, Complex64::new(1.0, 0.0));
        }
        out
    }

    /// Builds a matrix from row-major entries.
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = Complex64>,
    ) -> Result<Self> {
        let data: Entries = entries.into_iter().collect();
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real row-major entries.
    pub fn from_real(rows: usize, cols: usize, entries: &[f64]) -> Result<Self> {
        Self::from_row_major(rows, cols, entries.iter().map(|&x| Complex64::new(x, 0.0)))
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn scale(&self, a: f64) -> Self {
        let data = self.data.iter().map(|z| z * a).collect();
        Self { data, ..*self }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self { data, ..*self })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self { data, ..*self })
    }

    /// `a * self + b * other`, the workhorse of the estimation model.
    pub fn mix(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        self.check_same_shape(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Ok(Self { data, ..*self })
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..self.cols {
                    acc += self.get(i, k) * other.get(k, j);
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    /// Squared Frobenius norm, i.e. trace(H H†).
    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Column-wise concatenation `[A B ...]` of matrices sharing a row count.
    pub fn hstack(blocks: &[&ComplexMatrix]) -> Result<Self> {
        let Some(first) = blocks.first() else {
            return Err(Error::Dimension("empty block list".into()));
        };
        let rows = first.rows;
        if blocks.iter().any(|b| b.rows != rows) {
            return Err(Error::Dimension("blocks must share a row count".into()));
        }
        let cols = blocks.iter().map(|b| b.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for b in blocks {
            for i in 0..rows {
                for j in 0..b.cols {
                    out.set(i, offset + j, b.get(i, j));
                }
            }
            offset += b.cols;
        }
        Ok(out)
    }

    /// H H† (rows × rows).
    pub fn gram(&self) -> Self {
        let mut out = Self::zeros(self.rows, self.rows);
        for i in 0..self.rows {
            for j in i..self.rows {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..self.cols {
                    acc += self.get(i, k) * self.get(j, k).conj();
                }
                out.set(i, j, acc);
                out.set(j, i, acc.conj());
            }
        }
        out
    }

    /// The smaller of H H† and H† H. Both share their nonzero spectrum.
    pub fn compact_gram(&self) -> Self {
        if self.rows <= self.cols {
            self.gram()
        } else {
            let mut out = Self::zeros(self.cols, self.cols);
            for i in 0..self.cols {
                for j in i..self.cols {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..self.rows {
                        acc += self.get(k, i).conj() * self.get(k, j);
                    }
                    out.set(i, j, acc);
                    out.set(j, i, acc.conj());
                }
            }
            out
        }
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::Dimension(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                let z = self.get(i, j);
                write!(f, " {:.4}{:+.4}i", z.re, z.im)?;
            }
        }
        write!(f, " ]")
    }
}

/// Eigenvalues of a Hermitian matrix, sorted descending.
pub fn hermitian_eigenvalues(a: &ComplexMatrix) -> Vec<f64> {
    let k = a.rows();
    debug_assert_eq!(k, a.cols());
    let mut out = match k {
        0 => Vec::new(),
        1 => vec![a.get(0, 0).re],
        2 => {
            let (p, q) = (a.get(0, 0).re, a.get(1, 1).re);
            let off = 0.5 * (a.get(0, 1) + a.get(1, 0).conj());
            let mean = 0.5 * (p + q);
            let rad = (0.25 * (p - q) * (p - q) + off.norm_sqr()).sqrt();
            let hi = mean + rad;
            // Recover the small eigenvalue from the determinant to avoid cancellation.
            let det = p * q - off.norm_sqr();
            let lo = if hi > 0.0 { det / hi } else { mean - rad };
            vec![hi, lo.min(hi)]
        }
        _ => {
            let m = DMatrix::from_fn(k, k, |i, j| 0.5 * (a.get(i, j) + a.get(j, i).conj()));
            nalgebra::SymmetricEigen::new(m).eigenvalues.iter().copied().collect()
        }
    };
    out.sort_by(|x, y| y.total_cmp(x));
    out
}

/// ln det(I + c·A) for Hermitian positive semidefinite `A`.
pub fn ln_det_identity_plus(a: &ComplexMatrix, c: f64) -> f64 {
    let k = a.rows();
    match k {
        0 => 0.0,
        1 => (c * a.get(0, 0).re).ln_1p(),
        2 => {
            let p = 1.0 + c * a.get(0, 0).re;
            let q = 1.0 + c * a.get(1, 1).re;
            (p * q - c * c * a.get(0, 1).norm_sqr()).ln()
        }
        _ => {
            // Cholesky of I + cA; the log-determinant is twice the log-diagonal sum.
            let mut l = ComplexMatrix::zeros(k, k);
            let mut acc = 0.0;
            for j in 0..k {
                let mut d = 1.0 + c * a.get(j, j).re;
                for p in 0..j {
                    d -= l.get(j, p).norm_sqr();
                }
                let d = d.max(f64::MIN_POSITIVE).sqrt();
                l.set(j, j, Complex64::new(d, 0.0));
                acc += d.ln();
                for i in (j + 1)..k {
                    let mut s = a.get(i, j) * c;
                    for p in 0..j {
                        s -= l.get(i, p) * l.get(j, p).conj();
                    }
                    l.set(i, j, s / d);
                }
            }
            2.0 * acc
        }
    }
}

/// One CN(0,1) draw: real and imaginary parts each N(0, 1/2).
#[inline]
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// `rows × cols` matrix of i.i.d. CN(0,1) entries.
pub fn sample_gaussian<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    let data = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    ComplexMatrix { rows, cols, data }
}

/// Rayleigh channel from `m` transmit to `n` receive antennas (an n×m matrix).
pub fn sample_rayleigh<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> ComplexMatrix {
    sample_gaussian(n, m, rng)
}

/// MMSE channel estimate with its statistical descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimateResult {
    pub h_hat: ComplexMatrix,
    pub rho: f64,
    pub error_variance: f64,
}

/// Coefficients `(c1, c2)` of `Ĥ = c1·H + c2·W₂`.
pub fn mmse_coefficients(m: usize, p_train: f64, n_train: usize) -> (f64, f64) {
    let g = n_train as f64 * p_train / m as f64;
    (1.0 / (1.0 + 1.0 / g), g.sqrt() / (1.0 + g))
}

/// Estimate of `h` from `n_train` pilots at power `p_train` with a given noise draw.
pub fn mmse_estimate_with_noise(
    h: &ComplexMatrix,
    w2: &ComplexMatrix,
    p_train: f64,
    n_train: usize,
) -> Result<EstimateResult> {
    if !(p_train > 0.0) {
        return Err(Error::NonPositiveTrainingPower(p_train));
    }
    let m = h.cols();
    if n_train < m {
        return Err(Error::Precondition(format!(
            "training length {n_train} shorter than {m} transmit antennas"
        )));
    }
    let (c1, c2) = mmse_coefficients(m, p_train, n_train);
    let g = n_train as f64 * p_train / m as f64;
    Ok(EstimateResult {
        h_hat: h.mix(c1, w2, c2)?,
        rho: 1.0 / (1.0 + 1.0 / g).sqrt(),
        error_variance: 1.0 / (1.0 + g),
    })
}

pub fn mmse_estimate<R: Rng + ?Sized>(
    h: &ComplexMatrix,
    p_train: f64,
    n_train: usize,
    rng: &mut R,
) -> Result<EstimateResult> {
    let w2 = sample_gaussian(h.rows(), h.cols(), rng);
    mmse_estimate_with_noise(h, &w2, p_train, n_train)
}

/// log₂ det(I + (p/m)·H·H†) with m the column count of `h`.
pub fn mutual_information(h: &ComplexMatrix, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let c = p / h.cols() as f64;
    ln_det_identity_plus(&h.compact_gram(), c).max(0.0) / std::f64::consts::LN_2
}

/// Mutual information with the estimation error folded into the noise.
pub fn effective_mutual_information(
    h_hat2: &ComplexMatrix,
    h_tilde: &ComplexMatrix,
    p: f64,
    m: usize,
    n: usize,
) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    let inflation = 1.0 + p / (m * n) as f64 * h_tilde.frobenius_sq();
    let c = p / m as f64 / inflation;
    ln_det_identity_plus(&h_hat2.compact_gram(), c).max(0.0) / std::f64::consts::LN_2
}

/// Negative SNR exponents of the nonzero eigenvalues, sorted descending.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentVector {
    alphas: Vec<f64>,
}

impl ExponentVector {
    pub fn new(mut alphas: Vec<f64>) -> Self {
        alphas.sort_by(|x, y| y.total_cmp(x));
        Self { alphas }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alphas.is_empty()
    }
}

pub fn eigen_exponents(h: &ComplexMatrix, snr: f64) -> ExponentVector {
    let ln_snr = snr.ln();
    let alphas = hermitian_eigenvalues(&h.compact_gram())
        .into_iter()
        .map(|l| -l.max(EIGEN_FLOOR).ln() / ln_snr)
        .collect();
    ExponentVector::new(alphas)
}

/// System description shared by the link-level components.
#[derive(Clone, Debug, PartialEq)]
pub struct MimoConfig {
    pub m: usize,
    pub n: usize,
    pub snr: f64,
    pub r: f64,
    pub k_levels: usize,
    pub n_train: usize,
    pub epsilon: f64,
    pub t_coh: Option<usize>,
}

impl MimoConfig {
    /// Defaults: K = 2, N = m, ε = 0.05.
    pub fn new(m: usize, n: usize, snr: f64, r: f64) -> Result<Self> {
        let cfg = Self {
            m,
            n,
            snr,
            r,
            k_levels: 2,
            n_train: m,
            epsilon: 0.05,
            t_coh: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_snr_db(mut self, snr_db: f64) -> Result<Self> {
        self.snr = db_to_linear(snr_db);
        self.validate()?;
        Ok(self)
    }

    pub fn with_k_levels(mut self, k: usize) -> Result<Self> {
        self.k_levels = k;
        self.validate()?;
        Ok(self)
    }

    pub fn with_n_train(mut self, n_train: usize) -> Result<Self> {
        self.n_train = n_train;
        self.validate()?;
        Ok(self)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Result<Self> {
        self.epsilon = epsilon;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(Error::Config("antenna counts must be at least 1".into()));
        }
        if !(self.snr > 1.0) || !self.snr.is_finite() {
            return Err(Error::Config(format!("snr must exceed 1, got {}", self.snr)));
        }
        let max = self.m.min(self.n) as f64;
        if !(self.r >= 0.0 && self.r < max) {
            return Err(Error::MultiplexingOutOfRange { r: self.r, max });
        }
        if self.k_levels == 0 {
            return Err(Error::TooFewLevels { required: 1, got: 0 });
        }
        if self.n_train < self.m {
            return Err(Error::Config(format!(
                "n_train = {} below m = {}",
                self.n_train, self.m
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Target rate R = r·log₂ SNR in bits per channel use.
    pub fn rate(&self) -> f64 {
        self.r * self.snr.log2()
    }

    pub fn snr_db(&self) -> f64 {
        linear_to_db(self.snr)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
