//! Signals on the periodic grid: storage, Fourier transforms, norms,
//! averages and the polynomial cutoff used by localized estimates.
//!
//! A grid of size `N` (power of two, at least 16) samples a circle of
//! circumference `domain_length`; the sample spacing is
//! `dx = domain_length / N`.  Integrals are left-endpoint Riemann sums, so
//! `||f||_p^p = sum |f_i|^p dx`.  The discrete Fourier transform is
//! unnormalized, `F(xi) = sum_i f_i e^{-2 pi i xi i / N}`, and the inverse
//! carries the `1/N` factor.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = Complex64;

/// Largest grid size the text parsers accept; guards against hostile headers.
pub const MAX_PARSED_GRID: usize = 1 << 20;

/// Sums in a fixed order with pairwise splitting.
///
/// The recursion bottoms out on blocks of 32 summed left to right, so the
/// result depends only on the slice contents, never on thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise(xs)
}

/// Complex-valued [`pairwise_sum`].
pub fn pairwise_sum_c(xs: &[C64]) -> C64 {
    pairwise(xs)
}

fn pairwise<T: Copy + Default + std::ops::Add<Output = T>>(xs: &[T]) -> T {
    if xs.len() <= 32 {
        let mut acc = T::default();
        for &x in xs {
            acc = acc + x;
        }
        acc
    } else {
        let mid = xs.len() / 2;
        pairwise(&xs[..mid]) + pairwise(&xs[mid..])
    }
}

/// Shorter of the two arc distances between samples `i` and `j` on `Z_n`.
pub fn circ_dist(i: usize, j: usize, n: usize) -> usize {
    let d = (i + n - j % n) % n;
    d.min(n - d)
}

/// Checks that `n` is a power of two and at least 16.
pub fn check_grid_size(n: usize) -> Result<()> {
    if n >= 16 && n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::BadGridSize(n))
    }
}

/// Half-open arc `[start, start + len)` of sample indices, taken modulo the
/// grid size.  `len == n` means the whole circle.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct GridInterval {
    pub start: usize,
    pub len: usize,
}

impl GridInterval {
    pub fn new(start: usize, len: usize) -> Self {
        GridInterval { start, len }
    }

    /// The whole circle.
    pub fn full(n: usize) -> Self {
        GridInterval { start: 0, len: n }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.start < n && self.len >= 1 && self.len <= n {
            Ok(())
        } else {
            Err(Error::param(format!(
                "grid interval [{}, {}+{}) out of range for n={}",
                self.start, self.start, self.len, n
            )))
        }
    }

    pub fn is_full(&self, n: usize) -> bool {
        self.len == n
    }

    /// Sample indices of the arc, in traversal order.
    pub fn indices(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let start = self.start;
        (0..self.len).map(move |t| (start + t) % n)
    }

    pub fn contains(&self, i: usize, n: usize) -> bool {
        (i + n - self.start % n) % n < self.len
    }

    /// Arc containment on the circle.
    pub fn contains_interval(&self, other: &GridInterval, n: usize) -> bool {
        if self.len >= n {
            return true;
        }
        if other.len > self.len {
            return false;
        }
        let off = (other.start + n - self.start) % n;
        off + other.len <= self.len
    }

    pub fn measure(&self, dx: f64) -> f64 {
        self.len as f64 * dx
    }

    /// Concentric enlargement `3I`: one extra length on each side, clamped to
    /// the whole circle once `3 len >= n`.
    pub fn triple(&self, n: usize) -> GridInterval {
        if 3 * self.len >= n {
            GridInterval::full(n)
        } else {
            GridInterval {
                start: (self.start + n - self.len) % n,
                len: 3 * self.len,
            }
        }
    }

    /// Distance in samples from `i` to the arc (0 when inside).
    ///
    /// The nearest point of an arc is one of its endpoints.
    pub fn dist_samples(&self, i: usize, n: usize) -> usize {
        if self.contains(i, n) {
            return 0;
        }
        let last = (self.start + self.len - 1) % n;
        circ_dist(i, self.start, n).min(circ_dist(i, last, n))
    }
}

/// Polynomial cutoff adapted to `interval`: `(1 + dist(x_i, I)/|I|)^{-exponent}`.
///
/// Distances and lengths are both in grid samples, so the value does not
/// depend on `domain_length`.  Equals 1 on the interval and decays with the
/// given polynomial rate away from it.
pub fn cutoff_chi(interval: &GridInterval, i: usize, exponent: f64, n: usize) -> f64 {
    let d = interval.dist_samples(i, n) as f64;
    (1.0 + d / interval.len as f64).powf(-exponent)
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan_forward(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn plan_inverse(n: usize) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Unnormalized forward DFT: `F(xi) = sum_i f_i e^{-2 pi i xi i / n}`.
pub fn dft_forward(samples: &[C64]) -> Vec<C64> {
    let mut buf = samples.to_vec();
    plan_forward(samples.len()).process(&mut buf);
    buf
}

/// Inverse DFT with the `1/n` normalization, so
/// `dft_inverse(dft_forward(f)) == f` up to rounding.
pub fn dft_inverse(spectrum: &[C64]) -> Vec<C64> {
    let n = spectrum.len();
    let mut buf = spectrum.to_vec();
    plan_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    for v in &mut buf {
        *v *= scale;
    }
    buf
}

/// A complex signal sampled on the periodic grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    n: usize,
    domain_length: f64,
    samples: Vec<C64>,
}

impl Signal {
    /// Wraps samples; the length must be a power of two at least 16, the
    /// domain length positive and finite, and every sample finite.
    pub fn new(samples: Vec<C64>, domain_length: f64) -> Result<Self> {
        check_grid_size(samples.len())?;
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::param(format!(
                "domain length {domain_length} must be positive and finite"
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i}")));
        }
        Ok(Signal {
            n: samples.len(),
            domain_length,
            samples,
        })
    }

    pub fn zeros(n: usize, domain_length: f64) -> Result<Self> {
        Signal::new(vec![C64::default(); n], domain_length)
    }

    pub fn from_fn(n: usize, domain_length: f64, f: impl FnMut(usize) -> C64) -> Result<Self> {
        Signal::new((0..n).map(f).collect(), domain_length)
    }

    /// Builds the signal with the given unnormalized spectrum.
    pub fn from_spectrum(spectrum: &[C64], domain_length: f64) -> Result<Self> {
        Signal::new(dft_inverse(spectrum), domain_length)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    /// Sample spacing `domain_length / n`.
    pub fn dx(&self) -> f64 {
        self.domain_length / self.n as f64
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    /// Mutable sample access; the caller keeps samples finite.
    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn get(&self, i: usize) -> C64 {
        self.samples[i % self.n]
    }

    /// Unnormalized spectrum of the signal.
    pub fn spectrum(&self) -> Vec<C64> {
        dft_forward(&self.samples)
    }

    /// `|f_i|^p` for every sample (`p = 1` gives plain absolute values).
    pub fn abs_pow(&self, p: f64) -> Vec<f64> {
        if p == 1.0 {
            self.samples.iter().map(|v| v.norm()).collect()
        } else {
            self.samples.iter().map(|v| v.norm().powf(p)).collect()
        }
    }

    /// `L^p` norm, `(sum |f_i|^p dx)^{1/p}`; `p = infinity` gives the max.
    pub fn lp_norm(&self, p: f64) -> f64 {
        assert!(p >= 1.0, "lp_norm requires p >= 1, got {p}");
        if p.is_infinite() {
            return self.samples.iter().map(|v| v.norm()).fold(0.0, f64::max);
        }
        let terms = self.abs_pow(p);
        (pairwise_sum(&terms) * self.dx()).powf(1.0 / p)
    }

    /// `p`-average over a grid interval:
    /// `((1/|I|) int_I |f|^p)^{1/p} = ((1/len) sum_{i in I} |f_i|^p)^{1/p}`.
    pub fn local_average(&self, p: f64, interval: &GridInterval) -> f64 {
        assert!(p >= 1.0 && p.is_finite(), "local_average requires finite p >= 1");
        interval.validate(self.n).expect("interval fits the grid");
        let terms: Vec<f64> = interval
            .indices(self.n)
            .map(|i| self.samples[i].norm().powf(p))
            .collect();
        (pairwise_sum(&terms) / interval.len as f64).powf(1.0 / p)
    }

    /// Keeps samples inside (`keep_inside`) or outside the interval, zeroing
    /// the rest.
    pub fn restrict(&self, interval: &GridInterval, keep_inside: bool) -> Signal {
        let mut out = self.clone();
        for i in 0..self.n {
            if interval.contains(i, self.n) != keep_inside {
                out.samples[i] = C64::default();
            }
        }
        out
    }

    pub fn scale(&self, c: C64) -> Signal {
        let mut out = self.clone();
        for v in &mut out.samples {
            *v *= c;
        }
        out
    }

    pub fn add(&self, other: &Signal) -> Signal {
        assert_eq!(self.n, other.n, "grid sizes must match");
        let mut out = self.clone();
        for (v, w) in out.samples.iter_mut().zip(&other.samples) {
            *v += w;
        }
        out
    }

    /// Serializes as a header `N domain_length` followed by one `re im` line
    /// per sample.  Floats round-trip exactly.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.n * 24 + 32);
        let _ = writeln!(out, "{} {}", self.n, self.domain_length);
        for v in &self.samples {
            let _ = writeln!(out, "{} {}", v.re, v.im);
        }
        out
    }

    /// Parses the [`Signal::to_text`] format.  Rejects malformed headers,
    /// non-finite values, wrong sample counts and grids larger than
    /// [`MAX_PARSED_GRID`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("empty signal text"))?;
        let mut parts = header.split_whitespace();
        let n: usize = parts
            .next()
            .ok_or_else(|| Error::parse("missing grid size"))?
            .parse()
            .map_err(|e| Error::parse(format!("bad grid size: {e}")))?;
        let domain_length: f64 = parts
            .next()
            .ok_or_else(|| Error::parse("missing domain length"))?
            .parse()
            .map_err(|e| Error::parse(format!("bad domain length: {e}")))?;
        if parts.next().is_some() {
            return Err(Error::parse("trailing tokens in signal header"));
        }
        if n > MAX_PARSED_GRID {
            return Err(Error::parse(format!("grid size {n} exceeds parser limit")));
        }
        check_grid_size(n)?;
        let mut samples = Vec::with_capacity(n);
        for line in lines {
            let mut parts = line.split_whitespace();
            let re: f64 = parts
                .next()
                .ok_or_else(|| Error::parse("missing real part"))?
                .parse()
                .map_err(|e| Error::parse(format!("bad real part: {e}")))?;
            let im: f64 = parts
                .next()
                .ok_or_else(|| Error::parse("missing imaginary part"))?
                .parse()
                .map_err(|e| Error::parse(format!("bad imaginary part: {e}")))?;
            if parts.next().is_some() {
                return Err(Error::parse("trailing tokens in sample line"));
            }
            if samples.len() == n {
                return Err(Error::parse("more samples than the header declares"));
            }
            samples.push(C64::new(re, im));
        }
        if samples.len() != n {
            return Err(Error::parse(format!(
                "expected {n} samples, found {}",
                samples.len()
            )));
        }
        Signal::new(samples, domain_length)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Signal::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::from_fn(n, 1.0, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .unwrap()
    }

    #[test]
    fn grid_size_constraint() {
        assert!(Signal::zeros(16, 1.0).is_ok());
        assert!(Signal::zeros(15, 1.0).is_err());
        assert!(Signal::zeros(8, 1.0).is_err());
        assert!(Signal::zeros(48, 1.0).is_err());
    }

    #[test]
    fn norms_on_hand_example() {
        // n = 16, domain 1: f = (2, -1, 0, ..., 0), dx = 1/16.
        let mut samples = vec![C64::default(); 16];
        samples[0] = C64::new(2.0, 0.0);
        samples[1] = C64::new(-1.0, 0.0);
        let f = Signal::new(samples, 1.0).unwrap();
        assert!((f.lp_norm(1.0) - 3.0 / 16.0).abs() < 1e-15);
        assert!((f.lp_norm(2.0) - (5.0f64 / 16.0).sqrt()).abs() < 1e-15);
        assert!((f.lp_norm(f64::INFINITY) - 2.0).abs() < 1e-15);
        // Average of |f|^2 over [0, 4): (4 + 1)/4, then sqrt.
        let avg = f.local_average(2.0, &GridInterval::new(0, 4));
        assert!((avg - (5.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dft_round_trip_and_parseval() {
        for seed in 0..20 {
            let f = random_signal(64, seed);
            let spec = f.spectrum();
            let back = Signal::from_spectrum(&spec, f.domain_length()).unwrap();
            for (a, b) in f.samples().iter().zip(back.samples()) {
                assert!((a - b).norm() < 1e-12);
            }
            // Parseval: ||f||_2^2 = sum |F|^2 dx / n.
            let lhs = f.lp_norm(2.0).powi(2);
            let rhs: f64 = spec.iter().map(|v| v.norm_sqr()).sum::<f64>() * f.dx() / 64.0;
            assert!((lhs - rhs).abs() < 1e-12 * lhs.max(1.0));
        }
    }

    #[test]
    fn pairwise_sum_matches_exact_on_integers() {
        // Integer-valued terms make the exact sum representable, so pairwise
        // and sequential orders must agree to the last bit.
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64).collect();
        let seq: f64 = xs.iter().sum();
        assert_eq!(pairwise_sum(&xs), seq);
        let c: Vec<C64> = xs.iter().map(|&x| C64::new(x, -x)).collect();
        let got = pairwise_sum_c(&c);
        assert_eq!(got.re, seq);
        assert_eq!(got.im, -seq);
    }

    #[test]
    fn interval_geometry() {
        let n = 16;
        let i = GridInterval::new(14, 4); // wraps: {14, 15, 0, 1}
        let members: Vec<usize> = i.indices(n).collect();
        assert_eq!(members, vec![14, 15, 0, 1]);
        assert!(i.contains(0, n) && i.contains(14, n) && !i.contains(2, n));
        assert_eq!(i.dist_samples(2, n), 1);
        assert_eq!(i.dist_samples(8, n), 6); // nearer to 14 going up: 14-8=6; 8-1=7
        let t = i.triple(n);
        assert_eq!((t.start, t.len), (10, 12));
        assert!(t.contains_interval(&i, n));
        // Tripling clamps to the full circle.
        let big = GridInterval::new(3, 6);
        assert!(big.triple(n).is_full(n));
    }

    #[test]
    fn cutoff_values() {
        let n = 64;
        let i = GridInterval::new(0, 4);
        assert_eq!(cutoff_chi(&i, 2, 10.0, n), 1.0);
        // dist(8, [0,4)) = 5 samples, so chi = (1 + 5/4)^{-10}.
        let want = (1.0f64 + 5.0 / 4.0).powf(-10.0);
        assert!((cutoff_chi(&i, 8, 10.0, n) - want).abs() < 1e-15);
        // Symmetric around the interval.
        assert_eq!(cutoff_chi(&i, 10, 10.0, n), cutoff_chi(&i, 64 - 7, 10.0, n));
    }

    #[test]
    fn text_round_trip() {
        let f = random_signal(32, 9);
        let text = f.to_text();
        let back = Signal::from_text(&text).unwrap();
        assert_eq!(f, back);
        assert!(Signal::from_text("").is_err());
        assert!(Signal::from_text("12 1.0\n").is_err());
        assert!(Signal::from_text("16 nope\n").is_err());
        let short = "16 1.0\n0 0\n";
        assert!(Signal::from_text(short).is_err());
    }
}
