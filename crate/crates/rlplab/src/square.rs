//! Band projections, the square function and its dual pairing.
//!
//! For a family `{omega_k}` of frequency intervals the square function is
//! `Tf(x) = (sum_k |P_k f(x)|^2)^{1/2}`, where `P_k` is the sharp Fourier
//! projection onto `omega_k`.  Band evaluation picks between a short
//! inverse-DFT over the band (cost `len * n`) and a masked inverse FFT
//! (cost `n log n`), whichever estimate is cheaper.  All reductions happen
//! in a fixed order, so results are bit-stable across thread counts.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::family::{FrequencyInterval, IntervalFamily};
use crate::signal::{pairwise_sum_c, C64, Signal};

/// Band lengths up to this bound are evaluated by direct summation instead
/// of an FFT; tuned to the crossover of `8 len n` vs `5 n log2 n` flops.
fn band_cutoff(n: usize) -> usize {
    ((n.trailing_zeros() as usize) * 5 / 8).max(1)
}

/// Splits work on the spectrum of one signal across many bands.
pub(crate) struct BandEngine {
    n: usize,
    spectrum: Vec<C64>,
    twiddle: Vec<C64>,
    cutoff: usize,
}

impl BandEngine {
    pub fn new(f: &Signal) -> Self {
        let n = f.n();
        let twiddle = (0..n)
            .map(|j| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * j as f64 / n as f64))
            .collect();
        BandEngine {
            n,
            spectrum: f.spectrum(),
            twiddle,
            cutoff: band_cutoff(n),
        }
    }

    /// Time samples of the sharp projection onto `omega`.
    pub fn band(&self, omega: &FrequencyInterval) -> Vec<C64> {
        debug_assert!(omega.b <= self.n);
        if omega.len() <= self.cutoff {
            self.band_direct(omega)
        } else {
            self.band_fft(omega)
        }
    }

    /// Direct evaluation: `(1/n) sum_{xi in omega} F(xi) e^{2 pi i xi x / n}`.
    fn band_direct(&self, omega: &FrequencyInterval) -> Vec<C64> {
        let n = self.n;
        let scale = 1.0 / n as f64;
        let mut out = vec![C64::default(); n];
        for (i, v) in out.iter_mut().enumerate() {
            // Phase index walks (xi * i) mod n incrementally over the band.
            let mut p = (omega.a * i) % n;
            let mut acc = C64::default();
            for xi in omega.a..omega.b {
                acc += self.spectrum[xi] * self.twiddle[p];
                p += i;
                if p >= n {
                    p -= n;
                }
                let _ = xi;
            }
            *v = acc * scale;
        }
        out
    }

    fn band_fft(&self, omega: &FrequencyInterval) -> Vec<C64> {
        let mut masked = vec![C64::default(); self.n];
        masked[omega.a..omega.b].copy_from_slice(&self.spectrum[omega.a..omega.b]);
        crate::signal::dft_inverse(&masked)
    }

    /// Adds `|P_k f|^2` over the bands `range`, splitting pairwise so the
    /// summation tree is fixed; halves larger than one leaf run on rayon.
    fn accumulate_sq(&self, bands: &[FrequencyInterval]) -> Vec<f64> {
        const LEAF: usize = 4;
        if bands.len() <= LEAF {
            let mut acc = vec![0.0f64; self.n];
            for w in bands {
                let proj = self.band(w);
                for (a, v) in acc.iter_mut().zip(&proj) {
                    *a += v.norm_sqr();
                }
            }
            acc
        } else {
            let mid = bands.len() / 2;
            let (mut left, right) = rayon::join(
                || self.accumulate_sq(&bands[..mid]),
                || self.accumulate_sq(&bands[mid..]),
            );
            for (a, b) in left.iter_mut().zip(&right) {
                *a += b;
            }
            left
        }
    }
}

/// A tuple of signals on a common grid, one component per family member.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSignal {
    components: Vec<Signal>,
}

impl VectorSignal {
    /// All components must share grid size and domain length.
    pub fn new(components: Vec<Signal>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::param("vector signal must have at least one component"))?;
        let (n, l) = (first.n(), first.domain_length());
        for c in &components {
            if c.n() != n || c.domain_length() != l {
                return Err(Error::param("vector signal components on mismatched grids"));
            }
        }
        Ok(VectorSignal { components })
    }

    pub fn components(&self) -> &[Signal] {
        &self.components
    }

    pub fn component(&self, k: usize) -> &Signal {
        &self.components[k]
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn n(&self) -> usize {
        self.components[0].n()
    }

    pub fn domain_length(&self) -> f64 {
        self.components[0].domain_length()
    }

    /// Pointwise Euclidean norm across components, as a real signal.
    pub fn pointwise_norm(&self) -> Signal {
        let n = self.n();
        let acc = accumulate_component_sq(&self.components, n);
        Signal::from_fn(n, self.domain_length(), |i| C64::new(acc[i].sqrt(), 0.0))
            .expect("finite components give a finite norm")
    }
}

fn accumulate_component_sq(components: &[Signal], n: usize) -> Vec<f64> {
    const LEAF: usize = 4;
    if components.len() <= LEAF {
        let mut acc = vec![0.0f64; n];
        for c in components {
            for (a, v) in acc.iter_mut().zip(c.samples()) {
                *a += v.norm_sqr();
            }
        }
        acc
    } else {
        let mid = components.len() / 2;
        let (mut left, right) = rayon::join(
            || accumulate_component_sq(&components[..mid], n),
            || accumulate_component_sq(&components[mid..], n),
        );
        for (a, b) in left.iter_mut().zip(&right) {
            *a += b;
        }
        left
    }
}

/// Sharp Fourier projection of `f` onto the bins of `omega`.
pub fn project(f: &Signal, omega: &FrequencyInterval) -> Result<Signal> {
    let fam = IntervalFamily::new(vec![*omega])?;
    fam.validate(f.n())?;
    let engine = BandEngine::new(f);
    Signal::new(engine.band(omega), f.domain_length())
}

/// All band projections of `f`, sharing one forward transform.
pub fn project_many(f: &Signal, family: &IntervalFamily) -> Result<VectorSignal> {
    family.validate(f.n())?;
    let engine = BandEngine::new(f);
    let components = family
        .intervals()
        .iter()
        .map(|w| Signal::new(engine.band(w), f.domain_length()))
        .collect::<Result<Vec<_>>>()?;
    VectorSignal::new(components)
}

/// The square function `(sum_k |P_k f|^2)^{1/2}` as a real signal.
pub fn square_fn(f: &Signal, family: &IntervalFamily) -> Result<Signal> {
    family.validate(f.n())?;
    let engine = BandEngine::new(f);
    let acc = engine.accumulate_sq(family.intervals());
    Signal::from_fn(f.n(), f.domain_length(), |i| C64::new(acc[i].sqrt(), 0.0))
}

/// Bilinear dual pairing `sum_k sum_i P_k f(x_i) g_k(x_i) dx`.
///
/// No conjugate is applied to `g`; pair against conjugated data to recover
/// Hermitian inner products.
pub fn dual_pairing(f: &Signal, family: &IntervalFamily, g: &VectorSignal) -> Result<C64> {
    family.validate(f.n())?;
    if g.len() != family.len() {
        return Err(Error::param(format!(
            "vector signal has {} components, family has {}",
            g.len(),
            family.len()
        )));
    }
    if g.n() != f.n() {
        return Err(Error::param("signal and dual data on mismatched grids"));
    }
    let engine = BandEngine::new(f);
    let per_band: Vec<C64> = family
        .intervals()
        .iter()
        .zip(g.components())
        .map(|(w, gk)| {
            let proj = engine.band(w);
            let terms: Vec<C64> = proj
                .iter()
                .zip(gk.samples())
                .map(|(p, q)| p * q)
                .collect();
            pairwise_sum_c(&terms)
        })
        .collect();
    Ok(pairwise_sum_c(&per_band) * f.dx())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::IntervalFamily;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::from_fn(n, 1.0, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .unwrap()
    }

    /// Independent O(n^2) projection: direct DFT, mask, direct inverse.
    #[allow(clippy::needless_range_loop)]
    fn project_oracle(f: &Signal, omega: &FrequencyInterval) -> Vec<C64> {
        let n = f.n();
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        let mut spec = vec![C64::default(); n];
        for (xi, s) in spec.iter_mut().enumerate() {
            for (i, v) in f.samples().iter().enumerate() {
                *s += v * Complex64::from_polar(1.0, -tau * (xi * i % n) as f64);
            }
        }
        let mut out = vec![C64::default(); n];
        for (i, o) in out.iter_mut().enumerate() {
            for xi in omega.a..omega.b {
                *o += spec[xi] * Complex64::from_polar(1.0, tau * (xi * i % n) as f64);
            }
            *o /= n as f64;
        }
        out
    }

    #[test]
    fn projection_matches_oracle_both_paths() {
        let f = random_signal(64, 1);
        // Short band exercises the direct path, long band the FFT path.
        for omega in [FrequencyInterval::new(5, 7).unwrap(), FrequencyInterval::new(8, 40).unwrap()]
        {
            let got = project(&f, &omega).unwrap();
            let want = project_oracle(&f, &omega);
            for (a, b) in got.samples().iter().zip(&want) {
                assert!((a - b).norm() < 1e-10, "projection mismatch on {omega}");
            }
        }
    }

    #[test]
    fn projection_is_idempotent_and_identity_on_full_band() {
        let f = random_signal(64, 2);
        let omega = FrequencyInterval::new(3, 17).unwrap();
        let once = project(&f, &omega).unwrap();
        let twice = project(&once, &omega).unwrap();
        for (a, b) in once.samples().iter().zip(twice.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        let full = project(&f, &FrequencyInterval::new(0, 64).unwrap()).unwrap();
        for (a, b) in full.samples().iter().zip(f.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn square_fn_equals_norm_of_projections() {
        let f = random_signal(128, 3);
        for family in [
            IntervalFamily::make_lacunary(2.0, 128).unwrap(),
            IntervalFamily::make_unit(128).unwrap(),
        ] {
            let direct = square_fn(&f, &family).unwrap();
            let via_parts = project_many(&f, &family).unwrap().pointwise_norm();
            // Same leaves, same summation tree: bitwise equal.
            assert_eq!(direct.samples(), via_parts.samples());
        }
    }

    #[test]
    fn partition_family_preserves_l2_norm() {
        for seed in 0..10 {
            let f = random_signal(256, 100 + seed);
            let family = IntervalFamily::make_unit(256).unwrap();
            let t = square_fn(&f, &family).unwrap();
            let lhs = t.lp_norm(2.0);
            let rhs = f.lp_norm(2.0);
            assert!((lhs - rhs).abs() <= 1e-12 * rhs, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn overlapping_family_bounded_by_multiplicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..5 {
            let n = 64;
            let f = random_signal(n, rng.gen());
            let ivs = vec![
                FrequencyInterval::new(0, 8).unwrap(),
                FrequencyInterval::new(4, 12).unwrap(),
                FrequencyInterval::new(6, 20).unwrap(),
                FrequencyInterval::new(30, 40).unwrap(),
            ];
            let family = IntervalFamily::new(ivs).unwrap();
            let b = family.overlap_constant(n) as f64;
            let t = square_fn(&f, &family).unwrap();
            assert!(t.lp_norm(2.0) <= b.sqrt() * f.lp_norm(2.0) + 1e-12);
        }
    }

    #[test]
    fn dual_pairing_with_conjugate_projections_gives_energy() {
        let f = random_signal(64, 11);
        let family = IntervalFamily::make_lacunary(2.0, 64).unwrap();
        let projections = project_many(&f, &family).unwrap();
        let conj: Vec<Signal> = projections
            .components()
            .iter()
            .map(|p| {
                Signal::from_fn(64, 1.0, |i| p.samples()[i].conj()).unwrap()
            })
            .collect();
        let g = VectorSignal::new(conj).unwrap();
        let pairing = dual_pairing(&f, &family, &g).unwrap();
        let energy: f64 = projections
            .components()
            .iter()
            .map(|p| p.lp_norm(2.0).powi(2))
            .sum();
        assert!((pairing.re - energy).abs() < 1e-12 * energy.max(1.0));
        assert!(pairing.im.abs() < 1e-12);
    }

    #[test]
    fn unit_family_square_fn_is_modulation_invariant() {
        let n = 64;
        let f = random_signal(n, 13);
        let family = IntervalFamily::make_unit(n).unwrap();
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        let modulated =
            Signal::from_fn(n, 1.0, |i| f.samples()[i] * Complex64::from_polar(1.0, tau * (5 * i % n) as f64))
                .unwrap();
        let t0 = square_fn(&f, &family).unwrap();
        let t1 = square_fn(&modulated, &family).unwrap();
        for (a, b) in t0.samples().iter().zip(t1.samples()) {
            assert!((a.re - b.re).abs() < 1e-10);
        }
    }
}
