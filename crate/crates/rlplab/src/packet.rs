//! Wave packets adapted to tiles.
//!
//! A packet for the tile `(I, w)` has spectrum supported exactly on the bins
//! of `w`, shaped by a flat-top mother window, and is centered at the
//! midpoint of `I` in time:
//!
//! `phi(x_i) = (1/L) sum_{xi in w} W((xi - a + 1/2)/|w|) e^{2 pi i xi (i - c)/n}`
//!
//! with `L` the domain length and `c` the center of `I` in samples.  The
//! window is 1 on `[taper, 1 - taper]` and climbs from 0 along a polynomial
//! smoothstep with `derivative_count` vanishing derivatives at both ends, so
//! the packet concentrates near `I` with polynomial tail decay; `sup |phi|`
//! is comparable to `1/|I|` and `L^2` norms scale like `|w|^{1/2}`.

use num_complex::Complex64;

use crate::error::Result;
use crate::family::FrequencyInterval;
use crate::signal::{pairwise_sum_c, C64, Signal};
use crate::tiles::Tile;

/// Shape parameters shared by every packet of a model run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WavePacketParams {
    /// Fraction of the window ramped at each end; the middle is exactly 1.
    pub taper_width: f64,
    /// Vanishing derivatives of the ramp at its endpoints.
    pub derivative_count: u32,
    /// Polynomial rate used by tail diagnostics and localized splits.
    pub decay_exponent: f64,
}

impl Default for WavePacketParams {
    fn default() -> Self {
        WavePacketParams {
            taper_width: 1.0 / 64.0,
            derivative_count: 9,
            decay_exponent: 10.0,
        }
    }
}

impl WavePacketParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.taper_width > 0.0 && self.taper_width <= 0.5) {
            return Err(crate::error::Error::param(format!(
                "taper width {} must lie in (0, 1/2]",
                self.taper_width
            )));
        }
        if self.derivative_count > 64 {
            return Err(crate::error::Error::param("derivative count above 64"));
        }
        if !(self.decay_exponent.is_finite() && self.decay_exponent > 2.0) {
            return Err(crate::error::Error::param(format!(
                "decay exponent {} must exceed 2",
                self.decay_exponent
            )));
        }
        Ok(())
    }
}

/// Polynomial smoothstep of order `n`: the regularized incomplete beta
/// `I_t(n+1, n+1)`, a degree `2n+1` polynomial increasing from 0 to 1 with
/// `n` vanishing derivatives at both ends.
pub fn smoothstep(t: f64, n: u32) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    // Binomial form: sum_{j=n+1}^{2n+1} C(2n+1, j) t^j (1-t)^{2n+1-j}.
    let total = 2 * n + 1;
    let mut coeff = 1.0f64;
    for j in 0..=n {
        // coeff = C(2n+1, j) after this step's update below; start at j=0.
        if j > 0 {
            coeff = coeff * (total - j + 1) as f64 / j as f64;
        }
    }
    let mut sum = 0.0f64;
    let mut c = coeff * (total - n) as f64 / (n + 1) as f64; // C(2n+1, n+1)
    for j in (n + 1)..=total {
        sum += c * t.powi(j as i32) * (1.0 - t).powi((total - j) as i32);
        c = c * (total - j) as f64 / (j + 1) as f64;
    }
    sum
}

/// Flat-top mother window on `[0, 1]`: smoothstep ramps of width
/// `taper_width` at both ends, exactly 1 in between, 0 outside.
pub fn mother_window(u: f64, params: &WavePacketParams) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    let tau = params.taper_width;
    let up = u.min(1.0 - u);
    if up >= tau {
        1.0
    } else {
        smoothstep(up / tau, params.derivative_count)
    }
}

/// Window amplitude of bin `xi` inside the frequency interval `w`.
pub fn window_amplitude(w: &FrequencyInterval, xi: usize, params: &WavePacketParams) -> f64 {
    if !w.contains_bin(xi) {
        return 0.0;
    }
    let u = (xi - w.a) as f64 + 0.5;
    mother_window(u / w.len() as f64, params)
}

/// Unit phase `e^{i sign 2 pi xi c / n}` where `c` is the center of the
/// tile's time interval; `2c` is an integer, so the angle reduces exactly.
fn center_phase(tile: &Tile, xi: usize, n: usize, sign: f64) -> C64 {
    let two_c = 2 * tile.time.start + tile.time.len;
    let m = (xi * two_c) % (2 * n);
    Complex64::from_polar(1.0, sign * std::f64::consts::PI * m as f64 / n as f64)
}

/// The wave packet of `tile` as a time-domain signal.
#[allow(clippy::needless_range_loop)]
pub fn wave_packet(
    tile: &Tile,
    params: &WavePacketParams,
    n: usize,
    domain_length: f64,
) -> Result<Signal> {
    params.validate()?;
    crate::signal::check_grid_size(n)?;
    if tile.freq.b > n {
        return Err(crate::error::Error::param(format!(
            "tile band {} exceeds the spectrum size {n}",
            tile.freq
        )));
    }
    // DFT of the packet: (n / L) W(xi) e^{-2 pi i xi c / n} on the band.
    let scale = n as f64 / domain_length;
    let mut spec = vec![C64::default(); n];
    for xi in tile.freq.a..tile.freq.b {
        let amp = window_amplitude(&tile.freq, xi, params);
        spec[xi] = center_phase(tile, xi, n, -1.0) * (amp * scale);
    }
    Signal::from_spectrum(&spec, domain_length)
}

/// Packet coefficient `<f, phi_tile>` from the precomputed unnormalized
/// spectrum of `f`: `(dx / L) sum_{xi in w} F(xi) W(xi) e^{2 pi i xi c / n}`.
///
/// Costs `O(|w|)`, so a whole collection needs one FFT of `f` plus band
/// sweeps.
pub fn packet_coefficient(
    spectrum: &[C64],
    tile: &Tile,
    params: &WavePacketParams,
    domain_length: f64,
) -> C64 {
    let n = spectrum.len();
    let dx = domain_length / n as f64;
    let terms: Vec<C64> = (tile.freq.a..tile.freq.b)
        .map(|xi| {
            let amp = window_amplitude(&tile.freq, xi, params);
            spectrum[xi] * center_phase(tile, xi, n, 1.0) * amp
        })
        .collect();
    pairwise_sum_c(&terms) * (dx / domain_length)
}

/// Theoretical `L^2` norm of a packet: `((1/L) sum_xi W(xi)^2)^{1/2}`.
pub fn packet_l2_norm(tile: &Tile, params: &WavePacketParams, domain_length: f64) -> f64 {
    let sum: f64 = (tile.freq.a..tile.freq.b)
        .map(|xi| window_amplitude(&tile.freq, xi, params).powi(2))
        .sum();
    (sum / domain_length).sqrt()
}

/// Smallest constant `C` with
/// `|phi(x)| <= (C / |I|) (1 + dist(x, I)/|I|)^{-decay_exponent}`
/// over the whole grid, measured on the actual packet samples.
pub fn envelope_constant(
    tile: &Tile,
    params: &WavePacketParams,
    n: usize,
    domain_length: f64,
) -> Result<f64> {
    let phi = wave_packet(tile, params, n, domain_length)?;
    let dx = phi.dx();
    let measure = tile.time.measure(dx);
    let mut best = 0.0f64;
    for (i, v) in phi.samples().iter().enumerate() {
        let chi = crate::signal::cutoff_chi(&tile.time, i, params.decay_exponent, n);
        best = best.max(v.norm() * measure / chi);
    }
    Ok(best)
}
