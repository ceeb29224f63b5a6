//! Muckenhoupt weights on the periodic grid: characteristics, weighted
//! norms, operator-norm probes and exponent diagnostics.
//!
//! Characteristics take the supremum over circular intervals.  Exact
//! enumeration is quadratic (cubic for the Fujii-Wilson constant, whose
//! integrand is itself a maximal function), so each characteristic switches
//! to the three shifted dyadic grids beyond a fixed grid size; the cutoffs
//! are pinned as constants and the switch is recorded in the result only
//! through its value, never through a changed contract.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dyadic::{maximal_fn, DyadicInterval};
use crate::error::{Error, Result};
use crate::family::{IntervalFamily, SplitSpec};
use crate::signal::{check_grid_size, circ_dist, pairwise_sum, GridInterval, Signal, C64};
use crate::square::{project, square_fn};

/// Largest grid for which `A_p` characteristics enumerate every circular
/// interval.
pub const AP_EXACT_LIMIT: usize = 4096;
/// Largest grid for which the Fujii-Wilson characteristic enumerates every
/// circular interval; its inner maximal pass makes exhaustion cubic.
pub const AINFTY_EXACT_LIMIT: usize = 256;

/// A positive weight on the grid, with an optional distinguished sample
/// (power weights remember their singularity; probes aim trial mass there).
#[derive(Clone, Debug)]
pub struct Weight {
    samples: Vec<f64>,
    domain_length: f64,
    basepoint: Option<usize>,
}

impl Weight {
    pub fn new(samples: Vec<f64>, domain_length: f64) -> Result<Self> {
        check_grid_size(samples.len())?;
        if !(domain_length.is_finite() && domain_length > 0.0) {
            return Err(Error::param(format!("domain length {domain_length} must be positive")));
        }
        for (i, &v) in samples.iter().enumerate() {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonFinite(format!("weight sample {i} is {v}")));
            }
        }
        Ok(Weight { samples, domain_length, basepoint: None })
    }

    pub fn constant(n: usize, domain_length: f64, value: f64) -> Result<Self> {
        Weight::new(vec![value; n], domain_length)
    }

    /// `w(x) = max(dist(x, x0), dx)^a` with the periodic distance; the floor
    /// at one grid step keeps the weight positive at its own singularity.
    pub fn power(n: usize, domain_length: f64, exponent: f64, basepoint: usize) -> Result<Self> {
        check_grid_size(n)?;
        if !exponent.is_finite() {
            return Err(Error::param("power weight exponent must be finite"));
        }
        if basepoint >= n {
            return Err(Error::param(format!("basepoint {basepoint} outside grid of {n}")));
        }
        let dx = domain_length / n as f64;
        let samples = (0..n)
            .map(|i| (circ_dist(i, basepoint, n) as f64 * dx).max(dx).powf(exponent))
            .collect();
        let mut w = Weight::new(samples, domain_length)?;
        w.basepoint = Some(basepoint);
        Ok(w)
    }

    /// Two-valued weight: `low` on the first `ceil(fraction * n)` samples,
    /// `high` elsewhere.
    pub fn step(n: usize, domain_length: f64, low: f64, high: f64, fraction: f64) -> Result<Self> {
        check_grid_size(n)?;
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::param(format!("step fraction {fraction} outside [0, 1]")));
        }
        let cut = ((fraction * n as f64).ceil() as usize).min(n);
        let samples = (0..n).map(|i| if i < cut { low } else { high }).collect();
        Weight::new(samples, domain_length)
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn domain_length(&self) -> f64 {
        self.domain_length
    }

    pub fn dx(&self) -> f64 {
        self.domain_length / self.samples.len() as f64
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn basepoint(&self) -> Option<usize> {
        self.basepoint
    }

    pub fn as_signal(&self) -> Signal {
        Signal::from_fn(self.n(), self.domain_length, |i| C64::new(self.samples[i], 0.0))
            .expect("weight samples are finite")
    }

    /// `int w` over the circle.
    pub fn total(&self) -> f64 {
        pairwise_sum(&self.samples) * self.dx()
    }
}

/// Raw sample sum of `values` over a circular interval.
fn circular_sum(values: &[f64], q: &GridInterval) -> f64 {
    let n = values.len();
    q.indices(n).map(|i| values[i]).sum()
}

/// All realized shifted dyadic intervals, deduplicated.
fn dyadic_intervals(n: usize) -> Vec<GridInterval> {
    let mut out = Vec::new();
    let log_n = n.trailing_zeros();
    for grid in 0..3u8 {
        for scale in 0..=log_n {
            let len = 1usize << scale;
            for pos in 0..n / len {
                out.push(DyadicInterval { grid, scale, pos }.realize(n));
            }
        }
    }
    out.sort_by_key(|q| (q.start, q.len));
    out.dedup_by_key(|q| (q.start, q.len));
    out
}

/// `[w]_{A_1} = sup (Mw / w)` with the exact circular maximal function on
/// small grids.
pub fn a1_characteristic(w: &Weight) -> Result<f64> {
    let m = maximal_fn(&w.as_signal(), 1.0)?;
    Ok(w
        .samples
        .iter()
        .zip(m.samples())
        .map(|(&wi, mi)| mi.re / wi)
        .fold(0.0, f64::max))
}

/// `[w]_{A_p} = sup_Q <w>_Q <w^{1/(1-p)}>_Q^{p-1}` for `p > 1`; `p = 1`
/// falls back to the `A_1` characteristic.
pub fn ap_characteristic(w: &Weight, p: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::param(format!("exponent {p} must be at least 1")));
    }
    if p == 1.0 {
        return a1_characteristic(w);
    }
    let n = w.n();
    let sigma: Vec<f64> = w.samples.iter().map(|&v| v.powf(1.0 / (1.0 - p))).collect();
    if n <= AP_EXACT_LIMIT {
        let best = (0..n)
            .into_par_iter()
            .map(|start| {
                let mut sw = 0.0f64;
                let mut ss = 0.0f64;
                let mut local = 0.0f64;
                for len in 1..=n {
                    let i = (start + len - 1) % n;
                    sw += w.samples[i];
                    ss += sigma[i];
                    let l = len as f64;
                    local = local.max((sw / l) * (ss / l).powf(p - 1.0));
                }
                local
            })
            .reduce(|| 0.0, f64::max);
        Ok(best)
    } else {
        let mut best = 0.0f64;
        for q in dyadic_intervals(n) {
            let l = q.len as f64;
            let avg_w = circular_sum(&w.samples, &q) / l;
            let avg_s = circular_sum(&sigma, &q) / l;
            best = best.max(avg_w * avg_s.powf(p - 1.0));
        }
        Ok(best)
    }
}

/// `(1/w(Q)) int_Q M(w 1_Q)` for one arc, `vals` being the weight on the
/// arc in circular order and `gap = n - |Q|`.
///
/// The circular maximal function of the masked weight splits by how a
/// window meets the arc.  A window meeting it in one piece is dominated by
/// that piece, giving the in-arc maximal function.  A window meeting it in
/// two pieces wraps through the complement: it keeps a prefix `[0, e)` and
/// a suffix `[s, q)` of the arc (`e <= s`; equality is the full circle)
/// and has length `gap + e + q - s`.  Both parts are scanned exactly.
fn arc_fujii(vals: &[f64], gap: usize) -> f64 {
    let q = vals.len();
    let mut m = crate::dyadic::maximal_linear(vals);
    let mut prefix = vec![0.0f64; q + 1];
    for (i, &v) in vals.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    let mass = prefix[q];
    // colmax[e]: best two-piece value whose prefix part is [0, e); the
    // prefix-max over s of rowmax mirrors it for suffix membership.
    let mut colmax = vec![0.0f64; q + 1];
    let mut rowmax = vec![0.0f64; q + 1];
    for e in 0..=q {
        for s in e..=q {
            let window = gap + e + q - s;
            if window == 0 {
                continue;
            }
            let value = (prefix[e] + mass - prefix[s]) / window as f64;
            colmax[e] = colmax[e].max(value);
            rowmax[s] = rowmax[s].max(value);
        }
    }
    // best_pre[j]: max over e > j of colmax[e]; best_suf[j]: max over
    // s <= j of rowmax[s].
    let mut best = 0.0f64;
    let mut best_pre = vec![0.0f64; q];
    for j in (0..q).rev() {
        best = best.max(colmax[j + 1]);
        best_pre[j] = best;
    }
    let mut run = 0.0f64;
    for j in 0..q {
        run = run.max(rowmax[j]);
        m[j] = m[j].max(best_pre[j]).max(run);
    }
    pairwise_sum(&m) / mass
}

/// Fujii-Wilson characteristic `sup_Q (1/w(Q)) int_Q M(w 1_Q)`, with the
/// inner maximal function taken over all circular windows.
pub fn ainfty_characteristic(w: &Weight) -> Result<f64> {
    let n = w.n();
    let eval = |q: &GridInterval| -> f64 {
        let vals: Vec<f64> = q.indices(n).map(|i| w.samples[i]).collect();
        arc_fujii(&vals, n - q.len)
    };
    if n <= AINFTY_EXACT_LIMIT {
        let best = (0..n)
            .into_par_iter()
            .map(|start| {
                let mut local = 0.0f64;
                for len in 1..=n {
                    local = local.max(eval(&GridInterval::new(start, len)));
                }
                local
            })
            .reduce(|| 0.0, f64::max);
        Ok(best)
    } else {
        let qs = dyadic_intervals(n);
        Ok(qs.par_iter().map(eval).reduce(|| 0.0, f64::max))
    }
}

/// `(int |f|^p w)^{1/p}`; `p = infinity` is the plain sup norm.
pub fn weighted_lp_norm(f: &Signal, w: &Weight, p: f64) -> Result<f64> {
    if f.n() != w.n() {
        return Err(Error::param("weight grid does not match the signal"));
    }
    assert!(p >= 1.0, "exponent {p} below 1");
    if p.is_infinite() {
        return Ok(f.samples().iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    let terms: Vec<f64> = f
        .samples()
        .iter()
        .zip(&w.samples)
        .map(|(z, &wi)| z.norm().powf(p) * wi)
        .collect();
    Ok((pairwise_sum(&terms) * w.dx()).powf(1.0 / p))
}

/// Weak norm `sup_t t * w({|f| > t})^{1/p}`, exact over the finite level
/// set of `|f|`.
pub fn weak_weighted_norm(f: &Signal, w: &Weight, p: f64) -> Result<f64> {
    if f.n() != w.n() {
        return Err(Error::param("weight grid does not match the signal"));
    }
    assert!(p >= 1.0 && p.is_finite(), "exponent {p} invalid for a weak norm");
    let mut pairs: Vec<(f64, f64)> = f
        .samples()
        .iter()
        .zip(&w.samples)
        .map(|(z, &wi)| (z.norm(), wi * w.dx()))
        .collect();
    // Descending by level: the sup over t is attained just below each value.
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut mass = 0.0f64;
    let mut best = 0.0f64;
    for (level, wm) in pairs {
        mass += wm;
        best = best.max(level * mass.powf(1.0 / p));
    }
    Ok(best)
}

/// How a trial bank probes an operator norm.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum OpNormMode {
    /// `||Tf||_{L^p(w)} / ||f||_{L^p(w)}`.
    Strong,
    /// `||Tf||_{L^{p,infty}(w)} / ||f||_{L^p(w)}`.
    Weak,
}

/// Result of an operator-norm probe: the best ratio found, which trial
/// found it, and how many trials ran.
#[derive(Clone, Debug)]
pub struct OpNormEstimate {
    pub value: f64,
    pub best_label: String,
    pub trial_count: usize,
}

fn spike(n: usize, domain_length: f64, at: usize) -> Signal {
    Signal::from_fn(n, domain_length, |i| {
        if i == at {
            C64::new(1.0, 0.0)
        } else {
            C64::default()
        }
    })
    .unwrap()
}

fn dirichlet(n: usize, domain_length: f64, bins: impl Fn(usize) -> bool) -> Signal {
    let spectrum: Vec<C64> = (0..n)
        .map(|xi| if bins(xi) { C64::new(1.0, 0.0) } else { C64::default() })
        .collect();
    Signal::from_spectrum(&spectrum, domain_length).unwrap()
}

/// Lower estimate of the operator norm of the square function built from
/// `family`, over `L^p(w)`: a deterministic bank of structured trials plus
/// seeded random classes.  Identical inputs give identical estimates.
pub fn estimate_opnorm(
    family: &IntervalFamily,
    w: &Weight,
    p: f64,
    mode: OpNormMode,
    random_trials: usize,
    seed: u64,
) -> Result<OpNormEstimate> {
    let n = w.n();
    family.validate(n)?;
    let dl = w.domain_length();
    let base = w.basepoint().unwrap_or(0);
    let mut trials: Vec<(String, Signal)> = vec![
        ("spike:origin".into(), spike(n, dl, 0)),
        ("constant".into(), Signal::from_fn(n, dl, |_| C64::new(1.0, 0.0)).unwrap()),
        ("dirichlet:half".into(), dirichlet(n, dl, |xi| xi < n / 2)),
        (
            "dirichlet:family".into(),
            dirichlet(n, dl, |xi| family.intervals().iter().any(|b| b.contains_bin(xi))),
        ),
    ];
    if base != 0 {
        trials.push((format!("spike:{base}"), spike(n, dl, base)));
    }
    for t in 0..random_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t as u64));
        let label;
        let f = match t % 4 {
            0 => {
                label = format!("fourier:{t}");
                let spectrum: Vec<C64> = (0..n)
                    .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                Signal::from_spectrum(&spectrum, dl).unwrap()
            }
            1 => {
                label = format!("spikes:{t}");
                let mut f = Signal::zeros(n, dl).unwrap();
                let count = rng.gen_range(1..=4);
                for _ in 0..count {
                    // Half the mass lands near the weight's feature point.
                    let at = if rng.gen_bool(0.5) {
                        (base + n - n / 32 + rng.gen_range(0..n / 16)) % n
                    } else {
                        rng.gen_range(0..n)
                    };
                    f.samples_mut()[at] += C64::new(rng.gen_range(0.5..1.5), 0.0);
                }
                f
            }
            2 => {
                label = format!("bump:{t}");
                let member = family.intervals()[rng.gen_range(0..family.len())];
                let shift = rng.gen_range(0..n);
                let spectrum: Vec<C64> = (0..n)
                    .map(|xi| {
                        if member.contains_bin(xi) {
                            let u = (xi as f64 - member.a as f64 + 0.5) / member.len() as f64;
                            let bump = (std::f64::consts::PI * u).sin().powi(2);
                            let angle =
                                -2.0 * std::f64::consts::PI * (xi * shift % n) as f64 / n as f64;
                            C64::from_polar(bump, angle)
                        } else {
                            C64::default()
                        }
                    })
                    .collect();
                Signal::from_spectrum(&spectrum, dl).unwrap()
            }
            _ => {
                label = format!("modulated:{t}");
                let start = rng.gen_range(0..n);
                let len = 1usize << rng.gen_range(0..=n.trailing_zeros());
                let xi0 = rng.gen_range(0..n);
                let q = GridInterval::new(start, len);
                Signal::from_fn(n, dl, |i| {
                    if q.contains(i, n) {
                        C64::from_polar(
                            1.0,
                            2.0 * std::f64::consts::PI * (xi0 as f64 * i as f64) / n as f64,
                        )
                    } else {
                        C64::default()
                    }
                })
                .unwrap()
            }
        };
        trials.push((label, f));
    }
    let mut value = 0.0f64;
    let mut best_label = String::new();
    let trial_count = trials.len();
    let ratios: Vec<(String, f64)> = trials
        .into_par_iter()
        .map(|(label, f)| {
            let denom = weighted_lp_norm(&f, w, p)?;
            if denom <= 0.0 {
                return Ok((label, 0.0));
            }
            let tf = square_fn(&f, family)?;
            let numer = match mode {
                OpNormMode::Strong => weighted_lp_norm(&tf, w, p)?,
                OpNormMode::Weak => weak_weighted_norm(&tf, w, p)?,
            };
            Ok((label, numer / denom))
        })
        .collect::<Result<_>>()?;
    for (label, r) in ratios {
        if r > value {
            value = r;
            best_label = label;
        }
    }
    Ok(OpNormEstimate { value, best_label, trial_count })
}

/// Rescaling exponents for transferring a bound at `(p0, q0)` to `p`
/// between them: returns `(phi, alpha)` where the transferred inequality
/// scales as `t^{-phi}` in the level and the characteristic enters with
/// power `alpha`.  `q0 = None` means the upper endpoint is infinity.
pub fn exponent_formula(p: f64, p0: f64, q0: Option<f64>) -> Result<(f64, f64)> {
    if !(p0 >= 1.0 && p > p0) {
        return Err(Error::param(format!("need 1 <= p0 < p, got p0={p0}, p={p}")));
    }
    match q0 {
        None => {
            let phi = p / p0;
            let alpha = (1.0 / (p - p0)).max(1.0);
            Ok((phi, alpha))
        }
        Some(q0) => {
            if !(q0.is_finite() && q0 > p) {
                return Err(Error::param(format!("need p < q0, got p={p}, q0={q0}")));
            }
            let r = q0 / p;
            let rp = r / (r - 1.0);
            let phi = rp * (p / p0 - 1.0) + 1.0;
            let alpha = (1.0 / (p - p0)).max((q0 - 1.0) / (q0 - p)) / rp;
            Ok((phi, alpha))
        }
    }
}

/// Least-squares fit of `y = c * x^e` through positive points; returns
/// `(e, c)`.
pub fn fit_exponent(points: &[(f64, f64)]) -> Result<(f64, f64)> {
    if points.len() < 2 {
        return Err(Error::param("exponent fit needs at least two points"));
    }
    let logs: Vec<(f64, f64)> = points
        .iter()
        .map(|&(x, y)| {
            if x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite() {
                Ok((x.ln(), y.ln()))
            } else {
                Err(Error::param(format!("exponent fit needs positive finite points, got ({x}, {y})")))
            }
        })
        .collect::<Result<_>>()?;
    let m = logs.len() as f64;
    let sx: f64 = logs.iter().map(|p| p.0).sum();
    let sy: f64 = logs.iter().map(|p| p.1).sum();
    let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
    let denom = m * sxx - sx * sx;
    if denom.abs() < 1e-12 * m * sxx.max(1.0) {
        return Err(Error::param("exponent fit is degenerate: all abscissas equal"));
    }
    let e = (m * sxy - sx * sy) / denom;
    let c = ((sy - e * sx) / m).exp();
    Ok((e, c))
}

/// Result of the two-stage projection check on congruent families.
#[derive(Clone, Debug)]
pub struct CompositionCheck {
    /// Largest relative `L^2` gap between projecting through the block and
    /// projecting directly, over the trial bank.
    pub projection_error: f64,
    pub coarse_count: usize,
    pub fine_count: usize,
    /// Measured two-stage square-function norm on `L^2(w)`.
    pub opnorm_two_stage: f64,
    pub a1: f64,
    /// `[w]_{A_1}^5`.
    pub bound: f64,
    /// `opnorm_two_stage / bound`.
    pub ratio: f64,
}

/// Refines the blocks of a lacunary family into congruent pieces and checks
/// that projecting onto a piece through its block equals projecting
/// directly; then probes the two-stage square function on `L^2(w)` against
/// the fifth power of the `A_1` characteristic.
pub fn congruent_composition_check(
    w: &Weight,
    lacunary_ratio: f64,
    split: &SplitSpec,
    random_trials: usize,
    seed: u64,
) -> Result<CompositionCheck> {
    let n = w.n();
    let dl = w.domain_length();
    let coarse = IntervalFamily::make_lacunary(lacunary_ratio, n)?;
    let counts = split.counts_for(&coarse)?;
    let fine = IntervalFamily::make_congruent(&coarse, &counts)?;
    let mut trials: Vec<Signal> = vec![
        spike(n, dl, 0),
        dirichlet(n, dl, |xi| xi % 3 == 0),
        Signal::from_fn(n, dl, |i| C64::new((i as f64 / n as f64 * 7.0).sin(), 0.0)).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..random_trials {
        trials.push(
            Signal::from_fn(n, dl, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .unwrap(),
        );
    }
    let mut projection_error = 0.0f64;
    let mut opnorm = 0.0f64;
    for f in &trials {
        let mut two_stage_sq = Signal::zeros(n, dl)?;
        for block in coarse.intervals() {
            let through = project(f, block)?;
            for sub in fine.intervals() {
                if !block.contains_interval(sub) {
                    continue;
                }
                let composed = project(&through, sub)?;
                let direct = project(f, sub)?;
                let gap = composed.add(&direct.scale(C64::new(-1.0, 0.0))).lp_norm(2.0);
                let scale = f.lp_norm(2.0).max(1e-300);
                projection_error = projection_error.max(gap / scale);
                for (acc, z) in two_stage_sq.samples_mut().iter_mut().zip(composed.samples()) {
                    *acc += C64::new(z.norm_sqr(), 0.0);
                }
            }
        }
        let tf = Signal::from_fn(n, dl, |i| C64::new(two_stage_sq.samples()[i].re.sqrt(), 0.0))?;
        let denom = weighted_lp_norm(f, w, 2.0)?;
        if denom > 0.0 {
            opnorm = opnorm.max(weighted_lp_norm(&tf, w, 2.0)? / denom);
        }
    }
    let a1 = a1_characteristic(w)?;
    let bound = a1.powi(5);
    Ok(CompositionCheck {
        projection_error,
        coarse_count: coarse.len(),
        fine_count: fine.len(),
        opnorm_two_stage: opnorm,
        a1,
        bound,
        ratio: opnorm / bound,
    })
}

/// Weight constructors nameable from the command line.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightSpec {
    Constant(f64),
    Power { exponent: f64, basepoint: Option<usize> },
    Step { low: f64, high: f64, fraction: f64 },
    File(PathBuf),
}

impl WeightSpec {
    /// Forms: `const:<c>`, `power:<a>[:<basepoint>]`,
    /// `step:<low>:<high>:<fraction>`, `file:<path>`.
    pub fn parse(text: &str) -> Result<Self> {
        if text.len() > 4096 {
            return Err(Error::parse("weight spec too long"));
        }
        let (head, rest) = match text.split_once(':') {
            Some((h, r)) => (h, r),
            None => (text, ""),
        };
        match head {
            "const" => {
                let c: f64 =
                    rest.parse().map_err(|_| Error::parse(format!("bad constant {rest:?}")))?;
                Ok(WeightSpec::Constant(c))
            }
            "power" => {
                let mut it = rest.split(':');
                let a = it
                    .next()
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::parse("power weight needs an exponent"))?;
                let exponent: f64 =
                    a.parse().map_err(|_| Error::parse(format!("bad exponent {a:?}")))?;
                let basepoint = match it.next() {
                    None => None,
                    Some(b) => Some(
                        b.parse::<usize>()
                            .map_err(|_| Error::parse(format!("bad basepoint {b:?}")))?,
                    ),
                };
                if it.next().is_some() {
                    return Err(Error::parse("power weight takes at most two fields"));
                }
                Ok(WeightSpec::Power { exponent, basepoint })
            }
            "step" => {
                let parts: Vec<&str> = rest.split(':').collect();
                if parts.len() != 3 {
                    return Err(Error::parse("step weight needs low:high:fraction"));
                }
                let nums: Vec<f64> = parts
                    .iter()
                    .map(|s| s.parse().map_err(|_| Error::parse(format!("bad number {s:?}"))))
                    .collect::<Result<_>>()?;
                Ok(WeightSpec::Step { low: nums[0], high: nums[1], fraction: nums[2] })
            }
            "file" => {
                if rest.is_empty() {
                    return Err(Error::parse("file weight needs a path"));
                }
                Ok(WeightSpec::File(PathBuf::from(rest)))
            }
            other => Err(Error::parse(format!(
                "unknown weight spec {other:?}; expected const, power, step or file"
            ))),
        }
    }

    pub fn build(&self, n: usize, domain_length: f64) -> Result<Weight> {
        match self {
            WeightSpec::Constant(c) => Weight::constant(n, domain_length, *c),
            WeightSpec::Power { exponent, basepoint } => {
                Weight::power(n, domain_length, *exponent, basepoint.unwrap_or(0))
            }
            WeightSpec::Step { low, high, fraction } => {
                Weight::step(n, domain_length, *low, *high, *fraction)
            }
            WeightSpec::File(path) => weight_from_file(path, n),
        }
    }
}

impl std::fmt::Display for WeightSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightSpec::Constant(c) => write!(f, "const:{c}"),
            WeightSpec::Power { exponent, basepoint: None } => write!(f, "power:{exponent}"),
            WeightSpec::Power { exponent, basepoint: Some(b) } => {
                write!(f, "power:{exponent}:{b}")
            }
            WeightSpec::Step { low, high, fraction } => write!(f, "step:{low}:{high}:{fraction}"),
            WeightSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Reads a weight from a signal text file: real parts become the weight.
fn weight_from_file(path: &Path, n: usize) -> Result<Weight> {
    let s = Signal::read_file(path)?;
    if s.n() != n {
        return Err(Error::param(format!(
            "weight file has {} samples, expected {n}",
            s.n()
        )));
    }
    for (i, z) in s.samples().iter().enumerate() {
        if z.im != 0.0 {
            return Err(Error::parse(format!("weight sample {i} has an imaginary part")));
        }
    }
    let mut w = Weight::new(s.samples().iter().map(|z| z.re).collect(), s.domain_length())?;
    w.basepoint = None;
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    // Direct enumeration of every circular interval with fresh sums.
    fn naive_ap(w: &Weight, p: f64) -> f64 {
        let n = w.n();
        let mut best = 0.0f64;
        for start in 0..n {
            for len in 1..=n {
                let mut sw = 0.0;
                let mut ss = 0.0;
                for k in 0..len {
                    let v = w.samples()[(start + k) % n];
                    sw += v;
                    ss += v.powf(1.0 / (1.0 - p));
                }
                let l = len as f64;
                best = best.max((sw / l) * (ss / l).powf(p - 1.0));
            }
        }
        best
    }

    // Brute Fujii-Wilson: max over windows containing each point, scanned
    // directly; the full-circle arc uses wrapping windows.
    fn naive_ainfty(w: &Weight) -> f64 {
        let n = w.n();
        let mut best = 0.0f64;
        for start in 0..n {
            for len in 1..=n {
                let mask: Vec<f64> = (0..n)
                    .map(|i| if (i + n - start % n) % n < len { w.samples()[i] } else { 0.0 })
                    .collect();
                let total: f64 = (0..len).map(|k| w.samples()[(start + k) % n]).sum();
                let mut integral = 0.0;
                for k in 0..len {
                    let x = (start + k) % n;
                    // Every circular window containing x: a samples to the
                    // left, b to the right, total length a + b + 1 <= n.
                    let mut m = 0.0f64;
                    let mut left = 0.0;
                    for a in 0..n {
                        if a > 0 {
                            left += mask[(x + n - a) % n];
                        }
                        let mut right = 0.0;
                        for b in 0..(n - a) {
                            if b > 0 {
                                right += mask[(x + b) % n];
                            }
                            m = m.max((mask[x] + left + right) / (a + b + 1) as f64);
                        }
                    }
                    integral += m;
                }
                best = best.max(integral / total);
            }
        }
        best
    }

    #[test]
    fn constant_weight_has_unit_characteristics() {
        let w = Weight::constant(64, 1.0, 3.5).unwrap();
        assert!((a1_characteristic(&w).unwrap() - 1.0).abs() < 1e-12);
        assert!((ap_characteristic(&w, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((ainfty_characteristic(&w).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ap_matches_naive_enumeration() {
        let w = Weight::power(64, 1.0, 0.5, 20).unwrap();
        let fast = ap_characteristic(&w, 2.0).unwrap();
        let slow = naive_ap(&w, 2.0);
        assert!((fast - slow).abs() < 1e-10 * slow, "{fast} vs {slow}");
        let w3 = Weight::step(64, 1.0, 1.0, 9.0, 0.25).unwrap();
        let fast3 = ap_characteristic(&w3, 3.0).unwrap();
        let slow3 = naive_ap(&w3, 3.0);
        assert!((fast3 - slow3).abs() < 1e-10 * slow3);
    }

    #[test]
    fn ainfty_matches_naive_enumeration() {
        let w = Weight::power(32, 1.0, 0.5, 10).unwrap();
        let fast = ainfty_characteristic(&w).unwrap();
        let slow = naive_ainfty(&w);
        assert!((fast - slow).abs() < 1e-10 * slow, "{fast} vs {slow}");
        let ws = Weight::step(32, 1.0, 1.0, 6.0, 0.4).unwrap();
        let fast_s = ainfty_characteristic(&ws).unwrap();
        let slow_s = naive_ainfty(&ws);
        assert!((fast_s - slow_s).abs() < 1e-10 * slow_s, "{fast_s} vs {slow_s}");
    }

    #[test]
    fn characteristics_order_sanely() {
        let w = Weight::power(64, 1.0, 0.7, 5).unwrap();
        let a2 = ap_characteristic(&w, 2.0).unwrap();
        let a4 = ap_characteristic(&w, 4.0).unwrap();
        let a1 = a1_characteristic(&w).unwrap();
        assert!(a2 >= a4 * (1.0 - 1e-12), "A_p must shrink as p grows: {a2} vs {a4}");
        assert!(a1 >= a2 * (1.0 - 1e-12), "A_1 dominates A_2: {a1} vs {a2}");
        // Stronger singularity, larger characteristic.
        let mild = ap_characteristic(&Weight::power(64, 1.0, 0.3, 5).unwrap(), 2.0).unwrap();
        assert!(a2 > mild);
    }

    #[test]
    fn weak_norm_is_chebyshev_consistent() {
        let w = Weight::step(64, 1.0, 1.0, 4.0, 0.5).unwrap();
        let f = Signal::from_fn(64, 1.0, |i| C64::new((i as f64 * 0.37).sin(), 0.2)).unwrap();
        for p in [1.0, 1.5, 2.0] {
            let weak = weak_weighted_norm(&f, &w, p).unwrap();
            let strong = weighted_lp_norm(&f, &w, p).unwrap();
            assert!(weak <= strong * (1.0 + 1e-12), "p={p}: {weak} > {strong}");
            assert!(weak > 0.0);
        }
    }

    #[test]
    fn opnorm_of_partition_at_p2_is_one() {
        // A spectrum partition makes the square function an L^2 isometry,
        // so every trial ratio is exactly 1 under a constant weight.
        let n = 64;
        let family = IntervalFamily::make_unit(n).unwrap();
        let w = Weight::constant(n, 1.0, 1.0).unwrap();
        let est = estimate_opnorm(&family, &w, 2.0, OpNormMode::Strong, 8, 7).unwrap();
        assert!((est.value - 1.0).abs() < 1e-9, "estimate {}", est.value);
        assert!(est.trial_count >= 12);
    }

    #[test]
    fn weak_mode_runs_and_stays_below_strong() {
        let n = 64;
        let family = IntervalFamily::make_lacunary(2.0, n).unwrap();
        let w = Weight::power(n, 1.0, 0.4, 11).unwrap();
        let strong = estimate_opnorm(&family, &w, 1.5, OpNormMode::Strong, 6, 3).unwrap();
        let weak = estimate_opnorm(&family, &w, 1.5, OpNormMode::Weak, 6, 3).unwrap();
        assert!(weak.value > 0.0);
        assert!(weak.value <= strong.value * (1.0 + 1e-12));
    }

    #[test]
    fn exponent_formula_frozen_values() {
        // p0 = 2, q0 = infinity: phi = p/2 and alpha = max(1/(p-2), 1).
        let (phi, alpha) = exponent_formula(3.0, 2.0, None).unwrap();
        assert!((phi - 1.5).abs() < 1e-12 && (alpha - 1.0).abs() < 1e-12);
        let (phi, alpha) = exponent_formula(2.5, 2.0, None).unwrap();
        assert!((phi - 1.25).abs() < 1e-12 && (alpha - 2.0).abs() < 1e-12);
        // Finite upper endpoint, worked by hand: p0 = 2, q0 = 4, p = 3 gives
        // r = 4/3, r' = 4, phi = 4 * (3/2 - 1) + 1 = 3 and
        // alpha = max(1, 3) / 4 = 3/4.
        let (phi, alpha) = exponent_formula(3.0, 2.0, Some(4.0)).unwrap();
        assert!((phi - 3.0).abs() < 1e-12 && (alpha - 0.75).abs() < 1e-12);
        assert!(exponent_formula(2.0, 2.0, None).is_err());
        assert!(exponent_formula(5.0, 2.0, Some(4.0)).is_err());
    }

    #[test]
    fn fit_exponent_recovers_power_law() {
        let points: Vec<(f64, f64)> =
            [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 2.5 * f64::powf(x, 1.7))).collect();
        let (e, c) = fit_exponent(&points).unwrap();
        assert!((e - 1.7).abs() < 1e-10 && (c - 2.5).abs() < 1e-10);
        assert!(fit_exponent(&[(1.0, 2.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 2.0), (2.0, -1.0)]).is_err());
    }

    #[test]
    fn composition_is_exact_and_bounded() {
        let w = Weight::power(64, 1.0, 0.5, 9).unwrap();
        let check =
            congruent_composition_check(&w, 2.0, &SplitSpec::AtMost(4), 4, 11).unwrap();
        assert!(check.projection_error < 1e-12, "error {}", check.projection_error);
        // Lacunary blocks below 32: [1,2), [2,4), [4,8), [8,16), [16,32).
        assert_eq!(check.coarse_count, 5);
        assert!(check.fine_count > check.coarse_count);
        assert!(check.ratio <= 1.0, "ratio {}", check.ratio);
        assert!(check.a1 >= 1.0);
    }

    #[test]
    fn weight_spec_parses_and_round_trips() {
        for text in ["const:2.5", "power:0.5", "power:-0.25:17", "step:1:8:0.25"] {
            let spec = WeightSpec::parse(text).unwrap();
            assert_eq!(spec.to_string(), text);
            let w = spec.build(64, 1.0).unwrap();
            assert_eq!(w.n(), 64);
        }
        assert!(WeightSpec::parse("power:").is_err());
        assert!(WeightSpec::parse("step:1:2").is_err());
        assert!(WeightSpec::parse("gauss:1").is_err());
        assert!(WeightSpec::parse("const:abc").is_err());
        // Nonpositive weights are rejected at build time.
        assert!(WeightSpec::parse("const:0").unwrap().build(64, 1.0).is_err());
        assert!(WeightSpec::parse("step:-1:2:0.5").unwrap().build(64, 1.0).is_err());
    }

    #[test]
    fn power_weight_remembers_basepoint() {
        let w = Weight::power(64, 2.0, 0.5, 40).unwrap();
        assert_eq!(w.basepoint(), Some(40));
        // Minimum sits at the basepoint (floored at one grid step).
        let min_idx = (0..64)
            .min_by(|&a, &b| w.samples()[a].partial_cmp(&w.samples()[b]).unwrap())
            .unwrap();
        assert!((39..=41).contains(&min_idx), "minimum near the basepoint");
        assert!(w.total() > 0.0);
    }
}
