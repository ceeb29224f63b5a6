//! Shifted dyadic grids, maximal functions, stopping times and sparse
//! collections on the periodic grid.
//!
//! Three dyadic grids cover the circle: grid `g` at scale `k` shifts the
//! standard lattice by `round(g 2^k / 3)`.  Any arc admits an enclosing
//! shifted-dyadic interval of comparable length ([`enclosing_shifted`]).
//! The per-scale shifts are rounded independently, so grids 1 and 2 are not
//! nested across scales; recursive constructions therefore subdivide from
//! the shifted root instead, which produces a genuinely nested tree that
//! coincides with the standard grid when `g = 0`.
//!
//! On top of the grids sit the `L^p` Hardy-Littlewood maximal function
//! ([`maximal_fn`]), stopping-time decompositions with adaptively chosen
//! thresholds ([`stopping_intervals`], [`merge_stopping`]) and the
//! two-function sparse collection builder ([`build_sparse`]) whose output is
//! certified by [`verify_sparse`].

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{pairwise_sum, GridInterval, Signal, MAX_PARSED_GRID};

/// Nearest integer to `a / 3` (ties cannot occur).
pub fn round_div3(a: usize) -> usize {
    a / 3 + usize::from(a % 3 == 2)
}

/// Grid sizes up to this bound use the exact `O(n^2)` maximal function;
/// larger grids fall back to the shifted-dyadic-restricted variant, which is
/// pointwise comparable (within a fixed factor) to the exact one.
pub const MAX_EXACT_MAXIMAL: usize = 4096;

/// Sparsity fraction certified by [`build_sparse`].
pub const SPARSE_ETA: f64 = 1.0 / 6.0;

/// A dyadic interval on one of the three shifted grids.
///
/// Grid `g` at scale `k` consists of the arcs
/// `[m 2^k + round(g 2^k / 3), (m+1) 2^k + round(g 2^k / 3))` modulo `n`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub grid: u8,
    pub scale: u32,
    pub pos: usize,
}

impl DyadicInterval {
    /// Shift of grid `g` at the given scale.
    pub fn grid_shift(grid: u8, scale: u32, n: usize) -> usize {
        round_div3((grid as usize % 3) << scale) % n
    }

    /// The arc this interval occupies on a circle of `n` samples.
    pub fn realize(&self, n: usize) -> GridInterval {
        let len = 1usize << self.scale;
        debug_assert!(len <= n && self.pos < n / len);
        let shift = Self::grid_shift(self.grid, self.scale, n);
        GridInterval::new((self.pos * len + shift) % n, len)
    }
}

/// Smallest shifted-dyadic interval containing the arc `target`, preferring
/// small scales, then small grid numbers.
///
/// The returned interval has length at most `6 * target.len` (or the whole
/// circle when that bound already exceeds it); one of the three grids always
/// works.
pub fn enclosing_shifted(target: &GridInterval, n: usize) -> Result<DyadicInterval> {
    target.validate(n)?;
    let log_n = n.trailing_zeros();
    let min_scale = target.len.next_power_of_two().trailing_zeros();
    for scale in min_scale..=log_n {
        let len = 1usize << scale;
        if len > 6 * target.len && len < n {
            break;
        }
        for grid in 0..3u8 {
            let shift = DyadicInterval::grid_shift(grid, scale, n);
            let pos = ((target.start + n - shift) % n) / len;
            let candidate = DyadicInterval { grid, scale, pos };
            if candidate.realize(n).contains_interval(target, n) {
                return Ok(candidate);
            }
        }
    }
    // The whole circle always contains the target.
    if (1usize << log_n) == n {
        return Ok(DyadicInterval { grid: 0, scale: log_n, pos: 0 });
    }
    Err(Error::Invariant(format!(
        "no shifted dyadic interval encloses [{}, +{}) on n={}",
        target.start, target.len, n
    )))
}

/// Exact circular maximal function of nonnegative data: at each sample, the
/// largest average over every arc containing it.  `O(n^2)` via a sliding
/// window maximum per arc length.
pub(crate) fn maximal_circular(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut prefix = vec![0.0f64; 2 * n + 1];
    for t in 0..2 * n {
        prefix[t + 1] = prefix[t] + v[t % n];
    }
    let mut m = vec![0.0f64; n];
    let mut deque: VecDeque<usize> = VecDeque::new();
    for len in 1..=n {
        deque.clear();
        let avg = |t: usize| (prefix[t + len] - prefix[t]) / len as f64;
        // Window starts t in [x-len+1, x] serve sample x; sweep x over one
        // extended period so every residue sees its full start range.
        for x in 0..n + len - 1 {
            if x < n {
                while let Some(&b) = deque.back() {
                    if avg(b) <= avg(x) {
                        deque.pop_back();
                    } else {
                        break;
                    }
                }
                deque.push_back(x);
            }
            while let Some(&f) = deque.front() {
                if f + len <= x {
                    deque.pop_front();
                } else {
                    break;
                }
            }
            // Early sweeps see only part of the start range; the wrapped
            // remainder of each residue's range is covered when the sweep
            // passes x + n, so assigning every iteration is exhaustive.
            if let Some(&f) = deque.front() {
                let slot = x % n;
                m[slot] = m[slot].max(avg(f));
            }
        }
    }
    m
}

/// Maximal function over subintervals of a line segment: windows are
/// `[t, t+len)` inside `[0, v.len())`, no wrap.  `O(L^2)`.
#[allow(clippy::needless_range_loop)]
pub(crate) fn maximal_linear(v: &[f64]) -> Vec<f64> {
    let l = v.len();
    let mut prefix = vec![0.0f64; l + 1];
    for t in 0..l {
        prefix[t + 1] = prefix[t] + v[t];
    }
    let mut m = vec![0.0f64; l];
    let mut deque: VecDeque<usize> = VecDeque::new();
    for len in 1..=l {
        deque.clear();
        let avg = |t: usize| (prefix[t + len] - prefix[t]) / len as f64;
        for x in 0..l {
            if x + len <= l {
                while let Some(&b) = deque.back() {
                    if avg(b) <= avg(x) {
                        deque.pop_back();
                    } else {
                        break;
                    }
                }
                deque.push_back(x);
            }
            while let Some(&f) = deque.front() {
                if f + len <= x {
                    deque.pop_front();
                } else {
                    break;
                }
            }
            if let Some(&f) = deque.front() {
                m[x] = m[x].max(avg(f));
            }
        }
    }
    m
}

/// Maximal function restricted to shifted-dyadic arcs: for each sample, the
/// largest average over the grid intervals containing it.  `O(n log n)`.
pub(crate) fn maximal_dyadic(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let log_n = n.trailing_zeros();
    let mut prefix = vec![0.0f64; 2 * n + 1];
    for t in 0..2 * n {
        prefix[t + 1] = prefix[t] + v[t % n];
    }
    let mut m = vec![0.0f64; n];
    for grid in 0..3u8 {
        for scale in 0..=log_n {
            let len = 1usize << scale;
            let shift = DyadicInterval::grid_shift(grid, scale, n);
            for pos in 0..n / len {
                let start = (pos * len + shift) % n;
                let avg = (prefix[start + len] - prefix[start]) / len as f64;
                for t in 0..len {
                    let x = (start + t) % n;
                    m[x] = m[x].max(avg);
                }
            }
        }
    }
    m
}

/// `L^p` Hardy-Littlewood maximal function `M_p f = (M |f|^p)^{1/p}` as a
/// real signal.
///
/// Exact over all arcs for `n <=` [`MAX_EXACT_MAXIMAL`]; restricted to the
/// three shifted dyadic grids beyond that.
pub fn maximal_fn(f: &Signal, p: f64) -> Result<Signal> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::param(format!("maximal exponent {p} must be finite and >= 1")));
    }
    let v = f.abs_pow(p);
    let m = if f.n() <= MAX_EXACT_MAXIMAL {
        maximal_circular(&v)
    } else {
        maximal_dyadic(&v)
    };
    let inv = 1.0 / p;
    Signal::from_fn(f.n(), f.domain_length(), |i| {
        crate::signal::C64::new(m[i].powf(inv), 0.0)
    })
}

/// Local maximal data for one function over the tripled window of a node.
///
/// `m[t]` is the exact maximal of `|f|^p 1_{3Q}` at offset `t` inside `3Q`;
/// only windows inside `3Q` matter because all the mass lives there, so this
/// agrees with the global maximal of the truncated function on `3Q`.
struct LocalMaximal {
    window: GridInterval,
    m: Vec<f64>,
    /// `(1/|3Q|) sum_{3Q} |f|^p`, the p-th power of the window average.
    avg_p: f64,
}

impl LocalMaximal {
    fn new(f: &Signal, p: f64, q: &GridInterval) -> Self {
        let n = f.n();
        let window = q.triple(n);
        let v: Vec<f64> = window
            .indices(n)
            .map(|i| f.samples()[i].norm().powf(p))
            .collect();
        let avg_p = pairwise_sum(&v) / window.len as f64;
        let m = if window.is_full(n) {
            maximal_circular(&v)
        } else {
            maximal_linear(&v)
        };
        LocalMaximal { window, m, avg_p }
    }

    /// Offset of sample `i` inside the window.
    fn offset(&self, i: usize, n: usize) -> usize {
        (i + n - self.window.start) % n
    }

    /// Maximal dyadic-subdivision intervals of `q` on which the local
    /// maximal stays at or above `c^p * avg_p` everywhere.
    fn stopping(&self, q: &GridInterval, c: f64, p: f64, n: usize) -> Vec<GridInterval> {
        if self.avg_p <= 0.0 {
            return Vec::new();
        }
        let tau = c.powf(p) * self.avg_p;
        let off_q = self.offset(q.start, n);
        // Prefix count of strictly-below-threshold offsets over q; the
        // window index wraps when 3q is the whole circle.
        let wlen = self.window.len;
        let mut below = vec![0u32; q.len + 1];
        for t in 0..q.len {
            below[t + 1] = below[t] + u32::from(self.m[(off_q + t) % wlen] < tau);
        }
        let mut out = Vec::new();
        let mut stack = vec![(0usize, q.len)];
        while let Some((t0, len)) = stack.pop() {
            if below[t0 + len] == below[t0] {
                out.push(GridInterval::new((q.start + t0) % n, len));
            } else if len > 1 {
                let half = len / 2;
                // Right first so the left half pops first: output sorted.
                stack.push((t0 + half, len - half));
                stack.push((t0, half));
            }
        }
        out
    }

    /// Smallest power-of-two `c >= 2` whose stopping intervals fill at most
    /// `|q| / 6`, with the intervals themselves.
    fn choose_constant(&self, q: &GridInterval, p: f64, n: usize) -> (f64, Vec<GridInterval>) {
        let mut c = 2.0f64;
        loop {
            let s = self.stopping(q, c, p, n);
            let total: usize = s.iter().map(|i| i.len).sum();
            if 6 * total <= q.len {
                return (c, s);
            }
            c *= 2.0;
            debug_assert!(c < 1e30, "stopping constant runaway");
        }
    }

    /// `inf over the tripled interval of M_p`, relative to the window
    /// average (both taken as p-th roots).
    fn inf_ratio(&self, interval: &GridInterval, p: f64, n: usize) -> f64 {
        if self.avg_p <= 0.0 {
            return 0.0;
        }
        let enlarged = interval.triple(n);
        let inf = enlarged
            .indices(n)
            .map(|i| self.m[self.offset(i, n)])
            .fold(f64::INFINITY, f64::min);
        (inf / self.avg_p).powf(1.0 / p)
    }
}

/// Maximal dyadic-subdivision subintervals of `q` on which the windowed
/// maximal `M_p(f 1_{3q})` is at least `c` times the average of `f` over
/// `3q`.  Empty when that average vanishes.
pub fn stopping_intervals(
    f: &Signal,
    p: f64,
    q: &GridInterval,
    c: f64,
) -> Result<Vec<GridInterval>> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::param(format!("stopping exponent {p} must be finite and >= 1")));
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::param(format!("stopping constant {c} must be positive")));
    }
    q.validate(f.n())?;
    let local = LocalMaximal::new(f, p, q);
    Ok(local.stopping(q, c, p, f.n()))
}

/// Result of merging two stopping-time decompositions over one node.
#[derive(Clone, Debug)]
pub struct MergedStopping {
    /// Maximal elements of the union of both stopping families.
    pub intervals: Vec<GridInterval>,
    /// Adaptively chosen constant per function.
    pub constants: [f64; 2],
    /// Fraction of `q` covered by the merged intervals (at most 1/3).
    pub child_fraction: f64,
    /// Per function: max over merged `I` of
    /// `inf_{3I} M_p(f 1_{3q}) / <f>_{p,3q}`, the measured lower bound
    /// certifying that stopping intervals sit inside the level set.
    pub inf_ratios: [f64; 2],
}

/// Runs the adaptive stopping-time construction for both functions over `q`
/// and merges the two families into their maximal elements.
pub fn merge_stopping(
    f: &Signal,
    p_f: f64,
    g: &Signal,
    p_g: f64,
    q: &GridInterval,
) -> Result<MergedStopping> {
    if f.n() != g.n() {
        return Err(Error::param("stopping pair on mismatched grids"));
    }
    q.validate(f.n())?;
    let n = f.n();
    let lf = LocalMaximal::new(f, p_f, q);
    let lg = LocalMaximal::new(g, p_g, q);
    let (cf, sf) = lf.choose_constant(q, p_f, n);
    let (cg, sg) = lg.choose_constant(q, p_g, n);
    let mut all: Vec<GridInterval> = sf.into_iter().chain(sg).collect();
    // Keep maximal elements: sort longest first, keep those not contained in
    // a kept interval.
    all.sort_by_key(|i| (std::cmp::Reverse(i.len), i.start));
    let mut kept: Vec<GridInterval> = Vec::new();
    for i in all {
        if !kept.iter().any(|k| k.contains_interval(&i, n)) {
            kept.push(i);
        }
    }
    kept.sort_by_key(|i| ((i.start + n - q.start) % n, i.len));
    let total: usize = kept.iter().map(|i| i.len).sum();
    let inf_ratios = [
        kept.iter().map(|i| lf.inf_ratio(i, p_f, n)).fold(0.0, f64::max),
        kept.iter().map(|i| lg.inf_ratio(i, p_g, n)).fold(0.0, f64::max),
    ];
    Ok(MergedStopping {
        intervals: kept,
        constants: [cf, cg],
        child_fraction: total as f64 / q.len as f64,
        inf_ratios,
    })
}

/// One member of a sparse collection: an interval plus the witness samples
/// that belong to it alone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseMember {
    pub interval: GridInterval,
    /// Sample indices, strictly increasing.
    pub witness: Vec<u32>,
}

/// A collection of intervals with pairwise-disjoint witness sets, each
/// filling at least the fraction `eta` of its interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseFamily {
    pub n: usize,
    pub eta: f64,
    pub members: Vec<SparseMember>,
}

/// Per-node diagnostics from the sparse construction.
#[derive(Clone, Debug, Serialize)]
pub struct SparseNodeLog {
    pub interval: GridInterval,
    pub depth: u32,
    pub constants: [f64; 2],
    pub child_fraction: f64,
    pub inf_ratios: [f64; 2],
}

/// A sparse family together with its construction log.
#[derive(Clone, Debug)]
pub struct SparseBuild {
    pub family: SparseFamily,
    pub log: Vec<SparseNodeLog>,
}

/// Builds a sparse collection adapted to the pair `(f, g)` by the
/// two-function stopping-time recursion started from the shifted root of
/// `grid`.
///
/// Each tree node `Q` keeps the witness `E_Q = Q minus its children`; since
/// children fill at most `|Q|/3`, the witness keeps at least `2|Q|/3`, which
/// is `2/9` of the tripled interval.  Members are the tripled intervals, so
/// the family is sparse with margin above [`SPARSE_ETA`].
pub fn build_sparse(
    f: &Signal,
    p_f: f64,
    g: &Signal,
    p_g: f64,
    grid: u8,
) -> Result<SparseBuild> {
    if f.n() != g.n() {
        return Err(Error::param("sparse pair on mismatched grids"));
    }
    if grid > 2 {
        return Err(Error::param(format!("grid {grid} must be 0, 1 or 2")));
    }
    let n = f.n();
    let root = GridInterval::new(round_div3(grid as usize * n) % n, n);
    let mut members = Vec::new();
    let mut log = Vec::new();
    let mut queue: VecDeque<(GridInterval, u32)> = VecDeque::new();
    queue.push_back((root, 0));
    while let Some((q, depth)) = queue.pop_front() {
        let merged = merge_stopping(f, p_f, g, p_g, &q)?;
        let mut witness: Vec<u32> = q
            .indices(n)
            .filter(|&i| !merged.intervals.iter().any(|c| c.contains(i, n)))
            .map(|i| i as u32)
            .collect();
        witness.sort_unstable();
        members.push(SparseMember {
            interval: q.triple(n),
            witness,
        });
        log.push(SparseNodeLog {
            interval: q,
            depth,
            constants: merged.constants,
            child_fraction: merged.child_fraction,
            inf_ratios: merged.inf_ratios,
        });
        for child in merged.intervals {
            queue.push_back((child, depth + 1));
        }
    }
    let family = SparseFamily {
        n,
        eta: SPARSE_ETA,
        members,
    };
    verify_sparse(&family, SPARSE_ETA)?;
    Ok(SparseBuild { family, log })
}

/// Checks the sparsity certificate: every witness lies inside its interval
/// in traversal order, fills at least `eta` of it, and no sample serves two
/// members.  The error spells out the first violated member.
pub fn verify_sparse(family: &SparseFamily, eta: f64) -> Result<()> {
    let n = family.n;
    crate::signal::check_grid_size(n)?;
    if !(0.0 < eta && eta <= 1.0) {
        return Err(Error::param(format!("sparsity fraction {eta} not in (0, 1]")));
    }
    let mut used = vec![false; n];
    for (idx, m) in family.members.iter().enumerate() {
        m.interval.validate(n)?;
        let mut last: Option<usize> = None;
        for &w in &m.witness {
            let w = w as usize;
            if w >= n {
                return Err(Error::Invariant(format!(
                    "member {idx}: witness sample {w} outside the grid"
                )));
            }
            if !m.interval.contains(w, n) {
                return Err(Error::Invariant(format!(
                    "member {idx}: witness sample {w} outside interval [{}, +{})",
                    m.interval.start, m.interval.len
                )));
            }
            if let Some(prev) = last {
                if w <= prev {
                    return Err(Error::Invariant(format!(
                        "member {idx}: witness not strictly increasing at sample {w}"
                    )));
                }
            }
            last = Some(w);
            if used[w] {
                return Err(Error::Invariant(format!(
                    "witness sample {w} of member {idx} already claimed"
                )));
            }
            used[w] = true;
        }
        let need = eta * m.interval.len as f64;
        if (m.witness.len() as f64) < need - 1e-9 {
            return Err(Error::Invariant(format!(
                "member {idx}: witness holds {} of {} samples, below the fraction {eta}",
                m.witness.len(),
                m.interval.len
            )));
        }
    }
    Ok(())
}

/// The sparse form `sum_I |I| <f>_{2,I} <g>_{1,I}` over the family members.
pub fn sparse_form(family: &SparseFamily, f: &Signal, g: &Signal) -> Result<f64> {
    sparse_form_with(family, f, g, 2.0)
}

/// Sparse form with the `f`-average exponent as a parameter:
/// `sum_I |I| <f>_{q,I} <g>_{1,I}`.
pub fn sparse_form_with(family: &SparseFamily, f: &Signal, g: &Signal, q: f64) -> Result<f64> {
    if f.n() != family.n || g.n() != family.n {
        return Err(Error::param("sparse form data on mismatched grids"));
    }
    if !(q.is_finite() && q >= 1.0) {
        return Err(Error::param(format!("average exponent {q} must be at least 1")));
    }
    let dx = f.dx();
    let terms: Vec<f64> = family
        .members
        .iter()
        .map(|m| {
            m.interval.measure(dx)
                * f.local_average(q, &m.interval)
                * g.local_average(1.0, &m.interval)
        })
        .collect();
    Ok(pairwise_sum(&terms))
}

impl SparseFamily {
    /// Serializes as a `# rlplab sparse n=<n> eta=<eta>` header plus one
    /// `start len | w1 w2 ...` line per member.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# rlplab sparse n={} eta={}", self.n, self.eta);
        for m in &self.members {
            let _ = write!(out, "{} {} |", m.interval.start, m.interval.len);
            for w in &m.witness {
                let _ = write!(out, " {w}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses [`SparseFamily::to_text`].  Without the header, the grid size
    /// is inferred as the smallest admissible power of two covering every
    /// index, and `eta` defaults to [`SPARSE_ETA`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut n: Option<usize> = None;
        let mut eta = SPARSE_ETA;
        let mut members = Vec::new();
        let mut max_index = 0usize;
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('#') {
                for token in rest.split_whitespace() {
                    if let Some(v) = token.strip_prefix("n=") {
                        let parsed: usize = v
                            .parse()
                            .map_err(|e| Error::parse(format!("bad n in header: {e}")))?;
                        if parsed > MAX_PARSED_GRID {
                            return Err(Error::parse(format!(
                                "grid size {parsed} exceeds parser limit"
                            )));
                        }
                        n = Some(parsed);
                    } else if let Some(v) = token.strip_prefix("eta=") {
                        eta = v
                            .parse()
                            .map_err(|e| Error::parse(format!("bad eta in header: {e}")))?;
                    }
                }
                continue;
            }
            let (head, tail) = trimmed
                .split_once('|')
                .ok_or_else(|| Error::parse("member line needs a | separator"))?;
            let mut parts = head.split_whitespace();
            let start: usize = parts
                .next()
                .ok_or_else(|| Error::parse("missing interval start"))?
                .parse()
                .map_err(|e| Error::parse(format!("bad interval start: {e}")))?;
            let len: usize = parts
                .next()
                .ok_or_else(|| Error::parse("missing interval length"))?
                .parse()
                .map_err(|e| Error::parse(format!("bad interval length: {e}")))?;
            if parts.next().is_some() {
                return Err(Error::parse("trailing tokens before | separator"));
            }
            if start > MAX_PARSED_GRID || len > MAX_PARSED_GRID {
                return Err(Error::parse("interval exceeds parser limit"));
            }
            let mut witness = Vec::new();
            for token in tail.split_whitespace() {
                let w: u32 = token
                    .parse()
                    .map_err(|e| Error::parse(format!("bad witness index {token:?}: {e}")))?;
                if w as usize > MAX_PARSED_GRID {
                    return Err(Error::parse("witness index exceeds parser limit"));
                }
                max_index = max_index.max(w as usize);
                witness.push(w);
            }
            max_index = max_index.max(start + len.saturating_sub(1));
            if members.len() >= MAX_PARSED_GRID {
                return Err(Error::parse("too many members"));
            }
            members.push(SparseMember {
                interval: GridInterval::new(start, len),
                witness,
            });
        }
        let n = n.unwrap_or_else(|| (max_index + 1).next_power_of_two().max(16));
        let family = SparseFamily { n, eta, members };
        // Structural bounds only; sparsity itself is checked by
        // `verify_sparse` so damaged certificates can still be loaded and
        // reported on.
        for m in &family.members {
            m.interval.validate(n)?;
        }
        Ok(family)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        SparseFamily::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::from_fn(n, 1.0, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .unwrap()
    }

    #[test]
    fn round_div3_is_nearest_integer() {
        let want = [0, 0, 1, 1, 1, 2, 2, 2, 3, 3, 3, 4];
        for (a, &w) in want.iter().enumerate() {
            assert_eq!(round_div3(a), w, "round_div3({a})");
        }
    }

    #[test]
    fn shifted_grids_partition_each_scale() {
        let n = 64;
        for grid in 0..3u8 {
            for scale in 0..=6u32 {
                let len = 1usize << scale;
                let mut cover = vec![0u32; n];
                for pos in 0..n / len {
                    let arc = DyadicInterval { grid, scale, pos }.realize(n);
                    assert_eq!(arc.len, len);
                    for i in arc.indices(n) {
                        cover[i] += 1;
                    }
                }
                assert!(cover.iter().all(|&c| c == 1), "grid {grid} scale {scale}");
            }
        }
        // Grid 0 is the standard dyadic grid.
        let arc = DyadicInterval { grid: 0, scale: 3, pos: 2 }.realize(64);
        assert_eq!((arc.start, arc.len), (16, 8));
        // Grid 1 at scale 3 shifts by round(8/3) = 3.
        let arc = DyadicInterval { grid: 1, scale: 3, pos: 0 }.realize(64);
        assert_eq!((arc.start, arc.len), (3, 8));
    }

    #[test]
    fn enclosing_shifted_exhaustive() {
        for n in [16usize, 64, 128] {
            for start in 0..n {
                for len in 1..=n {
                    let target = GridInterval::new(start, len);
                    let q = enclosing_shifted(&target, n).unwrap();
                    let arc = q.realize(n);
                    assert!(
                        arc.contains_interval(&target, n),
                        "n={n} [{start},+{len}) not inside {arc:?}"
                    );
                    assert!(
                        arc.len <= 6 * len || arc.len == n,
                        "n={n} [{start},+{len}) got length {}",
                        arc.len
                    );
                }
            }
        }
    }

    #[test]
    fn maximal_matches_naive_oracle() {
        let n = 64;
        let f = random_signal(n, 5);
        let v = f.abs_pow(1.0);
        // Naive O(n^3): every arc, every member.
        let mut want = vec![0.0f64; n];
        for start in 0..n {
            for len in 1..=n {
                let sum: f64 = (0..len).map(|t| v[(start + t) % n]).sum();
                let avg = sum / len as f64;
                for t in 0..len {
                    let x = (start + t) % n;
                    want[x] = want[x].max(avg);
                }
            }
        }
        let got = maximal_circular(&v);
        for x in 0..n {
            assert!((got[x] - want[x]).abs() < 1e-12, "sample {x}");
        }
        // The signal API applies the p-th root.
        let m = maximal_fn(&f, 2.0).unwrap();
        let v2 = f.abs_pow(2.0);
        let want2 = maximal_circular(&v2);
        for (got2, w2) in m.samples().iter().zip(&want2) {
            assert!((got2.re - w2.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_maximal_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let v: Vec<f64> = (0..48).map(|_| rng.gen_range(0.0..2.0)).collect();
        let l = v.len();
        let mut want = vec![0.0f64; l];
        for t in 0..l {
            for len in 1..=(l - t) {
                let avg: f64 = v[t..t + len].iter().sum::<f64>() / len as f64;
                for wv in &mut want[t..t + len] {
                    *wv = wv.max(avg);
                }
            }
        }
        let got = maximal_linear(&v);
        for x in 0..l {
            assert!((got[x] - want[x]).abs() < 1e-12, "offset {x}");
        }
    }

    #[test]
    fn dyadic_maximal_is_comparable_below_exact() {
        let f = random_signal(256, 23);
        let v = f.abs_pow(1.0);
        let exact = maximal_circular(&v);
        let dyadic = maximal_dyadic(&v);
        for x in 0..256 {
            assert!(dyadic[x] <= exact[x] + 1e-12);
            assert!(dyadic[x] > 0.0);
        }
    }

    #[test]
    fn stopping_empty_for_constant_signal() {
        let f = Signal::from_fn(64, 1.0, |_| C64::new(1.0, 0.0)).unwrap();
        let q = GridInterval::new(8, 16);
        // Maximal of a constant equals the constant, which is below 2x the
        // average.
        let s = stopping_intervals(&f, 2.0, &q, 2.0).unwrap();
        assert!(s.is_empty());
        let zero = Signal::zeros(64, 1.0).unwrap();
        assert!(stopping_intervals(&zero, 1.0, &q, 2.0).unwrap().is_empty());
    }

    #[test]
    fn stopping_localizes_a_spike() {
        let n = 64;
        let mut samples = vec![C64::new(0.01, 0.0); n];
        samples[20] = C64::new(50.0, 0.0);
        let f = Signal::new(samples, 1.0).unwrap();
        let q = GridInterval::new(0, 64);
        let (c, s) = {
            let local = LocalMaximal::new(&f, 2.0, &q);
            local.choose_constant(&q, 2.0, n)
        };
        assert!(c >= 2.0);
        let total: usize = s.iter().map(|i| i.len).sum();
        assert!(6 * total <= n, "packing violated: {total} of {n}");
        assert!(!s.is_empty(), "a strong spike must be captured");
        for i in &s {
            assert!(i.contains(20, n) || i.dist_samples(20, n) <= 8, "far interval {i:?}");
        }
    }

    #[test]
    fn merged_stopping_keeps_maximal_elements() {
        let n = 64;
        let f = random_signal(n, 31);
        let g = random_signal(n, 32);
        let q = GridInterval::new(0, n);
        let merged = merge_stopping(&f, 2.0, &g, 1.0, &q).unwrap();
        assert!(merged.child_fraction <= 1.0 / 3.0 + 1e-12);
        for (i, a) in merged.intervals.iter().enumerate() {
            for (j, b) in merged.intervals.iter().enumerate() {
                if i != j {
                    assert!(!a.contains_interval(b, n), "{a:?} contains {b:?}");
                }
            }
        }
    }

    #[test]
    fn sparse_build_certifies_and_round_trips() {
        for seed in 0..4 {
            let n = 64;
            let f = random_signal(n, 100 + seed);
            let g = random_signal(n, 200 + seed);
            for grid in 0..3u8 {
                let build = build_sparse(&f, 2.0, &g, 1.0, grid).unwrap();
                verify_sparse(&build.family, SPARSE_ETA).unwrap();
                for node in &build.log {
                    assert!(node.child_fraction <= 0.5, "node fraction over 1/2");
                }
                let text = build.family.to_text();
                let back = SparseFamily::from_text(&text).unwrap();
                assert_eq!(build.family, back);
            }
        }
    }

    #[test]
    fn verify_sparse_reports_violations() {
        let ok = SparseFamily {
            n: 16,
            eta: 0.5,
            members: vec![SparseMember {
                interval: GridInterval::new(0, 4),
                witness: vec![0, 1],
            }],
        };
        verify_sparse(&ok, 0.5).unwrap();
        let thin = SparseFamily {
            n: 16,
            eta: 0.5,
            members: vec![SparseMember {
                interval: GridInterval::new(0, 4),
                witness: vec![0],
            }],
        };
        assert!(verify_sparse(&thin, 0.5).is_err());
        let overlapping = SparseFamily {
            n: 16,
            eta: 0.25,
            members: vec![
                SparseMember { interval: GridInterval::new(0, 4), witness: vec![1] },
                SparseMember { interval: GridInterval::new(0, 8), witness: vec![1, 2] },
            ],
        };
        assert!(verify_sparse(&overlapping, 0.25).is_err());
        let outside = SparseFamily {
            n: 16,
            eta: 0.25,
            members: vec![SparseMember {
                interval: GridInterval::new(0, 4),
                witness: vec![9],
            }],
        };
        assert!(verify_sparse(&outside, 0.25).is_err());
    }

    #[test]
    fn sparse_text_without_header_infers_grid() {
        let text = "0 4 | 0 1\n8 4 | 9 10\n";
        let fam = SparseFamily::from_text(text).unwrap();
        assert_eq!(fam.n, 16);
        assert_eq!(fam.members.len(), 2);
        assert!(SparseFamily::from_text("0 4 0 1\n").is_err());
        assert!(SparseFamily::from_text("x 4 | 1\n").is_err());
    }

    #[test]
    fn sparse_form_on_hand_example() {
        // One member covering the whole grid: form = |I| <f>_2 <g>_1 with
        // |I| = 1, and constants give averages equal to the constants.
        let n = 16;
        let f = Signal::from_fn(n, 1.0, |_| C64::new(3.0, 0.0)).unwrap();
        let g = Signal::from_fn(n, 1.0, |_| C64::new(2.0, 0.0)).unwrap();
        let fam = SparseFamily {
            n,
            eta: 1.0,
            members: vec![SparseMember {
                interval: GridInterval::full(n),
                witness: (0..n as u32).collect(),
            }],
        };
        let form = sparse_form(&fam, &f, &g).unwrap();
        assert!((form - 6.0).abs() < 1e-12);
    }
}
