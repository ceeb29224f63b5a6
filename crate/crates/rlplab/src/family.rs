//! Families of frequency intervals and their Whitney decompositions.
//!
//! A frequency interval is a half-open integer range `[a, b)` of DFT bins.
//! Families of such intervals (lacunary blocks, unit bins, congruent
//! refinements) define the band decompositions the square function is built
//! from.  Frequencies do not wrap: bins live on `0..n` and enlargements are
//! taken on the integer line.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::MAX_PARSED_GRID;

/// Half-open range `[a, b)` of DFT bins, `0 <= a < b`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FrequencyInterval {
    pub a: usize,
    pub b: usize,
}

impl FrequencyInterval {
    pub fn new(a: usize, b: usize) -> Result<Self> {
        if a < b {
            Ok(FrequencyInterval { a, b })
        } else {
            Err(Error::param(format!("empty frequency interval [{a}, {b})")))
        }
    }

    pub fn len(&self) -> usize {
        self.b - self.a
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains_bin(&self, xi: usize) -> bool {
        self.a <= xi && xi < self.b
    }

    pub fn contains_interval(&self, other: &FrequencyInterval) -> bool {
        self.a <= other.a && other.b <= self.b
    }

    /// Midpoint `(a + b) / 2` in bin units.
    pub fn center(&self) -> f64 {
        (self.a + self.b) as f64 / 2.0
    }

    /// Endpoints of the concentric `factor`-fold enlargement on the integer
    /// line (may be negative on the left).
    pub fn dilated(&self, factor: usize) -> (i64, i64) {
        debug_assert!(factor % 2 == 1, "concentric dilation needs an odd factor");
        let half = ((factor - 1) / 2) as i64 * self.len() as i64;
        (self.a as i64 - half, self.b as i64 + half)
    }

    /// Whether `[a, b)` is dyadic on the standard grid: power-of-two length
    /// and aligned start.
    pub fn is_dyadic(&self) -> bool {
        let l = self.len();
        l.is_power_of_two() && self.a % l == 0
    }

    /// Greedy split into maximal standard-dyadic pieces, left to right.
    pub fn aligned_pieces(&self) -> Vec<FrequencyInterval> {
        let mut out = Vec::new();
        let mut c = self.a;
        while c < self.b {
            let align = if c == 0 { usize::MAX } else { 1 << c.trailing_zeros() };
            let mut l = prev_power_of_two((self.b - c).min(align));
            while c % l != 0 {
                l /= 2;
            }
            out.push(FrequencyInterval { a: c, b: c + l });
            c += l;
        }
        out
    }
}

impl fmt::Display for FrequencyInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.a, self.b)
    }
}

fn prev_power_of_two(x: usize) -> usize {
    debug_assert!(x >= 1);
    1 << (usize::BITS - 1 - x.leading_zeros())
}

/// Whitney decomposition of `[a, b)` into maximal dyadic intervals that are
/// at least their own length away from both endpoints.
///
/// A dyadic `J = [c, d)` qualifies when `J` sits inside `[a, b)` with
/// `c - a >= d - c` and `b - d >= d - c`; the returned pieces are the maximal
/// qualifying intervals, sorted by start.  Their union is exactly
/// `[a + 1, b - 1)`.  Intervals shorter than 4 bins are returned whole, since
/// no bin of them can keep the required distance from both endpoints.
pub fn whitney(omega: &FrequencyInterval) -> Vec<FrequencyInterval> {
    let (a, b) = (omega.a, omega.b);
    if b - a < 4 {
        return vec![*omega];
    }
    let mut accepted: Vec<FrequencyInterval> = Vec::new();
    let mut scale = prev_power_of_two(b - a);
    while scale >= 1 {
        let mut c = a.div_ceil(scale) * scale;
        while c + scale <= b {
            let d = c + scale;
            let fits = c - a >= scale && b - d >= scale;
            if fits && !accepted.iter().any(|j| j.a <= c && d <= j.b) {
                accepted.push(FrequencyInterval { a: c, b: d });
            }
            c += scale;
        }
        scale /= 2;
    }
    accepted.sort();
    accepted
}

/// An ordered family of frequency intervals on `0..n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalFamily {
    intervals: Vec<FrequencyInterval>,
}

impl IntervalFamily {
    pub fn new(intervals: Vec<FrequencyInterval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::param("interval family must be nonempty"));
        }
        Ok(IntervalFamily { intervals })
    }

    pub fn intervals(&self) -> &[FrequencyInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// All interval endpoints must lie in `0..=n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        for w in &self.intervals {
            if w.b > n {
                return Err(Error::param(format!(
                    "interval {w} exceeds the spectrum size {n}"
                )));
            }
        }
        Ok(())
    }

    /// Maximum number of family members covering a single bin of `0..n`.
    pub fn overlap_constant(&self, n: usize) -> usize {
        let mut diff = vec![0i64; n + 1];
        for w in &self.intervals {
            diff[w.a.min(n)] += 1;
            diff[w.b.min(n)] -= 1;
        }
        let mut best = 0i64;
        let mut cur = 0i64;
        for d in &diff[..n] {
            cur += d;
            best = best.max(cur);
        }
        best as usize
    }

    /// Whether the family tiles the full spectrum `[0, n)` with no overlap.
    pub fn is_partition_of_spectrum(&self, n: usize) -> bool {
        let mut cover = vec![0u32; n];
        for w in &self.intervals {
            if w.b > n {
                return false;
            }
            for c in &mut cover[w.a..w.b] {
                *c += 1;
            }
        }
        cover.iter().all(|&c| c == 1)
    }

    /// Lacunary blocks `[ratio^k, ratio^{k+1})` truncated at `n / 2`.
    ///
    /// Endpoints are floors of the real powers; blocks that would be empty
    /// after flooring are skipped.  `ratio` must be at least `1.1`.
    pub fn make_lacunary(ratio: f64, n: usize) -> Result<Self> {
        crate::signal::check_grid_size(n)?;
        if !(ratio.is_finite() && ratio >= 1.1) {
            return Err(Error::param(format!("lacunary ratio {ratio} must be >= 1.1")));
        }
        let half = n / 2;
        let mut intervals = Vec::new();
        let mut k = 0u32;
        loop {
            let lo = ratio.powi(k as i32).floor() as usize;
            if lo >= half || k > 4096 {
                break;
            }
            let hi = (ratio.powi(k as i32 + 1).floor() as usize).min(half);
            if hi > lo {
                intervals.push(FrequencyInterval { a: lo, b: hi });
            }
            k += 1;
        }
        IntervalFamily::new(intervals)
    }

    /// All unit bins `[k, k+1)`, `0 <= k < n`: a partition of the spectrum.
    pub fn make_unit(n: usize) -> Result<Self> {
        crate::signal::check_grid_size(n)?;
        IntervalFamily::new((0..n).map(|k| FrequencyInterval { a: k, b: k + 1 }).collect())
    }

    /// Splits every member of `base` into `counts[k]` congruent pieces.
    ///
    /// `counts` must have one entry per member and divide its length.
    pub fn make_congruent(base: &IntervalFamily, counts: &[usize]) -> Result<Self> {
        if counts.len() != base.len() {
            return Err(Error::param(format!(
                "expected {} piece counts, got {}",
                base.len(),
                counts.len()
            )));
        }
        let mut intervals = Vec::new();
        for (w, &m) in base.intervals.iter().zip(counts) {
            if m == 0 || w.len() % m != 0 {
                return Err(Error::param(format!(
                    "cannot split {w} into {m} congruent pieces"
                )));
            }
            let piece = w.len() / m;
            for j in 0..m {
                intervals.push(FrequencyInterval {
                    a: w.a + j * piece,
                    b: w.a + (j + 1) * piece,
                });
            }
        }
        IntervalFamily::new(intervals)
    }

    /// Serializes as one `a b` line per interval.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for w in &self.intervals {
            out.push_str(&format!("{} {}\n", w.a, w.b));
        }
        out
    }

    /// Parses the [`IntervalFamily::to_text`] format; `#` starts a comment.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut intervals = Vec::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let a: usize = parts
                .next()
                .ok_or_else(|| Error::parse("missing interval start"))?
                .parse()
                .map_err(|e| Error::parse(format!("bad interval start: {e}")))?;
            let b: usize = parts
                .next()
                .ok_or_else(|| Error::parse("missing interval end"))?
                .parse()
                .map_err(|e| Error::parse(format!("bad interval end: {e}")))?;
            if parts.next().is_some() {
                return Err(Error::parse("trailing tokens in interval line"));
            }
            if b > MAX_PARSED_GRID {
                return Err(Error::parse(format!("interval end {b} exceeds parser limit")));
            }
            if a >= b {
                return Err(Error::parse(format!("empty interval [{a}, {b})")));
            }
            if intervals.len() >= MAX_PARSED_GRID {
                return Err(Error::parse("too many intervals"));
            }
            intervals.push(FrequencyInterval { a, b });
        }
        IntervalFamily::new(intervals)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        IntervalFamily::from_text(&std::fs::read_to_string(path)?)
    }
}

/// How to split the members of a base family into congruent pieces.
#[derive(Clone, Debug, PartialEq)]
pub enum SplitSpec {
    /// Split each member into at most `m` pieces, using the largest divisor
    /// of the member length not exceeding `m`.
    AtMost(usize),
    /// Explicit piece count per member; each must divide the member length.
    PerMember(Vec<usize>),
}

impl SplitSpec {
    /// Resolves to one piece count per member of `base`.
    pub fn counts_for(&self, base: &IntervalFamily) -> Result<Vec<usize>> {
        match self {
            SplitSpec::AtMost(m) => {
                if *m == 0 {
                    return Err(Error::param("piece bound must be positive"));
                }
                Ok(base
                    .intervals()
                    .iter()
                    .map(|w| largest_divisor_at_most(w.len(), *m))
                    .collect())
            }
            SplitSpec::PerMember(counts) => Ok(counts.clone()),
        }
    }
}

fn largest_divisor_at_most(len: usize, cap: usize) -> usize {
    let cap = cap.min(len);
    (1..=cap).rev().find(|d| len % d == 0).unwrap_or(1)
}

/// A parsed family description: `unit`, `lacunary:<ratio>`,
/// `congruent:<ratio>:<split>` or `file:<path>`.
///
/// The congruent split is either a single integer bound (each block is cut
/// into at most that many congruent pieces) or a comma list giving an exact
/// piece count per block.
#[derive(Clone, Debug, PartialEq)]
pub enum FamilySpec {
    Unit,
    Lacunary(f64),
    Congruent { ratio: f64, split: SplitSpec },
    File(PathBuf),
}

impl FamilySpec {
    pub fn parse(spec: &str) -> Result<Self> {
        let spec = spec.trim();
        if spec.len() > 4096 {
            return Err(Error::parse("family spec too long"));
        }
        if spec == "unit" {
            return Ok(FamilySpec::Unit);
        }
        if let Some(rest) = spec.strip_prefix("lacunary:") {
            let ratio: f64 = rest
                .parse()
                .map_err(|e| Error::parse(format!("bad lacunary ratio {rest:?}: {e}")))?;
            return Ok(FamilySpec::Lacunary(ratio));
        }
        if let Some(rest) = spec.strip_prefix("congruent:") {
            let (ratio_str, split_str) = rest
                .split_once(':')
                .ok_or_else(|| Error::parse("congruent spec needs ratio and split"))?;
            let ratio: f64 = ratio_str
                .parse()
                .map_err(|e| Error::parse(format!("bad congruent ratio {ratio_str:?}: {e}")))?;
            let split = if split_str.contains(',') {
                let counts = split_str
                    .split(',')
                    .map(|s| {
                        s.parse::<usize>()
                            .map_err(|e| Error::parse(format!("bad piece count {s:?}: {e}")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                SplitSpec::PerMember(counts)
            } else {
                let m: usize = split_str
                    .parse()
                    .map_err(|e| Error::parse(format!("bad piece bound {split_str:?}: {e}")))?;
                SplitSpec::AtMost(m)
            };
            return Ok(FamilySpec::Congruent { ratio, split });
        }
        if let Some(rest) = spec.strip_prefix("file:") {
            if rest.is_empty() {
                return Err(Error::parse("empty family file path"));
            }
            return Ok(FamilySpec::File(PathBuf::from(rest)));
        }
        Err(Error::parse(format!("unrecognized family spec {spec:?}")))
    }

    /// Builds the family for a grid of size `n`.  Only the `file:` variant
    /// touches the filesystem.
    pub fn build(&self, n: usize) -> Result<IntervalFamily> {
        let family = match self {
            FamilySpec::Unit => IntervalFamily::make_unit(n)?,
            FamilySpec::Lacunary(ratio) => IntervalFamily::make_lacunary(*ratio, n)?,
            FamilySpec::Congruent { ratio, split } => {
                let base = IntervalFamily::make_lacunary(*ratio, n)?;
                IntervalFamily::make_congruent(&base, &split.counts_for(&base)?)?
            }
            FamilySpec::File(path) => IntervalFamily::read_file(path)?,
        };
        family.validate(n)?;
        Ok(family)
    }
}

impl fmt::Display for FamilySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FamilySpec::Unit => write!(f, "unit"),
            FamilySpec::Lacunary(r) => write!(f, "lacunary:{r}"),
            FamilySpec::Congruent { ratio, split } => match split {
                SplitSpec::AtMost(m) => write!(f, "congruent:{ratio}:{m}"),
                SplitSpec::PerMember(counts) => {
                    let list: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
                    write!(f, "congruent:{ratio}:{}", list.join(","))
                }
            },
            FamilySpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}
