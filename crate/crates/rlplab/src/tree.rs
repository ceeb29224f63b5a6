//! Vectorial tile trees: model forms, sizes, and tree decompositions.
//!
//! The workspace fixes a tile collection, packet parameters and data `(f,
//! g)` and stores one packet coefficient per family tile.  All tree
//! reasoning happens on the reference collection: a tree is a pair `(top,
//! xi)` of a reference tile and a frequency point inside its interval; its
//! members are the reference tiles strictly below the top in time whose
//! 7-fold dilated interval captures `xi` and whose 3-fold dilated interval
//! contains the top's interval, plus the top itself.  Each reference member
//! aggregates the surviving family tiles over all branches (members whose
//! translate a family never carried are simply absent).
//!
//! Two size notions drive the decompositions: the energy size
//! `sup_T ((1/|I_T|) sum |I_P| |<f, phi_P>|^2)^{1/2}` over candidate trees,
//! and the dual size `sup { (1/|3I'|) int |g| chi_{3I'} }` over dyadic
//! intervals above a surviving tile.  [`ModelWorkspace::energy_decomposition`]
//! and [`ModelWorkspace::mass_decomposition`] repeatedly strip maximal trees
//! above geometrically decaying thresholds, certifying the cap at every
//! level and partitioning the tiles exactly.
//!
//! Candidate tops are the reference tiles present in the collection and the
//! frequency points tried are the midpoints of reference intervals inside
//! the top's interval (plus its own midpoint); the supremum is taken over
//! this finite class.

use std::cell::OnceCell;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::packet::{packet_coefficient, window_amplitude, WavePacketParams};
use crate::signal::{cutoff_chi, pairwise_sum, GridInterval, Signal, C64};
use crate::square::VectorSignal;
use crate::tiles::TileCollection;

/// Identifies a family tile as `(strip, time position)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TileRef {
    pub strip: usize,
    pub pos: usize,
}

/// Identifies a reference tile as `(offset, time position)`.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct RefTileRef {
    pub offset: usize,
    pub pos: usize,
}

/// One extracted tree.
#[derive(Clone, Debug)]
pub struct TreeRecord {
    pub top: RefTileRef,
    /// Time interval of the top.
    pub time: GridInterval,
    /// Frequency point the tree is tuned to.
    pub xi: f64,
    /// Size of the tree at the moment of extraction (energy size for energy
    /// decompositions, dual value for mass decompositions).
    pub value: f64,
    /// Reference members, top included.
    pub members: Vec<RefTileRef>,
    /// Family tiles removed with the tree.
    pub tiles: Vec<TileRef>,
}

/// One threshold level of a decomposition.
#[derive(Clone, Debug)]
pub struct DecompositionLevel {
    pub index: u32,
    /// `lambda * 2^{-index}`: the nominal cap on sizes entering this level.
    pub nominal_cap: f64,
    /// Measured sup of the size over candidate trees entering the level.
    pub entering_value: f64,
    pub trees: Vec<TreeRecord>,
    /// `sum |I_T|` over the level's trees, in measure units.
    pub packing: f64,
    /// Tiles dumped without a tree (only on a final zero-size level).
    pub loose_tiles: Vec<TileRef>,
}

/// A full size decomposition: levels of trees plus the reference quantity
/// the packing is compared against.
#[derive(Clone, Debug)]
pub struct Decomposition {
    pub lambda: f64,
    /// `||f||_2^2` for energy decompositions, `||g||_1` for mass ones.
    pub reference: f64,
    pub levels: Vec<DecompositionLevel>,
}

/// Measured tree estimate: the model form of one tree against the product
/// of its sizes and its top measure.
#[derive(Clone, Copy, Debug)]
pub struct TreeCheck {
    pub form: f64,
    pub energy_size: f64,
    pub dual_size: f64,
    pub top_measure: f64,
    /// `form / (energy_size * dual_size * top_measure)`.
    pub ratio: f64,
}

/// The model form split by localization: `f` and `g` each restricted to a
/// tripled interval or its complement, paired over the tiles inside the
/// interval.
#[derive(Clone, Copy, Debug)]
pub struct InOutSplit {
    /// The tripled interval used for the cut.
    pub inside: GridInterval,
    pub in_in: f64,
    pub in_out: f64,
    pub out_in: f64,
    pub out_out: f64,
}

struct Candidate {
    offset: usize,
    pos: usize,
    xis: Vec<f64>,
}

/// Coefficients, liveness and aggregates for one `(collection, f, g)`
/// triple.
pub struct ModelWorkspace<'a> {
    tc: &'a TileCollection,
    params: WavePacketParams,
    domain_length: f64,
    dx: f64,
    /// `[strip][pos]`, packet coefficients of `f`.
    coef_f: Vec<Vec<C64>>,
    /// `[strip][pos]`, packet coefficients of the strip's own component of
    /// `g`; present only when the workspace carries dual data.
    coef_g: Option<Vec<Vec<C64>>>,
    alive: Vec<Vec<bool>>,
    /// `[offset][pos]`: `sum_k alive |I| |coef_f|^2`.
    energy: Vec<Vec<f64>>,
    /// Prefix sums of `energy`, `[offset][pos + 1]`.
    energy_prefix: Vec<Vec<f64>>,
    /// `[offset][pos]`: number of alive strips at this reference tile.
    present: Vec<Vec<u16>>,
    /// `|g|` pointwise, kept for the lazy chain-maximum build.
    g_norm: Option<Signal>,
    /// `[offset][pos]`: max over dyadic ancestors `I'` of the tile's time
    /// interval of `(1/|3I'|) int |g| chi_{3I'}`; static per `g`, built on
    /// first use (it costs a quadratic pass the model form never needs).
    chainmax: OnceCell<Vec<Vec<f64>>>,
    f_l2_sq: f64,
    g_l1: f64,
    candidates: Vec<Candidate>,
}

impl<'a> ModelWorkspace<'a> {
    /// Builds the workspace over every tile of the collection.
    pub fn new(
        tc: &'a TileCollection,
        params: &WavePacketParams,
        f: &Signal,
        g: Option<&VectorSignal>,
    ) -> Result<Self> {
        Self::with_filter(tc, params, f, g, |_, _| true)
    }

    /// Builds the workspace keeping only the family tiles the filter
    /// accepts; the filter sees `(strip, pos)` via the realized tile.
    pub fn with_filter(
        tc: &'a TileCollection,
        params: &WavePacketParams,
        f: &Signal,
        g: Option<&VectorSignal>,
        keep: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        params.validate()?;
        let n = tc.n();
        if f.n() != n {
            return Err(Error::param("signal grid does not match the tile collection"));
        }
        if let Some(g) = g {
            if g.len() != tc.families().len() {
                return Err(Error::param(format!(
                    "dual data has {} components for {} family members",
                    g.len(),
                    tc.families().len()
                )));
            }
            if g.n() != n {
                return Err(Error::param("dual data grid does not match the collection"));
            }
        }
        let domain_length = f.domain_length();
        let dx = f.dx();
        let spectrum_f = f.spectrum();
        let strips = tc.strips();
        let coef_f: Vec<Vec<C64>> = strips
            .par_iter()
            .enumerate()
            .map(|(si, _)| {
                (0..tc.positions(strips[si].offset))
                    .map(|pos| {
                        packet_coefficient(&spectrum_f, &tc.strip_tile(si, pos), params, domain_length)
                    })
                    .collect()
            })
            .collect();
        let coef_g = match g {
            None => None,
            Some(g) => {
                let spectra: Vec<Vec<C64>> =
                    g.components().par_iter().map(|c| c.spectrum()).collect();
                Some(
                    strips
                        .par_iter()
                        .enumerate()
                        .map(|(si, s)| {
                            let spec = &spectra[s.family - 1];
                            (0..tc.positions(s.offset))
                                .map(|pos| {
                                    packet_coefficient(
                                        spec,
                                        &tc.strip_tile(si, pos),
                                        params,
                                        domain_length,
                                    )
                                })
                                .collect()
                        })
                        .collect(),
                )
            }
        };
        let alive: Vec<Vec<bool>> = strips
            .iter()
            .enumerate()
            .map(|(si, s)| (0..tc.positions(s.offset)).map(|pos| keep(si, pos)).collect())
            .collect();
        let g_norm = g.map(|g| g.pointwise_norm());
        let g_l1 = g_norm.as_ref().map(|s| s.lp_norm(1.0)).unwrap_or(0.0);
        let mut ws = ModelWorkspace {
            tc,
            params: *params,
            domain_length,
            dx,
            coef_f,
            coef_g,
            alive,
            energy: Vec::new(),
            energy_prefix: Vec::new(),
            present: Vec::new(),
            g_norm,
            chainmax: OnceCell::new(),
            f_l2_sq: f.lp_norm(2.0).powi(2),
            g_l1,
            candidates: Vec::new(),
        };
        ws.rebuild_all();
        ws.candidates = ws.build_candidates();
        Ok(ws)
    }

    pub fn collection(&self) -> &TileCollection {
        self.tc
    }

    pub fn params(&self) -> &WavePacketParams {
        &self.params
    }

    pub fn coefficient_f(&self, t: TileRef) -> C64 {
        self.coef_f[t.strip][t.pos]
    }

    pub fn is_alive(&self, t: TileRef) -> bool {
        self.alive[t.strip][t.pos]
    }

    pub fn alive_tiles(&self) -> Vec<TileRef> {
        let mut out = Vec::new();
        for (strip, flags) in self.alive.iter().enumerate() {
            for (pos, &a) in flags.iter().enumerate() {
                if a {
                    out.push(TileRef { strip, pos });
                }
            }
        }
        out
    }

    fn rebuild_all(&mut self) {
        let n_off = self.tc.offsets().len();
        self.energy = (0..n_off).map(|o| vec![0.0; self.tc.positions(o)]).collect();
        self.present = (0..n_off).map(|o| vec![0; self.tc.positions(o)]).collect();
        for (si, s) in self.tc.strips().iter().enumerate() {
            let measure = (self.tc.time_len(s.offset) as f64) * self.dx;
            for pos in 0..self.tc.positions(s.offset) {
                if self.alive[si][pos] {
                    self.present[s.offset][pos] += 1;
                    self.energy[s.offset][pos] += measure * self.coef_f[si][pos].norm_sqr();
                }
            }
        }
        self.energy_prefix = self
            .energy
            .iter()
            .map(|row| {
                let mut p = Vec::with_capacity(row.len() + 1);
                p.push(0.0);
                for &v in row {
                    p.push(p.last().unwrap() + v);
                }
                p
            })
            .collect();
    }

    fn rebuild_offset(&mut self, o: usize) {
        let row_len = self.tc.positions(o);
        let mut energy = vec![0.0f64; row_len];
        let mut present = vec![0u16; row_len];
        for (si, s) in self.tc.strips().iter().enumerate() {
            if s.offset != o {
                continue;
            }
            let measure = (self.tc.time_len(o) as f64) * self.dx;
            for pos in 0..row_len {
                if self.alive[si][pos] {
                    present[pos] += 1;
                    energy[pos] += measure * self.coef_f[si][pos].norm_sqr();
                }
            }
        }
        let mut p = Vec::with_capacity(row_len + 1);
        p.push(0.0);
        for &v in &energy {
            p.push(p.last().unwrap() + v);
        }
        self.energy[o] = energy;
        self.present[o] = present;
        self.energy_prefix[o] = p;
    }

    /// Candidate trees in extraction order: larger tops first, then earlier
    /// starts, then lower offset intervals, then increasing `xi`.
    fn build_candidates(&self) -> Vec<Candidate> {
        let offsets = self.tc.offsets();
        let mut order: Vec<usize> = (0..offsets.len()).collect();
        order.sort_by_key(|&o| (std::cmp::Reverse(self.tc.time_len(o)), offsets[o].a, offsets[o].b));
        let mut out = Vec::new();
        for &o in &order {
            let w_top = offsets[o];
            let mut xis: Vec<f64> = offsets
                .iter()
                .map(|w| w.center())
                .filter(|&c| c >= w_top.a as f64 && c < w_top.b as f64)
                .collect();
            xis.push(w_top.center());
            xis.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xis.dedup();
            for pos in 0..self.tc.positions(o) {
                out.push(Candidate { offset: o, pos, xis: xis.clone() });
            }
        }
        out
    }

    /// Whether member offset `o` is admissible for a tree with top offset
    /// `top` tuned to `xi`: the top's interval sits inside the 3-fold
    /// dilation of `o` and `xi` inside its 7-fold dilation.
    fn admissible(&self, o: usize, top: usize, xi: f64) -> bool {
        let w_top = self.tc.offsets()[top];
        let w = self.tc.offsets()[o];
        let (lo3, hi3) = w.dilated(3);
        if !(lo3 <= w_top.a as i64 && (w_top.b as i64) <= hi3) {
            return false;
        }
        let (lo7, hi7) = w.dilated(7);
        lo7 as f64 <= xi && xi < hi7 as f64
    }

    /// Total `f`-energy of the tree `(top, xi)` under the current liveness.
    fn tree_energy(&self, top: RefTileRef, xi: f64) -> f64 {
        let mut total = self.energy[top.offset][top.pos];
        let top_len = self.tc.time_len(top.offset);
        for o in 0..self.tc.offsets().len() {
            if self.tc.time_len(o) >= top_len || !self.admissible(o, top.offset, xi) {
                continue;
            }
            let r = top_len / self.tc.time_len(o);
            let lo = top.pos * r;
            let hi = lo + r;
            total += self.energy_prefix[o][hi] - self.energy_prefix[o][lo];
        }
        total
    }

    fn has_dual(&self) -> bool {
        self.g_norm.is_some()
    }

    fn chain_table(&self) -> &Vec<Vec<f64>> {
        self.chainmax.get_or_init(|| {
            let g = self.g_norm.as_ref().expect("dual data required");
            chainmax_tables(self.tc, &self.params, g)
        })
    }

    /// Dual value of the tree `(top, xi)`: max chain value over present
    /// members.
    #[allow(clippy::needless_range_loop)]
    fn tree_dual(&self, top: RefTileRef, xi: f64) -> f64 {
        let cm = self.chain_table();
        let mut best = if self.present[top.offset][top.pos] > 0 {
            cm[top.offset][top.pos]
        } else {
            0.0
        };
        let top_len = self.tc.time_len(top.offset);
        for o in 0..self.tc.offsets().len() {
            if self.tc.time_len(o) >= top_len || !self.admissible(o, top.offset, xi) {
                continue;
            }
            let r = top_len / self.tc.time_len(o);
            for pos in top.pos * r..(top.pos + 1) * r {
                if self.present[o][pos] > 0 {
                    best = best.max(cm[o][pos]);
                }
            }
        }
        best
    }

    fn top_measure(&self, top: RefTileRef) -> f64 {
        self.tc.time_len(top.offset) as f64 * self.dx
    }

    /// Normalized energy size of one candidate tree.
    fn tree_size(&self, top: RefTileRef, xi: f64) -> f64 {
        (self.tree_energy(top, xi) / self.top_measure(top)).sqrt()
    }

    /// Sup of the energy size over all candidate trees with a surviving top.
    pub fn vectorial_size(&self) -> f64 {
        let mut best = 0.0f64;
        for c in &self.candidates {
            if self.present[c.offset][c.pos] == 0 {
                continue;
            }
            let top = RefTileRef { offset: c.offset, pos: c.pos };
            for &xi in &c.xis {
                best = best.max(self.tree_size(top, xi));
            }
        }
        best
    }

    /// Sup of the dual value over surviving reference tiles.
    pub fn dual_size(&self) -> f64 {
        let cm = self.chain_table();
        let mut best = 0.0f64;
        for (row, alive) in cm.iter().zip(&self.present) {
            for (v, count) in row.iter().zip(alive) {
                if *count > 0 {
                    best = best.max(*v);
                }
            }
        }
        best
    }

    /// Removes the tree `(top, xi)` from the collection and reports it.
    fn extract(&mut self, top: RefTileRef, xi: f64, value: f64) -> TreeRecord {
        let mut members = vec![top];
        let top_len = self.tc.time_len(top.offset);
        for o in 0..self.tc.offsets().len() {
            if self.tc.time_len(o) >= top_len || !self.admissible(o, top.offset, xi) {
                continue;
            }
            let r = top_len / self.tc.time_len(o);
            for pos in top.pos * r..(top.pos + 1) * r {
                if self.present[o][pos] > 0 {
                    members.push(RefTileRef { offset: o, pos });
                }
            }
        }
        let mut tiles = Vec::new();
        let mut touched: Vec<usize> = Vec::new();
        for m in &members {
            for (si, s) in self.tc.strips().iter().enumerate() {
                if s.offset == m.offset && self.alive[si][m.pos] {
                    self.alive[si][m.pos] = false;
                    tiles.push(TileRef { strip: si, pos: m.pos });
                }
            }
            touched.push(m.offset);
        }
        touched.sort_unstable();
        touched.dedup();
        for o in touched {
            self.rebuild_offset(o);
        }
        TreeRecord {
            top,
            time: GridInterval::new(top.pos * top_len, top_len),
            xi,
            value,
            members,
            tiles,
        }
    }

    fn run_decomposition(&mut self, lambda: f64, energy_mode: bool) -> Result<Decomposition> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::param(format!("threshold {lambda} must be positive")));
        }
        if !energy_mode && !self.has_dual() {
            return Err(Error::param("mass decomposition needs dual data"));
        }
        let value_of = |ws: &Self, top: RefTileRef, xi: f64| {
            if energy_mode {
                ws.tree_size(top, xi)
            } else {
                ws.tree_dual(top, xi)
            }
        };
        let reference = if energy_mode { self.f_l2_sq } else { self.g_l1 };
        let mut levels = Vec::new();
        let mut stage = 0u32;
        loop {
            let mut entering = 0.0f64;
            for c in &self.candidates {
                if self.present[c.offset][c.pos] == 0 {
                    continue;
                }
                let top = RefTileRef { offset: c.offset, pos: c.pos };
                for &xi in &c.xis {
                    entering = entering.max(value_of(self, top, xi));
                }
            }
            let nominal_cap = lambda * (0.5f64).powi(stage as i32);
            if self.alive_tiles().is_empty() {
                break;
            }
            // Once nothing registers any size, the rest cannot be organized
            // into trees; dump it as the final level.
            if entering <= 0.0 || stage >= 200 {
                levels.push(DecompositionLevel {
                    index: stage,
                    nominal_cap,
                    entering_value: entering,
                    trees: Vec::new(),
                    packing: 0.0,
                    loose_tiles: self.alive_tiles(),
                });
                for row in &mut self.alive {
                    row.iter_mut().for_each(|a| *a = false);
                }
                self.rebuild_all();
                break;
            }
            let threshold = nominal_cap / 2.0;
            let mut trees = Vec::new();
            for ci in 0..self.candidates.len() {
                let (offset, pos) = (self.candidates[ci].offset, self.candidates[ci].pos);
                if self.present[offset][pos] == 0 {
                    continue;
                }
                let top = RefTileRef { offset, pos };
                let xis = self.candidates[ci].xis.clone();
                for xi in xis {
                    if self.present[offset][pos] == 0 {
                        break;
                    }
                    let v = value_of(self, top, xi);
                    if v > threshold {
                        trees.push(self.extract(top, xi, v));
                    }
                }
            }
            let packing = trees.iter().map(|t| t.time.measure(self.dx)).sum();
            levels.push(DecompositionLevel {
                index: stage,
                nominal_cap,
                entering_value: entering,
                trees,
                packing,
                loose_tiles: Vec::new(),
            });
            stage += 1;
        }
        Ok(Decomposition { lambda, reference, levels })
    }

    /// Peels trees whose energy size exceeds `lambda/2, lambda/4, ...` in
    /// turn.  Level `n` holds trees extracted while the measured sup was
    /// certified at most `min(lambda 2^{-n}, initial size)`; the final level
    /// collects size-zero leftovers.  The extracted tiles partition the
    /// surviving collection exactly.
    pub fn energy_decomposition(&mut self, lambda: f64) -> Result<Decomposition> {
        self.run_decomposition(lambda, true)
    }

    /// Same peeling driven by the dual value instead of the energy size.
    pub fn mass_decomposition(&mut self, lambda: f64) -> Result<Decomposition> {
        self.run_decomposition(lambda, false)
    }

    /// The model form `sum |I_P| |<f, phi_P>| |<g_k, phi_P>|` over surviving
    /// tiles.
    pub fn model_form(&self) -> Result<f64> {
        let coef_g = self
            .coef_g
            .as_ref()
            .ok_or_else(|| Error::param("model form needs dual data"))?;
        let per_strip: Vec<f64> = self
            .tc
            .strips()
            .iter()
            .enumerate()
            .map(|(si, s)| {
                let measure = self.tc.time_len(s.offset) as f64 * self.dx;
                let terms: Vec<f64> = (0..self.tc.positions(s.offset))
                    .filter(|&pos| self.alive[si][pos])
                    .map(|pos| {
                        measure * self.coef_f[si][pos].norm() * coef_g[si][pos].norm()
                    })
                    .collect();
                pairwise_sum(&terms)
            })
            .collect();
        Ok(pairwise_sum(&per_strip))
    }

    /// Removes every tile whose time interval sits inside one of the given
    /// intervals; returns how many tiles were removed.
    pub fn good_tiles(&mut self, stops: &[GridInterval]) -> usize {
        let n = self.tc.n();
        let mut removed = 0usize;
        for (si, s) in self.tc.strips().iter().enumerate() {
            let tlen = self.tc.time_len(s.offset);
            for pos in 0..self.tc.positions(s.offset) {
                if !self.alive[si][pos] {
                    continue;
                }
                let time = GridInterval::new(pos * tlen, tlen);
                if stops.iter().any(|q| q.contains_interval(&time, n)) {
                    self.alive[si][pos] = false;
                    removed += 1;
                }
            }
        }
        self.rebuild_all();
        removed
    }

    /// Measures the tree estimate for one extracted tree: its model form
    /// against energy size x dual size x top measure (sizes evaluated on the
    /// tree's own tiles).
    pub fn tree_estimate_check(&self, tree: &TreeRecord) -> Result<TreeCheck> {
        let coef_g = self
            .coef_g
            .as_ref()
            .ok_or_else(|| Error::param("tree check needs dual data"))?;
        let cm = self.chain_table();
        let terms: Vec<f64> = tree
            .tiles
            .iter()
            .map(|t| {
                let measure =
                    self.tc.time_len(self.tc.strips()[t.strip].offset) as f64 * self.dx;
                measure * self.coef_f[t.strip][t.pos].norm() * coef_g[t.strip][t.pos].norm()
            })
            .collect();
        let form = pairwise_sum(&terms);
        // Energy size of the tree itself: restrict a scratch workspace to
        // the tree's tiles and take the sup over candidates again.
        let mut scratch = ModelWorkspace {
            tc: self.tc,
            params: self.params,
            domain_length: self.domain_length,
            dx: self.dx,
            coef_f: self.coef_f.clone(),
            coef_g: None,
            alive: self
                .alive
                .iter()
                .map(|row| row.iter().map(|_| false).collect())
                .collect(),
            energy: Vec::new(),
            energy_prefix: Vec::new(),
            present: Vec::new(),
            g_norm: None,
            chainmax: OnceCell::new(),
            f_l2_sq: self.f_l2_sq,
            g_l1: self.g_l1,
            candidates: Vec::new(),
        };
        for t in &tree.tiles {
            scratch.alive[t.strip][t.pos] = true;
        }
        scratch.rebuild_all();
        scratch.candidates = scratch.build_candidates();
        let energy_size = scratch.vectorial_size();
        let dual_size = tree
            .members
            .iter()
            .map(|m| cm[m.offset][m.pos])
            .fold(0.0, f64::max);
        let top_measure = self.top_measure(tree.top);
        let denom = energy_size * dual_size * top_measure;
        let ratio = if denom > 0.0 { form / denom } else { 0.0 };
        Ok(TreeCheck { form, energy_size, dual_size, top_measure, ratio })
    }
}

/// `(1/|3I'|) int |g| chi_{3I'}` maximized along dyadic ancestor chains:
/// `out[offset][pos]` is the max over standard dyadic `I'` containing the
/// reference tile's time interval.
fn chainmax_tables(
    tc: &TileCollection,
    params: &WavePacketParams,
    g_norm: &Signal,
) -> Vec<Vec<f64>> {
    let n = tc.n();
    let dx = g_norm.dx();
    let log_n = n.trailing_zeros();
    // val[s][p] for the interval [p 2^s, (p+1) 2^s).
    let mut chain: Vec<Vec<f64>> = Vec::with_capacity(log_n as usize + 1);
    for s in 0..=log_n {
        let len = 1usize << s;
        let row: Vec<f64> = (0..n / len)
            .into_par_iter()
            .map(|p| {
                let interval = GridInterval::new(p * len, len);
                let tri = interval.triple(n);
                let weights: Vec<f64> = (0..n)
                    .map(|i| {
                        g_norm.samples()[i].norm()
                            * cutoff_chi(&tri, i, params.decay_exponent, n)
                    })
                    .collect();
                pairwise_sum(&weights) * dx / tri.measure(dx)
            })
            .collect();
        chain.push(row);
    }
    // Fold ancestor maxima down the scales.
    for s in (0..log_n as usize).rev() {
        for p in 0..chain[s].len() {
            let parent = chain[s + 1][p / 2];
            if parent > chain[s][p] {
                chain[s][p] = parent;
            }
        }
    }
    (0..tc.offsets().len())
        .map(|o| {
            let s = tc.time_len(o).trailing_zeros() as usize;
            (0..tc.positions(o)).map(|pos| chain[s][pos]).collect()
        })
        .collect()
}

/// Convenience: the model form over the whole collection.
pub fn model_form(
    tc: &TileCollection,
    params: &WavePacketParams,
    f: &Signal,
    g: &VectorSignal,
) -> Result<f64> {
    ModelWorkspace::new(tc, params, f, Some(g))?.model_form()
}

/// Splits the model form over the tiles inside `interval` by localizing
/// both inputs to the tripled interval and its complement.
pub fn in_out_split(
    tc: &TileCollection,
    params: &WavePacketParams,
    f: &Signal,
    g: &VectorSignal,
    interval: &GridInterval,
) -> Result<InOutSplit> {
    let n = tc.n();
    interval.validate(n)?;
    let inside = interval.triple(n);
    let keep = |si: usize, pos: usize| {
        let tlen = tc.time_len(tc.strips()[si].offset);
        let time = GridInterval::new(pos * tlen, tlen);
        interval.contains_interval(&time, n)
    };
    let mask_vec = |v: &VectorSignal, keep_inside: bool| -> Result<VectorSignal> {
        VectorSignal::new(
            v.components()
                .iter()
                .map(|c| c.restrict(&inside, keep_inside))
                .collect(),
        )
    };
    let f_in = f.restrict(&inside, true);
    let f_out = f.restrict(&inside, false);
    let g_in = mask_vec(g, true)?;
    let g_out = mask_vec(g, false)?;
    let form = |fa: &Signal, gb: &VectorSignal| -> Result<f64> {
        ModelWorkspace::with_filter(tc, params, fa, Some(gb), keep)?.model_form()
    };
    Ok(InOutSplit {
        inside,
        in_in: form(&f_in, &g_in)?,
        in_out: form(&f_in, &g_out)?,
        out_in: form(&f_out, &g_in)?,
        out_out: form(&f_out, &g_out)?,
    })
}

/// Relative spectral residual of reconstructing `f` from its packet
/// coefficients.
#[derive(Clone, Copy, Debug)]
pub struct BandResidual {
    /// Residual over the bins the tile bands cover.
    pub covered: f64,
    /// Residual over the whole spectrum (the Whitney decomposition drops
    /// edge bins of every block, so this has an irreducible floor).
    pub full: f64,
    /// Fraction of spectral energy on covered bins.
    pub covered_energy_fraction: f64,
}

/// Rebuilds `sum_P |I_P| <f, phi_P> Phi_P` from the coefficients and
/// compares it with the spectrum of `f`.
pub fn band_reconstruction(
    tc: &TileCollection,
    params: &WavePacketParams,
    f: &Signal,
) -> Result<BandResidual> {
    params.validate()?;
    let n = tc.n();
    if f.n() != n {
        return Err(Error::param("signal grid does not match the collection"));
    }
    let domain_length = f.domain_length();
    let spectrum = f.spectrum();
    let mut recon = vec![C64::default(); n];
    let mut covered = vec![false; n];
    let scale = n as f64 / domain_length;
    for (si, s) in tc.strips().iter().enumerate() {
        let tlen = tc.time_len(s.offset);
        let measure = tlen as f64 * f.dx();
        for pos in 0..tc.positions(s.offset) {
            let tile = tc.strip_tile(si, pos);
            let coef = packet_coefficient(&spectrum, &tile, params, domain_length);
            let two_c = 2 * tile.time.start + tile.time.len;
            for xi in tile.freq.a..tile.freq.b {
                covered[xi] = true;
                let amp = window_amplitude(&tile.freq, xi, params);
                let m = (xi * two_c) % (2 * n);
                let phase = Complex64::from_polar(
                    1.0,
                    -std::f64::consts::PI * m as f64 / n as f64,
                );
                recon[xi] += coef * phase * (amp * scale * measure);
            }
        }
    }
    let mut num_cov = 0.0f64;
    let mut den_cov = 0.0f64;
    let mut num_full = 0.0f64;
    let mut den_full = 0.0f64;
    for xi in 0..n {
        let err = (recon[xi] - spectrum[xi]).norm_sqr();
        let mag = spectrum[xi].norm_sqr();
        num_full += err;
        den_full += mag;
        if covered[xi] {
            num_cov += err;
            den_cov += mag;
        }
    }
    Ok(BandResidual {
        covered: if den_cov > 0.0 { (num_cov / den_cov).sqrt() } else { 0.0 },
        full: if den_full > 0.0 { (num_full / den_full).sqrt() } else { 0.0 },
        covered_energy_fraction: if den_full > 0.0 { den_cov / den_full } else { 0.0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::IntervalFamily;
    use crate::square::project_many;
    use crate::tiles::tiles_for_family;
    use crate::packet::wave_packet;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Signal::from_fn(n, 1.0, |_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .unwrap()
    }

    fn lacunary_workspace_data(n: usize, seed: u64) -> (TileCollection, Signal, VectorSignal) {
        let family = IntervalFamily::make_lacunary(2.0, n).unwrap();
        let tc = tiles_for_family(&family, n).unwrap();
        let f = random_signal(n, seed);
        let g = project_many(&random_signal(n, seed + 1), &family).unwrap();
        (tc, f, g)
    }

    #[test]
    fn single_tile_size_is_its_coefficient() {
        let n = 64;
        let (tc, f, _) = lacunary_workspace_data(n, 1);
        let params = WavePacketParams::default();
        // Keep exactly one tile: the first strip with at least two time
        // positions, away from position zero.
        let si = (0..tc.strips().len())
            .find(|&si| tc.positions(tc.strips()[si].offset) >= 2)
            .unwrap();
        let ws =
            ModelWorkspace::with_filter(&tc, &params, &f, None, |s, pos| s == si && pos == 1)
                .unwrap();
        assert_eq!(ws.alive_tiles().len(), 1);
        let tile = tc.strip_tile(si, 1);
        let coef = packet_coefficient(&f.spectrum(), &tile, &params, 1.0);
        // Tree energy of the singleton is |I| |c|^2, normalized by |I|.
        assert!((ws.vectorial_size() - coef.norm()).abs() < 1e-12 * coef.norm().max(1e-30));
    }

    #[test]
    fn model_form_matches_direct_inner_products() {
        let n = 64;
        let (tc, f, g) = lacunary_workspace_data(n, 3);
        let params = WavePacketParams::default();
        let fast = model_form(&tc, &params, &f, &g).unwrap();
        // Direct route: realize every packet in time and integrate.
        let mut direct = 0.0f64;
        for (si, s) in tc.strips().iter().enumerate() {
            let measure = tc.time_len(s.offset) as f64 / n as f64;
            for pos in 0..tc.positions(s.offset) {
                let tile = tc.strip_tile(si, pos);
                let phi = wave_packet(&tile, &params, n, 1.0).unwrap();
                let ip = |h: &Signal| -> C64 {
                    h.samples()
                        .iter()
                        .zip(phi.samples())
                        .map(|(a, b)| a * b.conj())
                        .sum::<C64>()
                        * h.dx()
                };
                direct += measure * ip(&f).norm() * ip(g.component(s.family - 1)).norm();
            }
        }
        assert!((fast - direct).abs() < 1e-10 * direct.max(1.0), "{fast} vs {direct}");
    }

    #[test]
    fn energy_decomposition_partitions_and_caps() {
        let n = 128;
        let (tc, f, _) = lacunary_workspace_data(n, 5);
        let params = WavePacketParams::default();
        let mut ws = ModelWorkspace::new(&tc, &params, &f, None).unwrap();
        let total_tiles = ws.alive_tiles().len();
        let s0 = ws.vectorial_size();
        assert!(s0 > 0.0);
        let decomp = ws.energy_decomposition(s0).unwrap();
        // Caps: entering value of level n (n >= 1) is at most the nominal
        // cap, which is the previous level's threshold.
        for level in &decomp.levels {
            if level.index >= 1 {
                assert!(
                    level.entering_value <= level.nominal_cap * (1.0 + 1e-12),
                    "level {}: {} over {}",
                    level.index,
                    level.entering_value,
                    level.nominal_cap
                );
            }
        }
        // Exact partition of the tiles.
        let mut seen = std::collections::HashSet::new();
        let mut count = 0usize;
        for level in &decomp.levels {
            for tree in &level.trees {
                assert!(tree.value > level.nominal_cap / 2.0);
                for t in &tree.tiles {
                    assert!(seen.insert((t.strip, t.pos)), "tile extracted twice");
                    count += 1;
                }
            }
            for t in &level.loose_tiles {
                assert!(seen.insert((t.strip, t.pos)), "loose tile duplicated");
                count += 1;
            }
        }
        assert_eq!(count, total_tiles);
        assert!(ws.alive_tiles().is_empty());
    }

    #[test]
    fn zero_signal_gives_single_loose_level() {
        let n = 64;
        let family = IntervalFamily::make_lacunary(2.0, n).unwrap();
        let tc = tiles_for_family(&family, n).unwrap();
        let f = Signal::zeros(n, 1.0).unwrap();
        let params = WavePacketParams::default();
        let mut ws = ModelWorkspace::new(&tc, &params, &f, None).unwrap();
        let decomp = ws.energy_decomposition(1.0).unwrap();
        assert_eq!(decomp.levels.len(), 1);
        assert!(decomp.levels[0].trees.is_empty());
        assert_eq!(decomp.levels[0].loose_tiles.len(), tc.tile_count());
    }

    #[test]
    fn mass_decomposition_partitions_and_caps() {
        let n = 128;
        let (tc, f, g) = lacunary_workspace_data(n, 7);
        let params = WavePacketParams::default();
        let mut ws = ModelWorkspace::new(&tc, &params, &f, Some(&g)).unwrap();
        let d0 = ws.dual_size();
        assert!(d0 > 0.0);
        let total_tiles = ws.alive_tiles().len();
        let decomp = ws.mass_decomposition(d0).unwrap();
        let mut count = 0usize;
        for level in &decomp.levels {
            if level.index >= 1 {
                assert!(level.entering_value <= level.nominal_cap * (1.0 + 1e-12));
            }
            count += level.trees.iter().map(|t| t.tiles.len()).sum::<usize>();
            count += level.loose_tiles.len();
        }
        assert_eq!(count, total_tiles);
    }

    #[test]
    fn good_tiles_removes_only_contained_times() {
        let n = 64;
        let (tc, f, _) = lacunary_workspace_data(n, 9);
        let params = WavePacketParams::default();
        let mut ws = ModelWorkspace::new(&tc, &params, &f, None).unwrap();
        let before = ws.alive_tiles().len();
        let stop = GridInterval::new(0, 16);
        let removed = ws.good_tiles(&[stop]);
        assert!(removed > 0);
        assert_eq!(ws.alive_tiles().len(), before - removed);
        for t in ws.alive_tiles() {
            let s = tc.strips()[t.strip];
            let tlen = tc.time_len(s.offset);
            let time = GridInterval::new(t.pos * tlen, tlen);
            assert!(!stop.contains_interval(&time, n));
        }
    }

    #[test]
    fn tree_checks_are_finite_and_consistent() {
        let n = 128;
        let (tc, f, g) = lacunary_workspace_data(n, 11);
        let params = WavePacketParams::default();
        let mut ws = ModelWorkspace::new(&tc, &params, &f, Some(&g)).unwrap();
        let s0 = ws.vectorial_size();
        let frozen = ModelWorkspace::new(&tc, &params, &f, Some(&g)).unwrap();
        let decomp = ws.energy_decomposition(s0).unwrap();
        let mut checked = 0;
        for level in &decomp.levels {
            for tree in &level.trees {
                let check = frozen.tree_estimate_check(tree).unwrap();
                assert!(check.form.is_finite() && check.form >= 0.0);
                if check.form > 0.0 {
                    assert!(check.energy_size > 0.0);
                    assert!(check.dual_size > 0.0);
                    assert!(check.ratio.is_finite());
                }
                checked += 1;
            }
        }
        assert!(checked > 0, "decomposition produced no trees to check");
    }

    #[test]
    fn in_out_split_bounds_the_full_form() {
        let n = 128;
        let (tc, f, g) = lacunary_workspace_data(n, 13);
        let params = WavePacketParams::default();
        let interval = GridInterval::new(32, 32);
        let split = in_out_split(&tc, &params, &f, &g, &interval).unwrap();
        for part in [split.in_in, split.in_out, split.out_in, split.out_out] {
            assert!(part.is_finite() && part >= 0.0);
        }
        // Triangle inequality against the unsplit form over the same tiles.
        let keep = |si: usize, pos: usize| {
            let tlen = tc.time_len(tc.strips()[si].offset);
            let time = GridInterval::new(pos * tlen, tlen);
            interval.contains_interval(&time, n)
        };
        let full = ModelWorkspace::with_filter(&tc, &params, &f, Some(&g), keep)
            .unwrap()
            .model_form()
            .unwrap();
        let sum = split.in_in + split.in_out + split.out_in + split.out_out;
        assert!(full <= sum * (1.0 + 1e-9) + 1e-12, "{full} vs {sum}");
    }

    #[test]
    fn reconstruction_residual_is_small_on_covered_band() {
        let n = 256;
        let family = IntervalFamily::make_lacunary(2.0, n).unwrap();
        let tc = tiles_for_family(&family, n).unwrap();
        let f = random_signal(n, 15);
        let res = band_reconstruction(&tc, &WavePacketParams::default(), &f).unwrap();
        assert!(res.covered < 0.12, "covered residual {}", res.covered);
        assert!(res.full >= res.covered);
        assert!(res.covered_energy_fraction > 0.3);
    }
}
