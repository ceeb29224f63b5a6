//! Time-frequency tiles attached to a family of frequency intervals.
//!
//! A tile pairs a standard-dyadic time interval with a frequency interval so
//! that `len_time * len_freq = n`: one unit of phase-space area.  For each
//! family member `omega_k` the Whitney pieces `J` of `omega_k` carry tiles
//! `(I, J)` over every dyadic time interval of length `n / |J|`.  Whitney
//! pieces of blocks shorter than four bins are not dyadic themselves and are
//! split greedily into maximal dyadic pieces, keeping the area identity
//! exact.
//!
//! Translating the tiles of member `k` down by `nu_k` (the member's left
//! endpoint) lands them on a shared reference collection: deduplicated
//! offset intervals near the origin, each carrying all time positions at its
//! scale.  Family tiles are exactly reference tiles translated back up, and
//! the tree machinery reasons about the reference collection only.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};
use crate::family::{whitney, FrequencyInterval, IntervalFamily};
use crate::signal::GridInterval;

/// One tile: a dyadic time interval and a frequency interval of reciprocal
/// length.  `family` is the 1-based member index, 0 for reference tiles.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Tile {
    pub family: usize,
    pub time: GridInterval,
    pub freq: FrequencyInterval,
}

impl Tile {
    /// Phase-space area in grid units; tiles are built with area exactly `n`.
    pub fn area(&self) -> usize {
        self.time.len * self.freq.len()
    }
}

impl fmt::Display for Tile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "tile(k={}, I=[{}, +{}), w={})",
            self.family, self.time.start, self.time.len, self.freq
        )
    }
}

/// Strict tile order: `p < q` when the time interval of `p` is strictly
/// inside that of `q` while the frequency interval of `q` sits inside the
/// tripled frequency interval of `p`.
///
/// Time intervals of tiles never wrap, so plain interval arithmetic applies;
/// the frequency tripling is concentric on the integer line.
pub fn tile_lt(p: &Tile, q: &Tile) -> bool {
    if p.time.len >= q.time.len {
        return false;
    }
    let time_inside =
        q.time.start <= p.time.start && p.time.start + p.time.len <= q.time.start + q.time.len;
    if !time_inside {
        return false;
    }
    let (lo, hi) = p.freq.dilated(3);
    lo <= q.freq.a as i64 && (q.freq.b as i64) <= hi
}

/// A `(family member, offset interval)` pair: all tiles sharing one
/// frequency interval of the family side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Strip {
    /// 1-based family member.
    pub family: usize,
    /// Index into [`TileCollection::offsets`].
    pub offset: usize,
}

/// Tiles of a family, organized per strip, plus the shared reference
/// collection of translated offsets.
#[derive(Clone, Debug)]
pub struct TileCollection {
    n: usize,
    families: Vec<FrequencyInterval>,
    nu: Vec<usize>,
    offsets: Vec<FrequencyInterval>,
    strips: Vec<Strip>,
    ref_len: usize,
}

impl TileCollection {
    pub fn n(&self) -> usize {
        self.n
    }

    /// The family members `omega_k`, index `k - 1`.
    pub fn families(&self) -> &[FrequencyInterval] {
        &self.families
    }

    /// Translation frequencies `nu_k = a_k`, index `k - 1`.
    pub fn nu(&self) -> &[usize] {
        &self.nu
    }

    /// Deduplicated reference intervals (member pieces shifted down by
    /// `nu_k`), sorted.
    pub fn offsets(&self) -> &[FrequencyInterval] {
        &self.offsets
    }

    pub fn strips(&self) -> &[Strip] {
        &self.strips
    }

    /// Length of the longest family member; every offset sits inside
    /// `[0, ref_len)`.
    pub fn ref_len(&self) -> usize {
        self.ref_len
    }

    /// Time length at an offset's scale: `n / |offset|`.
    pub fn time_len(&self, offset: usize) -> usize {
        self.n / self.offsets[offset].len()
    }

    /// Number of time positions at an offset's scale.
    pub fn positions(&self, offset: usize) -> usize {
        self.offsets[offset].len()
    }

    fn time_interval(&self, offset: usize, pos: usize) -> GridInterval {
        let len = self.time_len(offset);
        GridInterval::new(pos * len, len)
    }

    /// The family tile of `strip` at time position `pos`.
    pub fn strip_tile(&self, strip: usize, pos: usize) -> Tile {
        let s = self.strips[strip];
        let w = self.offsets[s.offset];
        let nu = self.nu[s.family - 1];
        Tile {
            family: s.family,
            time: self.time_interval(s.offset, pos),
            freq: FrequencyInterval { a: w.a + nu, b: w.b + nu },
        }
    }

    /// The reference tile at `(offset, pos)`.
    pub fn ref_tile(&self, offset: usize, pos: usize) -> Tile {
        Tile {
            family: 0,
            time: self.time_interval(offset, pos),
            freq: self.offsets[offset],
        }
    }

    /// Total number of family tiles.
    pub fn tile_count(&self) -> usize {
        self.strips.iter().map(|s| self.positions(s.offset)).sum()
    }

    /// Number of reference tiles (offsets times their positions).
    pub fn ref_tile_count(&self) -> usize {
        (0..self.offsets.len()).map(|o| self.positions(o)).sum()
    }

    /// All family tiles, strip by strip.
    pub fn all_tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.strips.len()).flat_map(move |s| {
            (0..self.positions(self.strips[s].offset)).map(move |pos| self.strip_tile(s, pos))
        })
    }

    /// Strip indices grouped by family member (1-based access).
    pub fn strips_of_family(&self, family: usize) -> impl Iterator<Item = usize> + '_ {
        self.strips
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.family == family)
            .map(|(i, _)| i)
    }
}

/// Builds the tile collection of a family on a grid of `n` samples.
///
/// Every member is Whitney-decomposed; each piece `J` (further split into
/// dyadic lengths when the member was too short for a proper Whitney
/// decomposition) produces tiles on all `|J|` dyadic time intervals of
/// length `n / |J|`.
pub fn tiles_for_family(family: &IntervalFamily, n: usize) -> Result<TileCollection> {
    crate::signal::check_grid_size(n)?;
    family.validate(n)?;
    let mut offset_set: BTreeSet<FrequencyInterval> = BTreeSet::new();
    let mut raw_strips: Vec<(usize, FrequencyInterval)> = Vec::new();
    let mut nu = Vec::with_capacity(family.len());
    for (k0, w) in family.intervals().iter().enumerate() {
        nu.push(w.a);
        for piece in whitney(w) {
            for dyadic_piece in piece.aligned_pieces() {
                if dyadic_piece.len() > n / 2 && dyadic_piece.len() != n {
                    return Err(Error::param(format!(
                        "piece {dyadic_piece} cannot carry area-one tiles on n={n}"
                    )));
                }
                let offset = FrequencyInterval {
                    a: dyadic_piece.a - w.a,
                    b: dyadic_piece.b - w.a,
                };
                offset_set.insert(offset);
                raw_strips.push((k0 + 1, offset));
            }
        }
    }
    let offsets: Vec<FrequencyInterval> = offset_set.into_iter().collect();
    let strips = raw_strips
        .into_iter()
        .map(|(family, w)| Strip {
            family,
            offset: offsets.binary_search(&w).expect("offset was inserted"),
        })
        .collect();
    let ref_len = family.intervals().iter().map(|w| w.len()).max().unwrap_or(1);
    Ok(TileCollection {
        n,
        families: family.intervals().to_vec(),
        nu,
        offsets,
        strips,
        ref_len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lacunary_collection(n: usize) -> TileCollection {
        let family = IntervalFamily::make_lacunary(2.0, n).unwrap();
        tiles_for_family(&family, n).unwrap()
    }

    #[test]
    fn tiles_have_unit_area_and_valid_bands() {
        for n in [16usize, 64, 256] {
            let tc = lacunary_collection(n);
            for tile in tc.all_tiles() {
                assert_eq!(tile.area(), n, "{tile}");
                assert!(tile.freq.b <= n);
                assert!(tile.time.start + tile.time.len <= n, "time wraps: {tile}");
                assert!(tile.time.len.is_power_of_two());
            }
            for o in 0..tc.offsets().len() {
                for pos in 0..tc.positions(o) {
                    assert_eq!(tc.ref_tile(o, pos).area(), n);
                }
            }
        }
    }

    #[test]
    fn frozen_counts_for_lacunary_64() {
        // Blocks [1,2),[2,4),[4,8),[8,16),[16,32); Whitney pieces per block
        // have 1, 2, 1+1, 1+2+2+1 and 1+2+4+4+2+1 time positions, giving 25
        // family tiles; offsets dedup to 11 intervals carrying 21 reference
        // tiles.
        let tc = lacunary_collection(64);
        assert_eq!(tc.tile_count(), 25);
        assert_eq!(tc.offsets().len(), 11);
        assert_eq!(tc.ref_tile_count(), 21);
        assert_eq!(tc.nu(), &[1, 2, 4, 8, 16]);
        assert_eq!(tc.ref_len(), 16);
    }

    #[test]
    fn family_tiles_are_translated_reference_tiles() {
        let tc = lacunary_collection(128);
        for (si, s) in tc.strips().iter().enumerate() {
            let nu = tc.nu()[s.family - 1];
            for pos in 0..tc.positions(s.offset) {
                let fam_tile = tc.strip_tile(si, pos);
                let ref_tile = tc.ref_tile(s.offset, pos);
                assert_eq!(fam_tile.time, ref_tile.time);
                assert_eq!(fam_tile.freq.a, ref_tile.freq.a + nu);
                assert_eq!(fam_tile.freq.b, ref_tile.freq.b + nu);
            }
        }
    }

    #[test]
    fn short_blocks_split_into_dyadic_pieces() {
        // lacunary ratio 4 on n=64 has the 3-bin block [1, 4), which must
        // split into [1,2) and [2,4) to keep power-of-two lengths.
        let family = IntervalFamily::make_lacunary(4.0, 64).unwrap();
        let tc = tiles_for_family(&family, 64).unwrap();
        let k1_offsets: Vec<FrequencyInterval> = tc
            .strips_of_family(1)
            .map(|s| tc.offsets()[tc.strips()[s].offset])
            .collect();
        assert_eq!(
            k1_offsets,
            vec![
                FrequencyInterval::new(0, 1).unwrap(),
                FrequencyInterval::new(1, 3).unwrap()
            ]
        );
    }

    #[test]
    fn order_axioms_on_reference_tiles() {
        let tc = lacunary_collection(64);
        let mut tiles: Vec<Tile> = Vec::new();
        for o in 0..tc.offsets().len() {
            for pos in 0..tc.positions(o) {
                tiles.push(tc.ref_tile(o, pos));
            }
        }
        for p in &tiles {
            assert!(!tile_lt(p, p), "irreflexive");
        }
        for p in &tiles {
            for q in &tiles {
                if tile_lt(p, q) {
                    assert!(!tile_lt(q, p), "antisymmetric: {p} vs {q}");
                    assert!(p.time.len < q.time.len);
                    assert!(p.freq.len() > q.freq.len(), "area one flips the lengths");
                }
            }
        }
        // The relation is not transitive: each step dilates the frequency
        // window, so chains drift.  Only irreflexivity and antisymmetry are
        // structural.
    }

    #[test]
    fn order_transitivity_fails_when_scales_pack_densely() {
        // Ratio-1.5 blocks put three consecutive scales close in frequency.
        // Dilation windows drift down the chain: 3*[44,48) = [40,52) admits
        // [40,42), and 3*[40,42) = [38,44) admits [39,40), yet [39,40) is
        // not inside [40,52).  Collections this dense lose transitivity, so
        // nothing downstream may assume it.
        let family = IntervalFamily::make_lacunary(1.5, 256).unwrap();
        let tc = tiles_for_family(&family, 256).unwrap();
        let pick = |len: usize, a: usize, b: usize| -> Tile {
            tc.all_tiles()
                .find(|t| {
                    t.time.start == 0 && t.time.len == len && t.freq.a == a && t.freq.b == b
                })
                .expect("tile present in the generated collection")
        };
        let p = pick(64, 44, 48);
        let q = pick(128, 40, 42);
        let r = pick(256, 39, 40);
        assert!(tile_lt(&p, &q));
        assert!(tile_lt(&q, &r));
        assert!(!tile_lt(&p, &r));
    }

    #[test]
    fn order_examples() {
        let small = Tile {
            family: 0,
            time: GridInterval::new(8, 8),
            freq: FrequencyInterval::new(2, 4).unwrap(),
        };
        let big = Tile {
            family: 0,
            time: GridInterval::new(0, 16),
            freq: FrequencyInterval::new(3, 4).unwrap(),
        };
        // I_small inside I_big and [3,4) inside 3*[2,4) = [0,6).
        assert!(tile_lt(&small, &big));
        assert!(!tile_lt(&big, &small));
        let far = Tile {
            family: 0,
            time: GridInterval::new(0, 16),
            freq: FrequencyInterval::new(9, 10).unwrap(),
        };
        assert!(!tile_lt(&small, &far), "frequency too far for comparability");
    }
}
