//! Z^d geometry and simple random walks.
//!
//! A point is packed into one u128: up to 8 coordinates, 16 bits each, stored
//! with an offset of 2^15 so that a unit step is a single add on the word.

use std::fmt;

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::tree::InvariantTreeSlice;

pub const MAX_DIM: usize = 8;
const LANE: u32 = 16;
const BIAS: u128 = 0x8000_8000_8000_8000_8000_8000_8000_8000;
const COORD_MIN: i32 = -32768;
const COORD_MAX: i32 = 32767;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LatticePoint(u128);

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint(BIAS);

    pub fn from_coords(coords: &[i32]) -> Result<Self> {
        if coords.len() > MAX_DIM {
            return Err(Error::Config(format!("dimension {} exceeds {MAX_DIM}", coords.len())));
        }
        let mut word = BIAS;
        for (i, &c) in coords.iter().enumerate() {
            if !(COORD_MIN..=COORD_MAX).contains(&c) {
                return Err(Error::Overflow(format!("coordinate {c}")));
            }
            word = word.wrapping_add(((c as i128) << (LANE * i as u32)) as u128);
        }
        Ok(LatticePoint(word))
    }

    #[inline]
    pub fn coord(self, axis: usize) -> i32 {
        ((self.0 >> (LANE * axis as u32)) & 0xffff) as i32 - 0x8000
    }

    pub fn coords(self, dim: usize) -> Vec<i32> {
        (0..dim).map(|i| self.coord(i)).collect()
    }

    /// Unit step `s ∈ 0..2d`: axis s/2, positive when s is even.
    #[inline]
    pub fn step(self, s: usize) -> Result<Self> {
        let axis = (s >> 1) as u32;
        let lane = (self.0 >> (LANE * axis)) & 0xffff;
        if s & 1 == 0 {
            if lane == 0xffff {
                return Err(Error::Overflow(format!("axis {axis} above {COORD_MAX}")));
            }
            Ok(LatticePoint(self.0 + (1u128 << (LANE * axis))))
        } else {
            if lane == 0 {
                return Err(Error::Overflow(format!("axis {axis} below {COORD_MIN}")));
            }
            Ok(LatticePoint(self.0 - (1u128 << (LANE * axis))))
        }
    }

    /// Lane-wise difference. Components must stay in range, which holds for
    /// any two points within 2^15 of each other coordinate-wise.
    #[inline]
    pub fn sub(self, other: LatticePoint) -> LatticePoint {
        let mut out = 0u128;
        for axis in 0..MAX_DIM as u32 {
            let a = ((self.0 >> (LANE * axis)) & 0xffff) as i32;
            let b = ((other.0 >> (LANE * axis)) & 0xffff) as i32;
            let c = (a - b + 0x8000) as u128 & 0xffff;
            out |= c << (LANE * axis);
        }
        LatticePoint(out)
    }

    #[inline]
    pub fn add(self, other: LatticePoint) -> LatticePoint {
        let mut out = 0u128;
        for axis in 0..MAX_DIM as u32 {
            let a = ((self.0 >> (LANE * axis)) & 0xffff) as i32;
            let b = ((other.0 >> (LANE * axis)) & 0xffff) as i32;
            let c = (a + b - 0x8000) as u128 & 0xffff;
            out |= c << (LANE * axis);
        }
        LatticePoint(out)
    }

    #[inline]
    pub fn norm_sq(self) -> i64 {
        let mut s = 0i64;
        for axis in 0..MAX_DIM {
            let c = self.coord(axis) as i64;
            s += c * c;
        }
        s
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn l1(self) -> i64 {
        (0..MAX_DIM).map(|a| self.coord(a).abs() as i64).sum()
    }

    pub fn linf(self) -> i32 {
        (0..MAX_DIM).map(|a| self.coord(a).abs()).max().unwrap_or(0)
    }

    /// Sorted absolute coordinates: the canonical representative under the
    /// hyperoctahedral group.
    pub fn canonical(self, dim: usize) -> [u16; MAX_DIM] {
        let mut c = [0u16; MAX_DIM];
        for (i, slot) in c.iter_mut().enumerate().take(dim) {
            *slot = self.coord(i).unsigned_abs() as u16;
        }
        c[..dim].sort_unstable();
        c
    }

    pub fn raw(self) -> u128 {
        self.0
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let cs: Vec<i32> = (0..MAX_DIM).map(|i| self.coord(i)).collect();
        let end = cs.iter().rposition(|&c| c != 0).map_or(1, |p| p + 1);
        write!(f, "{:?}", &cs[..end])
    }
}

/// Serialized as the debug form, e.g. "[1, -2]".
impl serde::Serialize for LatticePoint {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:?}", self))
    }
}

impl<'de> serde::Deserialize<'de> for LatticePoint {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = <String as serde::Deserialize>::deserialize(d)?;
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let coords: std::result::Result<Vec<i32>, _> = inner
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(|t| t.trim().parse::<i32>())
            .collect();
        let coords = coords.map_err(serde::de::Error::custom)?;
        LatticePoint::from_coords(&coords).map_err(serde::de::Error::custom)
    }
}

#[inline]
pub fn random_step<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> usize {
    rng.random_range(0..2 * dim)
}

/// Unit-step neighbours of x.
pub fn neighbours(x: LatticePoint, dim: usize) -> impl Iterator<Item = LatticePoint> {
    (0..2 * dim).filter_map(move |s| x.step(s).ok())
}

/// An endless SRW from a start point.
pub struct Srw<'r, R: Rng + ?Sized> {
    pos: LatticePoint,
    dim: usize,
    rng: &'r mut R,
    started: bool,
}

impl<'r, R: Rng + ?Sized> Srw<'r, R> {
    pub fn new(start: LatticePoint, dim: usize, rng: &'r mut R) -> Self {
        Srw {
            pos: start,
            dim,
            rng,
            started: false,
        }
    }
}

impl<R: Rng + ?Sized> Iterator for Srw<'_, R> {
    type Item = LatticePoint;

    /// Yields X_0, X_1, ... (X_0 is the start point). Stops if a coordinate
    /// would leave the packable range.
    fn next(&mut self) -> Option<LatticePoint> {
        if !self.started {
            self.started = true;
            return Some(self.pos);
        }
        let s = random_step(self.rng, self.dim);
        self.pos = self.pos.step(s).ok()?;
        Some(self.pos)
    }
}

pub fn sample_srw<R: Rng + ?Sized>(dim: usize, steps: usize, rng: &mut R) -> Vec<LatticePoint> {
    Srw::new(LatticePoint::ORIGIN, dim, rng).take(steps + 1).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HitTime {
    Hit(u64),
    /// Budget ran out after this many steps.
    Exhausted(u64),
}

/// First k with ⌊‖X_k‖⌋ = r (spheres are integer shells of the Euclidean norm).
pub fn hitting_time_radius<I>(walk: I, r: u64, budget: u64) -> HitTime
where
    I: IntoIterator<Item = LatticePoint>,
{
    assert!(r >= 1);
    let lo = (r * r) as i64;
    let hi = ((r + 1) * (r + 1)) as i64;
    let mut k = 0u64;
    for x in walk {
        let n2 = x.norm_sq();
        if n2 >= lo && n2 < hi {
            return HitTime::Hit(k);
        }
        if k == budget {
            break;
        }
        k += 1;
    }
    HitTime::Exhausted(k)
}

/// Membership test for a point set; implemented by occupancy maps and plain sets.
pub trait Occupied {
    fn hits(&self, x: LatticePoint) -> bool;
}

impl<V> Occupied for FxHashMap<LatticePoint, V> {
    fn hits(&self, x: LatticePoint) -> bool {
        self.contains_key(&x)
    }
}

impl Occupied for rustc_hash::FxHashSet<LatticePoint> {
    fn hits(&self, x: LatticePoint) -> bool {
        self.contains(&x)
    }
}

/// Stream B's points and stop at the first one that lies in A.
pub fn intersect_first<A, I>(a: &A, b: I) -> Option<(usize, LatticePoint)>
where
    A: Occupied + ?Sized,
    I: IntoIterator<Item = LatticePoint>,
{
    b.into_iter().enumerate().find(|(_, x)| a.hits(*x))
}


/// Lattice labels over a tree slice plus the inverse map.
#[derive(Clone, Debug)]
pub struct BrwRealization {
    pub dim: usize,
    /// Label of every vertex of the slice, by position (hidden vertices too).
    pub labels: Vec<LatticePoint>,
    /// Point → indices of window vertices sitting there, sorted.
    pub occupancy: FxHashMap<LatticePoint, Vec<i64>>,
}

/// Put iid uniform unit steps on every edge; the root sits at the origin.
pub fn label_walk<R: Rng + ?Sized>(
    slice: &InvariantTreeSlice,
    dim: usize,
    rng: &mut R,
) -> Result<BrwRealization> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Config(format!("dimension must be in 1..={MAX_DIM}")));
    }
    let verts = slice.vertices();
    let mut labels = vec![LatticePoint::ORIGIN; verts.len()];
    let ordered = verts.iter().enumerate().all(|(i, v)| v.parent.is_none_or(|p| (p as usize) < i));
    let order: Vec<u32> = if ordered {
        (0..verts.len() as u32).collect()
    } else {
        slice.topological_order()
    };
    let root = slice.position_of(0).expect("slice has a root");
    for pos in order {
        let v = &verts[pos as usize];
        match v.parent {
            Some(p) => {
                labels[pos as usize] = labels[p as usize].step(random_step(rng, dim))?;
            }
            None => debug_assert_eq!(pos, root),
        }
    }
    // shift so the index-0 vertex is at the origin (matters after re-rooting)
    let base = labels[root as usize];
    if base != LatticePoint::ORIGIN {
        for l in labels.iter_mut() {
            *l = l.sub(base);
        }
    }
    let mut occupancy: FxHashMap<LatticePoint, Vec<i64>> = FxHashMap::default();
    let (lo, _) = slice.window();
    for (k, &pos) in slice.indexed_positions().iter().enumerate() {
        occupancy.entry(labels[pos as usize]).or_default().push(lo + k as i64);
    }
    Ok(BrwRealization {
        dim,
        labels,
        occupancy,
    })
}

impl BrwRealization {
    pub fn label(&self, slice: &InvariantTreeSlice, z: i64) -> Option<LatticePoint> {
        slice.position_of(z).map(|p| self.labels[p as usize])
    }

    /// Labels of spine ranks 0, 1, ... that exist in the slice.
    pub fn spine_labels(&self, slice: &InvariantTreeSlice) -> Vec<LatticePoint> {
        slice.spine().iter().map(|s| self.labels[s.position as usize]).collect()
    }

    /// Window indices visiting x.
    pub fn visits(&self, x: LatticePoint) -> &[i64] {
        self.occupancy.get(&x).map_or(&[], |v| v.as_slice())
    }

    /// Labels of window indices in [a, b].
    pub fn range_points(&self, slice: &InvariantTreeSlice, a: i64, b: i64) -> Vec<LatticePoint> {
        (a..=b).filter_map(|z| self.label(slice, z)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn packing_roundtrip() {
        let c = [3, -4, 0, 32767, -32768, 1, 2, -1];
        let p = LatticePoint::from_coords(&c).unwrap();
        assert_eq!(p.coords(8), c.to_vec());
        assert!(LatticePoint::from_coords(&[40000]).is_err());
    }

    #[test]
    fn steps_and_overflow() {
        let p = LatticePoint::ORIGIN.step(0).unwrap().step(5).unwrap();
        assert_eq!(p.coords(3), vec![1, 0, -1]);
        let edge = LatticePoint::from_coords(&[32767]).unwrap();
        assert!(edge.step(0).is_err());
        assert!(edge.step(1).is_ok());
    }

    #[test]
    fn sub_and_add_invert() {
        let a = LatticePoint::from_coords(&[5, -7, 3, 0, 0, 0, 1, -2]).unwrap();
        let b = LatticePoint::from_coords(&[-1, 2, 3, 9, 0, 4, 1, 0]).unwrap();
        assert_eq!(a.sub(b).add(b), a);
        assert_eq!(a.sub(b).coords(8), vec![6, -9, 0, -9, 0, -4, 0, -2]);
        assert_eq!(a.sub(a), LatticePoint::ORIGIN);
    }

    #[test]
    fn canonical_form() {
        let a = LatticePoint::from_coords(&[0, -3, 1, 0, 0, 0, 0, 2]).unwrap();
        assert_eq!(a.canonical(8), [0, 0, 0, 0, 0, 1, 2, 3]);
    }

    #[test]
    fn radius_one_is_hit_on_the_first_step() {
        let mut rng = stream(5);
        for _ in 0..100 {
            let w = Srw::new(LatticePoint::ORIGIN, 8, &mut rng);
            assert_eq!(hitting_time_radius(w, 1, 10), HitTime::Hit(1));
        }
    }

    #[test]
    fn walk_parity_in_one_dimension() {
        let mut rng = stream(6);
        let path = sample_srw(1, 101, &mut rng);
        for (k, x) in path.iter().enumerate() {
            assert_eq!((x.coord(0) - k as i32).rem_euclid(2), 0);
        }
    }

    #[test]
    fn labels_follow_edges() {
        use crate::offspring::OffspringDistribution;
        use crate::tree::{sample_slice, Horizon};
        let mut rng = stream(7);
        let g = OffspringDistribution::geometric();
        for _ in 0..50 {
            let s = sample_slice(&g, &mut rng, Horizon::Window { left: 40, right: 40 }).unwrap();
            let brw = label_walk(&s, 8, &mut rng).unwrap();
            assert_eq!(brw.label(&s, 0), Some(LatticePoint::ORIGIN));
            for (pos, v) in s.vertices().iter().enumerate() {
                if let Some(p) = v.parent {
                    assert_eq!(brw.labels[pos].sub(brw.labels[p as usize]).l1(), 1);
                }
            }
            let total: usize = brw.occupancy.values().map(|v| v.len()).sum();
            assert_eq!(total, s.len());
            for (x, zs) in &brw.occupancy {
                for &z in zs {
                    assert_eq!(brw.label(&s, z), Some(*x));
                }
            }
            let r = s.reroot_at_one().unwrap();
            let rb = label_walk(&r, 8, &mut rng).unwrap();
            assert_eq!(rb.label(&r, 0), Some(LatticePoint::ORIGIN));
        }
    }

    #[test]
    fn intersect_first_stops_early() {
        let mut a: FxHashMap<LatticePoint, ()> = FxHashMap::default();
        a.insert(LatticePoint::ORIGIN, ());
        let hit = intersect_first(&a, [LatticePoint::ORIGIN]);
        assert_eq!(hit, Some((0, LatticePoint::ORIGIN)));
        let x = LatticePoint::ORIGIN.step(0).unwrap();
        assert_eq!(intersect_first(&a, [x, x.step(0).unwrap()]), None);
    }
}
