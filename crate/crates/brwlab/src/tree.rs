//! Finite slices of the two-sided invariant tree 𝒯.
//!
//! Indexing is the depth-first order of the tree seen from the far end of
//! the spine: a spine vertex lists its left-side subtrees, then the spine
//! child, then its right-side subtrees. So the future (indices ≥ 0) is the
//! root, the root's subtrees, then the right-side subtrees of u_1, u_2, ...;
//! the past (indices < 0) walks backwards through u_1's left-side subtrees
//! in reverse order, then u_1, then u_2's left side, then u_2, and so on.
//! Spine vertices u_i with i ≥ 1 therefore sit in the past. This is the
//! order under which re-rooting at index 1 preserves the law.
//!
//! Generation is lazy. The future is produced in preorder, the past in
//! reverse preorder (a post-order with reversed children), and both stop as
//! soon as the requested indices exist. Vertices that had to be created but
//! fall outside the window (ancestors of past vertices, spine vertices
//! further out) are kept with no index.

use std::fmt::Write as _;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::offspring::OffspringDistribution;

pub const DEFAULT_VERTEX_GUARD: usize = 100_000_000;

/// λ = 1 − 1/n and the two sampled window lengths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricHorizon {
    pub n: f64,
    pub xi_left: u64,
    pub xi_right: u64,
}

impl GeometricHorizon {
    pub fn lambda(n: f64) -> f64 {
        1.0 - 1.0 / n
    }

    /// P(ξ ≥ k) = λ^k, sampled by inversion.
    pub fn sample_length<R: Rng + ?Sized>(n: f64, rng: &mut R) -> u64 {
        let lambda = Self::lambda(n);
        if lambda <= 0.0 {
            return 0;
        }
        let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        (u.ln() / lambda.ln()).floor() as u64
    }

    pub fn sample<R: Rng + ?Sized>(n: f64, rng: &mut R) -> Self {
        let xi_left = Self::sample_length(n, rng);
        let xi_right = Self::sample_length(n, rng);
        GeometricHorizon {
            n,
            xi_left,
            xi_right,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Horizon {
    /// Indices −left ..= right.
    Window { left: u64, right: u64 },
    /// Spine ranks 0..=m with every subtree hanging off them.
    Spine { m: u64 },
    /// Window [−ξ^ℓ, ξ^r] with geometric lengths at scale n.
    Geometric { n: f64 },
}

/// What a slice was actually built from (geometric lengths resolved).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum HorizonUsed {
    Window { left: u64, right: u64 },
    Spine { m: u64 },
    Geometric(GeometricHorizon),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vertex {
    /// None for vertices created but outside the window.
    pub zindex: Option<i64>,
    /// Position of the parent (the root has none; u_i's parent is u_{i−1}).
    pub parent: Option<u32>,
    /// Graph distance to the root.
    pub depth: u32,
    pub spine_rank: Option<u32>,
    /// Offspring count of a non-spine vertex; for spine vertices d⁺ + d⁻.
    pub offspring: u32,
    /// Rank of the spine vertex this vertex hangs from (itself for spine vertices).
    pub anchor: u32,
    /// Position of the hanging subtree's top vertex (itself for spine vertices).
    pub top: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpinePair {
    pub position: u32,
    pub d_plus: u32,
    pub d_minus: u32,
}

#[derive(Clone, Debug)]
pub struct InvariantTreeSlice {
    vertices: Vec<Vertex>,
    spine: Vec<SpinePair>,
    /// positions of zindex lo..=hi
    zpos: Vec<u32>,
    lo: i64,
    pub horizon: HorizonUsed,
    pub seed: Option<u64>,
}

struct Builder<'a, R: Rng + ?Sized> {
    dist: &'a OffspringDistribution,
    rng: &'a mut R,
    guard: usize,
    vertices: Vec<Vertex>,
    spine: Vec<SpinePair>,
    future: Vec<u32>,
    past: Vec<u32>,
}

impl<'a, R: Rng + ?Sized> Builder<'a, R> {
    fn new(dist: &'a OffspringDistribution, rng: &'a mut R, guard: usize) -> Self {
        let d_plus = dist.sample(rng) as u32;
        let root = Vertex {
            zindex: Some(0),
            parent: None,
            depth: 0,
            spine_rank: Some(0),
            offspring: d_plus,
            anchor: 0,
            top: 0,
        };
        Builder {
            dist,
            rng,
            guard,
            vertices: vec![root],
            spine: vec![SpinePair {
                position: 0,
                d_plus,
                d_minus: 0,
            }],
            future: vec![0],
            past: Vec::new(),
        }
    }

    fn check_guard(&self) -> Result<()> {
        if self.vertices.len() > self.guard {
            return Err(Error::ResourceGuard {
                what: "tree slice vertices".into(),
                limit: self.guard as u64,
                generated: self.vertices.len() as u64,
            });
        }
        Ok(())
    }

    fn spine_vertex(&mut self, rank: usize) -> SpinePair {
        while self.spine.len() <= rank {
            let prev = *self.spine.last().unwrap();
            let (dp, dm) = self.dist.sample_spine_pair(self.rng);
            let i = self.spine.len() as u32;
            let pos = self.vertices.len() as u32;
            self.vertices.push(Vertex {
                zindex: None,
                parent: Some(prev.position),
                depth: i,
                spine_rank: Some(i),
                offspring: (dp + dm) as u32,
                anchor: i,
                top: pos,
            });
            self.spine.push(SpinePair {
                position: pos,
                d_plus: dp as u32,
                d_minus: dm as u32,
            });
        }
        self.spine[rank]
    }

    fn child_of(&mut self, parent: u32) -> u32 {
        let p = self.vertices[parent as usize];
        let xi = self.dist.sample(self.rng) as u32;
        let pos = self.vertices.len() as u32;
        let top = if p.spine_rank.is_some() { pos } else { p.top };
        self.vertices.push(Vertex {
            zindex: None,
            parent: Some(parent),
            depth: p.depth + 1,
            spine_rank: None,
            offspring: xi,
            anchor: p.anchor,
            top,
        });
        pos
    }

    /// Preorder through the root's and then u_1, u_2, ...'s right side.
    /// Stops after index `right`, or (when `max_rank` is set) once the
    /// right side of that spine rank is exhausted.
    fn grow_future(&mut self, right: Option<u64>, max_rank: Option<usize>) -> Result<()> {
        let mut stack: Vec<(u32, u32)> = vec![(0, self.spine[0].d_plus)];
        let mut rank = 0usize;
        loop {
            if let Some(r) = right {
                if self.future.len() as u64 > r {
                    return Ok(());
                }
            }
            let Some(top) = stack.last_mut() else {
                rank += 1;
                if max_rank.is_some_and(|m| rank > m) {
                    return Ok(());
                }
                let sp = self.spine_vertex(rank);
                stack.push((sp.position, sp.d_plus));
                continue;
            };
            if top.1 == 0 {
                stack.pop();
                continue;
            }
            top.1 -= 1;
            let parent = top.0;
            let c = self.child_of(parent);
            self.vertices[c as usize].zindex = Some(self.future.len() as i64);
            self.future.push(c);
            stack.push((c, self.vertices[c as usize].offspring));
            self.check_guard()?;
        }
    }

    /// Reverse preorder through u_1's left side, u_1, u_2's left side, u_2, ...
    fn grow_past(&mut self, left: Option<u64>, max_rank: Option<usize>) -> Result<()> {
        if left == Some(0) || max_rank == Some(0) {
            return Ok(());
        }
        let sp = self.spine_vertex(1);
        let mut rank = 1usize;
        let mut stack: Vec<(u32, u32)> = vec![(sp.position, sp.d_minus)];
        loop {
            if let Some(l) = left {
                if self.past.len() as u64 >= l {
                    return Ok(());
                }
            }
            let top = stack.last_mut().expect("spine frame always present");
            if top.1 == 0 {
                let pos = top.0;
                stack.pop();
                self.past.push(pos);
                self.vertices[pos as usize].zindex = Some(-(self.past.len() as i64));
                if self.vertices[pos as usize].spine_rank.is_some() {
                    rank += 1;
                    if max_rank.is_some_and(|m| rank > m) {
                        return Ok(());
                    }
                    let sp = self.spine_vertex(rank);
                    stack.push((sp.position, sp.d_minus));
                }
                continue;
            }
            top.1 -= 1;
            let parent = top.0;
            let c = self.child_of(parent);
            stack.push((c, self.vertices[c as usize].offspring));
            self.check_guard()?;
        }
    }

    fn finish(self, horizon: HorizonUsed) -> InvariantTreeSlice {
        let lo = -(self.past.len() as i64);
        let mut zpos: Vec<u32> = self.past.iter().rev().copied().collect();
        zpos.extend_from_slice(&self.future);
        InvariantTreeSlice {
            vertices: self.vertices,
            spine: self.spine,
            zpos,
            lo,
            horizon,
            seed: None,
        }
    }
}

pub fn sample_slice<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    rng: &mut R,
    horizon: Horizon,
) -> Result<InvariantTreeSlice> {
    sample_slice_guarded(dist, rng, horizon, DEFAULT_VERTEX_GUARD)
}

pub fn sample_slice_guarded<R: Rng + ?Sized>(
    dist: &OffspringDistribution,
    rng: &mut R,
    horizon: Horizon,
    guard: usize,
) -> Result<InvariantTreeSlice> {
    let (used, left, right, max_rank) = match horizon {
        Horizon::Window { left, right } => (HorizonUsed::Window { left, right }, Some(left), Some(right), None),
        Horizon::Spine { m } => (HorizonUsed::Spine { m }, None, None, Some(m as usize)),
        Horizon::Geometric { n } => {
            if n < 1.0 {
                return Err(Error::Config(format!("geometric horizon needs n ≥ 1, got {n}")));
            }
            let g = GeometricHorizon::sample(n, rng);
            (HorizonUsed::Geometric(g), Some(g.xi_left), Some(g.xi_right), None)
        }
    };
    let mut b = Builder::new(dist, rng, guard);
    b.grow_future(right, max_rank)?;
    b.grow_past(left, max_rank)?;
    Ok(b.finish(used))
}

/// Index ranges of one hanging subtree (possibly cut by the window).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubtreeSpan {
    pub spine_rank: u32,
    pub future_side: bool,
    pub zindices: Range<i64>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SliceParts {
    pub past: Range<i64>,
    pub future: Range<i64>,
    pub subtrees: Vec<SubtreeSpan>,
}

impl InvariantTreeSlice {
    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn vertex(&self, pos: u32) -> &Vertex {
        &self.vertices[pos as usize]
    }

    pub fn spine(&self) -> &[SpinePair] {
        &self.spine
    }

    /// Smallest and largest index present.
    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.lo + self.zpos.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.zpos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zpos.is_empty()
    }

    pub fn position_of(&self, z: i64) -> Option<u32> {
        let i = z - self.lo;
        if i < 0 {
            return None;
        }
        self.zpos.get(i as usize).copied()
    }

    pub fn at(&self, z: i64) -> Option<&Vertex> {
        self.position_of(z).map(|p| &self.vertices[p as usize])
    }

    /// Positions in index order.
    pub fn indexed_positions(&self) -> &[u32] {
        &self.zpos
    }

    pub fn split_parts(&self) -> SliceParts {
        let (lo, hi) = self.window();
        let mut subtrees = Vec::new();
        let mut cur: Option<(u32, i64, i64)> = None; // (top, start, end)
        for (k, &pos) in self.zpos.iter().enumerate() {
            let z = lo + k as i64;
            let v = &self.vertices[pos as usize];
            if v.spine_rank.is_some() {
                if let Some(c) = cur.take() {
                    subtrees.push(self.span(c));
                }
                continue;
            }
            match &mut cur {
                Some(c) if c.0 == v.top && c.2 == z => c.2 = z + 1,
                _ => {
                    if let Some(c) = cur.take() {
                        subtrees.push(self.span(c));
                    }
                    cur = Some((v.top, z, z + 1));
                }
            }
        }
        if let Some(c) = cur.take() {
            subtrees.push(self.span(c));
        }
        SliceParts {
            past: lo..0,
            future: 0..hi + 1,
            subtrees,
        }
    }

    fn span(&self, (top, start, end): (u32, i64, i64)) -> SubtreeSpan {
        SubtreeSpan {
            spine_rank: self.vertices[top as usize].anchor,
            future_side: start >= 0,
            zindices: start..end,
        }
    }

    /// Number of vertices in the subtree of index 0 (the root's descendants
    /// and itself), counting at most `cap`. Needs indices 0..cap in the window.
    pub fn root_subtree_size(&self, cap: usize) -> usize {
        let mut n = 0;
        for z in 0..cap as i64 {
            match self.at(z) {
                Some(v) if z == 0 || (v.anchor == 0 && v.spine_rank.is_none()) => n += 1,
                _ => break,
            }
        }
        n
    }

    /// Children of the index-0 vertex on the future side.
    pub fn root_offspring(&self) -> u32 {
        self.spine[0].d_plus
    }

    /// Re-root at index 1: old index j becomes j − 1. The new spine is the
    /// path from the old index-1 vertex out to infinity.
    pub fn reroot_at_one(&self) -> Result<InvariantTreeSlice> {
        let (lo, hi) = self.window();
        if lo > 0 || hi < 1 {
            return Err(Error::Config("re-rooting needs indices 0 and 1 in the window".into()));
        }
        let v = self.position_of(1).unwrap();
        let k = self.vertices[v as usize].anchor as usize;
        let mut vertices = self.vertices.clone();

        // reverse parent links along v → u_k → u_{k−1} → ... → u_0
        vertices[v as usize].parent = None;
        vertices[self.spine[k].position as usize].parent = Some(v);
        for j in 0..k {
            vertices[self.spine[j].position as usize].parent = Some(self.spine[j + 1].position);
        }

        let old_k = self.spine[k];
        let mut spine = vec![SpinePair {
            position: v,
            d_plus: vertices[v as usize].offspring,
            d_minus: 0,
        }];
        spine.push(SpinePair {
            position: old_k.position,
            d_plus: old_k.d_plus - 1,
            d_minus: old_k.d_minus + u32::from(k > 0),
        });
        spine.extend_from_slice(&self.spine[k + 1..]);

        // old u_0 .. u_{k−1} leave the spine; each keeps its side children
        // and gains its former spine child as an ordinary child
        for (j, sp) in self.spine.iter().enumerate().take(k) {
            let vx = &mut vertices[sp.position as usize];
            vx.spine_rank = None;
            vx.offspring = sp.d_plus + sp.d_minus + u32::from(j > 0);
        }
        for (r, sp) in spine.iter().enumerate() {
            let vx = &mut vertices[sp.position as usize];
            vx.spine_rank = Some(r as u32);
            vx.offspring = sp.d_plus + sp.d_minus;
        }
        for vx in vertices.iter_mut() {
            if let Some(z) = vx.zindex {
                vx.zindex = Some(z - 1);
            }
        }
        recompute_derived(&mut vertices, &spine);

        Ok(InvariantTreeSlice {
            vertices,
            spine,
            zpos: self.zpos.clone(),
            lo: lo - 1,
            horizon: match self.horizon {
                HorizonUsed::Window { left, right } => HorizonUsed::Window {
                    left: left + 1,
                    right: right.saturating_sub(1),
                },
                h => h,
            },
            seed: self.seed,
        })
    }

    /// Debug dump: zindex,parent_zindex,depth,is_spine,spine_rank.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("zindex,parent_zindex,depth,is_spine,spine_rank\n");
        let (lo, _) = self.window();
        for (k, &pos) in self.zpos.iter().enumerate() {
            let v = &self.vertices[pos as usize];
            let parent = v
                .parent
                .and_then(|p| self.vertices[p as usize].zindex)
                .map(|z| z.to_string())
                .unwrap_or_default();
            let rank = v.spine_rank.map(|r| r.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                lo + k as i64,
                parent,
                v.depth,
                v.spine_rank.is_some() as u8,
                rank
            );
        }
        s
    }

    /// Positions ordered so every parent precedes its children.
    pub fn topological_order(&self) -> Vec<u32> {
        topological(&self.vertices)
    }
}

fn topological(vertices: &[Vertex]) -> Vec<u32> {
    let n = vertices.len();
    let mut first_child = vec![u32::MAX; n];
    let mut next_sibling = vec![u32::MAX; n];
    let mut root = 0u32;
    for (i, v) in vertices.iter().enumerate().rev() {
        match v.parent {
            Some(p) => {
                next_sibling[i] = first_child[p as usize];
                first_child[p as usize] = i as u32;
            }
            None => root = i as u32,
        }
    }
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![root];
    while let Some(x) = stack.pop() {
        order.push(x);
        let mut c = first_child[x as usize];
        while c != u32::MAX {
            stack.push(c);
            c = next_sibling[c as usize];
        }
    }
    order
}

fn recompute_derived(vertices: &mut [Vertex], spine: &[SpinePair]) {
    for v in vertices.iter_mut() {
        if v.spine_rank.is_none() {
            v.anchor = u32::MAX;
        }
    }
    for sp in spine {
        let v = &mut vertices[sp.position as usize];
        v.anchor = v.spine_rank.unwrap();
        v.top = sp.position;
    }
    for pos in topological(vertices) {
        let v = vertices[pos as usize];
        match v.parent {
            None => vertices[pos as usize].depth = 0,
            Some(p) => {
                let pv = vertices[p as usize];
                let me = &mut vertices[pos as usize];
                me.depth = pv.depth + 1;
                if me.spine_rank.is_none() {
                    me.anchor = pv.anchor;
                    me.top = if pv.spine_rank.is_some() { pos } else { pv.top };
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn geo() -> OffspringDistribution {
        OffspringDistribution::geometric()
    }

    #[test]
    fn root_only_window() {
        let mut rng = stream(1);
        let s = sample_slice(&geo(), &mut rng, Horizon::Window { left: 0, right: 0 }).unwrap();
        assert_eq!(s.window(), (0, 0));
        assert_eq!(s.len(), 1);
        assert!(s.reroot_at_one().is_err());
        let parts = s.split_parts();
        assert!(parts.past.is_empty());
        assert_eq!(parts.future, 0..1);
    }

    #[test]
    fn windows_are_exact_and_contiguous() {
        let mut rng = stream(2);
        for _ in 0..200 {
            let s = sample_slice(&geo(), &mut rng, Horizon::Window { left: 7, right: 11 }).unwrap();
            assert_eq!(s.window(), (-7, 11));
            for z in -7..=11 {
                let v = s.at(z).unwrap();
                assert_eq!(v.zindex, Some(z));
            }
            let root = s.at(0).unwrap();
            assert_eq!((root.depth, root.spine_rank), (0, Some(0)));
        }
    }

    #[test]
    fn spine_in_past_and_root_has_no_left_side() {
        let mut rng = stream(3);
        for _ in 0..200 {
            let Ok(s) = sample_slice_guarded(&geo(), &mut rng, Horizon::Spine { m: 4 }, 100_000) else {
                continue;
            };
            for v in s.vertices() {
                let z = v.zindex.unwrap();
                if let Some(r) = v.spine_rank {
                    assert!(r == 0 && z == 0 || r > 0 && z < 0);
                } else if z < 0 {
                    assert!(v.anchor >= 1);
                }
            }
        }
    }

    #[test]
    fn spine_pairs_match_children_sides() {
        let mut rng = stream(4);
        for _ in 0..200 {
            let Ok(s) = sample_slice_guarded(&geo(), &mut rng, Horizon::Spine { m: 3 }, 100_000) else {
                continue;
            };
            let mut plus = [0u32; 4];
            let mut minus = [0u32; 4];
            for v in s.vertices() {
                let Some(p) = v.parent else { continue };
                let pv = s.vertex(p);
                if let (Some(r), None) = (pv.spine_rank, v.spine_rank) {
                    if v.zindex.unwrap() > 0 {
                        plus[r as usize] += 1;
                    } else {
                        minus[r as usize] += 1;
                    }
                }
            }
            for r in 0..4 {
                assert_eq!(plus[r], s.spine()[r].d_plus);
                assert_eq!(minus[r], s.spine()[r].d_minus);
            }
        }
    }

    #[test]
    fn reroot_shifts_the_window() {
        let mut rng = stream(5);
        for _ in 0..100 {
            let s = sample_slice(&geo(), &mut rng, Horizon::Window { left: 5, right: 5 }).unwrap();
            let r = s.reroot_at_one().unwrap();
            assert_eq!(r.window(), (-6, 4));
            let root = r.at(0).unwrap();
            assert_eq!(root.parent, None);
            assert_eq!(root.depth, 0);
            assert_eq!(root.spine_rank, Some(0));
            // every indexed vertex has a parent chain ending at the new root
            for v in r.vertices() {
                let mut x = *v;
                let mut steps = 0;
                while let Some(p) = x.parent {
                    x = *r.vertex(p);
                    steps += 1;
                }
                assert_eq!(x.zindex, Some(0));
                assert_eq!(steps, v.depth);
            }
        }
    }

    #[test]
    fn parts_cover_the_slice() {
        let mut rng = stream(6);
        for _ in 0..100 {
            let s = sample_slice(&geo(), &mut rng, Horizon::Window { left: 30, right: 30 }).unwrap();
            let p = s.split_parts();
            assert_eq!((p.past.end - p.past.start + p.future.end - p.future.start) as usize, s.len());
            for st in &p.subtrees {
                assert_eq!(st.future_side, st.zindices.start > 0);
                for z in st.zindices.clone() {
                    assert_eq!(s.at(z).unwrap().anchor, st.spine_rank);
                }
            }
        }
    }

    #[test]
    fn geometric_horizon_records_lengths() {
        let mut rng = stream(7);
        let s = sample_slice(&geo(), &mut rng, Horizon::Geometric { n: 20.0 }).unwrap();
        let HorizonUsed::Geometric(g) = s.horizon else { panic!() };
        assert_eq!(s.window(), (-(g.xi_left as i64), g.xi_right as i64));
    }

    #[test]
    fn guard_trips() {
        let mut rng = stream(8);
        let e = sample_slice_guarded(&geo(), &mut rng, Horizon::Window { left: 0, right: 1000 }, 100);
        assert!(matches!(e, Err(Error::ResourceGuard { .. })));
    }

    #[test]
    fn csv_header_and_rows() {
        let mut rng = stream(9);
        let s = sample_slice(&geo(), &mut rng, Horizon::Window { left: 2, right: 2 }).unwrap();
        let csv = s.to_csv();
        assert!(csv.starts_with("zindex,parent_zindex,depth,is_spine,spine_rank\n"));
        assert_eq!(csv.lines().count(), 6);
    }
}
