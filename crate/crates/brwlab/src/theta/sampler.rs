//! Lazy GW-indexed walks, one vertex at a time, in depth-first order or in
//! reverse depth-first order.
//!
//! Reverse order is produced as the postorder of the mirrored tree: a vertex
//! draws its offspring when created, its children are handled last to first,
//! and the vertex is emitted once all of them are done.

use rand::Rng;

use crate::lattice::{random_step, LatticePoint};
use crate::offspring::OffspringDistribution;

/// Vertices in depth-first order.
pub struct Preorder<'a, R: Rng + ?Sized> {
    dist: &'a OffspringDistribution,
    dim: usize,
    rng: &'a mut R,
    /// (parent label, parent depth, children left)
    stack: Vec<(LatticePoint, u32, u32)>,
    started: bool,
}

impl<'a, R: Rng + ?Sized> Preorder<'a, R> {
    pub fn new(dist: &'a OffspringDistribution, dim: usize, rng: &'a mut R) -> Self {
        Preorder {
            dist,
            dim,
            rng,
            stack: Vec::new(),
            started: false,
        }
    }
}

impl<R: Rng + ?Sized> Iterator for Preorder<'_, R> {
    /// (label, depth)
    type Item = (LatticePoint, u32);

    fn next(&mut self) -> Option<Self::Item> {
        let (label, depth) = if !self.started {
            self.started = true;
            (LatticePoint::ORIGIN, 0)
        } else {
            let top = self.stack.last_mut()?;
            top.2 -= 1;
            let (pl, pd) = (top.0, top.1);
            if top.2 == 0 {
                self.stack.pop();
            }
            let step = random_step(self.rng, self.dim);
            (pl.step(step).expect("label overflow"), pd + 1)
        };
        let k = self.dist.sample(self.rng) as u32;
        if k > 0 {
            self.stack.push((label, depth, k));
        }
        Some((label, depth))
    }
}

/// Vertices in reverse depth-first order.
pub struct ReversePreorder<'a, R: Rng + ?Sized> {
    dist: &'a OffspringDistribution,
    dim: usize,
    rng: &'a mut R,
    /// (label, depth, children not yet created)
    stack: Vec<(LatticePoint, u32, u32)>,
}

impl<'a, R: Rng + ?Sized> ReversePreorder<'a, R> {
    pub fn new(dist: &'a OffspringDistribution, dim: usize, rng: &'a mut R) -> Self {
        let k = dist.sample(rng) as u32;
        ReversePreorder {
            dist,
            dim,
            rng,
            stack: vec![(LatticePoint::ORIGIN, 0, k)],
        }
    }
}

impl<R: Rng + ?Sized> Iterator for ReversePreorder<'_, R> {
    type Item = (LatticePoint, u32);

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let top = self.stack.last_mut()?;
            if top.2 == 0 {
                let (l, d, _) = self.stack.pop().unwrap();
                return Some((l, d));
            }
            top.2 -= 1;
            let (pl, pd) = (top.0, top.1);
            let step = random_step(self.rng, self.dim);
            let k = self.dist.sample(self.rng) as u32;
            self.stack.push((pl.step(step).expect("label overflow"), pd + 1, k));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn both_orders_give_gw_sizes() {
        let b = OffspringDistribution::binary();
        let (mut s1, mut s2) = (0u64, 0u64);
        let n = 20_000;
        let mut rng = stream(3);
        let mut small = [0u64; 2];
        for _ in 0..n {
            let a = Preorder::new(&b, 8, &mut rng).take(1000).count();
            let c = ReversePreorder::new(&b, 8, &mut rng).take(1000).count();
            s1 += (a == 1) as u64;
            s2 += (c == 1) as u64;
            small[0] += (a == 3) as u64;
            small[1] += (c == 3) as u64;
        }
        // P(|GW| = 1) = 1/2, P(|GW| = 3) = 1/8
        for (x, p) in [(s1, 0.5), (s2, 0.5), (small[0], 0.125), (small[1], 0.125)] {
            let f = x as f64 / n as f64;
            assert!((f - p).abs() < 5.0 * (p * (1.0 - p) / n as f64).sqrt());
        }
    }

    #[test]
    fn reverse_order_ends_at_root() {
        let g = OffspringDistribution::geometric();
        let mut rng = stream(9);
        for _ in 0..200 {
            let v: Vec<_> = ReversePreorder::new(&g, 3, &mut rng).take(100_000).collect();
            if v.len() < 100_000 {
                assert_eq!(v.last().unwrap().1, 0);
                assert_eq!(v.iter().filter(|x| x.1 == 0).count(), 1);
            }
        }
    }
}
