//! The fundamental domain of the hyperoctahedral group acting on a box.
//!
//! A point is represented by its sorted absolute coordinates
//! 0 ≤ c_0 ≤ ... ≤ c_{d−1} ≤ R. Shifting c_i by i gives a strictly increasing
//! sequence, ranked in the combinatorial number system (colex order).

pub struct Domain {
    pub dim: usize,
    pub radius: usize,
    // binom[n][k] for n ≤ R + d, k ≤ d
    binom: Vec<Vec<u64>>,
}

impl Domain {
    pub fn new(dim: usize, radius: usize) -> Self {
        let n = radius + dim + 1;
        let mut binom = vec![vec![0u64; dim + 2]; n + 1];
        for row in binom.iter_mut() {
            row[0] = 1;
        }
        for i in 1..=n {
            for k in 1..=dim + 1 {
                binom[i][k] = binom[i - 1][k - 1] + binom[i - 1][k];
            }
        }
        Domain { dim, radius, binom }
    }

    /// Number of canonical points: C(R + d, d).
    pub fn size(&self) -> usize {
        self.binom[self.radius + self.dim][self.dim] as usize
    }

    /// Rank of a sorted (ascending) absolute coordinate vector.
    #[inline]
    pub fn rank(&self, sorted: &[u16]) -> usize {
        let mut r = 0u64;
        for (i, &c) in sorted.iter().enumerate() {
            r += self.binom[c as usize + i][i + 1];
        }
        r as usize
    }

    /// Canonical form and rank of arbitrary coordinates, or None outside the box.
    #[inline]
    pub fn rank_of(&self, coords: &[i32]) -> Option<usize> {
        let mut c = [0u16; 16];
        for (slot, &x) in c.iter_mut().zip(coords) {
            let a = x.unsigned_abs() as usize;
            if a > self.radius {
                return None;
            }
            *slot = a as u16;
        }
        let c = &mut c[..coords.len()];
        c.sort_unstable();
        Some(self.rank(c))
    }

    /// All canonical points, in rank order.
    pub fn points(&self) -> Vec<Vec<u16>> {
        let mut out = vec![Vec::new(); self.size()];
        let mut c = vec![0u16; self.dim];
        loop {
            out[self.rank(&c)] = c.clone();
            // odometer over nondecreasing sequences, last coordinate fastest
            let mut i = self.dim;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if (c[i] as usize) < self.radius {
                    let v = c[i] + 1;
                    for slot in &mut c[i..] {
                        *slot = v;
                    }
                    break;
                }
            }
        }
    }
}

/// Size of the orbit of a canonical point: d!/Π(mult!) · 2^{#nonzero}.
pub fn orbit_size(sorted: &[u16]) -> u64 {
    let d = sorted.len();
    let mut total: u64 = (1..=d as u64).product();
    let mut i = 0;
    while i < d {
        let mut j = i;
        while j < d && sorted[j] == sorted[i] {
            j += 1;
        }
        total /= (1..=(j - i) as u64).product::<u64>();
        if sorted[i] != 0 {
            total <<= j - i;
        }
        i = j;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_are_a_bijection() {
        let d = Domain::new(4, 5);
        let pts = d.points();
        assert_eq!(pts.len(), 126);
        for (r, p) in pts.iter().enumerate() {
            assert_eq!(d.rank(p), r);
            assert!(p.windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn orbits_tile_the_box() {
        let d = Domain::new(3, 4);
        let total: u64 = d.points().iter().map(|p| orbit_size(p)).sum();
        assert_eq!(total, 9u64.pow(3));
    }

    #[test]
    fn rank_of_ignores_signs_and_order() {
        let d = Domain::new(8, 6);
        let a = d.rank_of(&[0, -3, 1, 0, 0, 6, 0, 2]).unwrap();
        let b = d.rank_of(&[6, 0, 0, 2, -1, 0, 3, 0]).unwrap();
        assert_eq!(a, b);
        assert!(d.rank_of(&[7, 0, 0, 0, 0, 0, 0, 0]).is_none());
    }
}
