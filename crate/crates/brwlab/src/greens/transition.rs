//! Exact n-step transition probabilities p_j(x) of the simple random walk,
//! computed coordinate by coordinate.
//!
//! With F_i(m) = P(first i coordinates of an m-step walk restricted to those
//! coordinates end at x_1..x_i), a step lands in coordinate i+1 with
//! probability 1/(i+1) among the first i+1, so
//! F_{i+1}(m) = Σ_k Bin(m, 1/(i+1))(k) · P1(k, x_{i+1}) · F_i(m − k)
//! with P1 the one-dimensional law. p_j(x) = F_d(j).

/// P(1-d SRW after m steps is at c), m = 0..=jmax.
fn one_dim_column(c: i64, jmax: usize) -> Vec<f64> {
    let c = c.unsigned_abs() as usize;
    let mut col = vec![0.0; jmax + 1];
    // row[h] = P(S_m = h − m) kept for h in 0..=2m; rebuild rows iteratively
    let mut row = vec![1.0f64];
    for (m, slot) in col.iter_mut().enumerate() {
        if c <= m && (m - c) % 2 == 0 {
            *slot = row[m + c];
        }
        if m == jmax {
            break;
        }
        let mut next = vec![0.0; row.len() + 2];
        for (h, v) in row.iter().enumerate() {
            next[h] += 0.5 * v;
            next[h + 2] += 0.5 * v;
        }
        row = next;
    }
    col
}

/// p_j(x) for j = 0..=jmax.
pub fn transition_series(x: &[i32], jmax: usize) -> Vec<f64> {
    let d = x.len();
    assert!(d >= 1);
    let mut f = one_dim_column(x[0] as i64, jmax);
    for (i, &xi) in x.iter().enumerate().skip(1) {
        let q = 1.0 / (i as f64 + 1.0);
        let p1 = one_dim_column(xi as i64, jmax);
        let mut next = vec![0.0; jmax + 1];
        // binomial row for m, updated in place: b[k] = C(m,k) q^k (1−q)^{m−k}
        let mut b = vec![0.0; jmax + 1];
        b[0] = 1.0;
        for (m, out) in next.iter_mut().enumerate() {
            if m > 0 {
                for k in (1..=m).rev() {
                    b[k] = (1.0 - q) * b[k] + q * b[k - 1];
                }
                b[0] *= 1.0 - q;
            }
            let mut acc = 0.0;
            for k in 0..=m {
                if p1[k] != 0.0 && f[m - k] != 0.0 {
                    acc += b[k] * p1[k] * f[m - k];
                }
            }
            *out = acc;
        }
        f = next;
    }
    f
}

/// Σ_{j≤jmax} p_j(x) plus a local-CLT estimate of the remaining tail,
/// Σ_{j>jmax} 2 (d/(2πj))^{d/2} over j of the right parity.
pub fn green_partial(x: &[i32], jmax: usize) -> (f64, f64) {
    let p = transition_series(x, jmax);
    let partial: f64 = p.iter().sum();
    let d = x.len() as f64;
    let tail = if d > 2.0 {
        // half the j's have the right parity; ∫_{J}^∞ (d/(2πj))^{d/2} dj
        (d / (2.0 * std::f64::consts::PI)).powf(d / 2.0) * (jmax as f64).powf(1.0 - d / 2.0)
            / (d / 2.0 - 1.0)
    } else {
        f64::INFINITY
    };
    (partial, tail)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_cases_by_hand() {
        // d = 2: p_2(0) = 4/16, p_2((1,1)) = 2/16, p_1(e_1) = 1/4
        let p = transition_series(&[0, 0], 2);
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        assert!((p[2] - 0.25).abs() < 1e-15);
        assert!((transition_series(&[1, 1], 2)[2] - 0.125).abs() < 1e-15);
        assert!((transition_series(&[1, 0], 1)[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn sums_to_one_over_space() {
        // d = 3, j = 4: Σ_x p_4(x) = 1 over the box
        let mut total = 0.0;
        for a in -4..=4 {
            for b in -4..=4 {
                for c in -4..=4 {
                    total += transition_series(&[a, b, c], 4)[4];
                }
            }
        }
        assert!((total - 1.0).abs() < 1e-13);
    }

    #[test]
    fn return_probability_d8() {
        // p_2(0) = 1/(2d) in any dimension
        let p = transition_series(&[0; 8], 2);
        assert!((p[2] - 1.0 / 16.0).abs() < 1e-16);
    }
}
