//! Scaled modified Bessel functions e^{−s} I_k(s), their large-s series, and
//! Gauss–Legendre nodes.
//!
//! In continuous time each coordinate of a rate-1/d walk is independent, and
//! P(Y_{ds} = x) = Π_i e^{−s} I_{x_i}(s). Every Green kernel here is a
//! time integral of that product against a weight.

/// e^{−s} I_k(s) for k = 0..=kmax, by Miller's backward recurrence normalised
/// with e^{−s}(I_0 + 2 Σ_{k≥1} I_k) = 1.
pub fn scaled_bessel(s: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if s == 0.0 {
        out[0] = 1.0;
        return out;
    }
    // start far enough above both kmax and the bulk of the distribution
    let start = kmax + 20 + (s * 80.0).sqrt().ceil() as usize + (s.min(50.0) as usize);
    let mut i_next = 0.0f64;
    let mut i_cur = 1e-280f64;
    let mut sum = 0.0f64;
    for k in (1..=start).rev() {
        let i_prev = (2.0 * k as f64 / s) * i_cur + i_next;
        i_next = i_cur;
        i_cur = i_prev;
        // i_next is I_k now, i_cur is I_{k−1}
        if k <= kmax {
            out[k] = i_next;
        }
        sum += 2.0 * i_next;
        if i_cur > 1e250 {
            let f = 1e-250;
            i_cur *= f;
            i_next *= f;
            sum *= f;
            for v in out.iter_mut() {
                *v *= f;
            }
        }
    }
    out[0] = i_cur;
    sum += i_cur;
    for v in out.iter_mut() {
        *v /= sum;
    }
    out
}

/// Coefficients a_j(k) of e^{−s} I_k(s) ~ (2πs)^{−1/2} Σ_j (−1)^j a_j(k) s^{−j}.
pub fn asymptotic_coeffs(k: usize, order: usize) -> Vec<f64> {
    let mu = 4.0 * (k as f64) * (k as f64);
    let mut a = vec![1.0; order + 1];
    for j in 1..=order {
        let odd = (2 * j - 1) as f64;
        a[j] = a[j - 1] * (mu - odd * odd) / (j as f64 * 8.0);
    }
    a
}

/// Series coefficients c_j of Π_i e^{−s} I_{k_i}(s) (2πs)^{d/2} = Σ_j c_j s^{−j}.
pub fn product_series(ks: &[usize], order: usize) -> Vec<f64> {
    let mut c = vec![0.0; order + 1];
    c[0] = 1.0;
    for &k in ks {
        let a = asymptotic_coeffs(k, order);
        let mut next = vec![0.0; order + 1];
        for (i, ci) in c.iter().enumerate() {
            for j in 0..=order - i {
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                next[i + j] += ci * sign * a[j];
            }
        }
        c = next;
    }
    c
}

/// Gauss–Legendre nodes and weights on [−1, 1] (n ≥ 2).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Quadrature on [0, s_max]: one Gauss block on [0, 1], then log-spaced
/// panels of width `h` in ln s.
pub fn time_nodes(s_max: f64, points: usize, h: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(points);
    let mut s = Vec::new();
    let mut ws = Vec::new();
    for (xi, wi) in x.iter().zip(&w) {
        s.push(0.5 * (xi + 1.0));
        ws.push(0.5 * wi);
    }
    let top = s_max.ln();
    let panels = (top / h).ceil().max(1.0) as usize;
    let step = top / panels as f64;
    for p in 0..panels {
        let a = p as f64 * step;
        for (xi, wi) in x.iter().zip(&w) {
            let u = a + 0.5 * step * (xi + 1.0);
            let su = u.exp();
            s.push(su);
            ws.push(0.5 * step * wi * su);
        }
    }
    (s, ws)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bessel_known_values() {
        // e^{-1} I_0(1) = 0.46575960759364043, e^{-1} I_1(1) = 0.20791041534970844
        let b = scaled_bessel(1.0, 3);
        assert!((b[0] - 0.465_759_607_593_640_4).abs() < 1e-15);
        assert!((b[1] - 0.207_910_415_349_708_4).abs() < 1e-15);
        let b = scaled_bessel(400.0, 4);
        for (k, v) in b.iter().enumerate() {
            let a = asymptotic_coeffs(k, 6);
            let s = 400.0f64;
            let series: f64 = a
                .iter()
                .enumerate()
                .map(|(j, aj)| if j % 2 == 0 { *aj } else { -*aj } / s.powi(j as i32))
                .sum::<f64>()
                / (2.0 * std::f64::consts::PI * s).sqrt();
            assert!((v - series).abs() < 1e-14 * series, "k={k}");
        }
    }

    #[test]
    fn bessel_small_argument() {
        let b = scaled_bessel(1e-4, 5);
        assert!((b[0] - (-1e-4f64).exp() * (1.0 + 2.5e-9)).abs() < 1e-15);
        assert!((b[1] - 5e-5 * (-1e-4f64).exp()).abs() < 1e-12);
        assert!(b[5] >= 0.0 && b[5] < 1e-20);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        let i: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum();
        assert!((i - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn time_nodes_integrate_exponential() {
        let (s, w) = time_nodes(200.0, 16, 0.25);
        let i: f64 = s.iter().zip(&w).map(|(s, w)| w * (-s).exp()).sum();
        assert!((i - 1.0).abs() < 1e-13);
    }
}
