//! Small numeric helpers: compensated sums, running moments, least squares.

/// Neumaier compensated sum. Order of `add` calls matters for the last bit,
/// so callers feed values in replica order.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompSum {
    sum: f64,
    comp: f64,
}

impl CompSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Sample mean and variance accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Moments {
    n: u64,
    s1: CompSum,
    s2: CompSum,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1.add(x);
        self.s2.add(x * x);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// Fold another accumulator in. Merging in a fixed order keeps results
    /// reproducible.
    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.s1.add(other.s1.sum);
        self.s1.add(other.s1.comp);
        self.s2.add(other.s2.sum);
        self.s2.add(other.s2.comp);
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        self.s1.value() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let m = self.mean();
        ((self.s2.value() - n * m * m) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    /// Standard error of the sample variance, from the fourth-moment-free
    /// normal approximation `var * sqrt(2/(n-1))`. Good enough for trend checks.
    pub fn variance_stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        self.variance() * (2.0 / (self.n as f64 - 1.0)).sqrt()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
}

impl LineFit {
    pub fn t_stat(&self) -> f64 {
        if self.slope_stderr > 0.0 {
            self.slope / self.slope_stderr
        } else {
            f64::INFINITY * self.slope.signum()
        }
    }
}

/// Weighted least squares y = a + b x with weights w (use 1/σ² for known errors).
/// With known errors the slope error is the textbook sqrt(1/S_xx); otherwise
/// pass unit weights and the residual scatter is used.
pub fn fit_line(x: &[f64], y: &[f64], w: Option<&[f64]>) -> LineFit {
    assert_eq!(x.len(), y.len());
    let n = x.len();
    assert!(n >= 2, "need two points for a line");
    let ones = vec![1.0; n];
    let w = w.unwrap_or(&ones);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx += w[i] * dx * dx;
        sxy += w[i] * dx * dy;
        syy += w[i] * dy * dy;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res = (syy - slope * sxy).max(0.0);
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let unit = w.iter().all(|&v| v == 1.0);
    let slope_stderr = if unit {
        if n > 2 {
            (ss_res / (n as f64 - 2.0) / sxx).sqrt()
        } else {
            0.0
        }
    } else {
        (1.0 / sxx).sqrt()
    };
    LineFit {
        slope,
        intercept,
        slope_stderr,
        r_squared,
    }
}

/// max/min of a positive series; infinite if anything is non-positive.
pub fn spread_ratio(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Pearson chi-square statistic for two histograms over the same bins.
/// Bins empty in both samples are skipped. Returns (statistic, degrees of freedom).
pub fn two_sample_chi2(a: &[u64], b: &[u64]) -> (f64, usize) {
    assert_eq!(a.len(), b.len());
    let na: u64 = a.iter().sum();
    let nb: u64 = b.iter().sum();
    let (na, nb) = (na as f64, nb as f64);
    let ka = (nb / na).sqrt();
    let kb = (na / nb).sqrt();
    let mut stat = 0.0;
    let mut bins = 0usize;
    for (&x, &y) in a.iter().zip(b) {
        if x + y == 0 {
            continue;
        }
        let d = ka * x as f64 - kb * y as f64;
        stat += d * d / (x + y) as f64;
        bins += 1;
    }
    (stat, bins.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_beats_naive() {
        let mut s = CompSum::default();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-25);
    }

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let f = fit_line(&x, &y, None);
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn moments_of_small_sample() {
        let mut m = Moments::default();
        for x in [1.0, 2.0, 3.0, 4.0] {
            m.push(x);
        }
        assert!((m.mean() - 2.5).abs() < 1e-15);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn chi2_identical_histograms_is_zero() {
        let (s, df) = two_sample_chi2(&[10, 20, 0, 5], &[10, 20, 0, 5]);
        assert_eq!(s, 0.0);
        assert_eq!(df, 2);
    }
}
