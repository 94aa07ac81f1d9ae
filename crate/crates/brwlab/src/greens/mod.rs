//! Green tables on a box in Z^d.
//!
//! Values come from continuous-time integrals: with P_s(x) = Π_i e^{−s} I_{x_i}(s),
//!
//! * g(x)     = d   ∫ P_s(x) ds
//! * g⋆g(x)   = d²  ∫ s P_s(x) ds
//! * g⋆g⋆g(x) = d³  ∫ s²/2 P_s(x) ds
//! * g_α(x)   = (d/z) ∫ e^{−dαs/z} P_s(x) ds,  z = 1 − α
//!
//! which match the discrete sums Σ_k p_k, Σ_k (k+1) p_k, Σ_k C(k+2,2) p_k and
//! Σ_k z^k p_k by Poisson subordination. Integrals run to s_max with Gauss
//! panels and the rest is done analytically from the large-s Bessel series.
//! Only the fundamental domain of the symmetry group is stored.

pub mod bessel;
pub mod domain;
pub mod transition;

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, MAX_DIM};
use bessel::{product_series, scaled_bessel, time_nodes};
pub use domain::{orbit_size, Domain};

const MAGIC: &[u8; 8] = b"BRWGTBL\0";
const FORMAT_VERSION: u32 = 1;
const SERIES_ORDER: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TableKind {
    /// g
    Green,
    /// g⋆g
    GreenSq,
    /// g⋆g⋆g
    GreenCube,
    /// G, expected visits of the future of 𝒯
    TreeGreen,
    /// G⋆g
    TreeGreenConv,
    /// g_α
    Killed,
    /// output of `convolve`
    Convolution,
}

impl TableKind {
    pub fn name(self) -> &'static str {
        match self {
            TableKind::Green => "g",
            TableKind::GreenSq => "gg",
            TableKind::GreenCube => "ggg",
            TableKind::TreeGreen => "G",
            TableKind::TreeGreenConv => "Gg",
            TableKind::Killed => "g_alpha",
            TableKind::Convolution => "conv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "g" => TableKind::Green,
            "gg" | "g*g" => TableKind::GreenSq,
            "ggg" => TableKind::GreenCube,
            "G" => TableKind::TreeGreen,
            "Gg" | "G*g" => TableKind::TreeGreenConv,
            "g_alpha" | "galpha" => TableKind::Killed,
            "conv" => TableKind::Convolution,
            _ => return Err(Error::Config(format!("unknown table kind {s:?}"))),
        })
    }

    fn code(self) -> u32 {
        match self {
            TableKind::Green => 0,
            TableKind::GreenSq => 1,
            TableKind::TreeGreen => 2,
            TableKind::TreeGreenConv => 3,
            TableKind::Killed => 4,
            TableKind::GreenCube => 5,
            TableKind::Convolution => 6,
        }
    }

    fn from_code(c: u32) -> Result<Self> {
        Ok(match c {
            0 => TableKind::Green,
            1 => TableKind::GreenSq,
            2 => TableKind::TreeGreen,
            3 => TableKind::TreeGreenConv,
            4 => TableKind::Killed,
            5 => TableKind::GreenCube,
            6 => TableKind::Convolution,
            _ => return Err(Error::Format(format!("unknown kind code {c}"))),
        })
    }

    /// Power of s in the time weight, for the three pure kinds.
    fn time_power(self) -> Option<usize> {
        match self {
            TableKind::Green => Some(0),
            TableKind::GreenSq => Some(1),
            TableKind::GreenCube => Some(2),
            _ => None,
        }
    }
}

/// c r^{−p} (1 + (a + b s4)/r²) with s4 = Σ x_i⁴ / r⁴.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerTail {
    pub p: f64,
    pub c: f64,
    pub a: f64,
    pub b: f64,
    /// worst relative misfit seen on the outer shell of the table
    pub rel_err: f64,
}

impl PowerTail {
    fn eval_r(&self, r2: f64, s4: f64) -> f64 {
        self.c * r2.powf(-self.p / 2.0) * (1.0 + (self.a + self.b * s4) / r2)
    }

    pub fn eval(&self, x: LatticePoint, dim: usize) -> f64 {
        let (r2, s4) = radial_parts(x, dim);
        self.eval_r(r2, s4)
    }

    /// Upper bound over all directions at radius ≥ r.
    pub fn sup_beyond(&self, r: f64, dim: usize) -> f64 {
        let r2 = r * r;
        let lo = 1.0 / dim as f64;
        let corr = (self.a + self.b * lo).max(self.a + self.b).max(0.0);
        self.c * r2.powf(-self.p / 2.0) * (1.0 + corr / r2) * (1.0 + self.rel_err)
    }
}

fn radial_parts(x: LatticePoint, dim: usize) -> (f64, f64) {
    let mut r2 = 0.0;
    let mut q = 0.0;
    for i in 0..dim {
        let c = x.coord(i) as f64;
        r2 += c * c;
        q += c * c * c * c;
    }
    (r2, if r2 > 0.0 { q / (r2 * r2) } else { 1.0 })
}

/// Far-field model: a linear combination of power tails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FarField {
    pub terms: Vec<(f64, PowerTail)>,
}

impl FarField {
    pub fn eval(&self, x: LatticePoint, dim: usize) -> f64 {
        self.terms.iter().map(|(w, t)| w * t.eval(x, dim)).sum()
    }

    pub fn sup_beyond(&self, r: f64, dim: usize) -> f64 {
        self.terms
            .iter()
            .map(|(w, t)| w.max(0.0) * t.sup_beyond(r, dim))
            .sum::<f64>()
    }

    /// Slowest decay exponent present.
    pub fn min_power(&self) -> f64 {
        self.terms.iter().map(|(_, t)| t.p).fold(f64::INFINITY, f64::min)
    }

    /// max r^p f over the far region (for ℓ² tail bounds)
    fn amplitude(&self, r: f64, dim: usize) -> f64 {
        let p = self.min_power();
        self.sup_beyond(r, dim) * r.powf(p)
    }
}

#[derive(Clone)]
pub struct GreensTable {
    pub dim: usize,
    pub radius: usize,
    pub kind: TableKind,
    pub alpha: Option<f64>,
    pub sigma_sq: Option<f64>,
    /// Time horizon covered by the quadrature, in walk steps (d · s_max);
    /// beyond it the analytic tail is used.
    pub horizon: f64,
    /// Uniform bound on the error of any stored value.
    pub truncation_error: f64,
    pub values: Vec<f64>,
    pub far: Option<FarField>,
    domain: std::sync::Arc<Domain>,
}

impl std::fmt::Debug for GreensTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GreensTable")
            .field("dim", &self.dim)
            .field("radius", &self.radius)
            .field("kind", &self.kind)
            .field("truncation_error", &self.truncation_error)
            .finish()
    }
}

impl GreensTable {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Value at a canonical (sorted absolute) point inside the box.
    pub fn at_canonical(&self, c: &[u16]) -> f64 {
        self.values[self.domain.rank(c)]
    }

    /// Value at x if x is in the box.
    #[inline]
    pub fn get(&self, x: LatticePoint) -> Option<f64> {
        let mut c = [0u16; MAX_DIM];
        for (i, slot) in c.iter_mut().enumerate().take(self.dim) {
            let a = x.coord(i).unsigned_abs() as usize;
            if a > self.radius {
                return None;
            }
            *slot = a as u16;
        }
        let c = &mut c[..self.dim];
        sort_small(c);
        Some(self.values[self.domain.rank(c)])
    }

    /// Box value, else the far-field model, else NaN.
    #[inline]
    pub fn lookup(&self, x: LatticePoint) -> f64 {
        match self.get(x) {
            Some(v) => v,
            None => match &self.far {
                Some(f) => f.eval(x, self.dim),
                None => f64::NAN,
            },
        }
    }

    pub fn at_coords(&self, coords: &[i32]) -> Result<f64> {
        Ok(self.lookup(LatticePoint::from_coords(coords)?))
    }

    /// Sum of |values| over the whole box (orbit-weighted).
    pub fn l1_box(&self) -> f64 {
        self.domain
            .points()
            .iter()
            .zip(&self.values)
            .map(|(c, v)| orbit_size(c) as f64 * v.abs())
            .sum()
    }

    fn l2_box(&self) -> f64 {
        self.domain
            .points()
            .iter()
            .zip(&self.values)
            .map(|(c, v)| orbit_size(c) as f64 * v * v)
            .sum()
    }

    /// Bound on Σ_{‖x‖∞ > r} f(x)², or None when the far field is unknown
    /// or not square-summable.
    pub fn l2_tail(&self, r: usize) -> Option<f64> {
        if self.kind == TableKind::Killed && self.alpha == Some(1.0) {
            return Some(0.0);
        }
        let far = self.far.as_ref()?;
        let p = far.min_power();
        let d = self.dim as f64;
        if 2.0 * p <= d {
            return None;
        }
        let r = r as f64;
        let half = d.sqrt() / 2.0;
        if r <= half + 1.0 {
            return None;
        }
        let amp = far.amplitude(r.max(1.0), self.dim).max(self.box_amplitude(p));
        let sphere = 2.0 * PI.powf(d / 2.0) / statrs_gamma(d / 2.0);
        let shell = (1.0 + half / r).powf(2.0 * p) * sphere * (r - half).powf(d - 2.0 * p) / (2.0 * p - d);
        Some(amp * amp * shell)
    }

    fn box_amplitude(&self, p: f64) -> f64 {
        self.domain
            .points()
            .iter()
            .zip(&self.values)
            .map(|(c, v)| {
                let r2: f64 = c.iter().map(|&x| (x as f64) * (x as f64)).sum();
                if r2 * 4.0 < (self.radius * self.radius) as f64 {
                    0.0
                } else {
                    v.abs() * r2.powf(p / 2.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Radial upper envelope r ↦ sup_{‖x‖ ≥ r} f(x).
    pub fn envelope(&self) -> RadialEnvelope {
        RadialEnvelope::build(self)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for i in 0..self.dim {
            let _ = write!(s, "c{},", i + 1);
        }
        s.push_str("orbit_size,value\n");
        for (c, v) in self.domain.points().iter().zip(&self.values) {
            for x in c {
                let _ = write!(s, "{x},");
            }
            let _ = writeln!(s, "{},{:e}", orbit_size(c), v);
        }
        s
    }

    /// Versioned little-endian binary: magic, version, dim, radius, kind,
    /// alpha, horizon, truncation_error, sigma_sq, count, values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim as u32).to_le_bytes())?;
        w.write_all(&(self.radius as u32).to_le_bytes())?;
        w.write_all(&self.kind.code().to_le_bytes())?;
        w.write_all(&self.alpha.unwrap_or(f64::NAN).to_le_bytes())?;
        w.write_all(&self.horizon.to_le_bytes())?;
        w.write_all(&self.truncation_error.to_le_bytes())?;
        w.write_all(&self.sigma_sq.unwrap_or(f64::NAN).to_le_bytes())?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a Green table file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("table format version {version} unsupported")));
        }
        let dim = read_u32(&mut r)? as usize;
        let radius = read_u32(&mut r)? as usize;
        let kind = TableKind::from_code(read_u32(&mut r)?)?;
        let alpha = some_if_finite(read_f64(&mut r)?);
        let horizon = read_f64(&mut r)?;
        let truncation_error = read_f64(&mut r)?;
        let sigma_sq = some_if_finite(read_f64(&mut r)?);
        let count = read_u64(&mut r)? as usize;
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::Format(format!("bad dimension {dim}")));
        }
        let domain = Domain::new(dim, radius);
        if count != domain.size() {
            return Err(Error::Format("value count does not match dimension and radius".into()));
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(read_f64(&mut r)?);
        }
        let mut t = GreensTable {
            dim,
            radius,
            kind,
            alpha,
            sigma_sq,
            horizon,
            truncation_error,
            values,
            far: None,
            domain: std::sync::Arc::new(domain),
        };
        t.far = t.fit_far_field_default();
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_binary(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(f))
    }

    fn fit_far_field_default(&self) -> Option<FarField> {
        let p = match self.kind {
            TableKind::Green => self.dim as f64 - 2.0,
            TableKind::GreenSq | TableKind::TreeGreen => self.dim as f64 - 4.0,
            TableKind::GreenCube | TableKind::TreeGreenConv => self.dim as f64 - 6.0,
            _ => return None,
        };
        if p <= 0.0 {
            return None;
        }
        fit_power_tail(self, p).map(|t| FarField {
            terms: vec![(1.0, t)],
        })
    }
}

fn some_if_finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[inline]
fn sort_small(c: &mut [u16]) {
    for i in 1..c.len() {
        let v = c[i];
        let mut j = i;
        while j > 0 && c[j - 1] > v {
            c[j] = c[j - 1];
            j -= 1;
        }
        c[j] = v;
    }
}

fn statrs_gamma(x: f64) -> f64 {
    // Γ at half-integers and integers, enough for sphere areas
    if (x - x.round()).abs() < 1e-12 {
        (1..x.round() as u64).map(|k| k as f64).product()
    } else {
        let mut g = PI.sqrt();
        let mut y = 0.5;
        while y < x - 1e-12 {
            g *= y;
            y += 1.0;
        }
        g
    }
}

/// Least-squares fit of r^p f = c + c·a/r² + c·b·s4/r² on the shell R/2 ≤ r.
fn fit_power_tail(t: &GreensTable, p: f64) -> Option<PowerTail> {
    let lo = t.radius as f64 / 2.0;
    if lo < 2.0 {
        return None;
    }
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let mut rows = Vec::new();
    for (c, &v) in t.domain.points().iter().zip(&t.values) {
        let r2: f64 = c.iter().map(|&x| (x as f64).powi(2)).sum();
        let r = r2.sqrt();
        if r < lo || r > t.radius as f64 {
            continue;
        }
        let s4: f64 = c.iter().map(|&x| (x as f64).powi(4)).sum::<f64>() / (r2 * r2);
        let y = v * r.powf(p);
        let row = [1.0, 1.0 / r2, s4 / r2];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += row[i] * row[j];
            }
            atb[i] += row[i] * y;
        }
        rows.push((r2, s4, v, r));
    }
    if rows.len() < 6 {
        return None;
    }
    let sol = solve3(ata, atb)?;
    let c = sol[0];
    let tail = PowerTail {
        p,
        c,
        a: sol[1] / c,
        b: sol[2] / c,
        rel_err: 0.0,
    };
    let outer = 0.75 * t.radius as f64;
    let rel_err = rows
        .iter()
        .filter(|(_, _, _, r)| *r >= outer)
        .map(|(r2, s4, v, _)| ((tail.eval_r(*r2, *s4) - v) / v).abs())
        .fold(0.0, f64::max);
    Some(PowerTail {
        rel_err: rel_err.max(1e-6),
        ..tail
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in 0..3 {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// r ↦ an upper bound on sup_{‖x‖₂ ≥ r} f(x), from the table and far field.
#[derive(Clone, Debug)]
pub struct RadialEnvelope {
    dim: usize,
    radius: f64,
    step: f64,
    suffix_max: Vec<f64>,
    far: Option<FarField>,
}

impl RadialEnvelope {
    fn build(t: &GreensTable) -> Self {
        let step = 0.25;
        let rmax = t.radius as f64 * (t.dim as f64).sqrt();
        let nb = (rmax / step) as usize + 2;
        let mut bucket = vec![0.0f64; nb];
        for (c, &v) in t.domain.points().iter().zip(&t.values) {
            let r = c.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            let b = (r / step) as usize;
            bucket[b] = bucket[b].max(v.abs());
        }
        for i in (0..nb - 1).rev() {
            bucket[i] = bucket[i].max(bucket[i + 1]);
        }
        RadialEnvelope {
            dim: t.dim,
            radius: t.radius as f64,
            step,
            suffix_max: bucket,
            far: t.far.clone(),
        }
    }

    pub fn at(&self, r: f64) -> f64 {
        let r = r.max(0.0);
        let table = self.suffix_max.get((r / self.step) as usize).copied().unwrap_or(0.0);
        let far = match &self.far {
            Some(f) => f.sup_beyond(r.max(self.radius + 1.0), self.dim),
            None => {
                if r / self.step < self.suffix_max.len() as f64 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        };
        table.max(far)
    }
}

/// Node set and weights for the time integral.
struct TimeRule {
    s: Vec<f64>,
    w: Vec<f64>,
    s_max: f64,
}

fn time_rule(kmax: usize, fine: bool, alpha: Option<f64>, dim: usize) -> TimeRule {
    let mut s_max = (60.0 * (kmax * kmax) as f64).max(2000.0);
    if let Some(a) = alpha {
        let z = 1.0 - a;
        // e^{−dαs/z} < e^{−80} beyond this
        s_max = (80.0 * z / (dim as f64 * a)).clamp(1.0, 1e10);
    }
    let (pts, h) = if fine { (16, 0.25) } else { (11, 0.25) };
    let (s, w) = time_nodes(s_max, pts, h);
    TimeRule { s, w, s_max }
}

/// Weight of one kind at time s (including the Jacobian factor d^m).
fn kind_weight(kind: TableKind, dim: usize, alpha: Option<f64>, s: f64) -> f64 {
    let d = dim as f64;
    match kind {
        TableKind::Green => d,
        TableKind::GreenSq => d * d * s,
        TableKind::GreenCube => d * d * d * s * s / 2.0,
        TableKind::Killed => {
            let a = alpha.unwrap();
            let z = 1.0 - a;
            d / z * (-d * a * s / z).exp()
        }
        _ => unreachable!("composite kinds are built from pure ones"),
    }
}

/// ∫_{S}^∞ weight · P_s(x) ds from the large-s series, and a bound on the
/// error of that estimate. Only power weights have a tail.
fn analytic_tail(kind: TableKind, dim: usize, ks: &[usize], s_max: f64) -> (f64, f64) {
    let Some(m) = kind.time_power() else {
        return (0.0, 0.0);
    };
    let d = dim as f64;
    let coef = match m {
        0 => d,
        1 => d * d,
        _ => d * d * d / 2.0,
    };
    let c = product_series(ks, SERIES_ORDER);
    let base = coef * (2.0 * PI).powf(-d / 2.0);
    let mut total = 0.0;
    let mut last = 0.0;
    for (j, cj) in c.iter().enumerate() {
        let e = d / 2.0 + j as f64 - m as f64 - 1.0;
        let term = base * cj * s_max.powf(-e) / e;
        if j < SERIES_ORDER {
            total += term;
        } else {
            last = term;
        }
    }
    (total + last, 2.0 * last.abs())
}

/// Build several pure kinds at once (they share the Bessel products).
pub fn build_tables(dim: usize, radius: usize, kinds: &[TableKind], alpha: Option<f64>) -> Result<Vec<GreensTable>> {
    validate(dim, radius, kinds, alpha)?;
    let domain = std::sync::Arc::new(Domain::new(dim, radius));
    let fine = time_rule(radius, true, alpha, dim);
    let mut values = integrate_domain(&domain, kinds, alpha, &fine);

    // error estimate: rerun a sample of points with a coarser rule
    let coarse = time_rule(radius, false, alpha, dim);
    let pts = domain.points();
    let stride = (pts.len() / 400).max(1);
    let mut quad_err = vec![0.0f64; kinds.len()];
    let mut tail_err = vec![0.0f64; kinds.len()];
    for (r, c) in pts.iter().enumerate() {
        let ks: Vec<usize> = c.iter().map(|&x| x as usize).collect();
        for (i, &k) in kinds.iter().enumerate() {
            let (tail, terr) = analytic_tail(k, dim, &ks, fine.s_max);
            values[i][r] += tail;
            tail_err[i] = tail_err[i].max(terr);
        }
        if r % stride == 0 || r < 50 {
            let (_, coarse_vals) = point_integral(&ks, kinds, alpha, &coarse, dim);
            let (_, fine_vals) = point_integral(&ks, kinds, alpha, &fine, dim);
            for i in 0..kinds.len() {
                let (tc, _) = analytic_tail(kinds[i], dim, &ks, coarse.s_max);
                let (tf, _) = analytic_tail(kinds[i], dim, &ks, fine.s_max);
                let diff = (coarse_vals[i] + tc - fine_vals[i] - tf).abs();
                quad_err[i] = quad_err[i].max(diff);
            }
        }
    }
    let mut out = Vec::new();
    for (i, &kind) in kinds.iter().enumerate() {
        let vals = std::mem::take(&mut values[i]);
        let vmax = vals.iter().cloned().fold(0.0, f64::max);
        let mut t = GreensTable {
            dim,
            radius,
            kind,
            alpha,
            sigma_sq: None,
            horizon: dim as f64 * fine.s_max,
            truncation_error: quad_err[i] + tail_err[i] + 1e-15 * vmax,
            values: vals,
            far: None,
            domain: domain.clone(),
        };
        if kind == TableKind::Killed && alpha == Some(1.0) {
            t.truncation_error = 0.0;
        }
        t.far = t.fit_far_field_default();
        out.push(t);
    }
    Ok(out)
}

fn validate(dim: usize, radius: usize, kinds: &[TableKind], alpha: Option<f64>) -> Result<()> {
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::Config(format!("dimension must be in 1..={MAX_DIM}")));
    }
    if radius == 0 || radius > 4000 {
        return Err(Error::Config("radius must be in 1..=4000".into()));
    }
    let size = Domain::new(dim, radius).size();
    if size > 60_000_000 {
        return Err(Error::ResourceGuard {
            what: "table points".into(),
            limit: 60_000_000,
            generated: size as u64,
        });
    }
    for &k in kinds {
        match k {
            TableKind::Green if dim <= 2 => return Err(Error::Config("g needs d > 2".into())),
            TableKind::GreenSq if dim <= 4 => return Err(Error::Config("g⋆g needs d > 4".into())),
            TableKind::GreenCube if dim <= 6 => return Err(Error::Config("g⋆g⋆g needs d > 6".into())),
            TableKind::Killed => match alpha {
                Some(a) if a > 0.0 && a <= 1.0 => {}
                _ => return Err(Error::Config("g_α needs α in (0, 1]".into())),
            },
            TableKind::Green | TableKind::GreenSq | TableKind::GreenCube => {}
            other => return Err(Error::Config(format!("{} is not a pure kind", other.name()))),
        }
    }
    Ok(())
}

/// Quadrature part of every kind at every canonical point, using shared
/// prefix products over the sorted coordinates.
fn integrate_domain(domain: &Domain, kinds: &[TableKind], alpha: Option<f64>, rule: &TimeRule) -> Vec<Vec<f64>> {
    let n = rule.s.len();
    let r = domain.radius;
    let dim = domain.dim;
    let size = domain.size();
    if kinds.contains(&TableKind::Killed) && alpha == Some(1.0) {
        let mut v = vec![0.0; size];
        v[0] = 1.0;
        return vec![v];
    }
    // bessel[c * n + node]
    let mut bessel = vec![0.0; (r + 1) * n];
    for (node, &s) in rule.s.iter().enumerate() {
        let b = scaled_bessel(s, r);
        for c in 0..=r {
            bessel[c * n + node] = b[c];
        }
    }
    let weights: Vec<Vec<f64>> = kinds
        .iter()
        .map(|&k| {
            rule.s
                .iter()
                .zip(&rule.w)
                .map(|(&s, &w)| w * kind_weight(k, dim, alpha, s))
                .collect()
        })
        .collect();
    let mut out = vec![vec![0.0; size]; kinds.len()];
    let mut prefix = vec![vec![1.0; n]; dim];
    let mut coords = vec![0u16; dim];
    fill(domain, &bessel, n, &weights, 0, 0, &mut prefix, &mut coords, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn fill(
    domain: &Domain,
    bessel: &[f64],
    n: usize,
    weights: &[Vec<f64>],
    level: usize,
    start: usize,
    prefix: &mut Vec<Vec<f64>>,
    coords: &mut Vec<u16>,
    out: &mut [Vec<f64>],
) {
    let dim = domain.dim;
    for c in start..=domain.radius {
        coords[level] = c as u16;
        let row = &bessel[c * n..(c + 1) * n];
        if level + 1 == dim {
            let base = if level == 0 { None } else { Some(&prefix[level - 1]) };
            let rank = domain.rank(coords);
            for (k, w) in weights.iter().enumerate() {
                let mut acc = 0.0;
                match base {
                    Some(p) => {
                        for i in 0..n {
                            acc += p[i] * row[i] * w[i];
                        }
                    }
                    None => {
                        for i in 0..n {
                            acc += row[i] * w[i];
                        }
                    }
                }
                out[k][rank] = acc;
            }
        } else {
            let (head, tail) = prefix.split_at_mut(level);
            let cur = &mut tail[0];
            match head.last() {
                Some(p) => {
                    for i in 0..n {
                        cur[i] = p[i] * row[i];
                    }
                }
                None => cur.copy_from_slice(row),
            }
            fill(domain, bessel, n, weights, level + 1, c, prefix, coords, out);
        }
    }
}

/// Quadrature (without tail) of each kind at one point with arbitrary
/// coordinates. Returns (s_max, values).
fn point_integral(ks: &[usize], kinds: &[TableKind], alpha: Option<f64>, rule: &TimeRule, dim: usize) -> (f64, Vec<f64>) {
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let mut vals = vec![0.0; kinds.len()];
    for (&s, &w) in rule.s.iter().zip(&rule.w) {
        let b = scaled_bessel(s, kmax);
        let p: f64 = ks.iter().map(|&k| b[k]).product();
        for (v, &k) in vals.iter_mut().zip(kinds) {
            *v += w * kind_weight(k, dim, alpha, s) * p;
        }
    }
    (rule.s_max, vals)
}

/// A pure kind evaluated directly at one point (any distance), with an
/// error estimate from a coarser rule.
pub fn point_value(kind: TableKind, coords: &[i32], alpha: Option<f64>) -> Result<(f64, f64)> {
    let dim = coords.len();
    validate(dim, 1, &[kind], alpha)?;
    if kind == TableKind::Killed && alpha == Some(1.0) {
        return Ok((if coords.iter().all(|&c| c == 0) { 1.0 } else { 0.0 }, 0.0));
    }
    let ks: Vec<usize> = coords.iter().map(|c| c.unsigned_abs() as usize).collect();
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let r2: f64 = ks.iter().map(|&k| (k * k) as f64).sum();
    let mut fine = time_rule(kmax.max(1), true, alpha, dim);
    let mut coarse = time_rule(kmax.max(1), false, alpha, dim);
    // make sure the bulk (s ~ r²/d) is well inside the quadrature range
    if alpha.is_none() && fine.s_max < 20.0 * r2 {
        fine = with_smax(20.0 * r2, true);
        coarse = with_smax(20.0 * r2, false);
    }
    let (_, f) = point_integral(&ks, &[kind], alpha, &fine, dim);
    let (_, c) = point_integral(&ks, &[kind], alpha, &coarse, dim);
    let (tf, te) = analytic_tail(kind, dim, &ks, fine.s_max);
    let (tc, _) = analytic_tail(kind, dim, &ks, coarse.s_max);
    let v = f[0] + tf;
    Ok((v, (c[0] + tc - v).abs() + te + 1e-15 * v.abs()))
}

fn with_smax(s_max: f64, fine: bool) -> TimeRule {
    let (pts, h) = if fine { (16, 0.25) } else { (11, 0.25) };
    let (s, w) = time_nodes(s_max, pts, h);
    TimeRule { s, w, s_max }
}

pub fn build_g_table(dim: usize, radius: usize, tolerance: f64) -> Result<GreensTable> {
    let t = build_tables(dim, radius, &[TableKind::Green], None)?.remove(0);
    if t.truncation_error > tolerance {
        return Err(Error::Numeric(format!(
            "g table error {:e} above tolerance {tolerance:e}",
            t.truncation_error
        )));
    }
    Ok(t)
}

pub fn build_g_alpha_table(dim: usize, alpha: f64, radius: usize) -> Result<GreensTable> {
    Ok(build_tables(dim, radius, &[TableKind::Killed], Some(alpha))?.remove(0))
}

fn same_grid(a: &GreensTable, b: &GreensTable) -> Result<()> {
    if a.dim != b.dim || a.radius != b.radius {
        return Err(Error::Config("tables come from different builds".into()));
    }
    Ok(())
}

fn combine(parts: &[(f64, &GreensTable)], delta: f64, kind: TableKind, sigma_sq: f64) -> GreensTable {
    let first = parts[0].1;
    let mut values = vec![0.0; first.values.len()];
    let mut err = 0.0;
    for (w, t) in parts {
        for (v, x) in values.iter_mut().zip(&t.values) {
            *v += w * x;
        }
        err += w.abs() * t.truncation_error;
    }
    values[0] += delta;
    let far = parts
        .iter()
        .map(|(w, t)| t.far.as_ref().map(|f| f.terms.iter().map(|(c, pt)| (c * w, *pt)).collect::<Vec<_>>()))
        .collect::<Option<Vec<_>>>()
        .map(|v| FarField {
            terms: v.into_iter().flatten().collect(),
        });
    GreensTable {
        dim: first.dim,
        radius: first.radius,
        kind,
        alpha: None,
        sigma_sq: Some(sigma_sq),
        horizon: first.horizon,
        truncation_error: err,
        values,
        far,
        domain: first.domain.clone(),
    }
}

/// G(z) = Σ_{k≥0} P(𝒯_k = z): the root, the root's subtrees (g − δ) and the
/// right-side subtrees of u_1, u_2, ... (σ²/2 per spine vertex, each
/// contributing g⋆g − 2g + δ in total), which is
/// G = (σ²/2) g⋆g + (1 − σ²) g + (σ²/2) δ₀.
#[allow(non_snake_case)]
pub fn build_G_table(g: &GreensTable, gg: &GreensTable, sigma_sq: f64) -> Result<GreensTable> {
    same_grid(g, gg)?;
    if g.kind != TableKind::Green || gg.kind != TableKind::GreenSq {
        return Err(Error::Config("build_G_table needs g and g⋆g tables".into()));
    }
    let h = sigma_sq / 2.0;
    Ok(combine(&[(h, gg), (1.0 - sigma_sq, g)], h, TableKind::TreeGreen, sigma_sq))
}

/// (G⋆g) = (σ²/2) g⋆g⋆g + (1 − σ²) g⋆g + (σ²/2) g.
#[allow(non_snake_case)]
pub fn build_Gg_table(g: &GreensTable, gg: &GreensTable, ggg: &GreensTable, sigma_sq: f64) -> Result<GreensTable> {
    same_grid(g, gg)?;
    same_grid(g, ggg)?;
    let h = sigma_sq / 2.0;
    Ok(combine(
        &[(h, ggg), (1.0 - sigma_sq, gg), (h, g)],
        0.0,
        TableKind::TreeGreenConv,
        sigma_sq,
    ))
}

/// Direct convolution Σ_x a(x) b(z − x) over a's box, for z in a box of
/// radius `out_radius`. Terms with z − x outside b's box are dropped and,
/// together with the region outside a's box, bounded by Cauchy–Schwarz
/// through the tables' ℓ² tails.
pub fn convolve(a: &GreensTable, b: &GreensTable, out_radius: usize) -> Result<GreensTable> {
    if a.dim != b.dim {
        return Err(Error::Config("convolution of tables in different dimensions".into()));
    }
    if out_radius >= b.radius || out_radius > a.radius {
        return Err(Error::Config("output radius must be below both table radii".into()));
    }
    let dim = a.dim;
    let ra = a.radius as i32;
    let side = (2 * ra + 1) as usize;
    let total = side.pow(dim as u32);
    if total as f64 * Domain::new(dim, out_radius).size() as f64 > 5e10 {
        return Err(Error::ResourceGuard {
            what: "convolution work".into(),
            limit: 50_000_000_000,
            generated: total as u64,
        });
    }
    let domain = std::sync::Arc::new(Domain::new(dim, out_radius));
    let pts = domain.points();
    let mut values = vec![0.0; pts.len()];
    let mut coords = vec![0i32; dim];
    let mut xs: Vec<(LatticePoint, f64)> = Vec::with_capacity(total);
    for idx in 0..total {
        let mut rem = idx;
        for c in coords.iter_mut() {
            *c = (rem % side) as i32 - ra;
            rem /= side;
        }
        let x = LatticePoint::from_coords(&coords)?;
        xs.push((x, a.get(x).unwrap()));
    }
    for (slot, c) in values.iter_mut().zip(&pts) {
        let zc: Vec<i32> = c.iter().map(|&v| v as i32).collect();
        let z = LatticePoint::from_coords(&zc)?;
        let mut acc = crate::stats::CompSum::default();
        for &(x, ax) in &xs {
            if let Some(bv) = b.get(z.sub(x)) {
                acc.add(ax * bv);
            }
        }
        *slot = acc.value();
    }
    let a2 = a.l2_box() + a.l2_tail(a.radius).unwrap_or(f64::INFINITY);
    let b2 = b.l2_box() + b.l2_tail(b.radius).unwrap_or(f64::INFINITY);
    let edge_a = a.l2_tail(a.radius).map(|t| (t * b2).sqrt());
    let edge_b = b.l2_tail(b.radius - out_radius).map(|t| (t * a2).sqrt());
    let edge = match (edge_a, edge_b) {
        (Some(x), Some(y)) => x + y,
        _ => f64::INFINITY,
    };
    let err = a.l1_box() * b.truncation_error + b.l1_box() * a.truncation_error + edge;
    Ok(GreensTable {
        dim,
        radius: out_radius,
        kind: TableKind::Convolution,
        alpha: None,
        sigma_sq: None,
        horizon: a.horizon.min(b.horizon),
        truncation_error: err,
        values,
        far: None,
        domain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_one_is_delta() {
        let t = build_g_alpha_table(8, 1.0, 3).unwrap();
        assert_eq!(t.values[0], 1.0);
        assert!(t.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn g_origin_matches_exact_partial_sums() {
        let t = build_g_table(8, 2, 1e-9).unwrap();
        let (partial, tail) = transition::green_partial(&[0; 8], 600);
        let g0 = t.values[0];
        assert!(g0 >= partial && g0 <= partial + 1.5 * tail, "g0={g0} partial={partial} tail={tail}");
    }

    #[test]
    fn harmonic_in_d5() {
        let t = build_g_table(5, 6, 1e-9).unwrap();
        let x = LatticePoint::from_coords(&[1, 2, 0, 0, 3]).unwrap();
        let avg: f64 = crate::lattice::neighbours(x, 5).map(|y| t.lookup(y)).sum::<f64>() / 10.0;
        assert!((t.lookup(x) - avg).abs() < 10.0 * t.truncation_error);
        let o = LatticePoint::ORIGIN;
        let avg0: f64 = crate::lattice::neighbours(o, 5).map(|y| t.lookup(y)).sum::<f64>() / 10.0;
        assert!((t.lookup(o) - 1.0 - avg0).abs() < 10.0 * t.truncation_error);
    }

    #[test]
    fn binary_roundtrip() {
        let t = build_g_table(4, 3, 1e-8).unwrap();
        let mut buf = Vec::new();
        t.write_binary(&mut buf).unwrap();
        let u = GreensTable::read_binary(buf.as_slice()).unwrap();
        assert_eq!(u.values, t.values);
        assert_eq!(u.kind, TableKind::Green);
        assert_eq!(u.truncation_error, t.truncation_error);
        buf[0] = b'X';
        assert!(GreensTable::read_binary(buf.as_slice()).is_err());
    }

    #[test]
    fn point_value_matches_table() {
        let t = build_tables(8, 4, &[TableKind::Green, TableKind::GreenSq], None).unwrap();
        let (v, e) = point_value(TableKind::Green, &[1, 0, 2, 0, 0, 0, 0, 4], None).unwrap();
        let tv = t[0].at_coords(&[1, 0, 2, 0, 0, 0, 0, 4]).unwrap();
        assert!((v - tv).abs() < 10.0 * (e + t[0].truncation_error));
        let (v2, _) = point_value(TableKind::GreenSq, &[0; 8], None).unwrap();
        assert!((v2 - t[1].values[0]).abs() < 1e-9 * v2);
    }
}
