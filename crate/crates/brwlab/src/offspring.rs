//! Critical offspring laws μ and the spine pair law.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Zero};
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

const SUM_TOL: f64 = 1e-12;
const GEOMETRIC_CAP: usize = 64;
const POISSON_TAIL: f64 = 1e-14;

/// Config fragment: `{kind: "geometric" | "binary" | "poisson" | "table", table: [[k, p], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<(u32, f64)>>,
}

impl OffspringSpec {
    pub fn named(kind: &str) -> Self {
        OffspringSpec {
            kind: kind.to_string(),
            table: None,
        }
    }

    pub fn table(entries: &[(u32, f64)]) -> Self {
        OffspringSpec {
            kind: "table".into(),
            table: Some(entries.to_vec()),
        }
    }
}

/// A validated mean-one offspring law with finite support.
#[derive(Clone)]
pub struct OffspringDistribution {
    kind: String,
    pmf: Vec<f64>,
    sigma_sq: f64,
    exact: Option<Vec<BigRational>>,
    alias: WeightedAliasIndex<f64>,
    // index m carries weight m·μ(m); used for the spine pair
    biased: WeightedAliasIndex<f64>,
}

impl fmt::Debug for OffspringDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OffspringDistribution")
            .field("kind", &self.kind)
            .field("support", &self.pmf.len())
            .field("sigma_sq", &self.sigma_sq)
            .finish()
    }
}

impl OffspringDistribution {
    /// Validate a pmf indexed by offspring count.
    pub fn from_pmf(kind: &str, pmf: Vec<f64>) -> Result<Self> {
        Self::build(kind, pmf, None)
    }

    fn build(kind: &str, mut pmf: Vec<f64>, exact: Option<Vec<BigRational>>) -> Result<Self> {
        while pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        if pmf.is_empty() {
            return config("empty offspring table");
        }
        if let Some(p) = pmf.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return config(format!("offspring probability {p} is not a nonnegative number"));
        }
        let mass: f64 = pmf.iter().sum();
        if (mass - 1.0).abs() > SUM_TOL {
            return config(format!("offspring probabilities sum to {mass}, not 1"));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if (mean - 1.0).abs() > SUM_TOL {
            return config(format!("offspring mean is {mean}, the law must be critical"));
        }
        let second: f64 = pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
        let sigma_sq = second - 1.0;
        if sigma_sq <= SUM_TOL {
            return config("offspring variance is zero");
        }
        let alias = WeightedAliasIndex::new(pmf.clone())
            .map_err(|e| crate::Error::Config(format!("offspring table: {e}")))?;
        let biased_w: Vec<f64> = pmf.iter().enumerate().map(|(m, p)| m as f64 * p).collect();
        let biased = WeightedAliasIndex::new(biased_w)
            .map_err(|e| crate::Error::Config(format!("size-biased table: {e}")))?;
        Ok(OffspringDistribution {
            kind: kind.to_string(),
            pmf,
            sigma_sq,
            exact,
            alias,
            biased,
        })
    }

    pub fn geometric() -> Self {
        let pmf: Vec<f64> = (0..=GEOMETRIC_CAP).map(|k| 0.5f64.powi(k as i32 + 1)).collect();
        Self::build("geometric", pmf, None).expect("geometric table is valid")
    }

    pub fn binary() -> Self {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let exact = vec![half.clone(), BigRational::zero(), half];
        Self::build("binary", vec![0.5, 0.0, 0.5], Some(exact)).expect("binary table is valid")
    }

    /// Poisson(1) cut where the dropped tail is below 1e-14, then renormalised.
    pub fn poisson() -> Self {
        let mut pmf = vec![(-1.0f64).exp()];
        let mut tail = 1.0 - pmf[0];
        let mut k = 0;
        while tail >= POISSON_TAIL {
            k += 1;
            let next = pmf[k - 1] / k as f64;
            pmf.push(next);
            tail -= next;
        }
        let mass: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|p| *p /= mass);
        Self::build("poisson", pmf, None).expect("poisson table is valid")
    }

    /// Custom table. Entries that are exact dyadic floats also get an exact
    /// rational copy, which the enumeration oracles use.
    pub fn from_table(entries: &[(u32, f64)]) -> Result<Self> {
        if entries.is_empty() {
            return config("empty offspring table");
        }
        let mut merged = BTreeMap::new();
        for &(k, p) in entries {
            if merged.insert(k, p).is_some() {
                return config(format!("offspring count {k} listed twice"));
            }
        }
        let top = *merged.keys().last().unwrap() as usize;
        if top > 4096 {
            return config("offspring support too large");
        }
        let mut pmf = vec![0.0; top + 1];
        for (k, p) in &merged {
            pmf[*k as usize] = *p;
        }
        let exact = exact_copy(&pmf);
        Self::build("table", pmf, exact)
    }

    pub fn from_spec(spec: &OffspringSpec) -> Result<Self> {
        OffspringFamilies::standard().make(spec)
    }

    pub fn kind(&self) -> &str {
        &self.kind
    }

    /// μ(k) for k in 0..support_len().
    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn support_len(&self) -> usize {
        self.pmf.len()
    }

    pub fn max_offspring(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn sigma_sq(&self) -> f64 {
        self.sigma_sq
    }

    pub fn exact_pmf(&self) -> Option<&[BigRational]> {
        self.exact.as_deref()
    }

    /// μ(≥k).
    pub fn tail(&self, k: usize) -> f64 {
        if k >= self.pmf.len() {
            return 0.0;
        }
        self.pmf[k..].iter().rev().sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.alias.sample(rng)
    }

    /// (d⁺, d⁻) with P(d⁺=k, d⁻=ℓ) = μ(k+ℓ+1): size-biased total, uniform split.
    pub fn sample_spine_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, usize) {
        let m = self.biased.sample(rng);
        let k = rng.random_range(0..m);
        (k, m - 1 - k)
    }

    /// Σ μ(k) s^k on [0,1].
    pub fn pgf(&self, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&s) {
            return config(format!("pgf argument {s} outside [0,1]"));
        }
        Ok(self.pgf_unchecked(s))
    }

    pub(crate) fn pgf_unchecked(&self, s: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// Σ k μ(k) s^{k-1}.
    pub fn pgf_derivative(&self, s: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, p)| acc * s + k as f64 * p)
    }

    /// Σ_{k,ℓ} μ(k+ℓ+1), which should be 1 for any mean-one law.
    pub fn spine_pair_mass(&self) -> f64 {
        let mut total = 0.0;
        for k in 0..self.pmf.len() {
            for l in 0..self.pmf.len() {
                total += self.prob(k + l + 1);
            }
        }
        total
    }
}

fn exact_copy(pmf: &[f64]) -> Option<Vec<BigRational>> {
    let exact: Vec<BigRational> = pmf
        .iter()
        .map(|&p| BigRational::from_f64(p))
        .collect::<Option<_>>()?;
    let one = BigRational::one();
    let mass: BigRational = exact.iter().sum();
    let mean: BigRational = exact
        .iter()
        .enumerate()
        .map(|(k, p)| p * BigRational::from_integer(BigInt::from(k)))
        .sum();
    (mass == one && mean == one).then_some(exact)
}

/// A named way of building an offspring law from a config fragment.
pub trait OffspringFamily: Send + Sync {
    fn name(&self) -> &'static str;
    fn build(&self, spec: &OffspringSpec) -> Result<OffspringDistribution>;
}

struct Geometric;
struct Binary;
struct Poisson;
struct Table;

impl OffspringFamily for Geometric {
    fn name(&self) -> &'static str {
        "geometric"
    }
    fn build(&self, _: &OffspringSpec) -> Result<OffspringDistribution> {
        Ok(OffspringDistribution::geometric())
    }
}

impl OffspringFamily for Binary {
    fn name(&self) -> &'static str {
        "binary"
    }
    fn build(&self, _: &OffspringSpec) -> Result<OffspringDistribution> {
        Ok(OffspringDistribution::binary())
    }
}

impl OffspringFamily for Poisson {
    fn name(&self) -> &'static str {
        "poisson"
    }
    fn build(&self, _: &OffspringSpec) -> Result<OffspringDistribution> {
        Ok(OffspringDistribution::poisson())
    }
}

impl OffspringFamily for Table {
    fn name(&self) -> &'static str {
        "table"
    }
    fn build(&self, spec: &OffspringSpec) -> Result<OffspringDistribution> {
        match &spec.table {
            Some(t) => OffspringDistribution::from_table(t),
            None => config("offspring kind \"table\" needs a `table` field"),
        }
    }
}

/// Offspring families looked up by name.
pub struct OffspringFamilies {
    families: Vec<Box<dyn OffspringFamily>>,
}

impl OffspringFamilies {
    pub fn empty() -> Self {
        OffspringFamilies {
            families: Vec::new(),
        }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(Geometric));
        r.register(Box::new(Binary));
        r.register(Box::new(Poisson));
        r.register(Box::new(Table));
        r
    }

    pub fn register(&mut self, family: Box<dyn OffspringFamily>) {
        self.families.retain(|f| f.name() != family.name());
        self.families.push(family);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.families.iter().map(|f| f.name()).collect()
    }

    pub fn make(&self, spec: &OffspringSpec) -> Result<OffspringDistribution> {
        match self.families.iter().find(|f| f.name() == spec.kind) {
            Some(f) => f.build(spec),
            None => config(format!(
                "unknown offspring kind {:?} (known: {})",
                spec.kind,
                self.names().join(", ")
            )),
        }
    }
}

/// Offspring laws shipped with the crate.
pub fn builtins() -> Vec<OffspringDistribution> {
    vec![
        OffspringDistribution::geometric(),
        OffspringDistribution::binary(),
        OffspringDistribution::poisson(),
    ]
}
