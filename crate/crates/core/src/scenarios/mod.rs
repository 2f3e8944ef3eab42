//! Views on the underlying at maturity and their discretization.
//!
//! The log-return `ln(X_T / X_0)` is modelled as `mu + sigma * Z` with `Z`
//! standard Student-t (`nu` degrees of freedom) or standard normal when
//! `nu = inf`. Expectations are taken on a [`ScenarioGrid`]: a composite
//! Gauss–Legendre rule over equal-probability panels of the truncated law.

mod quadrature;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{Continuous, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

pub use quadrature::{gauss_legendre, integrate};

/// Distributional view on the log-return to maturity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViewModel {
    pub mu: f64,
    pub sigma: f64,
    /// Degrees of freedom; `f64::INFINITY` selects the Gaussian law.
    #[serde(serialize_with = "ser_nu", deserialize_with = "de_nu")]
    pub nu: f64,
    pub spot: f64,
}

fn ser_nu<S: Serializer>(nu: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if nu.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*nu)
    }
}

fn de_nu<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) => parse_nu(&t).map_err(serde::de::Error::custom),
    }
}

/// Parses a degrees-of-freedom value, accepting `inf`.
pub fn parse_nu(text: &str) -> Result<f64> {
    match text.trim().to_ascii_lowercase().as_str() {
        "inf" | "infinity" | "+inf" => Ok(f64::INFINITY),
        other => other
            .parse()
            .map_err(|_| Error::InvalidModel(format!("bad degrees of freedom `{text}`"))),
    }
}

impl ViewModel {
    pub fn new(mu: f64, sigma: f64, nu: f64, spot: f64) -> Result<Self> {
        let model = Self { mu, sigma, nu, spot };
        model.validate()?;
        Ok(model)
    }

    pub fn gaussian(mu: f64, sigma: f64, spot: f64) -> Result<Self> {
        Self::new(mu, sigma, f64::INFINITY, spot)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(Error::InvalidModel(format!("mu must be finite, got {}", self.mu)));
        }
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidModel(format!("sigma must be positive, got {}", self.sigma)));
        }
        if !(self.nu > 2.0) {
            return Err(Error::InvalidModel(format!(
                "degrees of freedom must exceed 2, got {}",
                self.nu
            )));
        }
        if !(self.spot.is_finite() && self.spot > 0.0) {
            return Err(Error::InvalidModel(format!("spot must be positive, got {}", self.spot)));
        }
        Ok(())
    }

    pub fn is_gaussian(&self) -> bool {
        self.nu.is_infinite()
    }

    /// Variance of the log-return, `sigma^2 nu / (nu - 2)`.
    pub fn log_variance(&self) -> f64 {
        if self.is_gaussian() {
            self.sigma * self.sigma
        } else {
            self.sigma * self.sigma * self.nu / (self.nu - 2.0)
        }
    }

    fn law(&self) -> StdLaw {
        if self.is_gaussian() {
            StdLaw::Normal(Normal::new(0.0, 1.0).expect("standard normal"))
        } else {
            StdLaw::Student(StudentsT::new(0.0, 1.0, self.nu).expect("validated nu"))
        }
    }

    fn level(&self, z: f64) -> f64 {
        self.spot * (self.mu + self.sigma * z).exp()
    }
}

/// The standardized law of `Z`.
enum StdLaw {
    Normal(Normal),
    Student(StudentsT),
}

impl StdLaw {
    fn cdf(&self, z: f64) -> f64 {
        match self {
            StdLaw::Normal(d) => d.cdf(z),
            StdLaw::Student(d) => d.cdf(z),
        }
    }

    fn pdf(&self, z: f64) -> f64 {
        match self {
            StdLaw::Normal(d) => d.pdf(z),
            StdLaw::Student(d) => d.pdf(z),
        }
    }

    /// Quantile by safeguarded Newton on the lower tail; the upper tail
    /// follows by symmetry so tiny tail probabilities keep full precision.
    fn quantile(&self, p: f64) -> f64 {
        if p == 0.5 {
            return 0.0;
        }
        if p > 0.5 {
            return -self.quantile(1.0 - p);
        }
        let mut lo = -1.0;
        while self.cdf(lo) > p {
            lo *= 2.0;
            if lo < -1e12 {
                return lo;
            }
        }
        let mut hi = 0.0;
        let mut z = 0.5 * (lo + hi);
        for _ in 0..200 {
            let f = self.cdf(z) - p;
            if f > 0.0 {
                hi = z;
            } else {
                lo = z;
            }
            let d = self.pdf(z);
            let mut next = if d > 0.0 { z - f / d } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - z).abs() <= 1e-15 * z.abs().max(1.0) {
                return next;
            }
            z = next;
        }
        z
    }
}

/// Log-return quantile of the view at probability `p`.
pub fn quantile(model: &ViewModel, p: f64) -> Result<f64> {
    model.validate()?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability must lie in (0, 1), got {p}")));
    }
    Ok(model.mu + model.sigma * model.law().quantile(p))
}

/// Discretization parameters for [`build_grid_with`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Probability cut from each tail.
    pub tail_mass: f64,
    /// Optional clamp of the grid to underlying levels `[lo, hi]`.
    #[serde(default)]
    pub support: Option<(f64, f64)>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            panels: 50,
            nodes_per_panel: 20,
            tail_mass: 1e-6,
            support: None,
        }
    }
}

impl GridSpec {
    pub fn with_support(mut self, lo: f64, hi: f64) -> Self {
        self.support = Some((lo, hi));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels < 1 {
            return Err(Error::Validation("need at least one panel".into()));
        }
        if self.nodes_per_panel < 2 {
            return Err(Error::Validation("need at least two nodes per panel".into()));
        }
        if !(self.tail_mass > 0.0 && self.tail_mass < 0.01) {
            return Err(Error::Validation(format!(
                "tail mass must lie in (0, 0.01), got {}",
                self.tail_mass
            )));
        }
        if let Some((lo, hi)) = self.support {
            if !(lo > 0.0 && hi > lo && hi.is_finite()) {
                return Err(Error::Validation(format!("bad support [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Scenario levels of the underlying with probability weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    /// Underlying levels bounding the truncated law.
    domain: (f64, f64),
}

impl ScenarioGrid {
    /// Grid from explicit nodes and (unnormalized) positive weights.
    pub fn from_parts(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() || nodes.len() != weights.len() {
            return Err(Error::Validation("grid needs matching, nonempty nodes and weights".into()));
        }
        if nodes.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Validation("grid nodes must be positive".into()));
        }
        if nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation("grid nodes must be strictly increasing".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::Validation("grid weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        let domain = (nodes[0], *nodes.last().unwrap());
        Ok(Self { nodes, weights, domain })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Underlying levels bounding the law the grid integrates against.
    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn expectation(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }

    /// Mean and variance of `ln(x / spot)` under the grid measure.
    pub fn log_return_moments(&self, spot: f64) -> (f64, f64) {
        let mean = self.expectation(|x| (x / spot).ln());
        let var = self.expectation(|x| ((x / spot).ln() - mean).powi(2));
        (mean, var)
    }
}

/// Grid with the given panel count, nodes per panel and tail truncation.
pub fn build_grid(
    model: &ViewModel,
    panels: usize,
    nodes_per_panel: usize,
    tail_mass: f64,
) -> Result<ScenarioGrid> {
    build_grid_with(
        model,
        &GridSpec {
            panels,
            nodes_per_panel,
            tail_mass,
            support: None,
        },
    )
}

pub fn build_grid_with(model: &ViewModel, spec: &GridSpec) -> Result<ScenarioGrid> {
    model.validate()?;
    spec.validate()?;
    let law = model.law();

    let mut p_lo = spec.tail_mass;
    let mut p_hi = 1.0 - spec.tail_mass;
    if let Some((lo, hi)) = spec.support {
        let z_lo = ((lo / model.spot).ln() - model.mu) / model.sigma;
        let z_hi = ((hi / model.spot).ln() - model.mu) / model.sigma;
        p_lo = p_lo.max(law.cdf(z_lo));
        p_hi = p_hi.min(law.cdf(z_hi));
        if !(p_hi > p_lo) {
            return Err(Error::Validation(format!(
                "support [{lo}, {hi}] carries no probability under the view"
            )));
        }
    }

    let rule = gauss_legendre(spec.nodes_per_panel);
    let step = (p_hi - p_lo) / spec.panels as f64;
    let edges: Vec<f64> = (0..=spec.panels)
        .map(|i| {
            // count from the nearer end so symmetric panels get symmetric edges
            let p = if 2 * i <= spec.panels {
                p_lo + i as f64 * step
            } else {
                p_hi - (spec.panels - i) as f64 * step
            };
            law.quantile(p)
        })
        .collect();

    let mut nodes = Vec::with_capacity(spec.panels * spec.nodes_per_panel);
    let mut weights = Vec::with_capacity(nodes.capacity());
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in rule.0.iter().zip(&rule.1) {
            let z = mid + half * x;
            let weight = w * half * law.pdf(z);
            if weight > 0.0 {
                nodes.push(model.level(z));
                weights.push(weight);
            }
        }
    }
    let mut grid = ScenarioGrid::from_parts(nodes, weights)?;
    grid.domain = (model.level(edges[0]), model.level(edges[spec.panels]));
    Ok(grid)
}

/// `n` draws of the underlying at maturity, deterministic in `seed`.
pub fn sample(model: &ViewModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 {
        return Err(Error::Validation("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws = std_draws(model, &mut rng, n);
    Ok(draws.into_iter().map(|z| model.level(z)).collect())
}

/// Draws conditioned on the underlying landing in `[lo, hi]` (rejection).
pub fn sample_within(model: &ViewModel, n: usize, seed: u64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    model.validate()?;
    if n == 0 || !(lo < hi) {
        return Err(Error::Validation("need n > 0 and lo < hi".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let batch = std_draws(model, &mut rng, (n - out.len()).max(1024));
        out.extend(
            batch
                .into_iter()
                .map(|z| model.level(z))
                .filter(|x| *x >= lo && *x <= hi)
                .take(n - out.len()),
        );
    }
    Ok(out)
}

fn std_draws(model: &ViewModel, rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if model.is_gaussian() {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    } else {
        let t = StudentT::new(model.nu).expect("validated nu");
        (0..n).map(|_| t.sample(rng)).collect()
    }
}
