//! Virtual-resistance nonlinearities.
//!
//! A [`VrBank`] is a parallel sum of [`VrBranch`]es; each branch is a series
//! sum of static scalar [`VrElement`]s applied independently on the d and q
//! axes. Every shipped element kind is odd and satisfies the sector property
//! `x·r(x) > 0` for `x ≠ 0` whenever its parameters are positive:
//!
//! * linear `Kx`, cubic `Kx³`: sign of `x` times a positive factor;
//! * `a·sinh(bx)` and `a·tanh(bx)`: `sinh`/`tanh` are odd and strictly increasing;
//! * saturation `K·clamp(x, −x_sat, x_sat)`: `x·r(x) = K·|x|·min(|x|, x_sat)`.
//!
//! Tabulated elements are user data, so their sector property is only checked
//! by sampling in [`classify_bank`].

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::plant::DqVec;

/// Raw description of a scalar element, as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ElementKind {
    /// `K x`
    Linear { k: f64 },
    /// `K x³`
    Cubic { k: f64 },
    /// `a sinh(b x)`
    Sinh { a: f64, b: f64 },
    /// `K clamp(x, −x_sat, x_sat)`
    #[serde(alias = "deadzone_saturation")]
    Saturation { k: f64, x_sat: f64 },
    /// `a tanh(b x)`
    TanhSaturation { a: f64, b: f64 },
    /// Odd piecewise-linear map through `(0, 0)` and the listed `(x, y)`
    /// points (`x > 0`, strictly increasing), extended past the last point
    /// with the slope of the last segment.
    Tabulated { points: Vec<[f64; 2]> },
}

/// Tail behaviour of a scalar map as `|x| → ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    /// `|r(x)| → ∞`.
    Unbounded,
    /// `r` bounded but `∫₀ˣ r → ∞`.
    IntegrallyUnbounded,
    /// Neither.
    Bounded,
}

/// A validated scalar virtual-resistance element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ElementKind", into = "ElementKind")]
pub struct VrElement(ElementKind);

impl TryFrom<ElementKind> for VrElement {
    type Error = Error;
    fn try_from(kind: ElementKind) -> Result<Self> {
        VrElement::new(kind)
    }
}

impl From<VrElement> for ElementKind {
    fn from(e: VrElement) -> Self {
        e.0
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be finite and > 0, got {v}")))
    }
}

/// `ln cosh(y)` without overflow and without cancellation near 0.
fn ln_cosh(y: f64) -> f64 {
    let ay = y.abs();
    if ay < 0.5 {
        let h = (0.5 * ay).sinh();
        (2.0 * h * h).ln_1p()
    } else {
        ay + (-2.0 * ay).exp().ln_1p() - std::f64::consts::LN_2
    }
}

/// `cosh(y) − 1` without cancellation near 0.
fn cosh_m1(y: f64) -> f64 {
    let h = (0.5 * y).sinh();
    2.0 * h * h
}

impl VrElement {
    /// Validates parameters: gains positive and finite, tables well formed.
    pub fn new(kind: ElementKind) -> Result<Self> {
        match &kind {
            ElementKind::Linear { k } | ElementKind::Cubic { k } => positive("k", *k)?,
            ElementKind::Sinh { a, b } | ElementKind::TanhSaturation { a, b } => {
                positive("a", *a)?;
                positive("b", *b)?;
            }
            ElementKind::Saturation { k, x_sat } => {
                positive("k", *k)?;
                positive("x_sat", *x_sat)?;
            }
            ElementKind::Tabulated { points } => {
                if points.is_empty() {
                    return Err(Error::param("points", "table needs at least one point"));
                }
                let mut prev = 0.0;
                for (i, [x, y]) in points.iter().enumerate() {
                    if !x.is_finite() || !y.is_finite() {
                        return Err(Error::param("points", format!("point {i} is not finite")));
                    }
                    if *x <= prev {
                        return Err(Error::param(
                            "points",
                            format!("x must be > 0 and strictly increasing (point {i})"),
                        ));
                    }
                    prev = *x;
                }
            }
        }
        Ok(VrElement(kind))
    }

    pub fn linear(k: f64) -> Result<Self> {
        VrElement::new(ElementKind::Linear { k })
    }

    pub fn cubic(k: f64) -> Result<Self> {
        VrElement::new(ElementKind::Cubic { k })
    }

    pub fn sinh(a: f64, b: f64) -> Result<Self> {
        VrElement::new(ElementKind::Sinh { a, b })
    }

    pub fn saturation(k: f64, x_sat: f64) -> Result<Self> {
        VrElement::new(ElementKind::Saturation { k, x_sat })
    }

    pub fn tanh_saturation(a: f64, b: f64) -> Result<Self> {
        VrElement::new(ElementKind::TanhSaturation { a, b })
    }

    pub fn tabulated(points: Vec<[f64; 2]>) -> Result<Self> {
        VrElement::new(ElementKind::Tabulated { points })
    }

    pub fn kind(&self) -> &ElementKind {
        &self.0
    }

    /// True for kinds whose sector property holds by construction.
    pub fn sector_by_construction(&self) -> bool {
        !matches!(self.0, ElementKind::Tabulated { .. })
    }

    /// Element value; errors on non-finite input.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("element input x = {x}")));
        }
        Ok(self.value(x))
    }

    /// Element value without input checks.
    pub fn value(&self, x: f64) -> f64 {
        match &self.0 {
            ElementKind::Linear { k } => k * x,
            ElementKind::Cubic { k } => k * x * x * x,
            ElementKind::Sinh { a, b } => a * (b * x).sinh(),
            ElementKind::Saturation { k, x_sat } => k * x.clamp(-x_sat, *x_sat),
            ElementKind::TanhSaturation { a, b } => a * (b * x).tanh(),
            ElementKind::Tabulated { points } => {
                let y = table_value(points, x.abs());
                if x < 0.0 {
                    -y
                } else {
                    y
                }
            }
        }
    }

    /// `∫₀ˣ r(τ) dτ` in closed form.
    pub fn primitive(&self, x: f64) -> f64 {
        match &self.0 {
            ElementKind::Linear { k } => 0.5 * k * x * x,
            ElementKind::Cubic { k } => 0.25 * k * x.powi(4),
            ElementKind::Sinh { a, b } => a / b * cosh_m1(b * x),
            ElementKind::TanhSaturation { a, b } => a / b * ln_cosh(b * x),
            ElementKind::Saturation { k, x_sat } => {
                let ax = x.abs();
                if ax <= *x_sat {
                    0.5 * k * ax * ax
                } else {
                    k * x_sat * (ax - 0.5 * x_sat)
                }
            }
            // odd map ⇒ even primitive
            ElementKind::Tabulated { points } => table_primitive(points, x.abs()),
        }
    }

    /// Analytic tail classification.
    pub fn growth(&self) -> Growth {
        match &self.0 {
            ElementKind::Linear { .. } | ElementKind::Cubic { .. } | ElementKind::Sinh { .. } => {
                Growth::Unbounded
            }
            ElementKind::Saturation { .. } | ElementKind::TanhSaturation { .. } => {
                Growth::IntegrallyUnbounded
            }
            ElementKind::Tabulated { points } => {
                let (slope, y_last) = table_tail(points);
                if slope > 0.0 {
                    Growth::Unbounded
                } else if slope == 0.0 && y_last > 0.0 {
                    Growth::IntegrallyUnbounded
                } else {
                    Growth::Bounded
                }
            }
        }
    }
}

fn table_tail(points: &[[f64; 2]]) -> (f64, f64) {
    let n = points.len();
    let [x1, y1] = points[n - 1];
    let [x0, y0] = if n >= 2 { points[n - 2] } else { [0.0, 0.0] };
    ((y1 - y0) / (x1 - x0), y1)
}

/// Value at `x ≥ 0` of the piecewise-linear table through the origin.
fn table_value(points: &[[f64; 2]], x: f64) -> f64 {
    let mut prev = [0.0, 0.0];
    for p in points {
        if x <= p[0] {
            return prev[1] + (p[1] - prev[1]) * (x - prev[0]) / (p[0] - prev[0]);
        }
        prev = *p;
    }
    let (slope, y_last) = table_tail(points);
    y_last + slope * (x - prev[0])
}

/// `∫₀ˣ` of the table for `x ≥ 0` (trapezoids are exact on linear pieces).
fn table_primitive(points: &[[f64; 2]], x: f64) -> f64 {
    let mut acc = 0.0;
    let mut prev = [0.0, 0.0];
    for p in points {
        if x <= p[0] {
            let y = table_value(points, x);
            return acc + 0.5 * (prev[1] + y) * (x - prev[0]);
        }
        acc += 0.5 * (prev[1] + p[1]) * (p[0] - prev[0]);
        prev = *p;
    }
    let y = table_value(points, x);
    acc + 0.5 * (prev[1] + y) * (x - prev[0])
}

/// Series interconnection of elements. The d and q axes may carry different
/// element lists; by default they share one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrBranch {
    elements: Vec<VrElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_elements: Option<Vec<VrElement>>,
}

impl VrBranch {
    /// Same element list on both axes.
    pub fn uniform(elements: Vec<VrElement>) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::param("elements", "a branch needs at least one element"));
        }
        Ok(VrBranch {
            elements,
            q_elements: None,
        })
    }

    /// Distinct element lists for the d and q axes.
    pub fn per_axis(d: Vec<VrElement>, q: Vec<VrElement>) -> Result<Self> {
        if d.is_empty() || q.is_empty() {
            return Err(Error::param("elements", "a branch needs at least one element per axis"));
        }
        Ok(VrBranch {
            elements: d,
            q_elements: Some(q),
        })
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.elements.is_empty() || self.q_elements.as_ref().is_some_and(Vec::is_empty) {
            return Err(Error::param("elements", "a branch needs at least one element"));
        }
        Ok(())
    }

    /// Elements acting on axis `j` (0 = d, 1 = q).
    pub fn axis_elements(&self, j: usize) -> &[VrElement] {
        match (j, &self.q_elements) {
            (1, Some(q)) => q,
            _ => &self.elements,
        }
    }

    /// Number of series elements on the longer axis list.
    pub fn series_len(&self) -> usize {
        self.elements
            .len()
            .max(self.q_elements.as_ref().map_or(0, Vec::len))
    }

    pub fn axis_value(&self, j: usize, x: f64) -> f64 {
        self.axis_elements(j).iter().map(|e| e.value(x)).sum()
    }

    pub fn axis_primitive(&self, j: usize, x: f64) -> f64 {
        self.axis_elements(j).iter().map(|e| e.primitive(x)).sum()
    }

    /// Tail class of the summed axis map: the strongest growth among its elements.
    pub fn axis_growth(&self, j: usize) -> Growth {
        self.axis_elements(j)
            .iter()
            .map(VrElement::growth)
            .min()
            .unwrap_or(Growth::Bounded)
    }

    pub fn eval(&self, x: DqVec) -> Result<DqVec> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("branch input {x:?}")));
        }
        Ok(self.value(x))
    }

    pub fn value(&self, x: DqVec) -> DqVec {
        DqVec::new(self.axis_value(0, x.d), self.axis_value(1, x.q))
    }

    /// Appends one element to both axis lists.
    pub fn push(&mut self, e: VrElement) {
        if let Some(q) = &mut self.q_elements {
            q.push(e.clone());
        }
        self.elements.push(e);
    }
}

/// Parallel sum of branches.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VrBank {
    #[serde(default)]
    branches: Vec<VrBranch>,
}

impl VrBank {
    pub fn new(branches: Vec<VrBranch>) -> Self {
        VrBank { branches }
    }

    pub fn empty() -> Self {
        VrBank::default()
    }

    pub fn single(elements: Vec<VrElement>) -> Result<Self> {
        Ok(VrBank::new(vec![VrBranch::uniform(elements)?]))
    }

    pub fn validate(&self) -> Result<()> {
        self.branches.iter().try_for_each(VrBranch::validate)
    }

    pub fn branches(&self) -> &[VrBranch] {
        &self.branches
    }

    pub fn branches_mut(&mut self) -> &mut [VrBranch] {
        &mut self.branches
    }

    /// Branch count `M`.
    pub fn branch_count(&self) -> usize {
        self.branches.len()
    }

    /// Longest series length `m` over all branches.
    pub fn series_len(&self) -> usize {
        self.branches.iter().map(VrBranch::series_len).max().unwrap_or(0)
    }

    pub fn eval(&self, x: DqVec) -> Result<DqVec> {
        if !x.is_finite() {
            return Err(Error::NonFinite(format!("bank input {x:?}")));
        }
        Ok(self.value(x))
    }

    /// `r(ĩ) = Σ_k r_k(ĩ)`; zero for an empty bank.
    pub fn value(&self, x: DqVec) -> DqVec {
        self.branches
            .iter()
            .fold(DqVec::ZERO, |acc, b| acc + b.value(x))
    }

    /// Individual branch outputs `r_k(ĩ)`.
    pub fn branch_values(&self, x: DqVec) -> Vec<DqVec> {
        self.branches.iter().map(|b| b.value(x)).collect()
    }

    /// SHA-256 over the canonical JSON encoding, hex encoded.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("bank serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Result of [`classify_bank`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankClassification {
    /// Branches whose maps are radially unbounded on both axes.
    pub p_index: usize,
    /// Branches whose primitives diverge on both axes (`p_index ≤ mu_index`).
    pub mu_index: usize,
    pub all_sector_valid: bool,
    /// Original branch indices, unbounded first, then integrally unbounded, then the rest.
    pub permutation: Vec<usize>,
}

fn branch_class(b: &VrBranch) -> Growth {
    b.axis_growth(0).max(b.axis_growth(1))
}

/// Sampled sector check plus analytic p/μ classification.
///
/// The sector property `x·r_k^j(x) > 0` is tested on a symmetric log-spaced
/// grid `±probe_range·10^{-8..0}` with `samples` points (0 excluded).
pub fn classify_bank(bank: &VrBank, probe_range: f64, samples: usize) -> Result<BankClassification> {
    positive("probe_range", probe_range)?;
    if samples < 100 {
        return Err(Error::param("samples", format!("need at least 100, got {samples}")));
    }
    bank.validate()?;

    let per_side = samples.div_ceil(2);
    let grid: Vec<f64> = (0..per_side)
        .map(|i| {
            let t = i as f64 / (per_side - 1) as f64;
            probe_range * 10f64.powf(-8.0 * (1.0 - t))
        })
        .collect();

    for (k, branch) in bank.branches().iter().enumerate() {
        for (j, axis) in [(0usize, 'd'), (1, 'q')] {
            for &mag in &grid {
                for x in [mag, -mag] {
                    let product = x * branch.axis_value(j, x);
                    if !(product > 0.0) {
                        return Err(Error::SectorViolation {
                            branch: k,
                            axis,
                            sample: x,
                            product,
                        });
                    }
                }
            }
        }
    }

    let mut permutation: Vec<usize> = (0..bank.branch_count()).collect();
    permutation.sort_by_key(|&k| branch_class(&bank.branches()[k]));
    let classes: Vec<Growth> = permutation
        .iter()
        .map(|&k| branch_class(&bank.branches()[k]))
        .collect();
    let p_index = classes.iter().filter(|c| **c == Growth::Unbounded).count();
    let mu_index = p_index
        + classes
            .iter()
            .filter(|c| **c == Growth::IntegrallyUnbounded)
            .count();
    Ok(BankClassification {
        p_index,
        mu_index,
        all_sector_valid: true,
        permutation,
    })
}

/// Repo-default probe range (A) for sector sampling.
pub const DEFAULT_PROBE_RANGE: f64 = 1.0e3;
/// Repo-default sample count for sector sampling.
pub const DEFAULT_PROBE_SAMPLES: usize = 2001;

/// Stock banks used for the scenario comparisons. Gains are repo choices.
pub mod presets {
    use super::*;

    /// `2 Ω` linear.
    pub fn linear() -> VrBank {
        VrBank::single(vec![VrElement::linear(2.0).unwrap()]).unwrap()
    }

    /// `0.5 Ω/A²` cubic.
    pub fn cubic() -> VrBank {
        VrBank::single(vec![VrElement::cubic(0.5).unwrap()]).unwrap()
    }

    /// linear(1) + cubic(0.25) in one branch.
    pub fn hybrid() -> VrBank {
        VrBank::single(vec![
            VrElement::linear(1.0).unwrap(),
            VrElement::cubic(0.25).unwrap(),
        ])
        .unwrap()
    }

    /// `1 V · sinh(1 A⁻¹ · x)`.
    pub fn sinh() -> VrBank {
        VrBank::single(vec![VrElement::sinh(1.0, 1.0).unwrap()]).unwrap()
    }

    /// Two branches: linear(1) + cubic(0.25), and sinh(0.5, 0.5) + tanh-saturation(5, 0.2).
    pub fn multi_branch() -> VrBank {
        VrBank::new(vec![
            VrBranch::uniform(vec![
                VrElement::linear(1.0).unwrap(),
                VrElement::cubic(0.25).unwrap(),
            ])
            .unwrap(),
            VrBranch::uniform(vec![
                VrElement::sinh(0.5, 0.5).unwrap(),
                VrElement::tanh_saturation(5.0, 0.2).unwrap(),
            ])
            .unwrap(),
        ])
    }
}
