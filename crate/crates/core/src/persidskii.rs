//! Persidskii form of the current-error dynamics, the integral Lyapunov
//! function built from the branch nonlinearities, and the LMI certificate
//! for input-to-state stability.
//!
//! The error dynamics
//!
//! ```text
//! dĩ/dt = A ĩ + Σ_k A_k r_k(ĩ) + φ,   A_k = −(1/l_g) I,   φ = −(1/l_g) ṽ_g
//! ```
//!
//! are certified with
//!
//! ```text
//! V(ĩ) = ĩᵀ P ĩ + 2 Σ_k Σ_j Λ_{k,j} ∫₀^{ĩ_j} r_k^j(τ) dτ
//! ```
//!
//! through three matrix inequalities: `P + Σ Λ_k ≻ 0`, a positivity
//! condition on the regularizer sum `Ξ`, and `Ψ ⪯ 0`, where `Ψ` is the
//! quadratic form of `V̇` plus regularizers in the stacked coordinates
//! `z = (ĩ, r_1, …, r_M, φ)`.
//!
//! Two layouts of `Ψ` are available. [`PsiMode::Rederived`] (the default) is
//! rebuilt from the expansion of `V̇` so that
//!
//! ```text
//! zᵀΨz = V̇ + ĩᵀΩ₀ĩ + Σ r_kᵀΩ_k r_k + 2Σ ĩᵀΥ_{0,k} r_k + 2Σ_{s<l} r_sᵀΥ_{s,l} r_l − φᵀΦφ
//! ```
//!
//! holds exactly; the disturbance block is `−Φ` and the off-diagonal branch
//! blocks are `−(Λ_s + Λ_l)/l_g + Υ_{s,l}`. [`PsiMode::Verbatim`] keeps the
//! published block list (`+Φ` in the corner, `−2Λ_l/l_g + Υ_{s,l}` off the
//! diagonal) for comparison only; with `Φ ≠ 0` it can never be negative
//! semidefinite.
//!
//! With sector nonlinearities and diagonal nonnegative `Υ`, every cross term
//! above is nonnegative, so a valid certificate yields
//! `V̇ ≤ −ς‖ĩ‖² + α‖ṽ_g‖²` with `ς = λ_min(Ω₀)`, `α = λ_max(Φ)/l_g²`, and the
//! gain slope `√(α/ς)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{block_assemble, is_neg_semidef, is_pos_def, sym_eig, BlockGrid, Mat};
use crate::plant::{error_derivative, system_matrix, DqVec, GridParams};
use crate::vr::{classify_bank, BankClassification, VrBank, DEFAULT_PROBE_RANGE, DEFAULT_PROBE_SAMPLES};

/// Layout used when assembling `Ψ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiMode {
    Verbatim,
    #[default]
    Rederived,
}

impl std::str::FromStr for PsiMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "verbatim" => Ok(PsiMode::Verbatim),
            "rederived" => Ok(PsiMode::Rederived),
            other => Err(Error::param("mode", format!("expected verbatim|rederived, got {other}"))),
        }
    }
}

impl std::fmt::Display for PsiMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PsiMode::Verbatim => "verbatim",
            PsiMode::Rederived => "rederived",
        })
    }
}

/// Warning attached to every verbatim assembly with two or more branches.
pub const VERBATIM_DUPLICATE_LAMBDA_WARNING: &str =
    "verbatim Psi: off-diagonal branch blocks use -(1/l_g)Lambda_l twice instead of -(1/l_g)(Lambda_s + Lambda_l)";

/// Warnings that apply to a given assembly mode and branch count.
pub fn psi_warnings(mode: PsiMode, m: usize) -> Vec<String> {
    let mut w = Vec::new();
    if mode == PsiMode::Verbatim {
        if m >= 2 {
            w.push(VERBATIM_DUPLICATE_LAMBDA_WARNING.to_string());
        }
        w.push("verbatim Psi: disturbance corner block is +Phi; Psi <= 0 then forces Phi = 0".to_string());
    }
    w
}

/// `dx/dt = A₀ x + Σ_k A_k f_k(x) + φ` specialised to the current-error loop.
#[derive(Debug, Clone)]
pub struct PersidskiiModel {
    pub a0: Mat,
    pub ak: Vec<Mat>,
    /// `1/l_g`; the disturbance enters as `φ = −disturbance_scale · ṽ_g`.
    pub disturbance_scale: f64,
    pub bank: VrBank,
    pub classification: BankClassification,
}

/// Builds the Persidskii model; refuses banks that fail the sector check.
pub fn to_persidskii(p: &GridParams, bank: &VrBank) -> Result<PersidskiiModel> {
    let classification = classify_bank(bank, DEFAULT_PROBE_RANGE, DEFAULT_PROBE_SAMPLES)?;
    let inv_l = 1.0 / p.l_g();
    Ok(PersidskiiModel {
        a0: system_matrix(p),
        ak: vec![Mat::identity(2).scale(-inv_l); bank.branch_count()],
        disturbance_scale: inv_l,
        bank: bank.clone(),
        classification,
    })
}

impl PersidskiiModel {
    pub fn branch_count(&self) -> usize {
        self.ak.len()
    }

    pub fn derivative(&self, x: DqVec, v_g_err: DqVec) -> DqVec {
        let mut dx = x.transform(&self.a0);
        for (ak, branch) in self.ak.iter().zip(self.bank.branches()) {
            dx += branch.value(x).transform(ak);
        }
        dx + (-self.disturbance_scale) * v_g_err
    }
}

/// Margins of a verified certificate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    /// `λ_min(P + Σ Λ_k)`.
    pub sigma_margin: f64,
    /// `λ_min(Ω₀ + Σ Υ_{0,k} + Σ Ω_k + Σ Υ_{s,l})`.
    pub xi_margin: f64,
    /// `λ_max(Ψ)`, worst case over the checked parameter vertices.
    pub psi_margin: f64,
    /// `ς = λ_min(Ω₀)`.
    pub varsigma: f64,
    /// `α = λ_max(Φ)/l_g²`.
    pub alpha: f64,
}

impl Margins {
    pub fn scaled(&self, c: f64) -> Margins {
        Margins {
            sigma_margin: self.sigma_margin * c,
            xi_margin: self.xi_margin * c,
            psi_margin: self.psi_margin * c,
            varsigma: self.varsigma * c,
            alpha: self.alpha * c,
        }
    }
}

/// Certificate matrices `(P, {Λ_k}, {Ω_s}, {Υ_{s,l}}, Φ)` plus, once
/// verified, their margins.
///
/// `upsilon` is stored in lexicographic `(s, l)` order for `0 ≤ s < l ≤ M`;
/// see [`upsilon_index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IssCertificate {
    pub p: Mat,
    pub lambda: Vec<Mat>,
    pub omega: Vec<Mat>,
    pub upsilon: Vec<Mat>,
    pub phi: Mat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<Margins>,
}

/// Number of `Υ_{s,l}` blocks for `M` branches.
pub fn upsilon_count(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Position of `Υ_{s,l}` (`0 ≤ s < l ≤ M`) in [`IssCertificate::upsilon`].
pub fn upsilon_index(m: usize, s: usize, l: usize) -> usize {
    assert!(s < l && l <= m, "upsilon index ({s},{l}) out of range for M = {m}");
    (0..s).map(|t| m - t).sum::<usize>() + (l - s - 1)
}

fn zero2() -> Mat {
    Mat::zeros(2, 2)
}

fn diag_entries(m: &Mat) -> [f64; 2] {
    [m[(0, 0)], m[(1, 1)]]
}

impl IssCertificate {
    /// All-zero certificate for `M` branches.
    pub fn zeros(m: usize) -> Self {
        IssCertificate {
            p: zero2(),
            lambda: vec![zero2(); m],
            omega: vec![zero2(); m + 1],
            upsilon: vec![zero2(); upsilon_count(m)],
            phi: zero2(),
            margins: None,
        }
    }

    pub fn branch_count(&self) -> usize {
        self.lambda.len()
    }

    pub fn check_dims(&self) -> Result<()> {
        let m = self.branch_count();
        let bad = |what: &str| Err(Error::Dimension(format!("certificate {what} has wrong size for M = {m}")));
        if self.omega.len() != m + 1 {
            return bad("omega list");
        }
        if self.upsilon.len() != upsilon_count(m) {
            return bad("upsilon list");
        }
        let all = std::iter::once(&self.p)
            .chain(&self.lambda)
            .chain(&self.omega)
            .chain(&self.upsilon)
            .chain(std::iter::once(&self.phi));
        for mat in all {
            if mat.rows() != 2 || mat.cols() != 2 {
                return bad("block");
            }
            if !mat.is_finite() {
                return Err(Error::InvalidCertificate("non-finite entry".into()));
            }
        }
        Ok(())
    }

    fn check_bank(&self, bank: &VrBank) -> Result<()> {
        self.check_dims()?;
        if self.branch_count() != bank.branch_count() {
            return Err(Error::Dimension(format!(
                "certificate has {} branch multipliers, bank has {} branches",
                self.branch_count(),
                bank.branch_count()
            )));
        }
        Ok(())
    }

    pub fn upsilon_at(&self, s: usize, l: usize) -> &Mat {
        &self.upsilon[upsilon_index(self.branch_count(), s, l)]
    }

    /// Every matrix multiplied by `c`; margins scale along.
    pub fn scaled(&self, c: f64) -> IssCertificate {
        IssCertificate {
            p: self.p.scale(c),
            lambda: self.lambda.iter().map(|m| m.scale(c)).collect(),
            omega: self.omega.iter().map(|m| m.scale(c)).collect(),
            upsilon: self.upsilon.iter().map(|m| m.scale(c)).collect(),
            phi: self.phi.scale(c),
            margins: self.margins.map(|mg| mg.scaled(c)),
        }
    }

    pub fn varsigma(&self) -> Option<f64> {
        self.margins.map(|m| m.varsigma)
    }

    pub fn alpha(&self) -> Option<f64> {
        self.margins.map(|m| m.alpha)
    }
}

/// `V(ĩ)`.
pub fn lyapunov_value(cert: &IssCertificate, bank: &VrBank, i_err: DqVec) -> Result<f64> {
    cert.check_bank(bank)?;
    Ok(lyapunov_value_unchecked(cert, bank, i_err))
}

pub(crate) fn lyapunov_value_unchecked(cert: &IssCertificate, bank: &VrBank, x: DqVec) -> f64 {
    let px = x.transform(&cert.p);
    let mut v = x.dot(px);
    for (lam, branch) in cert.lambda.iter().zip(bank.branches()) {
        let [l0, l1] = diag_entries(lam);
        v += 2.0 * (l0 * branch.axis_primitive(0, x.d) + l1 * branch.axis_primitive(1, x.q));
    }
    v
}

/// `∇V(ĩ) = 2Pĩ + 2 Σ_k Λ_k r_k(ĩ)`.
pub fn lyapunov_gradient(cert: &IssCertificate, bank: &VrBank, i_err: DqVec) -> Result<DqVec> {
    cert.check_bank(bank)?;
    Ok(lyapunov_gradient_unchecked(cert, bank, i_err))
}

pub(crate) fn lyapunov_gradient_unchecked(cert: &IssCertificate, bank: &VrBank, x: DqVec) -> DqVec {
    let mut g = 2.0 * x.transform(&cert.p);
    for (lam, branch) in cert.lambda.iter().zip(bank.branches()) {
        g += 2.0 * branch.value(x).transform(lam);
    }
    g
}

/// Disturbance coordinate of `z`: `φ = −ṽ_g / l_g`.
pub fn disturbance_coordinate(p: &GridParams, v_g_err: DqVec) -> DqVec {
    (-1.0 / p.l_g()) * v_g_err
}

/// Stacked `z = (ĩ, r_1(ĩ), …, r_M(ĩ), φ)`.
pub fn stacked_coordinates(p: &GridParams, bank: &VrBank, i_err: DqVec, v_g_err: DqVec) -> Vec<f64> {
    let mut z = Vec::with_capacity(2 * (bank.branch_count() + 2));
    z.extend(i_err.as_array());
    for r in bank.branch_values(i_err) {
        z.extend(r.as_array());
    }
    z.extend(disturbance_coordinate(p, v_g_err).as_array());
    z
}

/// Builds the block grid of `Ψ` for `M = cert.branch_count()`.
#[allow(clippy::needless_range_loop)]
fn psi_blocks(a: &Mat, l_g: f64, cert: &IssCertificate, mode: PsiMode) -> BlockGrid {
    let m = cert.branch_count();
    let n = m + 2;
    let inv_l = 1.0 / l_g;
    let at = a.transpose();
    let mut grid: BlockGrid = vec![vec![None; n]; n];

    grid[0][0] = Some(&(&(&at * &cert.p) + &(&cert.p * a)) + &cert.omega[0]);
    for k in 1..=m {
        let lam = &cert.lambda[k - 1];
        grid[0][k] = Some(&(&cert.p.scale(-inv_l) + &(&at * lam)) + cert.upsilon_at(0, k));
        grid[k][k] = Some(&lam.scale(-2.0 * inv_l) + &cert.omega[k]);
        grid[k][n - 1] = Some(lam.clone());
        for l in k + 1..=m {
            let coupling = match mode {
                PsiMode::Rederived => (&cert.lambda[k - 1] + &cert.lambda[l - 1]).scale(-inv_l),
                PsiMode::Verbatim => cert.lambda[l - 1].scale(-2.0 * inv_l),
            };
            grid[k][l] = Some(&coupling + cert.upsilon_at(k, l));
        }
    }
    grid[0][n - 1] = Some(cert.p.clone());
    grid[n - 1][n - 1] = Some(match mode {
        PsiMode::Rederived => cert.phi.scale(-1.0),
        PsiMode::Verbatim => cert.phi.clone(),
    });
    grid
}

/// Assembles the `2(M+2)`-dimensional symmetric matrix `Ψ`.
pub fn assemble_psi(p: &GridParams, cert: &IssCertificate, mode: PsiMode) -> Result<Mat> {
    cert.check_dims()?;
    let n = cert.branch_count() + 2;
    block_assemble(&psi_blocks(&system_matrix(p), p.l_g(), cert, mode), n)
}

/// `P + Σ Λ_k`.
pub fn lmi_p_matrix(cert: &IssCertificate) -> Mat {
    cert.lambda.iter().fold(cert.p.clone(), |acc, l| &acc + l).symmetrized()
}

/// `Ω₀ + Σ Υ_{0,k} + Σ Ω_k + Σ_{1≤s<l} Υ_{s,l}`, i.e. every Ω and Υ block summed.
pub fn lmi_xi_matrix(cert: &IssCertificate) -> Mat {
    cert.omega
        .iter()
        .chain(&cert.upsilon)
        .fold(zero2(), |acc, m| &acc + m)
        .symmetrized()
}

/// Regularizer sum `ĩᵀΩ₀ĩ + Σ r_kᵀΩ_k r_k + 2Σ ĩᵀΥ_{0,k} r_k + 2Σ r_sᵀΥ_{s,l} r_l`.
pub fn regularizer_terms(cert: &IssCertificate, bank: &VrBank, i_err: DqVec) -> f64 {
    let m = cert.branch_count();
    let mut blocks = Vec::with_capacity(m + 1);
    blocks.push(i_err);
    blocks.extend(bank.branch_values(i_err));
    let mut acc = 0.0;
    for s in 0..=m {
        acc += blocks[s].dot(blocks[s].transform(&cert.omega[s]));
        for l in s + 1..=m {
            acc += 2.0 * blocks[s].dot(blocks[l].transform(cert.upsilon_at(s, l)));
        }
    }
    acc
}

/// Structural conditions on the certificate: `P ⪰ 0`, `Φ ⪰ 0`, Λ/Ω/Υ diagonal
/// and entrywise nonnegative. Returns human-readable failures.
pub fn structure_violations(cert: &IssCertificate, tol: f64) -> Result<Vec<String>> {
    cert.check_dims()?;
    let mut out = Vec::new();
    let psd = |name: &str, m: &Mat, out: &mut Vec<String>| -> Result<()> {
        if (m[(0, 1)] - m[(1, 0)]).abs() > 1e-12 * m.max_abs().max(1.0) {
            out.push(format!("{name} is not symmetric"));
            return Ok(());
        }
        let lo = sym_eig(&m.symmetrized())?.min();
        if lo < -tol {
            out.push(format!("{name} is not positive semidefinite (lambda_min = {lo:e})"));
        }
        Ok(())
    };
    psd("P", &cert.p, &mut out)?;
    psd("Phi", &cert.phi, &mut out)?;
    let mut diag_nonneg = |name: String, m: &Mat| {
        if m[(0, 1)] != 0.0 || m[(1, 0)] != 0.0 {
            out.push(format!("{name} is not diagonal"));
        }
        for j in 0..2 {
            if m[(j, j)] < 0.0 {
                out.push(format!("{name}[{j},{j}] = {:e} is negative", m[(j, j)]));
            }
        }
    };
    for (k, m) in cert.lambda.iter().enumerate() {
        diag_nonneg(format!("Lambda_{}", k + 1), m);
    }
    for (s, m) in cert.omega.iter().enumerate() {
        diag_nonneg(format!("Omega_{s}"), m);
    }
    let mm = cert.branch_count();
    for s in 0..=mm {
        for l in s + 1..=mm {
            diag_nonneg(format!("Upsilon_{s},{l}"), cert.upsilon_at(s, l));
        }
    }
    Ok(out)
}

/// Outcome of [`verify_certificate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub valid: bool,
    pub mode: PsiMode,
    pub margins: Margins,
    pub lmi_p_holds: bool,
    pub lmi_xi_holds: bool,
    pub lmi_psi_holds: bool,
    pub structure_violations: Vec<String>,
    pub warnings: Vec<String>,
    pub tol: f64,
}

/// Checks the three LMIs (rederived `Ψ`) at the given parameters.
pub fn verify_certificate(
    p: &GridParams,
    bank: &VrBank,
    cert: &IssCertificate,
    tol: f64,
) -> Result<VerificationReport> {
    verify_certificate_at(std::slice::from_ref(p), bank, cert, tol, PsiMode::Rederived)
}

/// Checks the LMIs at every parameter vertex (all sharing `l_g`); the `Ψ`
/// margin is the worst case over vertices.
pub fn verify_certificate_at(
    vertices: &[GridParams],
    bank: &VrBank,
    cert: &IssCertificate,
    tol: f64,
    mode: PsiMode,
) -> Result<VerificationReport> {
    let first = vertices
        .first()
        .ok_or_else(|| Error::param("vertices", "need at least one parameter set"))?;
    if vertices.iter().any(|v| v.l_g() != first.l_g()) {
        return Err(Error::param("vertices", "all vertices must share l_g"));
    }
    cert.check_bank(bank)?;
    classify_bank(bank, DEFAULT_PROBE_RANGE, DEFAULT_PROBE_SAMPLES)?;

    let lp = is_pos_def(&lmi_p_matrix(cert), 0.0)?;
    let lxi = is_pos_def(&lmi_xi_matrix(cert), 0.0)?;
    let mut psi_margin = f64::NEG_INFINITY;
    for v in vertices {
        let d = is_neg_semidef(&assemble_psi(v, cert, mode)?, tol)?;
        psi_margin = psi_margin.max(d.margin);
    }
    let lmi_psi_holds = psi_margin <= tol;
    let varsigma = sym_eig(&cert.omega[0].symmetrized())?.min();
    let alpha = sym_eig(&cert.phi.symmetrized())?.max() / (first.l_g() * first.l_g());
    let structure = structure_violations(cert, tol)?;

    Ok(VerificationReport {
        valid: lp.holds && lxi.holds && lmi_psi_holds && structure.is_empty(),
        mode,
        margins: Margins {
            sigma_margin: lp.margin,
            xi_margin: lxi.margin,
            psi_margin,
            varsigma,
            alpha,
        },
        lmi_p_holds: lp.holds,
        lmi_xi_holds: lxi.holds,
        lmi_psi_holds,
        structure_violations: structure,
        warnings: psi_warnings(mode, cert.branch_count()),
        tol,
    })
}

/// ISS gain slope `√(α/ς)` from the stored margins.
pub fn iss_gain(cert: &IssCertificate) -> Result<f64> {
    let m = cert
        .margins
        .ok_or_else(|| Error::InvalidCertificate("certificate carries no margins; verify it first".into()))?;
    if !(m.varsigma > 0.0) {
        return Err(Error::InvalidCertificate(format!(
            "varsigma = {} must be > 0",
            m.varsigma
        )));
    }
    if !(m.alpha >= 0.0) {
        return Err(Error::InvalidCertificate(format!("alpha = {} must be >= 0", m.alpha)));
    }
    Ok((m.alpha / m.varsigma).sqrt())
}

/// Value of `V̇` along the error dynamics, `∇V(ĩ)ᵀ dĩ/dt`.
pub fn lyapunov_derivative(
    p: &GridParams,
    cert: &IssCertificate,
    bank: &VrBank,
    i_err: DqVec,
    v_g_err: DqVec,
) -> Result<f64> {
    cert.check_bank(bank)?;
    let grad = lyapunov_gradient_unchecked(cert, bank, i_err);
    Ok(grad.dot(error_derivative(p, i_err, bank, v_g_err)))
}

/// Which Lyapunov candidate the sampled first-order check uses.
#[derive(Debug, Clone)]
pub enum LyapunovSpec<'a> {
    Certificate(&'a IssCertificate),
    /// `V = ĩᵀPĩ`.
    Quadratic(Mat),
}

/// Grid settings for [`theorem1_sampled_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Config {
    pub epsilon: f64,
    /// A.
    pub grid_radius: f64,
    /// Per axis; odd so that the origin is sampled.
    pub grid_points: usize,
}

impl Default for Theorem1Config {
    fn default() -> Self {
        Theorem1Config {
            epsilon: 1e-3,
            grid_radius: 50.0,
            grid_points: 201,
        }
    }
}

impl Theorem1Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be finite and > 0"));
        }
        if !(self.grid_radius > 0.0 && self.grid_radius.is_finite()) {
            return Err(Error::param("grid_radius", "must be finite and > 0"));
        }
        if self.grid_points < 11 || self.grid_points.is_multiple_of(2) {
            return Err(Error::param("grid_points", "must be odd and >= 11"));
        }
        Ok(())
    }
}

/// Result of [`theorem1_sampled_check`]. Sampling can falsify the condition
/// but never proves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Theorem1Report {
    pub passes: bool,
    pub max_value: f64,
    pub argmax: DqVec,
    pub violation_count: usize,
    /// First violating grid points (at most 32).
    pub violations: Vec<DqVec>,
    /// `1/(2 l_g ε)`, the disturbance weight in the implied bound
    /// `V̇ ≤ −‖ĩ‖² + ‖ṽ_g‖²/(2 l_g ε)`.
    pub disturbance_weight: f64,
}

/// Left-hand side of the first-order ISS condition at one point:
/// `∇VᵀAĩ − (1/l_g) Σ ∇Vᵀ r_k^l(ĩ) + ‖ĩ‖² + (ε/2l_g)‖∇V‖²`.
pub fn theorem1_lhs(p: &GridParams, bank: &VrBank, v: &LyapunovSpec<'_>, epsilon: f64, x: DqVec) -> f64 {
    let grad = match v {
        LyapunovSpec::Certificate(c) => lyapunov_gradient_unchecked(c, bank, x),
        LyapunovSpec::Quadratic(pm) => 2.0 * x.transform(pm),
    };
    let inv_l = 1.0 / p.l_g();
    grad.dot(x.transform(&system_matrix(p))) - inv_l * grad.dot(bank.value(x))
        + x.norm_sq()
        + 0.5 * epsilon * inv_l * grad.norm_sq()
}

/// Evaluates the first-order ISS condition on `[−R, R]²`.
pub fn theorem1_sampled_check(
    p: &GridParams,
    bank: &VrBank,
    v: &LyapunovSpec<'_>,
    cfg: &Theorem1Config,
) -> Result<Theorem1Report> {
    cfg.validate()?;
    match v {
        LyapunovSpec::Certificate(c) => c.check_bank(bank)?,
        LyapunovSpec::Quadratic(pm) => {
            if pm.rows() != 2 || pm.cols() != 2 {
                return Err(Error::Dimension("quadratic P must be 2x2".into()));
            }
        }
    }
    let n = cfg.grid_points;
    let half = (n / 2) as f64;
    let coord = |i: usize| cfg.grid_radius * (i as f64 - half) / half;
    let mut max_value = f64::NEG_INFINITY;
    let mut argmax = DqVec::ZERO;
    let mut violation_count = 0;
    let mut violations = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let x = DqVec::new(coord(i), coord(j));
            let val = theorem1_lhs(p, bank, v, cfg.epsilon, x);
            if val > max_value {
                max_value = val;
                argmax = x;
            }
            if val > 0.0 {
                violation_count += 1;
                if violations.len() < 32 {
                    violations.push(x);
                }
            }
        }
    }
    Ok(Theorem1Report {
        passes: max_value <= 0.0,
        max_value,
        argmax,
        violation_count,
        violations,
        disturbance_weight: 1.0 / (2.0 * p.l_g() * cfg.epsilon),
    })
}
