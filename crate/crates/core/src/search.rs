//! Certificate search.
//!
//! Every constraint matrix (`P + ΣΛ`, `Ξ`, `Ψ` at each parameter vertex) is
//! linear in the free entries of the certificate, so the search works on a
//! flat variable vector `x` with precomputed basis matrices `B_i`. It
//! maximises the worst margin
//!
//! ```text
//! f(x) = min( λ_min(P+ΣΛ), λ_min(Ξ), −λ_max(Ψ_v) ∀v, λ_min(Ω₀) )
//! ```
//!
//! by projected, normalised subgradient ascent over the unit ball in
//! preconditioned coordinates `y_i = s_i x_i`. `f` is positively homogeneous,
//! so once a start reaches a positive margin the point is rescaled so the
//! worst margin equals the requested target.
//!
//! Start 0 is a structured point (`P = I`, small uniform `Λ`, `Υ` chosen to
//! cancel the diagonal coupling); the remaining starts are random. Starts run
//! in parallel and are merged deterministically (best margin, then lowest
//! index), so results depend only on the seed.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Mat};
use crate::persidskii::{
    assemble_psi, lmi_p_matrix, lmi_xi_matrix, psi_warnings, upsilon_count, verify_certificate_at,
    IssCertificate, Margins, PsiMode, VerificationReport,
};
use crate::plant::GridParams;
use crate::rng::SplitMix64;
use crate::vr::VrBank;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub starts: usize,
    pub max_iterations: usize,
    /// Worst absolute margin of the returned certificate.
    pub target_margin: f64,
    /// A start stops once its normalised margin reaches this value.
    pub stop_margin: f64,
    /// Initial step length in normalised coordinates.
    pub step0: f64,
    pub seed: u64,
    pub mode: PsiMode,
    /// Verification tolerance on `λ_max(Ψ)` and the structural checks.
    pub tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            starts: 32,
            max_iterations: 5000,
            target_margin: 1e-6,
            stop_margin: 1e-4,
            step0: 0.05,
            seed: 0x5EED,
            mode: PsiMode::Rederived,
            tol: 1e-9,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.starts == 0 {
            return Err(Error::param("starts", "must be >= 1"));
        }
        if self.max_iterations == 0 {
            return Err(Error::param("max_iterations", "must be >= 1"));
        }
        for (name, v) in [
            ("target_margin", self.target_margin),
            ("stop_margin", self.stop_margin),
            ("step0", self.step0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, "must be finite and > 0"));
            }
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::param("tol", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Normalised margins below this are treated as "no strictly feasible point found".
pub const SIGNIFICANT_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchReport {
    pub feasible: bool,
    /// Verified certificate (margins filled in) when feasible.
    pub certificate: Option<IssCertificate>,
    pub verification: Option<VerificationReport>,
    /// Margins of the best point found, before rescaling.
    pub best_margins: Margins,
    /// Worst margin in normalised coordinates.
    pub best_normalized_margin: f64,
    pub best_start: usize,
    pub iterations: usize,
    pub seed: u64,
    pub mode: PsiMode,
    pub warnings: Vec<String>,
}

/// Index layout of the flat variable vector.
#[derive(Debug, Clone, Copy)]
struct Layout {
    m: usize,
}

impl Layout {
    fn lambda(&self, k: usize) -> usize {
        3 + 2 * k
    }
    fn omega(&self, s: usize) -> usize {
        3 + 2 * self.m + 2 * s
    }
    fn upsilon(&self, u: usize) -> usize {
        3 + 2 * self.m + 2 * (self.m + 1) + 2 * u
    }
    fn phi(&self) -> usize {
        self.upsilon(upsilon_count(self.m))
    }
    fn len(&self) -> usize {
        self.phi() + 3
    }
    fn is_nonneg(&self, i: usize) -> bool {
        i >= 3 && i < self.phi()
    }

    fn cert_at(&self, x: &[f64]) -> IssCertificate {
        let sym = |o: usize| Mat::m2(x[o], x[o + 1], x[o + 1], x[o + 2]);
        let dg = |o: usize| Mat::diag(&[x[o], x[o + 1]]);
        IssCertificate {
            p: sym(0),
            lambda: (0..self.m).map(|k| dg(self.lambda(k))).collect(),
            omega: (0..=self.m).map(|s| dg(self.omega(s))).collect(),
            upsilon: (0..upsilon_count(self.m)).map(|u| dg(self.upsilon(u))).collect(),
            phi: sym(self.phi()),
            margins: None,
        }
    }

    fn vector_of(&self, c: &IssCertificate) -> Vec<f64> {
        let mut x = vec![0.0; self.len()];
        let put_sym = |x: &mut Vec<f64>, o: usize, m: &Mat| {
            x[o] = m[(0, 0)];
            x[o + 1] = 0.5 * (m[(0, 1)] + m[(1, 0)]);
            x[o + 2] = m[(1, 1)];
        };
        let put_dg = |x: &mut Vec<f64>, o: usize, m: &Mat| {
            x[o] = m[(0, 0)];
            x[o + 1] = m[(1, 1)];
        };
        put_sym(&mut x, 0, &c.p);
        for (k, m) in c.lambda.iter().enumerate() {
            put_dg(&mut x, self.lambda(k), m);
        }
        for (s, m) in c.omega.iter().enumerate() {
            put_dg(&mut x, self.omega(s), m);
        }
        for (u, m) in c.upsilon.iter().enumerate() {
            put_dg(&mut x, self.upsilon(u), m);
        }
        put_sym(&mut x, self.phi(), &c.phi);
        x
    }
}

/// Linear constraint family `x ↦ Σ x_i B_i` with its sign: `+1` for
/// "λ_min must be positive", `−1` for "λ_max must be negative".
struct Constraint {
    sign: f64,
    basis: Vec<Mat>,
}

impl Constraint {
    fn eval(&self, x: &[f64]) -> Mat {
        let n = self.basis[0].rows();
        let mut acc = vec![0.0; n * n];
        for (xi, b) in x.iter().zip(&self.basis) {
            if *xi != 0.0 {
                for (a, v) in acc.iter_mut().zip(b.as_slice()) {
                    *a += xi * v;
                }
            }
        }
        Mat::symmetric(n, acc).expect("square by construction")
    }

    /// Margin and a subgradient in `x`.
    fn margin(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = sym_eig(&self.eval(x))?;
        let k = if self.sign > 0.0 { 0 } else { e.eigenvalues.len() - 1 };
        let u = e.eigenvector(k);
        let grad = self
            .basis
            .iter()
            .map(|b| self.sign * b.quad_form(&u).expect("dimensions match"))
            .collect();
        Ok((self.sign * e.eigenvalues[k], grad))
    }
}

struct Problem {
    layout: Layout,
    constraints: Vec<Constraint>,
    /// Preconditioner: `y_i = scale_i · x_i`.
    scale: Vec<f64>,
}

impl Problem {
    fn new(vertices: &[GridParams], m: usize, mode: PsiMode) -> Result<Self> {
        let layout = Layout { m };
        let n = layout.len();
        let mut unit = vec![0.0; n];
        let mut lp = Vec::with_capacity(n);
        let mut lxi = Vec::with_capacity(n);
        let mut psi: Vec<Vec<Mat>> = vec![Vec::with_capacity(n); vertices.len()];
        for i in 0..n {
            unit[i] = 1.0;
            let c = layout.cert_at(&unit);
            lp.push(lmi_p_matrix(&c));
            lxi.push(lmi_xi_matrix(&c));
            for (v, p) in vertices.iter().enumerate() {
                psi[v].push(assemble_psi(p, &c, mode)?);
            }
            unit[i] = 0.0;
        }
        let mut constraints = vec![
            Constraint { sign: 1.0, basis: lp },
            Constraint { sign: 1.0, basis: lxi },
        ];
        constraints.extend(psi.into_iter().map(|basis| Constraint { sign: -1.0, basis }));

        let mut scale: Vec<f64> = (0..n)
            .map(|i| {
                constraints
                    .iter()
                    .map(|c| c.basis[i].frobenius_norm())
                    .fold(1.0f64, f64::max)
            })
            .collect();
        // P and Φ entries share one scale so PSD projection commutes with it
        for o in [0, layout.phi()] {
            let s = scale[o..o + 3].iter().cloned().fold(0.0, f64::max);
            scale[o..o + 3].iter_mut().for_each(|v| *v = s);
        }
        Ok(Problem {
            layout,
            constraints,
            scale,
        })
    }

    /// Worst margin and its subgradient in `x`.
    fn objective(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let l = self.layout;
        let o = l.omega(0);
        let (mut best, mut grad) = if x[o] <= x[o + 1] {
            let mut g = vec![0.0; x.len()];
            g[o] = 1.0;
            (x[o], g)
        } else {
            let mut g = vec![0.0; x.len()];
            g[o + 1] = 1.0;
            (x[o + 1], g)
        };
        for c in &self.constraints {
            let (v, g) = c.margin(x)?;
            if v < best {
                best = v;
                grad = g;
            }
        }
        Ok((best, grad))
    }

    fn to_x(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(y, s)| y / s).collect()
    }

    fn to_y(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(x, s)| x * s).collect()
    }

    fn project(&self, y: &mut [f64]) -> Result<()> {
        let l = self.layout;
        for (i, v) in y.iter_mut().enumerate() {
            if l.is_nonneg(i) && *v < 0.0 {
                *v = 0.0;
            }
        }
        for o in [0, l.phi()] {
            psd_clip(&mut y[o..o + 3])?;
        }
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            y.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(())
    }
}

/// Clips a symmetric 2x2 `(a, b, c)` to its nearest PSD matrix.
fn psd_clip(v: &mut [f64]) -> Result<()> {
    let e = sym_eig(&Mat::m2(v[0], v[1], v[1], v[2]))?;
    if e.eigenvalues[0] >= 0.0 {
        return Ok(());
    }
    let clipped: Vec<f64> = e.eigenvalues.iter().map(|l| l.max(0.0)).collect();
    let q = &e.eigenvectors;
    let mut out = [0.0; 3];
    for (k, lam) in clipped.iter().enumerate() {
        out[0] += lam * q[(0, k)] * q[(0, k)];
        out[1] += lam * q[(0, k)] * q[(1, k)];
        out[2] += lam * q[(1, k)] * q[(1, k)];
    }
    v.copy_from_slice(&out);
    Ok(())
}

/// Structured start for the rederived layout: `P = I`, `Λ_k = λI` with `λ`
/// small enough that the rotational coupling is dominated, `Υ_{0,k}` and
/// `Υ_{s,l}` cancelling the diagonal coupling, and `Φ` doubled until `Ψ` is
/// negative definite at every vertex.
fn structured_start(vertices: &[GridParams], m: usize, mode: PsiMode) -> Result<IssCertificate> {
    let l_g = vertices[0].l_g();
    let a: Vec<f64> = vertices.iter().map(|p| p.r_g() / p.l_g()).collect();
    let a_min = a.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_mid = 0.5 * (a_min + a.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let w = vertices.iter().map(|p| p.omega_g()).fold(0.0, f64::max);
    let mm = m.max(1) as f64;
    let lambda = a_min / (mm * (w * w + (a_mid - a_min).powi(2)) * l_g).max(f64::MIN_POSITIVE);

    let mut c = IssCertificate::zeros(m);
    c.p = Mat::identity(2);
    c.omega[0] = Mat::identity(2).scale(0.5 * a_min);
    for k in 0..m {
        c.lambda[k] = Mat::identity(2).scale(lambda);
        c.omega[k + 1] = Mat::identity(2).scale(0.5 * lambda / l_g);
    }
    let mut u = 0;
    for s in 0..=m {
        for _l in s + 1..=m {
            c.upsilon[u] = if s == 0 {
                Mat::identity(2).scale(1.0 / l_g + lambda * a_mid)
            } else {
                Mat::identity(2).scale(2.0 * lambda / l_g)
            };
            u += 1;
        }
    }
    let mut phi = 1.0;
    for _ in 0..400 {
        c.phi = Mat::identity(2).scale(phi);
        let mut worst = f64::NEG_INFINITY;
        for p in vertices {
            worst = worst.max(sym_eig(&assemble_psi(p, &c, mode)?)?.max());
        }
        if worst < 0.0 {
            break;
        }
        phi *= 2.0;
    }
    Ok(c)
}

struct StartResult {
    index: usize,
    y: Vec<f64>,
    value: f64,
    iterations: usize,
}

fn run_start(prob: &Problem, cfg: &SearchConfig, index: usize, y0: Vec<f64>) -> Result<StartResult> {
    let mut y = y0;
    prob.project(&mut y)?;
    let (mut f, mut g) = prob.objective(&prob.to_x(&y))?;
    let mut best = (f, y.clone());
    let mut it = 0;
    while it < cfg.max_iterations && best.0 < cfg.stop_margin {
        // chain rule: df/dy_i = df/dx_i / s_i
        let gy: Vec<f64> = g.iter().zip(&prob.scale).map(|(g, s)| g / s).collect();
        let gn = gy.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn > 0.0) || !gn.is_finite() {
            break;
        }
        let eta = cfg.step0 / ((it + 1) as f64).sqrt();
        for (yi, gi) in y.iter_mut().zip(&gy) {
            *yi += eta * gi / gn;
        }
        prob.project(&mut y)?;
        let r = prob.objective(&prob.to_x(&y))?;
        f = r.0;
        g = r.1;
        if f > best.0 {
            best = (f, y.clone());
        }
        it += 1;
    }
    Ok(StartResult {
        index,
        y: best.1,
        value: best.0,
        iterations: it,
    })
}

/// Searches for a certificate common to every vertex (all sharing `l_g`).
pub fn search_certificate(vertices: &[GridParams], bank: &VrBank, cfg: &SearchConfig) -> Result<SearchReport> {
    cfg.validate()?;
    let first = vertices
        .first()
        .ok_or_else(|| Error::param("vertices", "need at least one parameter set"))?;
    if vertices.iter().any(|v| v.l_g() != first.l_g()) {
        return Err(Error::param("vertices", "all vertices must share l_g"));
    }
    bank.validate()?;
    let m = bank.branch_count();
    let prob = Problem::new(vertices, m, cfg.mode)?;
    let n = prob.layout.len();

    let mut seeds = SplitMix64::new(cfg.seed);
    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.starts);
    let structured = structured_start(vertices, m, cfg.mode)?;
    let mut y0 = prob.to_y(&prob.layout.vector_of(&structured));
    let norm = y0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        y0.iter_mut().for_each(|v| *v /= norm);
    }
    starts.push(y0);
    while starts.len() < cfg.starts {
        let mut g = SplitMix64::new(seeds.next_u64());
        starts.push((0..n).map(|_| g.uniform(-1.0, 1.0)).collect());
    }

    let results: Vec<StartResult> = starts
        .into_par_iter()
        .enumerate()
        .map(|(i, y0)| run_start(&prob, cfg, i, y0))
        .collect::<Result<_>>()?;
    let best = results
        .iter()
        .fold(None::<&StartResult>, |acc, r| match acc {
            Some(b) if b.value >= r.value => Some(b),
            _ => Some(r),
        })
        .expect("at least one start");
    let iterations = results.iter().map(|r| r.iterations).sum();

    let x = prob.to_x(&best.y);
    let raw = prob.layout.cert_at(&x);
    let raw_report = verify_certificate_at(vertices, bank, &raw, cfg.tol, cfg.mode)?;

    let mut report = SearchReport {
        feasible: false,
        certificate: None,
        verification: None,
        best_margins: raw_report.margins,
        best_normalized_margin: best.value,
        best_start: best.index,
        iterations,
        seed: cfg.seed,
        mode: cfg.mode,
        warnings: psi_warnings(cfg.mode, m),
    };
    if best.value > SIGNIFICANT_MARGIN {
        let (f_abs, _) = prob.objective(&x)?;
        let scaled = raw.scaled(cfg.target_margin / f_abs);
        let rep = verify_certificate_at(vertices, bank, &scaled, cfg.tol, cfg.mode)?;
        if rep.valid {
            let mut cert = scaled;
            cert.margins = Some(rep.margins);
            report.feasible = true;
            report.certificate = Some(cert);
            report.verification = Some(rep);
        } else {
            report
                .warnings
                .push("rescaled certificate failed re-verification".to_string());
            report.verification = Some(rep);
        }
    }
    Ok(report)
}
