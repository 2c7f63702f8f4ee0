//! Fixed-step simulation of the closed-loop current error, the two test
//! scenarios, performance metrics and trajectory-level checks of a
//! certificate's dissipation inequality.
//!
//! The integrator is classical RK4 on
//!
//! ```text
//! dĩ/dt = A(r_g(t)) ĩ − (1/l_g)(Σ r_k(ĩ) + ṽ_eq),   ṽ_eq = ṽ_g + (r_g(t) − r_gn) i_ref
//! ```
//!
//! where the controller feedforward keeps the nominal `r_gn`, so a resistance
//! mismatch enters as the equivalent disturbance `ṽ_eq`. Disturbances are
//! sampled at the start of each step and held for the step; event times are
//! snapped to the step grid with `round(t/dt)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::sym_eig;
use crate::persidskii::{lmi_p_matrix, lyapunov_value, lyapunov_value_unchecked, IssCertificate};
use crate::plant::{system_matrix_raw, DqVec, GridParams};
use crate::rng::SplitMix64;
use crate::vr::VrBank;

/// Default integration step.
pub const DEFAULT_DT: f64 = 1e-6;
/// Largest accepted integration step.
pub const MAX_DT: f64 = 1e-4;

/// A constant grid-voltage disturbance active on `[t_on, t_off)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t_on: f64,
    pub t_off: f64,
    pub v_g: DqVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    /// Grid-voltage pulse of height `v` on `[t_on, t_off)`.
    VoltagePulse { v: DqVec, t_on: f64, t_off: f64 },
    /// Piecewise-constant `r_g = r_gn·(lo + (hi − lo)u)`, `u` uniform, resampled
    /// every `resample_period` on `[t_start, t_stop)`; nominal elsewhere.
    RandomResistance {
        lo: f64,
        hi: f64,
        t_start: f64,
        t_stop: f64,
        resample_period: f64,
        seed: u64,
    },
    /// Sum of constant voltage segments.
    Custom { segments: Vec<Segment> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub t_end: f64,
    pub dt: f64,
    #[serde(default)]
    pub i_err0: DqVec,
    pub disturbance: Disturbance,
}

fn check_time(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::param(name, "must be finite and >= 0"));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::param("dt", format!("must lie in (0, {MAX_DT:e}]")));
        }
        if !(self.t_end.is_finite() && self.t_end >= self.dt) {
            return Err(Error::param("t_end", "must be finite and >= dt"));
        }
        if !self.i_err0.is_finite() {
            return Err(Error::param("i_err0", "must be finite"));
        }
        let window = |on_name: &str, on: f64, off_name: &str, off: f64| -> Result<()> {
            check_time(on_name, on)?;
            check_time(off_name, off)?;
            if on >= off {
                return Err(Error::param(off_name, format!("must exceed {on_name}")));
            }
            if off > self.t_end {
                return Err(Error::param(off_name, "must not exceed t_end"));
            }
            Ok(())
        };
        match &self.disturbance {
            Disturbance::VoltagePulse { v, t_on, t_off } => {
                if !v.is_finite() {
                    return Err(Error::param("v", "must be finite"));
                }
                window("t_on", *t_on, "t_off", *t_off)
            }
            Disturbance::RandomResistance {
                lo,
                hi,
                t_start,
                t_stop,
                resample_period,
                ..
            } => {
                for (n, b) in [("lo", *lo), ("hi", *hi)] {
                    if !(b.is_finite() && b > 0.0) {
                        return Err(Error::param(n, "bound fraction must lie in (0, inf)"));
                    }
                }
                if lo > hi {
                    return Err(Error::param("hi", "must be >= lo"));
                }
                if !(resample_period.is_finite() && *resample_period >= self.dt) {
                    return Err(Error::param("resample_period", "must be finite and >= dt"));
                }
                window("t_start", *t_start, "t_stop", *t_stop)
            }
            Disturbance::Custom { segments } => {
                for s in segments {
                    if !s.v_g.is_finite() {
                        return Err(Error::param("v_g", "must be finite"));
                    }
                    check_time("t_on", s.t_on)?;
                    if !(s.t_off > s.t_on) {
                        return Err(Error::param("t_off", "must exceed t_on"));
                    }
                }
                Ok(())
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self.disturbance {
            Disturbance::VoltagePulse { .. } => "voltage_pulse",
            Disturbance::RandomResistance { .. } => "random_resistance",
            Disturbance::Custom { .. } => "custom",
        }
    }

    /// Number of integration steps.
    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Step index of time `t` on this grid.
    pub fn step_of(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }

    /// `[start, end]` of the disturbance; `(0, 0)` when there is none.
    pub fn disturbance_window(&self) -> (f64, f64) {
        match &self.disturbance {
            Disturbance::VoltagePulse { t_on, t_off, .. } => (*t_on, *t_off),
            Disturbance::RandomResistance { t_start, t_stop, .. } => (*t_start, *t_stop),
            Disturbance::Custom { segments } if !segments.is_empty() => {
                let on = segments.iter().map(|s| s.t_on).fold(f64::INFINITY, f64::min);
                let off = segments.iter().map(|s| s.t_off).fold(0.0, f64::max);
                (on, off.min(self.t_end))
            }
            Disturbance::Custom { .. } => (0.0, 0.0),
        }
    }

    /// Seed of the random process, if any.
    pub fn seed(&self) -> Option<u64> {
        match self.disturbance {
            Disturbance::RandomResistance { seed, .. } => Some(seed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    #[default]
    D,
    Q,
}

/// Settings for [`scenario_voltage_pulse`]; defaults reproduce the +40 %
/// d-axis pulse on `[0.1, 0.101]` s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseConfig {
    pub axis: Axis,
    /// Pulse height as a fraction of `‖v_g_ref‖`.
    pub amplitude_fraction: f64,
    pub t_on: f64,
    pub t_off: f64,
    pub t_end: f64,
    pub dt: f64,
    pub i_err0: DqVec,
}

impl Default for PulseConfig {
    fn default() -> Self {
        PulseConfig {
            axis: Axis::D,
            amplitude_fraction: 0.4,
            t_on: 0.1,
            t_off: 0.101,
            t_end: 0.2,
            dt: DEFAULT_DT,
            i_err0: DqVec::ZERO,
        }
    }
}

pub fn scenario_voltage_pulse(p: &GridParams, cfg: &PulseConfig) -> Result<Scenario> {
    if !cfg.amplitude_fraction.is_finite() {
        return Err(Error::param("amplitude_fraction", "must be finite"));
    }
    let h = cfg.amplitude_fraction * p.v_g_ref().norm();
    let v = match cfg.axis {
        Axis::D => DqVec::new(h, 0.0),
        Axis::Q => DqVec::new(0.0, h),
    };
    let sc = Scenario {
        t_end: cfg.t_end,
        dt: cfg.dt,
        i_err0: cfg.i_err0,
        disturbance: Disturbance::VoltagePulse {
            v,
            t_on: cfg.t_on,
            t_off: cfg.t_off,
        },
    };
    sc.validate()?;
    Ok(sc)
}

/// Settings for [`scenario_random_resistance`]; defaults give
/// `r_g ∈ [0.1, 1.9]·r_gn` on `[0.2, 0.8]` s, resampled every 1 ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RandomResistanceConfig {
    pub lo: f64,
    pub hi: f64,
    pub t_start: f64,
    pub t_stop: f64,
    pub resample_period: f64,
    pub seed: u64,
    pub t_end: f64,
    pub dt: f64,
    pub i_err0: DqVec,
}

impl Default for RandomResistanceConfig {
    fn default() -> Self {
        RandomResistanceConfig {
            lo: 0.1,
            hi: 1.9,
            t_start: 0.2,
            t_stop: 0.8,
            resample_period: 1e-3,
            seed: 2024,
            t_end: 1.0,
            dt: DEFAULT_DT,
            i_err0: DqVec::ZERO,
        }
    }
}

pub fn scenario_random_resistance(_p: &GridParams, cfg: &RandomResistanceConfig) -> Result<Scenario> {
    let sc = Scenario {
        t_end: cfg.t_end,
        dt: cfg.dt,
        i_err0: cfg.i_err0,
        disturbance: Disturbance::RandomResistance {
            lo: cfg.lo,
            hi: cfg.hi,
            t_start: cfg.t_start,
            t_stop: cfg.t_stop,
            resample_period: cfg.resample_period,
            seed: cfg.seed,
        },
    };
    sc.validate()?;
    Ok(sc)
}

/// First `count` resistance samples of the random process.
pub fn random_resistance_samples(r_gn: f64, lo: f64, hi: f64, seed: u64, count: usize) -> Vec<f64> {
    let mut g = SplitMix64::new(seed);
    (0..count).map(|_| r_gn * g.uniform(lo, hi)).collect()
}

/// Per-step disturbance lookup.
struct Sampler {
    r_gn: f64,
    i_ref: DqVec,
    kind: SamplerKind,
}

enum SamplerKind {
    Pulse { v: DqVec, n_on: usize, n_off: usize },
    Random { n_start: usize, n_stop: usize, n_period: usize, values: Vec<f64> },
    Custom(Vec<(usize, usize, DqVec)>),
}

impl Sampler {
    fn new(p: &GridParams, sc: &Scenario) -> Sampler {
        let kind = match &sc.disturbance {
            Disturbance::VoltagePulse { v, t_on, t_off } => SamplerKind::Pulse {
                v: *v,
                n_on: sc.step_of(*t_on),
                n_off: sc.step_of(*t_off),
            },
            Disturbance::RandomResistance {
                lo,
                hi,
                t_start,
                t_stop,
                resample_period,
                seed,
            } => {
                let n_start = sc.step_of(*t_start);
                let n_stop = sc.step_of(*t_stop);
                let n_period = sc.step_of(*resample_period).max(1);
                let count = (n_stop - n_start).div_ceil(n_period);
                SamplerKind::Random {
                    n_start,
                    n_stop,
                    n_period,
                    values: random_resistance_samples(p.r_g(), *lo, *hi, *seed, count),
                }
            }
            Disturbance::Custom { segments } => SamplerKind::Custom(
                segments
                    .iter()
                    .map(|s| (sc.step_of(s.t_on), sc.step_of(s.t_off), s.v_g))
                    .collect(),
            ),
        };
        Sampler {
            r_gn: p.r_g(),
            i_ref: p.i_ref(),
            kind,
        }
    }

    /// `(ṽ_g, r_g)` held over step `n`.
    fn at(&self, n: usize) -> (DqVec, f64) {
        match &self.kind {
            SamplerKind::Pulse { v, n_on, n_off } => {
                if (*n_on..*n_off).contains(&n) {
                    (*v, self.r_gn)
                } else {
                    (DqVec::ZERO, self.r_gn)
                }
            }
            SamplerKind::Random {
                n_start,
                n_stop,
                n_period,
                values,
            } => {
                if (*n_start..*n_stop).contains(&n) {
                    (DqVec::ZERO, values[(n - n_start) / n_period])
                } else {
                    (DqVec::ZERO, self.r_gn)
                }
            }
            SamplerKind::Custom(segs) => {
                let v = segs
                    .iter()
                    .filter(|(on, off, _)| (*on..*off).contains(&n))
                    .fold(DqVec::ZERO, |acc, (_, _, v)| acc + *v);
                (v, self.r_gn)
            }
        }
    }

    fn equivalent(&self, v_g: DqVec, r_g: f64) -> DqVec {
        v_g + (r_g - self.r_gn) * self.i_ref
    }
}

/// Sampled closed-loop trajectory on a uniform grid `t_n = n·dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub i_err: Vec<DqVec>,
    /// Grid-voltage deviation held over the step starting at each sample.
    pub v_g: Vec<DqVec>,
    /// Equivalent disturbance including resistance mismatch.
    pub v_eq: Vec<DqVec>,
    pub r_g: Vec<f64>,
    pub v_values: Option<Vec<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> DqVec {
        *self.i_err.last().expect("trajectory is never empty")
    }
}

/// One classical RK4 step of `dx/dt = f(x)`.
pub fn rk4_step(f: impl Fn(DqVec) -> DqVec, x: DqVec, dt: f64) -> DqVec {
    let k1 = f(x);
    let k2 = f(x + (0.5 * dt) * k1);
    let k3 = f(x + (0.5 * dt) * k2);
    let k4 = f(x + dt * k3);
    x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// Integrates the closed loop; logs `V` when a certificate is supplied.
pub fn integrate(
    p: &GridParams,
    bank: &VrBank,
    sc: &Scenario,
    cert: Option<&IssCertificate>,
) -> Result<Trajectory> {
    sc.validate()?;
    bank.validate()?;
    if let Some(c) = cert {
        lyapunov_value(c, bank, sc.i_err0)?;
    }
    let n = sc.steps();
    let sampler = Sampler::new(p, sc);
    let inv_l = 1.0 / p.l_g();
    let mut traj = Trajectory {
        dt: sc.dt,
        times: Vec::with_capacity(n + 1),
        i_err: Vec::with_capacity(n + 1),
        v_g: Vec::with_capacity(n + 1),
        v_eq: Vec::with_capacity(n + 1),
        r_g: Vec::with_capacity(n + 1),
        v_values: cert.map(|_| Vec::with_capacity(n + 1)),
    };
    let mut x = sc.i_err0;
    for k in 0..=n {
        let (v_g, r_g) = sampler.at(k);
        let v_eq = sampler.equivalent(v_g, r_g);
        traj.times.push(k as f64 * sc.dt);
        traj.i_err.push(x);
        traj.v_g.push(v_g);
        traj.v_eq.push(v_eq);
        traj.r_g.push(r_g);
        if let (Some(c), Some(vs)) = (cert, traj.v_values.as_mut()) {
            vs.push(lyapunov_value_unchecked(c, bank, x));
        }
        if k == n {
            break;
        }
        let a = system_matrix_raw(r_g, p.l_g(), p.omega_g());
        let f = |y: DqVec| y.transform(&a) - inv_l * (bank.value(y) + v_eq);
        x = rk4_step(f, x, sc.dt);
        if !x.is_finite() {
            return Err(Error::NumericAbort {
                time: (k + 1) as f64 * sc.dt,
                reason: "state became non-finite".into(),
            });
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Time after the disturbance end until `|ĩ_d|` stays within 2 % of its
    /// post-disturbance peak. Equals the remaining horizon when unsettled.
    pub settling_time_2pct_d: f64,
    pub settled: bool,
    pub rms_err_d: f64,
    pub rms_err_q: f64,
    pub peak_abs_err_d: f64,
    pub peak_abs_err_q: f64,
    /// Peak `|ĩ_d|` after the disturbance end (the band reference).
    pub post_disturbance_peak_d: f64,
}

pub fn compute_metrics(traj: &Trajectory, sc: &Scenario) -> Result<Metrics> {
    if traj.is_empty() {
        return Err(Error::Scenario("empty trajectory".into()));
    }
    let (t_start, t_stop) = sc.disturbance_window();
    let last = traj.len() - 1;
    let n_start = sc.step_of(t_start).min(last);
    let n_stop = sc.step_of(t_stop).min(last);

    let post = &traj.i_err[n_stop..];
    let peak = post.iter().map(|x| x.d.abs()).fold(0.0, f64::max);
    let band = 0.02 * peak;
    let last_out = post.iter().rposition(|x| x.d.abs() > band);
    let (settling, settled) = match last_out {
        None => (0.0, true),
        Some(j) if n_stop + j == last => (traj.times[last] - traj.times[n_stop], false),
        Some(j) => ((j + 1) as f64 * traj.dt, true),
    };

    let win = &traj.i_err[n_start..];
    let cnt = win.len() as f64;
    let rms = |f: fn(&DqVec) -> f64| (win.iter().map(|x| f(x).powi(2)).sum::<f64>() / cnt).sqrt();
    let peak_all = |f: fn(&DqVec) -> f64| traj.i_err.iter().map(|x| f(x).abs()).fold(0.0, f64::max);
    Ok(Metrics {
        settling_time_2pct_d: settling,
        settled,
        rms_err_d: rms(|x| x.d),
        rms_err_q: rms(|x| x.q),
        peak_abs_err_d: peak_all(|x| x.d),
        peak_abs_err_q: peak_all(|x| x.q),
        post_disturbance_peak_d: peak,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DissipationReport {
    pub steps: usize,
    pub violations: usize,
    /// Smallest `rhs + tol − lhs` over all steps (negative when violated).
    pub worst_margin: f64,
    pub worst_time: f64,
    pub tol: f64,
    /// All quantities are divided by `λ_max(P + ΣΛ)` before comparison.
    pub normalization: f64,
}

impl DissipationReport {
    pub fn passes(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `(V_{k+1} − V_k)/dt ≤ −ς‖ĩ_k‖² + α‖ṽ_eq,k‖² + tol` along a
/// trajectory logged with `cert`, `tol = 1e−3·(1 + max_k |ΔV/dt|)`. The
/// inequality is first normalised by `λ_max(P + ΣΛ)` so that `tol` does not
/// depend on the certificate's arbitrary scale.
pub fn check_dissipation(traj: &Trajectory, cert: &IssCertificate) -> Result<DissipationReport> {
    let vs = traj
        .v_values
        .as_ref()
        .ok_or_else(|| Error::Scenario("trajectory has no V log; integrate with a certificate".into()))?;
    let m = cert
        .margins
        .ok_or_else(|| Error::InvalidCertificate("certificate carries no margins".into()))?;
    let norm = sym_eig(&lmi_p_matrix(cert))?.max();
    let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    let steps = vs.len().saturating_sub(1);
    let rates: Vec<f64> = vs.windows(2).map(|w| s * (w[1] - w[0]) / traj.dt).collect();
    let max_rate = rates.iter().map(|r| r.abs()).fold(0.0, f64::max);
    let tol = 1e-3 * (1.0 + max_rate);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    let mut worst_time = 0.0;
    for (k, lhs) in rates.iter().enumerate() {
        let rhs = s * (-m.varsigma * traj.i_err[k].norm_sq() + m.alpha * traj.v_eq[k].norm_sq());
        let margin = rhs + tol - lhs;
        if margin < 0.0 {
            violations += 1;
        }
        if margin < worst {
            worst = margin;
            worst_time = traj.times[k];
        }
    }
    Ok(DissipationReport {
        steps,
        violations,
        worst_margin: if steps == 0 { 0.0 } else { worst },
        worst_time,
        tol,
        normalization: s,
    })
}

/// Absolute floor of the envelope bound, in A.
pub const ENVELOPE_FLOOR: f64 = 1e-6;

/// Empirical tail-bound sanity check. It does not certify anything: the
/// comparison functions of the ISS estimate are replaced by a slack factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub passes: bool,
    pub tail_max: f64,
    pub bound: f64,
    pub gain: f64,
    pub sup_disturbance: f64,
    pub slack: f64,
    pub window_tail: f64,
}

/// Default slack of [`check_iss_envelope`].
pub const DEFAULT_ENVELOPE_SLACK: f64 = 2.0;

/// Over the final `window_tail` seconds, `‖ĩ‖ ≤ max(slack·√(α/ς)·‖ṽ_eq‖_∞, 1e−6)`.
pub fn check_iss_envelope(
    traj: &Trajectory,
    cert: &IssCertificate,
    window_tail: f64,
    slack: f64,
) -> Result<EnvelopeReport> {
    let gain = crate::persidskii::iss_gain(cert)?;
    let t_last = traj.times.last().copied().unwrap_or(0.0);
    let tail_max = traj
        .times
        .iter()
        .zip(&traj.i_err)
        .filter(|(t, _)| **t >= t_last - window_tail)
        .map(|(_, x)| x.norm())
        .fold(0.0, f64::max);
    let sup = traj.v_eq.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let bound = (slack * gain * sup).max(ENVELOPE_FLOOR);
    Ok(EnvelopeReport {
        passes: tail_max.is_finite() && tail_max <= bound,
        tail_max,
        bound,
        gain,
        sup_disturbance: sup,
        slack,
        window_tail,
    })
}

/// CSV header of [`write_csv`].
pub const CSV_HEADER: &str = "t,i_err_d,i_err_q,v_g_d,v_g_q,r_g,V";

/// Writes every `decimation`-th sample (and always the last one).
pub fn write_csv<W: Write>(traj: &Trajectory, decimation: usize, mut w: W) -> std::io::Result<()> {
    let dec = decimation.max(1);
    writeln!(w, "{CSV_HEADER}")?;
    let last = traj.len().saturating_sub(1);
    for k in (0..traj.len()).filter(|k| k % dec == 0 || *k == last) {
        let x = traj.i_err[k];
        let v = traj.v_g[k];
        write!(w, "{},{},{},{},{},{},", traj.times[k], x.d, x.q, v.d, v.q, traj.r_g[k])?;
        if let Some(vs) = &traj.v_values {
            write!(w, "{}", vs[k])?;
        }
        writeln!(w)?;
    }
    Ok(())
}
