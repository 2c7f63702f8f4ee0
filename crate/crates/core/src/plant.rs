//! dq-frame current dynamics of an inverter tied to the grid through an
//! `r_g`–`l_g` interface, and the closed-loop current-error dynamics under
//! the virtual-resistance law `v = v₀ − r(ĩ)`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::vr::VrBank;

/// A d/q pair: current in A or voltage in V depending on context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct DqVec {
    pub d: f64,
    pub q: f64,
}

impl DqVec {
    pub const ZERO: DqVec = DqVec { d: 0.0, q: 0.0 };

    pub const fn new(d: f64, q: f64) -> Self {
        DqVec { d, q }
    }

    pub fn dot(self, o: DqVec) -> f64 {
        self.d * o.d + self.q * o.q
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.d.is_finite() && self.q.is_finite()
    }

    pub fn axis(self, j: usize) -> f64 {
        match j {
            0 => self.d,
            1 => self.q,
            _ => panic!("dq axis index {j} out of range"),
        }
    }

    pub fn as_array(self) -> [f64; 2] {
        [self.d, self.q]
    }

    /// `m · self` for a 2×2 matrix.
    pub fn transform(self, m: &Mat) -> DqVec {
        DqVec::new(
            m[(0, 0)] * self.d + m[(0, 1)] * self.q,
            m[(1, 0)] * self.d + m[(1, 1)] * self.q,
        )
    }
}

impl From<[f64; 2]> for DqVec {
    fn from(a: [f64; 2]) -> Self {
        DqVec::new(a[0], a[1])
    }
}

impl From<DqVec> for [f64; 2] {
    fn from(v: DqVec) -> Self {
        v.as_array()
    }
}

impl Add for DqVec {
    type Output = DqVec;
    fn add(self, o: DqVec) -> DqVec {
        DqVec::new(self.d + o.d, self.q + o.q)
    }
}

impl AddAssign for DqVec {
    fn add_assign(&mut self, o: DqVec) {
        self.d += o.d;
        self.q += o.q;
    }
}

impl Sub for DqVec {
    type Output = DqVec;
    fn sub(self, o: DqVec) -> DqVec {
        DqVec::new(self.d - o.d, self.q - o.q)
    }
}

impl Neg for DqVec {
    type Output = DqVec;
    fn neg(self) -> DqVec {
        DqVec::new(-self.d, -self.q)
    }
}

impl Mul<DqVec> for f64 {
    type Output = DqVec;
    fn mul(self, v: DqVec) -> DqVec {
        DqVec::new(self * v.d, self * v.q)
    }
}

/// Grid/interface constants. `omega_g` is stored in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    r_g: f64,
    l_g: f64,
    omega_g: f64,
    v_g_ref: DqVec,
    i_ref: DqVec,
}

/// Table-1 interface inductance, H.
pub const TABLE1_L_G: f64 = 0.367e-3;
/// Table-1 nominal grid resistance, Ω.
pub const TABLE1_R_GN: f64 = 27.6e-3;
/// Table-1 nominal grid voltage (line-to-neutral rms), V, placed on the d axis.
pub const TABLE1_V_G_REF: f64 = 392.0;
/// Table-1 grid frequency, Hz.
pub const TABLE1_FREQ_HZ: f64 = 60.0;
/// Default d-axis current reference, A.
pub const DEFAULT_I_REF_D: f64 = 10.0;

/// Converts a grid frequency in Hz to rad/s.
pub fn hz_to_rad_per_s(hz: f64) -> f64 {
    2.0 * PI * hz
}

impl GridParams {
    pub fn new(r_g: f64, l_g: f64, omega_g: f64, v_g_ref: DqVec, i_ref: DqVec) -> Result<Self> {
        let positive = |field: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be finite and > 0, got {v}")))
            }
        };
        positive("r_g", r_g)?;
        positive("l_g", l_g)?;
        positive("omega_g", omega_g)?;
        if !v_g_ref.is_finite() {
            return Err(Error::param("v_g_ref", "must be finite"));
        }
        if !i_ref.is_finite() {
            return Err(Error::param("i_ref", "must be finite"));
        }
        Ok(GridParams {
            r_g,
            l_g,
            omega_g,
            v_g_ref,
            i_ref,
        })
    }

    /// Table-1 values: 0.367 mH, 27.6 mΩ, 392 V on the d axis, 60 Hz, `i_ref = (10, 0)` A.
    pub fn table1() -> Self {
        GridParams::new(
            TABLE1_R_GN,
            TABLE1_L_G,
            hz_to_rad_per_s(TABLE1_FREQ_HZ),
            DqVec::new(TABLE1_V_G_REF, 0.0),
            DqVec::new(DEFAULT_I_REF_D, 0.0),
        )
        .expect("table-1 parameters are valid")
    }

    pub fn r_g(&self) -> f64 {
        self.r_g
    }

    pub fn l_g(&self) -> f64 {
        self.l_g
    }

    pub fn omega_g(&self) -> f64 {
        self.omega_g
    }

    pub fn v_g_ref(&self) -> DqVec {
        self.v_g_ref
    }

    pub fn i_ref(&self) -> DqVec {
        self.i_ref
    }

    /// Same parameters with a different grid resistance.
    pub fn with_r_g(&self, r_g: f64) -> Result<Self> {
        GridParams::new(r_g, self.l_g, self.omega_g, self.v_g_ref, self.i_ref)
    }

    pub fn with_i_ref(&self, i_ref: DqVec) -> Result<Self> {
        GridParams::new(self.r_g, self.l_g, self.omega_g, self.v_g_ref, i_ref)
    }
}

/// `W = [[0, ω_g], [−ω_g, 0]]`.
pub fn coupling_matrix(p: &GridParams) -> Mat {
    coupling_matrix_raw(p.omega_g)
}

pub(crate) fn coupling_matrix_raw(omega_g: f64) -> Mat {
    Mat::m2(0.0, omega_g, -omega_g, 0.0)
}

/// `A = −(1/l_g)(r_g I − l_g W)`.
pub fn system_matrix(p: &GridParams) -> Mat {
    system_matrix_raw(p.r_g, p.l_g, p.omega_g)
}

pub(crate) fn system_matrix_raw(r_g: f64, l_g: f64, omega_g: f64) -> Mat {
    let a = -r_g / l_g;
    Mat::m2(a, omega_g, -omega_g, a)
}

/// `(r_g I − l_g W) x`.
fn interface_drop(p: &GridParams, x: DqVec) -> DqVec {
    DqVec::new(
        p.r_g * x.d - p.l_g * p.omega_g * x.q,
        p.r_g * x.q + p.l_g * p.omega_g * x.d,
    )
}

/// Nominal feedforward `v₀ = (r_g I − l_g W) i_ref + v_g_ref`.
pub fn feedforward_v0(p: &GridParams) -> DqVec {
    interface_drop(p, p.i_ref) + p.v_g_ref
}

/// Open-loop current dynamics `di/dt = −(1/l_g)(r_g I − l_g W) i + (v − v_g)/l_g`.
pub fn open_loop_derivative(p: &GridParams, i: DqVec, v: DqVec, v_g: DqVec) -> DqVec {
    let inv_l = 1.0 / p.l_g;
    inv_l * (v - v_g - interface_drop(p, i))
}

/// Closed-loop error dynamics `dĩ/dt = A ĩ − (1/l_g) Σ_k Σ_l r_k^l(ĩ) − (1/l_g) ṽ_g`.
pub fn error_derivative(p: &GridParams, i_err: DqVec, bank: &VrBank, v_g_err: DqVec) -> DqVec {
    let inv_l = 1.0 / p.l_g;
    let r = bank.value(i_err);
    i_err.transform(&system_matrix(p)) - inv_l * (r + v_g_err)
}
