//! Shared fixtures for the benchmarks.

use vrcert_core::vr::presets;
use vrcert_core::{GridParams, IssCertificate, Mat, SearchConfig, VrBank};

pub fn params() -> GridParams {
    GridParams::table1()
}

pub fn banks() -> Vec<(&'static str, VrBank)> {
    vec![
        ("empty", VrBank::empty()),
        ("linear", presets::linear()),
        ("multi_branch", presets::multi_branch()),
    ]
}

/// Deterministic symmetric test matrix of size `n`.
pub fn sym_matrix(n: usize) -> Mat {
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            data[i * n + j] = ((i * 31 + j * 17) % 13) as f64 - 6.0 + if i == j { 10.0 } else { 0.0 };
        }
    }
    Mat::symmetric(n, data).expect("square")
}

/// Certificate with a simple nonzero pattern for `M` branches.
pub fn sample_certificate(m: usize) -> IssCertificate {
    let mut c = IssCertificate::zeros(m);
    c.p = Mat::identity(2);
    c.phi = Mat::identity(2);
    for l in &mut c.lambda {
        *l = Mat::identity(2).scale(1e-3);
    }
    c
}

pub fn quick_search() -> SearchConfig {
    SearchConfig {
        starts: 4,
        max_iterations: 200,
        ..SearchConfig::default()
    }
}
