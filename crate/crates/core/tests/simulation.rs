use vrcert_core::sim::{
    scenario_random_resistance, scenario_voltage_pulse, PulseConfig, RandomResistanceConfig, Segment,
    DEFAULT_ENVELOPE_SLACK,
};
use vrcert_core::vr::presets;
use vrcert_core::*;

fn custom(t_end: f64, dt: f64, i0: DqVec, segments: Vec<Segment>) -> Scenario {
    Scenario {
        t_end,
        dt,
        i_err0: i0,
        disturbance: Disturbance::Custom { segments },
    }
}

fn constant(v: DqVec, t_end: f64) -> Segment {
    Segment {
        t_on: 0.0,
        t_off: t_end,
        v_g: v,
    }
}

#[test]
fn empty_bank_steady_state() {
    let p = GridParams::table1();
    let v = DqVec::new(40.0, -15.0);
    let sc = custom(0.4, 1e-5, DqVec::ZERO, vec![constant(v, 0.4)]);
    let x = integrate(&p, &VrBank::empty(), &sc, None).unwrap().final_state();
    // A x = v / l with A = [[a, w], [-w, a]]
    let a = -p.r_g() / p.l_g();
    let w = p.omega_g();
    let (bd, bq) = (v.d / p.l_g(), v.q / p.l_g());
    let det = a * a + w * w;
    let expect = DqVec::new((a * bd - w * bq) / det, (w * bd + a * bq) / det);
    assert!((x - expect).norm() <= 1e-6 * expect.norm(), "{x:?} vs {expect:?}");
}

/// Constant input from t = 0 keeps the right-hand side smooth, so the
/// sample-and-hold does not limit the order.
#[test]
fn rk4_order() {
    let p = GridParams::table1();
    let bank = VrBank::single(vec![VrElement::linear(1.0).unwrap(), VrElement::sinh(0.5, 0.5).unwrap()]).unwrap();
    let i0 = DqVec::new(10.0, -5.0);
    let v = DqVec::new(50.0, 20.0);
    let t_end = 1e-3;
    let run = |dt: f64| {
        integrate(&p, &bank, &custom(t_end, dt, i0, vec![constant(v, t_end)]), None)
            .unwrap()
            .final_state()
    };
    let (y4, y2, y1) = (run(4e-6), run(2e-6), run(1e-6));
    let order = ((y4 - y2).norm() / (y2 - y1).norm()).log2();
    assert!((3.7..=4.3).contains(&order), "order {order}");
}

#[test]
fn superposition_with_empty_bank() {
    let p = GridParams::table1();
    let s1 = Segment {
        t_on: 0.001,
        t_off: 0.004,
        v_g: DqVec::new(120.0, 0.0),
    };
    let s2 = Segment {
        t_on: 0.002,
        t_off: 0.006,
        v_g: DqVec::new(-30.0, 70.0),
    };
    let run = |segs: Vec<Segment>| integrate(&p, &VrBank::empty(), &custom(0.01, 1e-6, DqVec::ZERO, segs), None).unwrap();
    let a = run(vec![s1]);
    let b = run(vec![s2]);
    let ab = run(vec![s1, s2]);
    let scale = ab.i_err.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for k in 0..ab.len() {
        assert!((ab.i_err[k] - (a.i_err[k] + b.i_err[k])).norm() <= 1e-8 * scale);
    }
}

#[test]
fn deterministic_random_resistance() {
    let p = GridParams::table1();
    let cfg = RandomResistanceConfig {
        t_end: 0.3,
        t_start: 0.1,
        t_stop: 0.25,
        ..RandomResistanceConfig::default()
    };
    let sc = scenario_random_resistance(&p, &cfg).unwrap();
    let a = integrate(&p, &presets::hybrid(), &sc, None).unwrap();
    let b = integrate(&p, &presets::hybrid(), &sc, None).unwrap();
    assert_eq!(a, b);
    assert!(a.r_g.iter().any(|r| *r != p.r_g()));
    assert!(a.i_err.iter().all(|x| x.is_finite()));
}

#[test]
fn dissipation_along_scenario_one() {
    let p = GridParams::table1();
    let sc = scenario_voltage_pulse(&p, &PulseConfig::default()).unwrap();
    for bank in [VrBank::empty(), presets::linear(), presets::multi_branch()] {
        let r = search_certificate(&[p], &bank, &SearchConfig::default()).unwrap();
        let cert = r.certificate.unwrap();
        let tr = integrate(&p, &bank, &sc, Some(&cert)).unwrap();
        let rep = check_dissipation(&tr, &cert).unwrap();
        assert!(rep.passes(), "{rep:?}");
    }
}

#[test]
fn dissipation_negative_control() {
    // with the undamped plant the certified decay rate is close to the true one,
    // so inflating it a hundredfold must show up
    let p = GridParams::table1();
    let sc = scenario_voltage_pulse(&p, &PulseConfig::default()).unwrap();
    let bank = VrBank::empty();
    let cert = search_certificate(&[p], &bank, &SearchConfig::default())
        .unwrap()
        .certificate
        .unwrap();
    let tr = integrate(&p, &bank, &sc, Some(&cert)).unwrap();
    let mut bad = cert.clone();
    let mut m = bad.margins.unwrap();
    m.varsigma *= 100.0;
    bad.margins = Some(m);
    let rep = check_dissipation(&tr, &bad).unwrap();
    assert!(rep.violations > 0);
}

#[test]
fn dissipation_trivial_and_missing_log() {
    let p = GridParams::table1();
    let bank = VrBank::empty();
    let cert = search_certificate(&[p], &bank, &SearchConfig::default())
        .unwrap()
        .certificate
        .unwrap();
    let sc = custom(1e-3, 1e-6, DqVec::ZERO, vec![]);
    let tr = integrate(&p, &bank, &sc, Some(&cert)).unwrap();
    let rep = check_dissipation(&tr, &cert).unwrap();
    assert_eq!(rep.violations, 0);
    let tr = integrate(&p, &bank, &sc, None).unwrap();
    assert!(check_dissipation(&tr, &cert).is_err());
}

#[test]
fn envelope_checks() {
    let p = GridParams::table1();
    let bank = presets::linear();
    let cert = search_certificate(&[p], &bank, &SearchConfig::default())
        .unwrap()
        .certificate
        .unwrap();

    let quiet = custom(0.01, 1e-6, DqVec::ZERO, vec![]);
    let tr = integrate(&p, &bank, &quiet, None).unwrap();
    assert!(check_iss_envelope(&tr, &cert, 0.005, DEFAULT_ENVELOPE_SLACK).unwrap().passes);

    let cfg = PulseConfig {
        t_end: 0.5,
        ..PulseConfig::default()
    };
    let sc = scenario_voltage_pulse(&p, &cfg).unwrap();
    let tr = integrate(&p, &bank, &sc, None).unwrap();
    let rep = check_iss_envelope(&tr, &cert, 0.1, DEFAULT_ENVELOPE_SLACK).unwrap();
    assert!(rep.passes && rep.tail_max < 1e-3 * rep.bound, "{rep:?}");

    // negative slope beats the interface resistance: the loop is unstable
    let unstable = VrBank::single(vec![VrElement::tabulated(vec![[1.0, -0.1]]).unwrap()]).unwrap();
    let tr = integrate(&p, &unstable, &sc, None).unwrap();
    assert!(!check_iss_envelope(&tr, &cert, 0.1, DEFAULT_ENVELOPE_SLACK).unwrap().passes);
}

#[test]
fn metrics_finite_for_presets() {
    let p = GridParams::table1();
    let sc = scenario_voltage_pulse(&p, &PulseConfig::default()).unwrap();
    for bank in [presets::linear(), presets::cubic(), presets::hybrid(), presets::sinh(), presets::multi_branch()] {
        let tr = integrate(&p, &bank, &sc, None).unwrap();
        let m = compute_metrics(&tr, &sc).unwrap();
        for v in [m.settling_time_2pct_d, m.rms_err_d, m.rms_err_q, m.peak_abs_err_d, m.peak_abs_err_q] {
            assert!(v.is_finite() && v >= 0.0);
        }
        assert!(m.settled);
    }
}

#[test]
fn monotone_damping_sampled() {
    let p = GridParams::table1();
    let full = presets::multi_branch();
    let mut g = SplitMix64::new(21);
    for n in 0..=full.branch_count() {
        let partial = VrBank::new(full.branches()[..n].to_vec());
        let more = VrBank::new(full.branches()[..(n + 1).min(full.branch_count())].to_vec());
        for _ in 0..2_000 {
            let x = DqVec::new(g.uniform(-100.0, 100.0), g.uniform(-100.0, 100.0));
            let v = DqVec::new(g.uniform(-500.0, 500.0), g.uniform(-500.0, 500.0));
            let d = |b: &VrBank| 2.0 * x.dot(vrcert_core::plant::error_derivative(&p, x, b, v));
            assert!(d(&more) <= d(&partial));
        }
    }
}
