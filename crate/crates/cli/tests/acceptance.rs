//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any failure.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use vrcert_cli::commands::{cmd_compare, CertificateDoc, ChecksDoc, COMPARISON_CSV_HEADER};
use vrcert_cli::{load_config, Overrides};
use vrcert_core::linalg::Mat;
use vrcert_core::persidskii::{
    disturbance_coordinate, lyapunov_derivative, regularizer_terms, stacked_coordinates, upsilon_count,
};
use vrcert_core::plant::error_derivative;
use vrcert_core::sim::Segment;
use vrcert_core::vr::VrBranch;
use vrcert_core::{
    assemble_psi, integrate, search_certificate, system_matrix, theorem1_sampled_check, verify_certificate, Disturbance,
    DqVec, GridParams, IssCertificate, LyapunovSpec, PsiMode, Scenario, SearchConfig, SplitMix64, Theorem1Config,
    VrBank, VrElement,
};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn vrcert(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_vrcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn c1_parameter_fidelity() -> Outcome {
    let cfg = load_config(&configs().join("scenario1.json")).map_err(|e| e.to_string())?;
    let p = cfg.params;
    ensure(p.l_g() == 3.67e-4, format!("l_g = {}", p.l_g()))?;
    ensure(p.r_g() == 2.76e-2, format!("r_gn = {}", p.r_g()))?;
    ensure(p.v_g_ref() == DqVec::new(392.0, 0.0), format!("v_g_ref = {:?}", p.v_g_ref()))?;
    let w = 2.0 * std::f64::consts::PI * 60.0;
    ensure(p.omega_g() == w, format!("omega_g = {}", p.omega_g()))?;
    Ok(format!("omega_g = {w} rad/s"))
}

fn c2_system_matrix() -> Outcome {
    let a = system_matrix(&GridParams::table1());
    let expect = Mat::m2(-75.204, 376.991, -376.991, -75.204);
    for i in 0..2 {
        for j in 0..2 {
            let rel = (a[(i, j)] - expect[(i, j)]).abs() / expect[(i, j)].abs();
            ensure(rel <= 1e-3, format!("entry ({i},{j}) = {} off by {rel:e}", a[(i, j)]))?;
        }
    }
    Ok(format!("A = [[{:.3}, {:.3}], [{:.3}, {:.3}]]", a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]))
}

fn random_cert(g: &mut SplitMix64, m: usize) -> IssCertificate {
    let sym = |g: &mut SplitMix64| {
        let b = g.uniform(-1.0, 1.0);
        Mat::m2(g.uniform(0.0, 2.0), b, b, g.uniform(0.0, 2.0))
    };
    let dg = |g: &mut SplitMix64| Mat::diag(&[g.uniform(0.0, 1.0), g.uniform(0.0, 1.0)]);
    let mut c = IssCertificate::zeros(m);
    c.p = sym(g);
    c.phi = sym(g);
    c.lambda = (0..m).map(|_| dg(g)).collect();
    c.omega = (0..=m).map(|_| dg(g)).collect();
    c.upsilon = (0..upsilon_count(m)).map(|_| dg(g)).collect();
    c
}

fn bank_with(m: usize) -> VrBank {
    let pool = [
        VrElement::linear(1.5).unwrap(),
        VrElement::cubic(0.01).unwrap(),
        VrElement::sinh(0.5, 0.05).unwrap(),
    ];
    VrBank::new((0..m).map(|k| VrBranch::uniform(vec![pool[k % 3].clone()]).unwrap()).collect())
}

fn c3_reconstruction_identity() -> Outcome {
    let p = GridParams::table1();
    let mut g = SplitMix64::new(2718);
    let mut worst: f64 = 0.0;
    for t in 0..20 {
        let m = t % 4;
        let bank = bank_with(m);
        let cert = random_cert(&mut g, m);
        let psi = assemble_psi(&p, &cert, PsiMode::Rederived).map_err(|e| e.to_string())?;
        for _ in 0..10_000 {
            let x = DqVec::new(g.uniform(-100.0, 100.0), g.uniform(-100.0, 100.0));
            let v = DqVec::new(g.uniform(-500.0, 500.0), g.uniform(-500.0, 500.0));
            let lhs = psi.quad_form(&stacked_coordinates(&p, &bank, x, v)).unwrap();
            let w = disturbance_coordinate(&p, v);
            let vdot = lyapunov_derivative(&p, &cert, &bank, x, v).unwrap();
            let reg = regularizer_terms(&cert, &bank, x);
            let dist = w.dot(w.transform(&cert.phi));
            let scale = (vdot.abs() + reg.abs() + dist.abs()).max(1.0);
            let rel = (lhs - (vdot + reg - dist)).abs() / scale;
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-8, format!("worst relative mismatch {worst:e}"))?;
    Ok(format!("20 certificates x 1e4 samples, worst relative mismatch {worst:.2e}"))
}

fn certify_via_cli(name: &str, out: &Path) -> Result<(IssCertificate, VrBank), String> {
    let cfg_path = configs().join("certify").join(format!("{name}.json"));
    let dir = out.join(name);
    let o = vrcert(&["certify", cfg_path.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
    ensure(
        o.status.code() == Some(0),
        format!("{name}: exit {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)),
    )?;
    let doc: CertificateDoc =
        serde_json::from_slice(&std::fs::read(dir.join("certificate.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let cfg = load_config(&cfg_path).map_err(|e| e.to_string())?;
    Ok((doc.certificate.ok_or("no certificate in file")?, cfg.config.bank))
}

fn c4_certification_soundness(out: &Path) -> Outcome {
    let p = GridParams::table1();
    let mut g = SplitMix64::new(31415);
    let mut notes = Vec::new();
    for name in ["m0", "m1-linear"] {
        let (mut cert, bank) = certify_via_cli(name, out)?;
        let stored = cert.margins.take();
        let rep = verify_certificate(&p, &bank, &cert, 1e-9).map_err(|e| e.to_string())?;
        ensure(rep.valid, format!("{name}: re-verification failed: {rep:?}"))?;
        ensure(rep.margins.psi_margin <= 1e-6, format!("{name}: psi_margin {}", rep.margins.psi_margin))?;
        ensure(stored == Some(rep.margins), format!("{name}: stored margins differ from re-verification"))?;
        let m = rep.margins;
        let mut violations = 0;
        for _ in 0..100_000 {
            let x = DqVec::new(g.uniform(-100.0, 100.0), g.uniform(-100.0, 100.0));
            let v = DqVec::new(g.uniform(-500.0, 500.0), g.uniform(-500.0, 500.0));
            let vdot = lyapunov_derivative(&p, &cert, &bank, x, v).unwrap();
            let bound = -m.varsigma * x.norm_sq() + m.alpha * v.norm_sq();
            if vdot > bound + 1e-8 * (vdot.abs() + bound.abs()) {
                violations += 1;
            }
        }
        ensure(violations == 0, format!("{name}: {violations} pointwise violations"))?;
        notes.push(format!("{name} psi_margin {:.2e}", m.psi_margin));
    }
    Ok(format!("{}; 1e5 samples each, 0 violations", notes.join(", ")))
}

fn c5_negative_control() -> Outcome {
    let p = GridParams::table1();
    let mut count = 0;
    for bank in [VrBank::empty(), VrBank::single(vec![VrElement::linear(2.0).unwrap()]).unwrap()] {
        let cert = search_certificate(&[p], &bank, &SearchConfig::default())
            .map_err(|e| e.to_string())?
            .certificate
            .ok_or("search failed")?;
        let valid = |c: &IssCertificate| verify_certificate(&p, &bank, c, 1e-9).map(|r| r.valid).unwrap_or(false);
        ensure(valid(&cert), "uncorrupted certificate must verify")?;
        let mut corrupt: Vec<(&str, IssCertificate)> = Vec::new();
        for j in 0..2 {
            let mut c = cert.clone();
            c.omega[0][(j, j)] = -c.omega[0][(j, j)];
            corrupt.push(("Omega_0 diagonal sign", c));
        }
        let mut c = cert.clone();
        c.p = c.p.scale(-1.0);
        c.lambda.iter_mut().for_each(|l| *l = l.scale(-1.0));
        corrupt.push(("P + sum Lambda", c));
        let mut c = cert.clone();
        c.omega.iter_mut().for_each(|o| *o = Mat::zeros(2, 2));
        c.upsilon.iter_mut().for_each(|u| *u = Mat::zeros(2, 2));
        corrupt.push(("Xi", c));
        let mut c = cert.clone();
        c.phi = Mat::zeros(2, 2);
        corrupt.push(("Psi", c));
        for (what, c) in &corrupt {
            ensure(!valid(c), format!("corrupting {what} left the certificate valid"))?;
            count += 1;
        }
    }
    Ok(format!("{count} corruptions, all rejected"))
}

fn c6_integrator_order() -> Outcome {
    let p = GridParams::table1();
    let bank = VrBank::single(vec![VrElement::linear(1.0).unwrap(), VrElement::sinh(0.5, 0.5).unwrap()]).unwrap();
    let t_end = 1e-3;
    let run = |dt: f64| -> Result<DqVec, String> {
        let sc = Scenario {
            t_end,
            dt,
            i_err0: DqVec::new(10.0, -5.0),
            disturbance: Disturbance::Custom {
                segments: vec![Segment {
                    t_on: 0.0,
                    t_off: t_end,
                    v_g: DqVec::new(50.0, 20.0),
                }],
            },
        };
        integrate(&p, &bank, &sc, None).map(|t| t.final_state()).map_err(|e| e.to_string())
    };
    let (y4, y2, y1) = (run(4e-6)?, run(2e-6)?, run(1e-6)?);
    let order = ((y4 - y2).norm() / (y2 - y1).norm()).log2();
    ensure((3.7..=4.3).contains(&order), format!("measured order {order}"))?;
    Ok(format!("measured order {order:.3}"))
}

fn c7_scenario_one(out: &Path) -> Outcome {
    let dir = configs().join("scenario1");
    let ov = Overrides {
        out: Some(out.join("scenario1")),
        ..Overrides::default()
    };
    let o = cmd_compare(&dir, &ov).map_err(|e| e.to_string())?;
    ensure(o.rows.len() == 5, format!("{} rows", o.rows.len()))?;
    for r in &o.rows {
        for v in [r.settling_time_ms, r.rms_err_d, r.rms_err_q] {
            ensure(v.is_finite(), format!("{}: non-finite metric", r.name))?;
        }
    }
    let names: Vec<&str> = o.rows.iter().map(|r| r.name.as_str()).collect();
    ensure(names == ["linear", "cubic", "hybrid", "sinh", "proposed"], format!("rows {names:?}"))?;
    let csv = std::fs::read_to_string(o.dir.join("comparison.csv")).map_err(|e| e.to_string())?;
    ensure(csv.lines().next() == Some(COMPARISON_CSV_HEADER), "comparison.csv header")?;
    ensure(csv.lines().count() == 6, "comparison.csv row count")?;
    ensure(o.table.starts_with("VR law"), "text table header")?;

    let proposed = load_config(&dir.join("05-proposed.json")).map_err(|e| e.to_string())?;
    let p = proposed.params;
    let full = proposed.config.bank;
    ensure(full.branch_count() >= 2, "proposed bank must be multi-branch")?;
    let mut g = SplitMix64::new(4242);
    for _ in 0..10_000 {
        let x = DqVec::new(g.uniform(-100.0, 100.0), g.uniform(-100.0, 100.0));
        let v = DqVec::new(g.uniform(-500.0, 500.0), g.uniform(-500.0, 500.0));
        let mut prev = f64::INFINITY;
        for n in 0..=full.branch_count() {
            let b = VrBank::new(full.branches()[..n].to_vec());
            let d = 2.0 * x.dot(error_derivative(&p, x, &b, v));
            ensure(d <= prev, format!("dV/dt increased after appending branch {n} at {x:?}"))?;
            prev = d;
        }
    }
    Ok(format!("5-row table, all finite; monotone damping on 1e4 states\n{}", o.table.trim_end()))
}

fn c8_scenario_two(out: &Path) -> Outcome {
    let dir = configs().join("scenario2");
    let ov = Overrides {
        out: Some(out.join("scenario2")),
        ..Overrides::default()
    };
    let o = cmd_compare(&dir, &ov).map_err(|e| format!("run failed: {e}"))?;
    let mut certified = 0;
    for r in &o.rows {
        ensure(r.rms_err_d.is_finite() && r.rms_err_q.is_finite(), format!("{}: unbounded", r.name))?;
        let checks: ChecksDoc = serde_json::from_slice(
            &std::fs::read(o.dir.join(&r.name).join("checks.json")).map_err(|e| e.to_string())?,
        )
        .map_err(|e| e.to_string())?;
        if checks.certified {
            certified += 1;
            let env = checks.envelope.ok_or("missing envelope report")?;
            ensure(env.passes, format!("{}: envelope failed: {env:?}", r.name))?;
        }
    }
    ensure(certified > 0, "no configuration was certified at both vertices")?;
    Ok(format!("{} runs bounded, {certified} certified at 0.1/1.9 r_gn, all envelopes pass", o.rows.len()))
}

fn c9_theorem1() -> Outcome {
    let p = GridParams::table1();
    let eps_star = p.r_g() - p.l_g() / 2.0;
    ensure((eps_star - 0.02742).abs() < 1e-5, format!("threshold {eps_star}"))?;
    let quad = LyapunovSpec::Quadratic(Mat::identity(2));
    let run = |eps: f64| {
        let cfg = Theorem1Config {
            epsilon: eps,
            grid_radius: 100.0,
            grid_points: 201,
        };
        theorem1_sampled_check(&p, &VrBank::empty(), &quad, &cfg).map(|r| r.passes)
    };
    for f in [0.25, 0.9, 0.999] {
        ensure(run(f * eps_star) == Ok(true), format!("should pass at {f} eps*"))?;
    }
    for f in [1.001, 1.5, 4.0] {
        ensure(run(f * eps_star) == Ok(false), format!("should fail at {f} eps*"))?;
    }
    Ok(format!("threshold eps* = {eps_star:.7}"))
}

fn c10_determinism(out: &Path) -> Outcome {
    let mut checked = Vec::new();
    for (cmd, cfg, file) in [
        ("simulate", configs().join("scenario1.json"), "metrics.json"),
        ("simulate", configs().join("scenario2/05-proposed.json"), "metrics.json"),
        ("certify", configs().join("certify/m1-linear.json"), "certificate.json"),
        ("certify", configs().join("certify/m0.json"), "certificate.json"),
    ] {
        let mut bytes = Vec::new();
        for run in 0..2 {
            let dir = out.join(format!("det-{}-{run}", checked.len()));
            let o = vrcert(&[cmd, cfg.to_str().unwrap(), "--out", dir.to_str().unwrap()]);
            ensure(o.status.success(), format!("{cmd} {} failed", cfg.display()))?;
            bytes.push(std::fs::read(dir.join(file)).map_err(|e| e.to_string())?);
        }
        ensure(bytes[0] == bytes[1], format!("{file} differs between runs of {}", cfg.display()))?;
        checked.push(file);
    }
    Ok(format!("{} artifact pairs byte-identical", checked.len()))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temp dir");
    let out = tmp.path();
    let criteria: Vec<Criterion<'_>> = vec![
        ("1 parameter fidelity", Duration::from_secs(1), Box::new(c1_parameter_fidelity)),
        ("2 system-matrix oracle", Duration::from_secs(1), Box::new(c2_system_matrix)),
        ("3 reconstruction identity", Duration::from_secs(10), Box::new(c3_reconstruction_identity)),
        ("4 certification soundness", Duration::from_secs(60), Box::new(|| c4_certification_soundness(out))),
        ("5 negative control", Duration::from_secs(5), Box::new(c5_negative_control)),
        ("6 integrator order", Duration::from_secs(60), Box::new(c6_integrator_order)),
        ("7 scenario-1 pipeline", Duration::from_secs(300), Box::new(|| c7_scenario_one(out))),
        ("8 scenario-2 robustness", Duration::from_secs(300), Box::new(|| c8_scenario_two(out))),
        ("9 theorem-1 checker oracle", Duration::from_secs(10), Box::new(c9_theorem1)),
        ("10 determinism", Duration::from_secs(120), Box::new(|| c10_determinism(out))),
    ];
    let mut failed = 0;
    for (name, budget, f) in &criteria {
        let t = Instant::now();
        let res = f();
        let dt = t.elapsed();
        let res = res.and_then(|msg| {
            if dt <= *budget {
                Ok(msg)
            } else {
                Err(format!("took {dt:.2?}, budget {budget:?}"))
            }
        });
        match res {
            Ok(msg) => println!("PASS  criterion {name} ({dt:.2?}): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL  criterion {name} ({dt:.2?}): {msg}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
