use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use vrcert_core::persidskii::VerificationReport;
use vrcert_core::sim::{
    check_dissipation, check_iss_envelope, write_csv, DissipationReport, EnvelopeReport, DEFAULT_ENVELOPE_SLACK,
};
use vrcert_core::{
    compute_metrics, integrate, iss_gain, search_certificate, IssCertificate, Margins, Metrics, PsiMode, Scenario,
    SearchConfig, SearchReport,
};

use crate::config::{load_config, sha256_hex, Format, LoadedConfig, SCHEMA_VERSION};
use crate::error::CliError;

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub decimation: Option<usize>,
    pub mode: Option<PsiMode>,
    pub seed: Option<u64>,
}

/// Default output root when neither `--out` nor `output.directory` is set.
pub const DEFAULT_OUT_ROOT: &str = "out";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(
        ".{name}.tmp-{}-{}",
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(tmp.display(), e))?;
    f.write_all(bytes).map_err(|e| CliError::io(tmp.display(), e))?;
    f.sync_all().map_err(|e| CliError::io(tmp.display(), e))?;
    drop(f);
    fs::rename(&tmp, &target).map_err(|e| CliError::io(target.display(), e))?;
    Ok(target)
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("artifact serializes");
    s.push('\n');
    s.into_bytes()
}

fn output_dir(cfg: &LoadedConfig, ov: &Overrides) -> PathBuf {
    ov.out
        .clone()
        .or_else(|| cfg.config.output.directory.clone())
        .unwrap_or_else(|| Path::new(DEFAULT_OUT_ROOT).join(&cfg.config.name))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display(), e))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub name: String,
    pub config_sha256: String,
    pub bank_fingerprint: String,
    pub scenario_seed: Option<u64>,
    pub search_seed: Option<u64>,
    pub mode: Option<PsiMode>,
    pub decimation: Option<usize>,
    /// Artifact file name to sha256.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    fn new(command: &str, cfg: &LoadedConfig) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            name: cfg.config.name.clone(),
            config_sha256: cfg.sha256.clone(),
            bank_fingerprint: cfg.config.bank.fingerprint(),
            scenario_seed: None,
            search_seed: None,
            mode: None,
            decimation: None,
            artifacts: BTreeMap::new(),
        }
    }

    fn add(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(dir, name, bytes)?;
        self.artifacts.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    fn write(&self, dir: &Path) -> Result<(), CliError> {
        write_atomic(dir, "manifest.json", &to_json(self)).map(|_| ())
    }
}

fn search_config(cfg: &LoadedConfig, ov: &Overrides) -> SearchConfig {
    let mut s = cfg.config.certify.search;
    s.mode = ov.mode.unwrap_or(cfg.config.certify.mode);
    if let Some(seed) = ov.seed {
        s.seed = seed;
    }
    s
}

fn run_search(cfg: &LoadedConfig, ov: &Overrides) -> Result<(SearchConfig, SearchReport), CliError> {
    let s = search_config(cfg, ov);
    let vertices = cfg.vertices()?;
    let report = search_certificate(&vertices, &cfg.config.bank, &s)
        .map_err(|e| CliError::from_core(e).prefixed("bank"))?;
    Ok((s, report))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub name: String,
    pub scenario: String,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChecksDoc {
    pub name: String,
    pub certified: bool,
    pub iss_gain: Option<f64>,
    pub dissipation: Option<DissipationReport>,
    /// Empirical only; see the envelope check documentation.
    pub envelope: Option<EnvelopeReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub name: String,
    pub dir: PathBuf,
    pub metrics: Metrics,
    pub checks: Option<ChecksDoc>,
}

/// Tail window of the envelope check, as a fraction of the horizon.
const ENVELOPE_TAIL_FRACTION: f64 = 0.1;

pub fn cmd_simulate(config_path: &Path, ov: &Overrides) -> Result<SimulationOutcome, CliError> {
    let cfg = load_config(config_path)?;
    simulate_loaded(&cfg, &output_dir(&cfg, ov), ov)
}

fn simulate_loaded(cfg: &LoadedConfig, dir: &Path, ov: &Overrides) -> Result<SimulationOutcome, CliError> {
    let rc = &cfg.config;
    let sc = rc.scenario.build(&cfg.params, ov.seed)?;
    let decimation = ov.decimation.unwrap_or(rc.output.decimation);
    if decimation == 0 {
        return Err(CliError::field("decimation", "must be >= 1"));
    }

    let mut manifest = Manifest::new("simulate", cfg);
    manifest.scenario_seed = sc.seed();
    manifest.decimation = Some(decimation);

    let mut warnings = Vec::new();
    let cert: Option<IssCertificate> = if rc.certify.enabled {
        let (s, rep) = run_search(cfg, ov)?;
        manifest.search_seed = Some(s.seed);
        manifest.mode = Some(s.mode);
        warnings.extend(rep.warnings.iter().cloned());
        if !rep.feasible {
            warnings.push("no certificate found; trajectory checks skipped".to_string());
        }
        rep.certificate
    } else {
        None
    };

    let traj = integrate(&cfg.params, &rc.bank, &sc, cert.as_ref()).map_err(CliError::from_core)?;
    let metrics = compute_metrics(&traj, &sc).map_err(CliError::from_core)?;

    ensure_dir(dir)?;
    if rc.output.formats.contains(&Format::Csv) {
        let mut buf = Vec::new();
        write_csv(&traj, decimation, &mut buf).map_err(|e| CliError::io("trajectory.csv", e))?;
        manifest.add(dir, "trajectory.csv", &buf)?;
    }
    let doc = MetricsDoc {
        name: rc.name.clone(),
        scenario: sc.kind_name().to_string(),
        metrics,
    };
    manifest.add(dir, "metrics.json", &to_json(&doc))?;

    let checks = if rc.certify.enabled {
        let (gain, dissipation, envelope) = match &cert {
            Some(c) => {
                let tail = ENVELOPE_TAIL_FRACTION * sc.t_end;
                (
                    Some(iss_gain(c).map_err(CliError::from_core)?),
                    Some(check_dissipation(&traj, c).map_err(CliError::from_core)?),
                    Some(check_iss_envelope(&traj, c, tail, DEFAULT_ENVELOPE_SLACK).map_err(CliError::from_core)?),
                )
            }
            None => (None, None, None),
        };
        let checks = ChecksDoc {
            name: rc.name.clone(),
            certified: cert.is_some(),
            iss_gain: gain,
            dissipation,
            envelope,
            warnings,
        };
        manifest.add(dir, "checks.json", &to_json(&checks))?;
        Some(checks)
    } else {
        None
    };
    manifest.write(dir)?;
    Ok(SimulationOutcome {
        name: rc.name.clone(),
        dir: dir.to_path_buf(),
        metrics,
        checks,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSummary {
    pub seed: u64,
    pub starts: usize,
    pub max_iterations: usize,
    pub iterations: usize,
    pub best_start: usize,
    pub best_normalized_margin: f64,
    pub best_margins: Margins,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub schema_version: u32,
    pub name: String,
    pub mode: PsiMode,
    pub feasible: bool,
    pub bank_fingerprint: String,
    /// Interface resistances (Ω) the certificate was checked at.
    pub vertices_r_g: Vec<f64>,
    pub certificate: Option<IssCertificate>,
    pub verification: Option<VerificationReport>,
    pub iss_gain: Option<f64>,
    pub search: SearchSummary,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CertifyOutcome {
    pub dir: PathBuf,
    pub doc: CertificateDoc,
}

/// Writes `certificate.json` when a certificate is found; otherwise writes
/// `certify_report.json` and returns [`CliError::Infeasible`].
pub fn cmd_certify(config_path: &Path, ov: &Overrides) -> Result<CertifyOutcome, CliError> {
    let cfg = load_config(config_path)?;
    let dir = output_dir(&cfg, ov);
    let (s, rep) = run_search(&cfg, ov)?;
    let gain = match &rep.certificate {
        Some(c) => Some(iss_gain(c).map_err(CliError::from_core)?),
        None => None,
    };
    let doc = CertificateDoc {
        schema_version: SCHEMA_VERSION,
        name: cfg.config.name.clone(),
        mode: s.mode,
        feasible: rep.feasible,
        bank_fingerprint: cfg.config.bank.fingerprint(),
        vertices_r_g: cfg.vertices()?.iter().map(|p| p.r_g()).collect(),
        certificate: rep.certificate.clone(),
        verification: rep.verification.clone(),
        iss_gain: gain,
        search: SearchSummary {
            seed: s.seed,
            starts: s.starts,
            max_iterations: s.max_iterations,
            iterations: rep.iterations,
            best_start: rep.best_start,
            best_normalized_margin: rep.best_normalized_margin,
            best_margins: rep.best_margins,
        },
        warnings: rep.warnings.clone(),
    };

    ensure_dir(&dir)?;
    let mut manifest = Manifest::new("certify", &cfg);
    manifest.search_seed = Some(s.seed);
    manifest.mode = Some(s.mode);
    let file = if doc.feasible { "certificate.json" } else { "certify_report.json" };
    manifest.add(&dir, file, &to_json(&doc))?;
    manifest.write(&dir)?;

    if doc.feasible {
        Ok(CertifyOutcome { dir, doc })
    } else {
        Err(CliError::Infeasible {
            message: format!(
                "best normalised margin {:e} after {} iterations ({} mode)",
                rep.best_normalized_margin, rep.iterations, s.mode
            ),
            report: serde_json::to_value(&doc).ok(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub settling_time_ms: f64,
    pub settled: bool,
    pub rms_err_d: f64,
    pub rms_err_q: f64,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub dir: PathBuf,
    pub rows: Vec<ComparisonRow>,
    pub table: String,
}

pub const COMPARISON_CSV_HEADER: &str = "vr_law,settling_time_2pct_d_ms,rms_err_d_a,rms_err_q_a,settled";

/// Config files of a comparison directory, sorted by file name.
pub fn config_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rd = fs::read_dir(dir).map_err(|e| CliError::config(None, format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn cmd_compare(config_dir: &Path, ov: &Overrides) -> Result<CompareOutcome, CliError> {
    let files = config_files(config_dir)?;
    if files.is_empty() {
        return Err(CliError::config(
            None,
            format!("no *.json configs in {}", config_dir.display()),
        ));
    }
    let configs: Vec<LoadedConfig> = files.iter().map(|f| load_config(f)).collect::<Result<_, _>>()?;
    let reference: Scenario = configs[0].config.scenario.build(&configs[0].params, ov.seed)?;
    let mut names = std::collections::BTreeSet::new();
    for c in &configs {
        let sc = c.config.scenario.build(&c.params, ov.seed)?;
        if sc != reference {
            return Err(CliError::config(
                Some("scenario".into()),
                format!(
                    "{} uses a different scenario than {}",
                    c.path.display(),
                    configs[0].path.display()
                ),
            ));
        }
        if !names.insert(c.config.name.clone()) {
            return Err(CliError::field("name", format!("duplicate run name `{}`", c.config.name)));
        }
    }

    let root = ov
        .out
        .clone()
        .unwrap_or_else(|| Path::new(DEFAULT_OUT_ROOT).join("compare"));
    ensure_dir(&root)?;
    let member_ov = Overrides { out: None, ..ov.clone() };
    let outcomes: Vec<SimulationOutcome> = configs
        .par_iter()
        .map(|c| simulate_loaded(c, &root.join(&c.config.name), &member_ov))
        .collect::<Result<_, _>>()?;

    let rows: Vec<ComparisonRow> = outcomes
        .iter()
        .map(|o| ComparisonRow {
            name: o.name.clone(),
            settling_time_ms: 1e3 * o.metrics.settling_time_2pct_d,
            settled: o.metrics.settled,
            rms_err_d: o.metrics.rms_err_d,
            rms_err_q: o.metrics.rms_err_q,
        })
        .collect();

    let mut csv = String::from(COMPARISON_CSV_HEADER);
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            r.name, r.settling_time_ms, r.rms_err_d, r.rms_err_q, r.settled
        ));
    }
    let table = render_table(&rows);
    write_atomic(&root, "comparison.csv", csv.as_bytes())?;
    write_atomic(&root, "comparison.txt", table.as_bytes())?;
    Ok(CompareOutcome { dir: root, rows, table })
}

/// Aligned text table; unsettled runs are marked with `*`.
pub fn render_table(rows: &[ComparisonRow]) -> String {
    let head = ["VR law", "Ts,d 2% [ms]", "RMS i_d [A]", "RMS i_q [A]"];
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                r.name.clone(),
                format!("{:.3}{}", r.settling_time_ms, if r.settled { "" } else { "*" }),
                format!("{:.4}", r.rms_err_d),
                format!("{:.4}", r.rms_err_q),
            ]
        })
        .collect();
    let mut w = head.map(|h| h.len());
    for c in &cells {
        for (i, s) in c.iter().enumerate() {
            w[i] = w[i].max(s.len());
        }
    }
    let line = |c: [&str; 4]| {
        format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
            c[0],
            c[1],
            c[2],
            c[3],
            w0 = w[0],
            w1 = w[1],
            w2 = w[2],
            w3 = w[3]
        )
    };
    let mut out = line(head);
    out.push_str(&format!("{}\n", "-".repeat(w.iter().sum::<usize>() + 6)));
    for c in &cells {
        out.push_str(&line([&c[0], &c[1], &c[2], &c[3]]));
    }
    if rows.iter().any(|r| !r.settled) {
        out.push_str("* not settled within the horizon\n");
    }
    out
}
