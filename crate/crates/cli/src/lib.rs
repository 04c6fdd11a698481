//! Experiment driver behind the `ionlab` binary.
//!
//! Every subcommand is turned into an [`ExperimentConfig`] and executed by
//! [`run_experiment`], so flag invocations and JSON configs share one code
//! path, one validation step and one hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use ionlab::dispersion::{d2lambda, d3lambda, d4lambda, dlambda, gamma0, lambda, min_group_velocity, space_resonance_roots, SignPair, DEFAULT_WINDOW};
use ionlab::paley::{energy_norm, z_norm_full, NormParams};
use ionlab::resonance::{parse_sign_pair, verify_iterated_resonance, verify_space_resonance, verify_time_resonance, SignTriple};
use ionlab::semigroup::{decay_exponent_probe, DecayProbeSpec, DecayProfile};
use ionlab::solver::{run_observed, DiagnosticsRecord, SimConfig};
use ionlab::{fieldio, Error};

pub mod output;

use output::{sidecar, to_json_bytes, write_atomic, Manifest, OutputEntry};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numeric guard: {0}")]
    Guard(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Guard(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numeric_guard() {
            CliError::Guard(e.to_string())
        } else {
            CliError::Config(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subcommand {
    Dispersion,
    Resonance,
    Norms,
    Decay,
    Simulate,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Dispersion => "dispersion",
            Subcommand::Resonance => "resonance",
            Subcommand::Norms => "norms",
            Subcommand::Decay => "decay",
            Subcommand::Simulate => "simulate",
        }
    }
}

/// On-disk experiment description; `params` is checked against the
/// subcommand's parameter struct, unknown keys are errors at both levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Subcommand,
    #[serde(default)]
    pub params: Value,
    #[serde(default)]
    pub seed: Option<u64>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionParams {
    pub x_min: f64,
    pub x_max: f64,
    pub points: usize,
}

impl Default for DispersionParams {
    fn default() -> Self {
        Self { x_min: 0.0, x_max: 6.0, points: 601 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    Time,
    Space,
    Iterated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResonanceParams {
    pub lemma: Lemma,
    pub samples: u64,
    /// Defaults to 0.5 (space, iterated); unused by the time lemma.
    pub window: Option<f64>,
    /// Output frequency for the space lemma; defaults to `(2γ₀ + 0.05, 0)`.
    pub xi: Option<[f64; 2]>,
    pub kappa: f64,
    /// `"++"`-style pair (space) or triple (iterated).
    pub signs: Option<String>,
    pub kappa1: f64,
    pub kappa2: f64,
}

impl Default for ResonanceParams {
    fn default() -> Self {
        Self { lemma: Lemma::Time, samples: 1_000_000, window: None, xi: None, kappa: 1e-4, signs: None, kappa1: 1e-8, kappa2: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormsParams {
    pub input: PathBuf,
    #[serde(default)]
    pub norm_params: NormParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayParams {
    /// Dyadic frequency shell `ψ_k`.
    pub k: Option<i32>,
    /// `γ₀` ball of index `n`.
    pub gamma0_shell: Option<u32>,
    pub gamma_scale: f64,
    pub tmin: f64,
    pub tmax: f64,
    pub count: usize,
    pub grid: usize,
    /// Defaults to the no-wrap minimum for `tmax`.
    pub domain_length: Option<f64>,
}

impl Default for DecayParams {
    fn default() -> Self {
        Self { k: None, gamma0_shell: None, gamma_scale: 64.0, tmin: 10.0, tmax: 1000.0, count: 21, grid: 1024, domain_length: None }
    }
}

impl DecayParams {
    pub fn profile(&self) -> Result<DecayProfile, CliError> {
        match (self.k, self.gamma0_shell) {
            (Some(k), None) => Ok(DecayProfile::Shell { k }),
            (None, Some(n)) => Ok(DecayProfile::Gamma0Ball { n, gamma_scale: self.gamma_scale }),
            _ => Err(CliError::Config("decay needs exactly one of k and gamma0_shell".into())),
        }
    }
}

/// A validated experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Dispersion(DispersionParams),
    Resonance(ResonanceParams),
    Norms(NormsParams),
    Decay(DecayParams),
    Simulate(SimConfig),
}

fn typed<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, CliError> {
    let v = if v.is_null() { Value::Object(Map::new()) } else { v.clone() };
    serde_json::from_value(v).map_err(|e| CliError::Config(format!("params: {e}")))
}

impl Experiment {
    pub fn subcommand(&self) -> Subcommand {
        match self {
            Experiment::Dispersion(_) => Subcommand::Dispersion,
            Experiment::Resonance(_) => Subcommand::Resonance,
            Experiment::Norms(_) => Subcommand::Norms,
            Experiment::Decay(_) => Subcommand::Decay,
            Experiment::Simulate(_) => Subcommand::Simulate,
        }
    }

    pub fn params_json(&self) -> Value {
        match self {
            Experiment::Dispersion(p) => serde_json::to_value(p),
            Experiment::Resonance(p) => serde_json::to_value(p),
            Experiment::Norms(p) => serde_json::to_value(p),
            Experiment::Decay(p) => serde_json::to_value(p),
            Experiment::Simulate(p) => serde_json::to_value(p),
        }
        .expect("serializable")
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn new(exp: &Experiment, seed: Option<u64>, out: PathBuf) -> Self {
        Self { subcommand: exp.subcommand(), params: exp.params_json(), seed, out }
    }

    /// Parses and validates `params` without touching the file system.
    pub fn experiment(&self) -> Result<Experiment, CliError> {
        let exp = match self.subcommand {
            Subcommand::Dispersion => {
                let p: DispersionParams = typed(&self.params)?;
                if !(p.x_min >= 0.0 && p.x_max > p.x_min && p.x_max.is_finite()) || p.points < 2 {
                    return Err(CliError::Config("need 0 <= x_min < x_max and at least 2 points".into()));
                }
                Experiment::Dispersion(p)
            }
            Subcommand::Resonance => {
                let p: ResonanceParams = typed(&self.params)?;
                if p.samples == 0 {
                    return Err(CliError::Config("samples must be positive".into()));
                }
                Experiment::Resonance(p)
            }
            Subcommand::Norms => {
                let p: NormsParams = typed(&self.params)?;
                p.norm_params.validate()?;
                Experiment::Norms(p)
            }
            Subcommand::Decay => {
                let p: DecayParams = typed(&self.params)?;
                p.profile()?;
                if !(p.tmin > 0.0 && p.tmax > p.tmin) || p.count < 2 {
                    return Err(CliError::Config("need 0 < tmin < tmax and count >= 2".into()));
                }
                spec_of(&p)?.validate()?;
                Experiment::Decay(p)
            }
            Subcommand::Simulate => {
                let mut c: SimConfig = typed(&self.params)?;
                if let Some(s) = self.seed {
                    c.initial_data.seed = s;
                }
                c.validate()?;
                Experiment::Simulate(c)
            }
        };
        Ok(exp)
    }
}

fn spec_of(p: &DecayParams) -> Result<DecayProbeSpec, CliError> {
    let mut spec = DecayProbeSpec::log_spaced(p.profile()?, p.tmin, p.tmax, p.count, p.grid);
    if let Some(l) = p.domain_length {
        spec.domain_length = l;
    }
    Ok(spec)
}

/// Canonical hash of what determines the output: subcommand, validated
/// parameters with defaults filled in, and seed. The output path is not part
/// of it.
pub fn config_hash(exp: &Experiment, seed: Option<u64>) -> String {
    let canon = json!({ "subcommand": exp.subcommand().name(), "params": exp.params_json(), "seed": seed });
    output::sha256_hex(serde_json::to_string(&canon).expect("serializable").as_bytes())
}

/// Effective seed recorded in manifests.
fn seed_of(exp: &Experiment, seed: Option<u64>) -> Option<u64> {
    match exp {
        Experiment::Simulate(c) => Some(c.initial_data.seed),
        Experiment::Resonance(_) => Some(seed.unwrap_or(0)),
        _ => seed,
    }
}

/// Files written by a finished experiment (paths as written).
#[derive(Debug, Clone, PartialEq)]
pub struct Written {
    pub files: Vec<PathBuf>,
}

fn manifest(exp: &Experiment, seed: Option<u64>) -> Manifest {
    Manifest {
        tool: "ionlab",
        version: env!("CARGO_PKG_VERSION"),
        core_version: ionlab::VERSION,
        subcommand: exp.subcommand().name().into(),
        config_hash: config_hash(exp, seed),
        seed: seed_of(exp, seed),
        config: exp.params_json(),
        status: "ok".into(),
        message: None,
        results: Map::new(),
        outputs: Vec::new(),
    }
}

/// Writes `bytes` to `path` and the manifest next to it.
fn emit_single(path: &Path, bytes: &[u8], mut m: Manifest) -> Result<Written, CliError> {
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    m.outputs.push(OutputEntry::new(name, bytes));
    let side = sidecar(path);
    write_atomic(path, bytes)?;
    write_atomic(&side, &to_json_bytes(&m))?;
    Ok(Written { files: vec![path.to_path_buf(), side] })
}

/// Runs a configured experiment. Nothing is written unless the configuration
/// validates; numeric guards in a simulation still leave the diagnostics
/// (with a flagged last record) and then surface as [`CliError::Guard`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Written, CliError> {
    let exp = cfg.experiment()?;
    let out = output::resolve_out(&cfg.out);
    let m = manifest(&exp, cfg.seed);
    match &exp {
        Experiment::Dispersion(p) => emit_single(&out, dispersion_csv(p).as_bytes(), with_dispersion_results(m)?),
        Experiment::Resonance(p) => {
            let report = resonance_report(p, cfg.seed.unwrap_or(0))?;
            emit_single(&out, &to_json_bytes(&report), m)
        }
        Experiment::Norms(p) => {
            let v = norms(p)?;
            emit_single(&out, &to_json_bytes(&v), m)
        }
        Experiment::Decay(p) => {
            let rep = decay_exponent_probe(&spec_of(p)?)?;
            let mut csv = String::from("t,supnorm,l2norm\n");
            for ((t, s), l) in rep.times.iter().zip(&rep.sup_norms).zip(&rep.l2_norms) {
                writeln!(csv, "{t:e},{s:e},{l:e}").unwrap();
            }
            let mut m = m;
            m.results.insert("late_fit".into(), serde_json::to_value(rep.late).unwrap());
            if let Some(e) = rep.early {
                m.results.insert("early_fit".into(), serde_json::to_value(e).unwrap());
            }
            m.results.insert("refinement_change".into(), json!(rep.refinement_change));
            m.results.insert("max_boundary_fraction".into(), json!(rep.max_boundary_fraction));
            m.results.insert("domain_length".into(), json!(rep.domain_length));
            emit_single(&out, csv.as_bytes(), m)
        }
        Experiment::Simulate(c) => simulate(c, &out, m),
    }
}

fn dispersion_csv(p: &DispersionParams) -> String {
    let mut s = String::from("x,lambda,dlambda,d2lambda\n");
    let h = (p.x_max - p.x_min) / (p.points - 1) as f64;
    for i in 0..p.points {
        let x = p.x_min + i as f64 * h;
        writeln!(s, "{x},{},{},{}", lambda(x), dlambda(x), d2lambda(x)).unwrap();
    }
    s
}

fn with_dispersion_results(mut m: Manifest) -> Result<Manifest, CliError> {
    let g = gamma0();
    let s = 2.0 * g + 0.05;
    let roots = space_resonance_roots(s, SignPair::PP, DEFAULT_WINDOW)?;
    m.results.insert("gamma0".into(), json!(g));
    m.results.insert("d3lambda_gamma0".into(), json!(d3lambda(g)));
    m.results.insert("d4lambda_gamma0".into(), json!(d4lambda(g)));
    m.results.insert("min_group_velocity".into(), json!(min_group_velocity()));
    m.results.insert("space_roots_s".into(), json!(s));
    m.results.insert("space_roots".into(), json!(roots));
    Ok(m)
}

fn resonance_report(p: &ResonanceParams, seed: u64) -> Result<ionlab::resonance::VerificationReport, CliError> {
    let window = p.window.unwrap_or(DEFAULT_WINDOW);
    let rep = match p.lemma {
        Lemma::Time => verify_time_resonance(p.samples, seed),
        Lemma::Space => {
            let signs = parse_sign_pair(p.signs.as_deref().unwrap_or("++"))?;
            let xi = p.xi.unwrap_or([2.0 * gamma0() + 0.05, 0.0]);
            verify_space_resonance(xi, p.kappa, signs, p.samples, window, seed)?
        }
        Lemma::Iterated => {
            let signs: SignTriple = p.signs.as_deref().unwrap_or("+-+").parse()?;
            verify_iterated_resonance(p.kappa1, p.kappa2, signs, p.samples, window, seed)?
        }
    };
    Ok(rep)
}

fn norms(p: &NormsParams) -> Result<Value, CliError> {
    let path = &p.input;
    let bytes = std::fs::read(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let field = fieldio::decode(&bytes)?;
    let g = *field.grid();
    let np = p.norm_params;
    let rotations = np.n1 as u32;
    let e = energy_norm(&field, &np, rotations)?;
    let z = z_norm_full(&field, &np);
    Ok(json!({
        "grid": g.n,
        "domain_length": g.length,
        "input_sha256": output::sha256_hex(&bytes),
        "l2": field.l2_spectral(),
        "energy_norm": e,
        "energy_rotations": rotations,
        "z_norm": z.value,
        "z_argmax": z.argmax.map(|(j, k)| json!({"j": j, "k": k})),
        "norm_params": np,
    }))
}

fn simulate(cfg: &SimConfig, dir: &Path, mut m: Manifest) -> Result<Written, CliError> {
    let mut written = Vec::new();
    let mut entries = Vec::new();
    let mut csv = String::from(DiagnosticsRecord::CSV_HEADER);
    csv.push('\n');
    let mut io_err: Option<CliError> = None;
    let every = cfg.snapshot_every;
    let outcome = run_observed(
        cfg,
        |k, st| {
            if every == 0 || k % every != 0 {
                return Ok(());
            }
            for (tag, f) in [("rho", &st.rho), ("psi", &st.psi)] {
                let name = format!("snapshot_{k:06}_{tag}.field");
                let bytes = fieldio::encode(f);
                let path = dir.join(&name);
                if let Err(e) = write_atomic(&path, &bytes) {
                    io_err = Some(e);
                    return Err(Error::InvalidInput("snapshot write failed".into()));
                }
                entries.push(OutputEntry::new(name, &bytes));
                written.push(path);
            }
            Ok(())
        },
        |r| {
            csv.push_str(&r.csv_row());
            csv.push('\n');
            Ok(())
        },
    );
    let outcome = match (outcome, io_err) {
        (_, Some(e)) => return Err(e),
        (Err(e), None) => return Err(e.into()),
        (Ok(o), None) => o,
    };
    let diag = dir.join("diagnostics.csv");
    write_atomic(&diag, csv.as_bytes())?;
    entries.insert(0, OutputEntry::new("diagnostics.csv", csv.as_bytes()));
    written.insert(0, diag);
    if let Some(e) = &outcome.error {
        m.status = if e.is_numeric_guard() { "numeric_guard".into() } else { "error".into() };
        m.message = Some(e.to_string());
    }
    m.results.insert("records".into(), json!(outcome.records.len()));
    m.outputs = entries;
    let man = dir.join("run-manifest.json");
    write_atomic(&man, &to_json_bytes(&m))?;
    written.push(man);
    match outcome.error {
        Some(e) => Err(e.into()),
        None => Ok(Written { files: written }),
    }
}
