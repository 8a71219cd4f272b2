use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use tebd::evolution::{
    self, apply_local_excitation, evolve_imaginary, evolve_real, DenseReference, ExactReference, NoSampler,
    RealTimeParams, StepSample, TwoMagnonReference,
};
use tebd::hamiltonian::LocalHamiltonian;
use tebd::kernel::c64;
use tebd::observables::{self, CorrelatorParams, CorrelatorSeries, Taper};
use tebd::oracle::{DensePropagator, DEFAULT_DENSE_CAP};
use tebd::{random, TebdError, TruncationPolicy, VidalMps};

use crate::config::{self, ConfigError, ExperimentConfig, InitialSpec, ModelSpec, OracleKind, TaperSpec};
use crate::output::{num, sha256_hex, Csv, RunDir};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    NotConverged(String),
    #[error("{0}")]
    Abort(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Abort(_) => 4,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<TebdError> for CliError {
    fn from(e: TebdError) -> Self {
        match e {
            TebdError::NumericalAbort { .. } => CliError::Abort(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub struct Context {
    pub config: ExperimentConfig,
    pub parallel: bool,
    pub resume: Option<PathBuf>,
}

fn bad<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Config(ConfigError(msg.into())))
}

fn require<'a, T>(value: &'a Option<T>, name: &str) -> CliResult<&'a T> {
    value.as_ref().ok_or_else(|| CliError::Config(ConfigError(format!("missing [{name}] table"))))
}

fn tilted(n: usize, theta: f64) -> CliResult<VidalMps> {
    let local = vec![c64(theta.cos(), 0.0), c64(theta.sin(), 0.0)];
    Ok(VidalMps::from_product_state(&vec![local; n])?)
}

fn read_snapshot(path: &Path, h: &LocalHamiltonian) -> CliResult<VidalMps> {
    let bytes = fs::read(path)?;
    let s = VidalMps::from_snapshot_bytes(&bytes)?;
    if s.n() != h.n() || s.d() != h.d() {
        return bad(format!(
            "snapshot {} has n={}, d={}; model has n={}, d={}",
            path.display(),
            s.n(),
            s.d(),
            h.n(),
            h.d()
        ));
    }
    Ok(s)
}

fn validate_model(ctx: &Context) -> CliResult<(&ModelSpec, LocalHamiltonian)> {
    let spec = require(&ctx.config.model, "model")?;
    let h = spec.build()?;
    Ok((spec, h))
}

fn dense_fits(h: &LocalHamiltonian) -> bool {
    (h.d() as f64).powi(h.n() as i32) <= DEFAULT_DENSE_CAP as f64
}

/// Builds the initial state, running imaginary time for `Ground` specs.
fn prepare_state(ctx: &Context, h: &LocalHamiltonian, init: &InitialSpec, out: &mut RunDir) -> CliResult<VidalMps> {
    let d = h.d();
    let mut state = match init {
        InitialSpec::Basis { configuration, .. } => VidalMps::basis_state(d, configuration)?,
        InitialSpec::Tilted { theta, .. } => tilted(h.n(), *theta)?,
        InitialSpec::Snapshot { path, .. } => read_snapshot(path, h)?,
        InitialSpec::Ground { theta, .. } => {
            let spec = ctx.config.imaginary.clone().unwrap_or_default();
            let params = config::imaginary_params(&spec, &ctx.config.truncation, ctx.parallel)?;
            let mut s = tilted(h.n(), *theta)?;
            let report = out.stage("ground state", |_| evolve_imaginary(&mut s, h, &params, &mut NoSampler))?;
            if !report.converged {
                return Err(CliError::NotConverged("imaginary-time search for the initial state did not converge".into()));
            }
            s
        }
    };
    let ops = init
        .excitation()
        .iter()
        .map(|x| Ok((x.site, config::operator(&x.operator, d)?)))
        .collect::<Result<Vec<_>, ConfigError>>()?;
    if !ops.is_empty() {
        apply_local_excitation(&mut state, &ops)?;
    }
    Ok(state)
}

#[derive(Serialize)]
struct StageReport {
    delta_tau: f64,
    steps: usize,
    converged: bool,
    final_overlap_change: f64,
}

#[derive(Serialize)]
struct ConvergenceSummary {
    converged: bool,
    energy: f64,
    steps: usize,
    max_chi: usize,
    discarded_weight_cum: f64,
    stages: Vec<StageReport>,
    dense_ground_energy: Option<f64>,
}

pub fn ground(ctx: &Context, out: &mut RunDir) -> CliResult<()> {
    let (_, h) = validate_model(ctx)?;
    let init = ctx.config.initial.clone().unwrap_or(InitialSpec::Tilted { theta: 0.3, excitation: vec![] });
    config::check_initial(&init, h.n(), h.d())?;
    if !init.excitation().is_empty() {
        return bad("ground search does not take an excitation");
    }
    let spec = ctx.config.imaginary.clone().unwrap_or_default();
    let params = config::imaginary_params(&spec, &ctx.config.truncation, ctx.parallel)?;
    match ctx.config.oracle {
        OracleKind::TwoMagnon => return bad("the two-magnon oracle applies to real-time quenches only"),
        OracleKind::Dense if !dense_fits(&h) => return bad("dense oracle exceeds the size cap"),
        _ => {}
    }

    let mut state = match &init {
        InitialSpec::Ground { theta, .. } => tilted(h.n(), *theta)?,
        other => prepare_state(ctx, &h, other, out)?,
    };
    let report = out.stage("imaginary time", |_| evolve_imaginary(&mut state, &h, &params, &mut NoSampler))?;

    let mut trace = Csv::new(&["tau", "energy", "max_chi", "discarded_weight_cum"]);
    for s in &report.samples {
        if let Some(e) = s.energy {
            trace.row(&[num(s.time), num(e), s.chi_profile.chi.to_string(), num(s.cumulative_discarded_weight)]);
        }
    }
    let energy = observables::energy(&state, &h)?;
    let dense_ground_energy = match ctx.config.oracle {
        OracleKind::Dense => Some(out.stage("dense oracle", |_| DensePropagator::new(&h, DEFAULT_DENSE_CAP))?.ground_state().0),
        _ => None,
    };
    out.write("ground_state.mps", &state.to_snapshot_bytes())?;
    out.write("energy_trace.csv", trace.as_bytes())?;
    out.write_json(
        "convergence.json",
        &ConvergenceSummary {
            converged: report.converged,
            energy,
            steps: report.steps,
            max_chi: report.max_chi,
            discarded_weight_cum: report.cumulative_discarded_weight,
            stages: report
                .stages
                .iter()
                .map(|s| StageReport {
                    delta_tau: s.delta_tau,
                    steps: s.steps,
                    converged: s.converged,
                    final_overlap_change: s.final_overlap_change,
                })
                .collect(),
            dense_ground_energy,
        },
    )?;
    if report.converged {
        Ok(())
    } else {
        Err(CliError::NotConverged("imaginary-time search did not converge within its step budget".into()))
    }
}

const SPECTRUM_HEADER: [&str; 3] = ["t", "alpha", "p_alpha"];
const CHI_HEADER: [&str; 4] = ["t", "step", "max_chi", "discarded_weight_cum"];
const FIDELITY_HEADER: [&str; 2] = ["t", "fidelity_error"];

/// State needed to continue an interrupted quench.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    config_sha256: String,
    step: usize,
    discarded_weight: f64,
    snapshot: String,
    spectrum_rows: String,
    chi_rows: String,
    fidelity_rows: String,
}

fn config_digest(config: &ExperimentConfig) -> String {
    sha256_hex(serde_json::to_string(config).unwrap_or_default().as_bytes())
}

fn reference(ctx: &Context, h: &LocalHamiltonian, init: &InitialSpec, start: &VidalMps) -> CliResult<Option<Box<dyn ExactReference>>> {
    Ok(match ctx.config.oracle {
        OracleKind::None => None,
        OracleKind::Dense => Some(Box::new(DenseReference::new(h, start, DEFAULT_DENSE_CAP)?)),
        OracleKind::TwoMagnon => {
            let Some(ModelSpec::HeisenbergFerromagnet { n, field, coupling }) = &ctx.config.model else {
                return bad("the two-magnon oracle needs the heisenberg_ferromagnet model");
            };
            let InitialSpec::Basis { configuration, excitation } = init else {
                return bad("the two-magnon oracle needs a basis initial state");
            };
            let flipped: Vec<usize> = (0..configuration.len()).filter(|&i| configuration[i] == 1).collect();
            if flipped.len() != 2 || !excitation.is_empty() {
                return bad("the two-magnon oracle needs exactly two flipped sites and no excitation");
            }
            Some(Box::new(TwoMagnonReference::new(*n, *field, *coupling, (flipped[0], flipped[1]))?))
        }
    })
}

fn check_oracle_static(ctx: &Context, h: &LocalHamiltonian, init: &InitialSpec) -> CliResult<()> {
    match ctx.config.oracle {
        OracleKind::Dense if !dense_fits(h) => bad("dense oracle exceeds the size cap"),
        OracleKind::TwoMagnon => {
            let ok = matches!(ctx.config.model, Some(ModelSpec::HeisenbergFerromagnet { .. }))
                && matches!(init, InitialSpec::Basis { configuration, excitation }
                    if excitation.is_empty() && configuration.iter().filter(|&&c| c == 1).count() == 2
                        && configuration.iter().all(|&c| c <= 1));
            if ok {
                Ok(())
            } else {
                bad("the two-magnon oracle needs the heisenberg_ferromagnet model and a basis state with two flipped sites")
            }
        }
        _ => Ok(()),
    }
}

pub fn quench(ctx: &Context, out: &mut RunDir) -> CliResult<()> {
    let (_, h) = validate_model(ctx)?;
    let n = h.n();
    let init = require(&ctx.config.initial, "initial")?.clone();
    config::check_initial(&init, n, h.d())?;
    let evo = require(&ctx.config.evolution, "evolution")?.clone();
    config::check_evolution(&evo, n)?;
    let policy = config::policy(&ctx.config.truncation)?;
    check_oracle_static(ctx, &h, &init)?;
    let bond = evo.spectrum_bond.unwrap_or(n / 2);
    let digest = config_digest(&ctx.config);

    let checkpoint = match &ctx.resume {
        None => None,
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
            let cp: Checkpoint =
                serde_json::from_str(&text).map_err(|e| ConfigError(format!("malformed checkpoint: {e}")))?;
            if cp.config_sha256 != digest {
                return bad("checkpoint was written for a different configuration");
            }
            Some(cp)
        }
    };

    let start = prepare_state(ctx, &h, &init, out)?;
    let oracle = out.stage("oracle setup", |_| reference(ctx, &h, &init, &start))?;

    let mut spectrum = Csv::new(&SPECTRUM_HEADER);
    let mut chi = Csv::new(&CHI_HEADER);
    let mut fidelity = Csv::new(&FIDELITY_HEADER);
    let mut params = RealTimeParams::new(evo.total_time, evo.delta, config::order(evo.order)?);
    params.policy = policy;
    params.sample_every = evo.sample_every;
    params.merge_half_steps = evo.merge_half_steps;
    params.parallel = ctx.parallel;
    params.spectrum_bonds = vec![bond];

    let mut state = start;
    if let Some(cp) = &checkpoint {
        let dir = ctx.resume.as_ref().and_then(|p| p.parent()).unwrap_or(Path::new("."));
        state = read_snapshot(&dir.join(&cp.snapshot), &h)?;
        params.start_step = cp.step;
        params.start_discarded_weight = cp.discarded_weight;
        spectrum = Csv::with_rows(&SPECTRUM_HEADER, &cp.spectrum_rows);
        chi = Csv::with_rows(&CHI_HEADER, &cp.chi_rows);
        fidelity = Csv::with_rows(&FIDELITY_HEADER, &cp.fidelity_rows);
    }

    let started = Instant::now();
    let result = {
        let out = &mut *out;
        let mut sampler = |x: &StepSample<'_>| -> tebd::Result<()> {
            let r = x.record;
            let t = num(r.time);
            for (alpha, lam) in r.spectra[0].1.iter().enumerate() {
                spectrum.row(&[t.clone(), (alpha + 1).to_string(), num(lam * lam)]);
            }
            chi.row(&[t.clone(), r.step.to_string(), r.chi_profile.chi.to_string(), num(r.cumulative_discarded_weight)]);
            if let Some(e) = r.fidelity_error {
                fidelity.row(&[t, num(e)]);
            }
            if evo.checkpoint_every > 0 && r.step > 0 && r.step % evo.checkpoint_every == 0 {
                out.write_untracked("checkpoint.mps", &x.state.to_snapshot_bytes())?;
                let cp = Checkpoint {
                    config_sha256: digest.clone(),
                    step: r.step,
                    discarded_weight: r.cumulative_discarded_weight,
                    snapshot: "checkpoint.mps".into(),
                    spectrum_rows: spectrum.body().to_string(),
                    chi_rows: chi.body().to_string(),
                    fidelity_rows: fidelity.body().to_string(),
                };
                let text = serde_json::to_string_pretty(&cp).map_err(std::io::Error::other)?;
                out.write_untracked("checkpoint.json", text.as_bytes())?;
            }
            Ok(())
        };
        evolve_real(&mut state, &h, &params, oracle.as_deref(), &mut sampler)
    };
    out.stage_done("real time", started.elapsed().as_secs_f64());

    let outcome = match result {
        Ok(_) => {
            out.write("final_state.mps", &state.to_snapshot_bytes())?;
            Ok(())
        }
        Err(TebdError::NumericalAbort { step, reason, last_good }) => {
            out.write("last_good.mps", &last_good.to_snapshot_bytes())?;
            Err(CliError::Abort(format!("numerical abort at step {step}: {reason}")))
        }
        Err(e) => Err(e.into()),
    };
    out.write("spectrum.csv", spectrum.as_bytes())?;
    out.write("chi_trace.csv", chi.as_bytes())?;
    if oracle.is_some() {
        out.write("fidelity.csv", fidelity.as_bytes())?;
    }
    outcome
}

#[derive(Serialize)]
struct CorrelatorSummary {
    source: Option<usize>,
    ground_energy: Option<f64>,
    peak_k: f64,
    peak_omega: f64,
    oracle_max_deviation: Option<f64>,
}

fn read_series(path: &Path) -> CliResult<CorrelatorSeries> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| ConfigError(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["x", "t", "re", "im"] {
        return bad("correlator input must have columns x,t,re,im");
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| ConfigError(e.to_string()))?;
        let parse = |i: usize| rec[i].trim().parse::<f64>().map_err(|e| ConfigError(format!("bad number {:?}: {e}", &rec[i])));
        let x: isize = rec[0].trim().parse().map_err(|e| ConfigError(format!("bad position {:?}: {e}", &rec[0])))?;
        rows.push((x, parse(1)?, parse(2)?, parse(3)?));
    }
    let mut positions: Vec<isize> = rows.iter().map(|r| r.0).collect();
    positions.sort_unstable();
    positions.dedup();
    let mut times: Vec<f64> = rows.iter().map(|r| r.1).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let nt = times.len();
    if rows.len() != positions.len() * nt {
        return bad("correlator input is not a complete (x, t) grid");
    }
    let mut values = vec![None; rows.len()];
    for (x, t, re, im) in rows {
        let xi = positions.binary_search(&x).unwrap();
        let ti = times.binary_search_by(|p| p.total_cmp(&t)).unwrap();
        if values[xi * nt + ti].replace(c64(re, im)).is_some() {
            return bad("correlator input repeats a grid point");
        }
    }
    Ok(CorrelatorSeries {
        source: 0,
        positions,
        times,
        values: values.into_iter().map(|v| v.unwrap()).collect(),
        ground_energy: 0.0,
    })
}

fn write_structure_factor(out: &mut RunDir, series: &CorrelatorSeries, taper: Taper) -> CliResult<(f64, f64)> {
    let sf = observables::structure_factor(series, taper).map_err(|e| ConfigError(e.to_string()))?;
    let mut csv = Csv::new(&["k", "omega", "re", "abs"]);
    for (ki, &k) in sf.ks.iter().enumerate() {
        for (wi, &w) in sf.omegas.iter().enumerate() {
            let v = sf.value(ki, wi);
            csv.row(&[num(k), num(w), num(v.re), num(v.norm())]);
        }
    }
    out.write("structure_factor.csv", csv.as_bytes())?;
    let (ki, wi) = sf.peak();
    Ok((sf.ks[ki], sf.omegas[wi]))
}

fn dense_correlator_deviation(h: &LocalHamiltonian, gs: &VidalMps, op: &tebd::ComplexMatrix, series: &CorrelatorSeries) -> CliResult<f64> {
    let prop = DensePropagator::new(h, DEFAULT_DENSE_CAP)?;
    let dense = tebd::oracle::dense_from_mps(gs, DEFAULT_DENSE_CAP)?;
    let mut phi = dense.clone();
    phi.apply_local(series.source, op)?;
    let mut worst: f64 = 0.0;
    for (ti, &t) in series.times.iter().enumerate() {
        let evolved = prop.evolve_vector(phi.amplitudes(), t);
        for (xi, &x) in series.positions.iter().enumerate() {
            let mut bra = dense.clone();
            bra.apply_local((series.source as isize + x) as usize, op)?;
            let exact = bra.amplitudes().dotc(&evolved) * c64(0.0, series.ground_energy * t).exp();
            worst = worst.max((series.value(xi, ti) - exact).norm());
        }
    }
    Ok(worst)
}

pub fn correlator(ctx: &Context, out: &mut RunDir) -> CliResult<()> {
    let spec = require(&ctx.config.correlator, "correlator")?.clone();
    let taper = match spec.taper {
        TaperSpec::None => Taper::None,
        TaperSpec::Hann => Taper::Hann,
    };
    if let Some(path) = &spec.input {
        if ctx.config.oracle != OracleKind::None {
            return bad("an oracle cannot check a correlator read from a file");
        }
        let series = read_series(path)?;
        let (peak_k, peak_omega) = out.stage("transform", |out| write_structure_factor(out, &series, taper))?;
        out.write_json(
            "correlator_summary.json",
            &CorrelatorSummary { source: None, ground_energy: None, peak_k, peak_omega, oracle_max_deviation: None },
        )?;
        return Ok(());
    }

    let (_, h) = validate_model(ctx)?;
    let init = ctx.config.initial.clone().unwrap_or(InitialSpec::Ground { theta: 0.3, excitation: vec![] });
    config::check_initial(&init, h.n(), h.d())?;
    if !init.excitation().is_empty() {
        return bad("the correlator applies its own operator; remove initial.excitation");
    }
    let grid = config::correlator_grid(&spec, h.n())?;
    let op = config::operator(require(&spec.operator, "correlator.operator")?, h.d())?;
    match ctx.config.oracle {
        OracleKind::TwoMagnon => return bad("the two-magnon oracle applies to real-time quenches only"),
        OracleKind::Dense if !dense_fits(&h) => return bad("dense oracle exceeds the size cap"),
        _ => {}
    }
    let params = CorrelatorParams {
        source: spec.source,
        positions: grid.positions,
        times: grid.times,
        delta: grid.delta,
        order: config::order(spec.order)?,
        policy: config::policy(&ctx.config.truncation)?,
        parallel: ctx.parallel,
    };

    let gs = prepare_state(ctx, &h, &init, out)?;
    let series = out
        .stage("correlator", |_| observables::dynamic_correlator(&gs, &h, &op, &params))
        .map_err(|e| match e {
            TebdError::ZeroNorm(_) => CliError::Runtime("the operator annihilates the ground state".into()),
            other => other.into(),
        })?;
    let mut csv = Csv::new(&["x", "t", "re", "im"]);
    for (xi, &x) in series.positions.iter().enumerate() {
        for (ti, &t) in series.times.iter().enumerate() {
            let v = series.value(xi, ti);
            csv.row(&[x.to_string(), num(t), num(v.re), num(v.im)]);
        }
    }
    out.write("correlator.csv", csv.as_bytes())?;
    let (peak_k, peak_omega) = out.stage("transform", |out| write_structure_factor(out, &series, taper))?;
    let oracle_max_deviation = match ctx.config.oracle {
        OracleKind::Dense => Some(out.stage("dense oracle", |_| dense_correlator_deviation(&h, &gs, &op, &series))?),
        _ => None,
    };
    out.write_json(
        "correlator_summary.json",
        &CorrelatorSummary {
            source: Some(series.source),
            ground_energy: Some(series.ground_energy),
            peak_k,
            peak_omega,
            oracle_max_deviation,
        },
    )?;
    Ok(())
}

/// Best-of-`repeats` wall clock for `steps` second-order steps on a random
/// uniform chain whose bonds have first been grown to `chi`.
fn time_steps(seed: u64, n: usize, chi: usize, delta: f64, spec: &config::ScalingSpec, parallel: bool) -> CliResult<f64> {
    let mut rng = StdRng::seed_from_u64(seed);
    let k1 = random::hermitian(&mut rng, 2);
    let k2 = random::hermitian(&mut rng, 4);
    let h = LocalHamiltonian::uniform(n, k1, k2)?;
    let locals: Vec<_> = (0..n).map(|_| random::unit_vector(&mut rng, 2)).collect();
    let mut warm = VidalMps::from_product_state(&locals)?;
    let mut p = RealTimeParams::new(spec.warmup_steps as f64 * delta, delta, tebd::hamiltonian::TrotterOrder::Second);
    p.policy = TruncationPolicy::with_chi_max(chi);
    p.sample_every = usize::MAX;
    p.parallel = parallel;
    evolve_real(&mut warm, &h, &p, None, &mut NoSampler)?;
    p.total_time = spec.steps as f64 * delta;
    let mut best = f64::INFINITY;
    for _ in 0..spec.repeats {
        let mut s = warm.clone();
        let start = Instant::now();
        evolve_real(&mut s, &h, &p, None, &mut NoSampler)?;
        best = best.min(start.elapsed().as_secs_f64());
    }
    Ok(best)
}

pub fn scaling(ctx: &Context, out: &mut RunDir) -> CliResult<()> {
    let spec = require(&ctx.config.scaling, "scaling")?.clone();
    config::check_scaling(&spec)?;
    if ctx.config.oracle != OracleKind::None {
        return bad("scaling sweeps do not use an oracle");
    }
    for &d in &spec.delta {
        evolution::step_count(spec.steps as f64 * d, d).map_err(|e| ConfigError(e.to_string()))?;
    }
    let mut csv = Csv::new(&["n", "chi", "delta", "steps", "seconds"]);
    for &n in &spec.n {
        for &chi in &spec.chi {
            for &delta in &spec.delta {
                let label = format!("n={n} chi={chi} delta={delta}");
                let secs = out.stage(&label, |_| time_steps(ctx.config.seed, n, chi, delta, &spec, ctx.parallel))?;
                csv.row(&[n.to_string(), chi.to_string(), num(delta), spec.steps.to_string(), num(secs)]);
            }
        }
    }
    out.write("scaling.csv", csv.as_bytes())?;
    Ok(())
}
