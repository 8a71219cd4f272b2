//! Experiment configuration, read from TOML.
//!
//! Every table rejects unknown keys. [`ExperimentConfig::from_toml`] only
//! parses; the `resolve_*` functions check ranges and cross-field rules and
//! must succeed before any computation starts.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use tebd::evolution::{ConvergenceCriterion, ImaginaryTimeParams};
use tebd::hamiltonian::{pauli, LocalHamiltonian, TrotterOrder};
use tebd::kernel::c64;
use tebd::{ComplexMatrix, TruncationPolicy};

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OracleKind {
    #[default]
    None,
    Dense,
    TwoMagnon,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub oracle: OracleKind,
    pub model: Option<ModelSpec>,
    pub initial: Option<InitialSpec>,
    #[serde(default)]
    pub truncation: TruncationSpec,
    pub evolution: Option<EvolutionSpec>,
    pub imaginary: Option<ImaginarySpec>,
    pub correlator: Option<CorrelatorSpec>,
    pub scaling: Option<ScalingSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// `-B Σ σz - J Σ σ·σ`.
    HeisenbergFerromagnet { n: usize, field: f64, coupling: f64 },
    /// `-h Σ σx - J Σ σz σz`.
    TransverseIsing { n: usize, field: f64, coupling: f64 },
    /// Uniform `K1` (`d×d`) and `K2` (`d²×d²`), row-major `[re, im]` pairs.
    Explicit { n: usize, d: usize, k1: Vec<[f64; 2]>, k2: Vec<[f64; 2]> },
}

/// A named spin-1/2 operator or a row-major list of `[re, im]` entries.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorSpec {
    Named(String),
    Matrix(Vec<[f64; 2]>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSpec {
    pub site: usize,
    pub operator: OperatorSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Basis {
        configuration: Vec<usize>,
        #[serde(default)]
        excitation: Vec<ExcitationSpec>,
    },
    /// `(cos θ |0⟩ + sin θ |1⟩)` on every site.
    Tilted {
        theta: f64,
        #[serde(default)]
        excitation: Vec<ExcitationSpec>,
    },
    /// Imaginary-time ground state, started from a tilted product state.
    Ground {
        #[serde(default = "default_theta")]
        theta: f64,
        #[serde(default)]
        excitation: Vec<ExcitationSpec>,
    },
    Snapshot {
        path: PathBuf,
        #[serde(default)]
        excitation: Vec<ExcitationSpec>,
    },
}

fn default_theta() -> f64 {
    0.3
}

impl InitialSpec {
    pub fn excitation(&self) -> &[ExcitationSpec] {
        match self {
            InitialSpec::Basis { excitation, .. }
            | InitialSpec::Tilted { excitation, .. }
            | InitialSpec::Ground { excitation, .. }
            | InitialSpec::Snapshot { excitation, .. } => excitation,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub chi_max: Option<usize>,
    #[serde(default)]
    pub weight_tol: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSpec {
    pub total_time: f64,
    pub delta: f64,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "one")]
    pub sample_every: usize,
    #[serde(default = "yes")]
    pub merge_half_steps: bool,
    /// Bond whose spectrum is recorded; defaults to `n / 2`.
    pub spectrum_bond: Option<usize>,
    /// Steps between checkpoints; 0 disables them.
    #[serde(default)]
    pub checkpoint_every: usize,
}

fn default_order() -> u32 {
    2
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImaginarySpec {
    #[serde(default = "default_stages")]
    pub stages: Vec<f64>,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default = "default_overlap_tol")]
    pub overlap_tol: f64,
    #[serde(default = "default_probe_steps")]
    pub probe_steps: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps_per_stage: usize,
}

impl Default for ImaginarySpec {
    fn default() -> Self {
        Self {
            stages: default_stages(),
            order: default_order(),
            overlap_tol: default_overlap_tol(),
            probe_steps: default_probe_steps(),
            max_steps_per_stage: default_max_steps(),
        }
    }
}

fn default_stages() -> Vec<f64> {
    vec![0.1, 0.01, 0.001]
}

fn default_overlap_tol() -> f64 {
    1e-10
}

fn default_probe_steps() -> usize {
    10
}

fn default_max_steps() -> usize {
    100_000
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaperSpec {
    #[default]
    None,
    Hann,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrelatorSpec {
    /// Existing `(x, t, re, im)` grid; only the transform is computed.
    pub input: Option<PathBuf>,
    pub operator: Option<OperatorSpec>,
    pub source: Option<usize>,
    pub min_offset: Option<isize>,
    pub max_offset: Option<isize>,
    pub t_max: Option<f64>,
    pub t_step: Option<f64>,
    pub delta: Option<f64>,
    #[serde(default = "default_order")]
    pub order: u32,
    #[serde(default)]
    pub taper: TaperSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingSpec {
    pub n: Vec<usize>,
    pub chi: Vec<usize>,
    #[serde(default = "default_scaling_delta")]
    pub delta: Vec<f64>,
    pub steps: usize,
    #[serde(default = "default_warmup")]
    pub warmup_steps: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
}

fn default_scaling_delta() -> Vec<f64> {
    vec![0.05]
}

fn default_warmup() -> usize {
    100
}

fn default_repeats() -> usize {
    3
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(e.to_string()))
    }
}

pub fn order(p: u32) -> Result<TrotterOrder, ConfigError> {
    match p {
        1 => Ok(TrotterOrder::First),
        2 => Ok(TrotterOrder::Second),
        _ => invalid(format!("Trotter order must be 1 or 2, got {p}")),
    }
}

fn finite_positive(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        invalid(format!("{name} must be positive and finite, got {v}"))
    }
}

fn finite(name: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() {
        Ok(v)
    } else {
        invalid(format!("{name} must be finite"))
    }
}

fn square(name: &str, entries: &[[f64; 2]], dim: usize) -> Result<ComplexMatrix, ConfigError> {
    if entries.len() != dim * dim {
        return invalid(format!("{name} needs {} entries, got {}", dim * dim, entries.len()));
    }
    if entries.iter().flatten().any(|x| !x.is_finite()) {
        return invalid(format!("{name} has non-finite entries"));
    }
    let values: Vec<_> = entries.iter().map(|[re, im]| c64(*re, *im)).collect();
    Ok(ComplexMatrix::from_row_slice(dim, dim, &values))
}

pub fn operator(spec: &OperatorSpec, d: usize) -> Result<ComplexMatrix, ConfigError> {
    match spec {
        OperatorSpec::Matrix(entries) => square("operator", entries, d),
        OperatorSpec::Named(name) => {
            if d != 2 {
                return invalid(format!("named operator {name:?} needs d = 2"));
            }
            Ok(match name.as_str() {
                "identity" => pauli::identity(),
                "sigma_x" => pauli::sigma_x(),
                "sigma_y" => pauli::sigma_y(),
                "sigma_z" => pauli::sigma_z(),
                "sigma_plus" => pauli::sigma_plus(),
                "sigma_minus" => pauli::sigma_minus(),
                _ => return invalid(format!("unknown operator {name:?}")),
            })
        }
    }
}

impl ModelSpec {
    pub fn n(&self) -> usize {
        match self {
            ModelSpec::HeisenbergFerromagnet { n, .. }
            | ModelSpec::TransverseIsing { n, .. }
            | ModelSpec::Explicit { n, .. } => *n,
        }
    }

    pub fn build(&self) -> Result<LocalHamiltonian, ConfigError> {
        if self.n() < 2 {
            return invalid(format!("model needs n >= 2, got {}", self.n()));
        }
        let h = match self {
            ModelSpec::HeisenbergFerromagnet { n, field, coupling } => LocalHamiltonian::heisenberg_ferromagnet(
                *n,
                finite("model.field", *field)?,
                finite("model.coupling", *coupling)?,
            ),
            ModelSpec::TransverseIsing { n, field, coupling } => LocalHamiltonian::transverse_ising(
                *n,
                finite("model.field", *field)?,
                finite("model.coupling", *coupling)?,
            ),
            ModelSpec::Explicit { n, d, k1, k2 } => {
                if *d < 2 {
                    return invalid("model.d must be at least 2");
                }
                LocalHamiltonian::uniform(*n, square("model.k1", k1, *d)?, square("model.k2", k2, d * d)?)
            }
        };
        h.map_err(|e| ConfigError(format!("model: {e}")))
    }
}

pub fn policy(t: &TruncationSpec) -> Result<TruncationPolicy, ConfigError> {
    let p = TruncationPolicy {
        chi_max: t.chi_max.unwrap_or(usize::MAX),
        weight_tol: t.weight_tol,
        ..TruncationPolicy::exact()
    };
    p.validate().map_err(|e| ConfigError(format!("truncation: {e}")))?;
    Ok(p)
}

pub fn imaginary_params(
    spec: &ImaginarySpec,
    truncation: &TruncationSpec,
    parallel: bool,
) -> Result<ImaginaryTimeParams, ConfigError> {
    if spec.stages.is_empty() {
        return invalid("imaginary.stages must not be empty");
    }
    for &s in &spec.stages {
        finite_positive("imaginary stage step", s)?;
    }
    if spec.stages.windows(2).any(|w| w[1] >= w[0]) {
        return invalid("imaginary.stages must be strictly decreasing");
    }
    let criterion = ConvergenceCriterion { overlap_tol: spec.overlap_tol, probe_steps: spec.probe_steps };
    criterion.validate().map_err(|e| ConfigError(format!("imaginary: {e}")))?;
    if spec.max_steps_per_stage == 0 {
        return invalid("imaginary.max_steps_per_stage must be positive");
    }
    Ok(ImaginaryTimeParams {
        stages: spec.stages.clone(),
        order: order(spec.order)?,
        policy: policy(truncation)?,
        criterion,
        max_steps_per_stage: spec.max_steps_per_stage,
        parallel,
        spectrum_bonds: Vec::new(),
    })
}

/// Checks `T / δ` and the sampling fields; returns the step count.
pub fn check_evolution(e: &EvolutionSpec, n: usize) -> Result<usize, ConfigError> {
    if !(e.total_time.is_finite() && e.total_time >= 0.0) {
        return invalid(format!("evolution.total_time must be non-negative, got {}", e.total_time));
    }
    finite_positive("evolution.delta", e.delta)?;
    order(e.order)?;
    let steps = tebd::evolution::step_count(e.total_time, e.delta).map_err(|e| ConfigError(format!("evolution: {e}")))?;
    if e.sample_every == 0 {
        return invalid("evolution.sample_every must be positive");
    }
    if e.checkpoint_every > 0 && e.checkpoint_every % e.sample_every != 0 {
        return invalid("evolution.checkpoint_every must be a multiple of sample_every");
    }
    if let Some(b) = e.spectrum_bond {
        if b == 0 || b >= n {
            return invalid(format!("evolution.spectrum_bond must lie in 1..{n}, got {b}"));
        }
    }
    Ok(steps)
}

pub fn check_initial(init: &InitialSpec, n: usize, d: usize) -> Result<(), ConfigError> {
    match init {
        InitialSpec::Basis { configuration, .. } => {
            if configuration.len() != n {
                return invalid(format!("initial.configuration has {} sites, model has {n}", configuration.len()));
            }
            if configuration.iter().any(|&c| c >= d) {
                return invalid(format!("initial.configuration entries must be below d = {d}"));
            }
        }
        InitialSpec::Tilted { theta, .. } | InitialSpec::Ground { theta, .. } => {
            finite("initial.theta", *theta)?;
            if d != 2 {
                return invalid("tilted product states need d = 2");
            }
        }
        InitialSpec::Snapshot { path, .. } => {
            if !path.is_file() {
                return invalid(format!("snapshot {} does not exist", path.display()));
            }
        }
    }
    for x in init.excitation() {
        if x.site >= n {
            return invalid(format!("excitation site {} outside the chain of {n}", x.site));
        }
        operator(&x.operator, d)?;
    }
    Ok(())
}

/// Resolved correlator grid: positions, sample times and the step size.
pub struct CorrelatorGrid {
    pub positions: Vec<isize>,
    pub times: Vec<f64>,
    pub delta: f64,
}

pub fn correlator_grid(c: &CorrelatorSpec, n: usize) -> Result<CorrelatorGrid, ConfigError> {
    let (Some(lo), Some(hi), Some(t_max), Some(t_step), Some(delta)) =
        (c.min_offset, c.max_offset, c.t_max, c.t_step, c.delta)
    else {
        return invalid("correlator needs min_offset, max_offset, t_max, t_step and delta (or input)");
    };
    if lo > hi {
        return invalid("correlator.min_offset exceeds max_offset");
    }
    let source = c.source.unwrap_or(n / 2);
    if source >= n {
        return invalid(format!("correlator.source {source} outside the chain of {n}"));
    }
    if source as isize + lo < 0 || source as isize + hi >= n as isize {
        return invalid("correlator offsets leave the chain");
    }
    if !(t_max.is_finite() && t_max >= 0.0) {
        return invalid("correlator.t_max must be non-negative");
    }
    finite_positive("correlator.t_step", t_step)?;
    finite_positive("correlator.delta", delta)?;
    order(c.order)?;
    let samples = tebd::evolution::step_count(t_max, t_step).map_err(|e| ConfigError(format!("correlator: {e}")))?;
    let per_sample =
        tebd::evolution::step_count(t_step, delta).map_err(|e| ConfigError(format!("correlator: t_step: {e}")))?;
    Ok(CorrelatorGrid {
        positions: (lo..=hi).collect(),
        times: (0..=samples).map(|k| (k * per_sample) as f64 * delta).collect(),
        delta,
    })
}

pub fn check_scaling(s: &ScalingSpec) -> Result<(), ConfigError> {
    if s.n.is_empty() || s.chi.is_empty() || s.delta.is_empty() {
        return invalid("scaling.n, scaling.chi and scaling.delta must be non-empty");
    }
    if s.n.iter().any(|&n| n < 2) {
        return invalid("scaling.n entries must be at least 2");
    }
    if s.chi.contains(&0) {
        return invalid("scaling.chi entries must be positive");
    }
    for &d in &s.delta {
        finite_positive("scaling.delta", d)?;
    }
    if s.steps == 0 || s.repeats == 0 {
        return invalid("scaling.steps and scaling.repeats must be positive");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
        ExperimentConfig::from_toml(text)
    }

    #[test]
    fn minimal_quench_parses() {
        let c = parse(
            r#"
            [model]
            kind = "heisenberg_ferromagnet"
            n = 30
            field = 1
            coupling = 1.0

            [initial]
            kind = "basis"
            configuration = [1, 1, 0, 0]

            [evolution]
            total_time = 25
            delta = 0.005
            "#,
        )
        .unwrap();
        let e = c.evolution.unwrap();
        assert_eq!(e.order, 2);
        assert!(e.merge_half_steps);
        assert_eq!(c.oracle, OracleKind::None);
        assert_eq!(check_evolution(&e, 30).unwrap(), 5000);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("colour = 1").is_err());
        assert!(parse("[model]\nkind = \"transverse_ising\"\nn = 4\nfield = 1.0\ncoupling = 1.0\nextra = 2").is_err());
        assert!(parse("[truncation]\nchi = 3").is_err());
        assert!(parse("[model]\nkind = \"xxz\"\nn = 4").is_err());
    }

    #[test]
    fn operators() {
        assert_eq!(operator(&OperatorSpec::Named("sigma_minus".into()), 2).unwrap(), pauli::sigma_minus());
        assert!(operator(&OperatorSpec::Named("sigma_q".into()), 2).is_err());
        assert!(operator(&OperatorSpec::Named("sigma_x".into()), 3).is_err());
        let m = operator(&OperatorSpec::Matrix(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 0.0]]), 2).unwrap();
        assert_eq!(m, pauli::sigma_x());
        assert!(operator(&OperatorSpec::Matrix(vec![[0.0, 0.0]; 3]), 2).is_err());
    }

    #[test]
    fn range_checks() {
        let e = EvolutionSpec {
            total_time: 1.0,
            delta: 0.3,
            order: 2,
            sample_every: 1,
            merge_half_steps: true,
            spectrum_bond: None,
            checkpoint_every: 0,
        };
        assert!(check_evolution(&e, 4).is_err());
        assert!(check_evolution(&EvolutionSpec { delta: 0.25, order: 3, ..e.clone() }, 4).is_err());
        assert!(check_evolution(&EvolutionSpec { delta: 0.25, spectrum_bond: Some(4), ..e.clone() }, 4).is_err());
        assert!(check_evolution(&EvolutionSpec { delta: 0.25, checkpoint_every: 3, sample_every: 2, ..e }, 4).is_err());

        let stages = ImaginarySpec { stages: vec![], ..Default::default() };
        assert!(imaginary_params(&stages, &TruncationSpec::default(), false).is_err());
        let stages = ImaginarySpec { stages: vec![0.01, 0.1], ..Default::default() };
        assert!(imaginary_params(&stages, &TruncationSpec::default(), false).is_err());
        let t = TruncationSpec { chi_max: Some(0), weight_tol: 0.0 };
        assert!(policy(&t).is_err());
    }

    #[test]
    fn correlator_grid_is_resolved() {
        let c = CorrelatorSpec {
            input: None,
            operator: None,
            source: None,
            min_offset: Some(-2),
            max_offset: Some(2),
            t_max: Some(1.0),
            t_step: Some(0.25),
            delta: Some(0.05),
            order: 2,
            taper: TaperSpec::None,
        };
        let g = correlator_grid(&c, 8).unwrap();
        assert_eq!(g.positions, vec![-2, -1, 0, 1, 2]);
        assert_eq!(g.times.len(), 5);
        assert!((g.times[4] - 1.0).abs() < 1e-12);
        assert!(correlator_grid(&CorrelatorSpec { max_offset: Some(4), ..c.clone() }, 8).is_err());
        assert!(correlator_grid(&CorrelatorSpec { t_step: Some(0.3), ..c }, 8).is_err());
    }
}
