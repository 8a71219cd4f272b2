//! Drivers that compose gate schedules into real-time evolution,
//! imaginary-time ground-state search and adiabatic preparation.
//!
//! All drivers advance a [`VidalMps`] in place and return an
//! [`EvolutionReport`]. Samples are taken only at whole-step boundaries.

use std::time::Instant;

use nalgebra::DVector;

use crate::error::{Result, TebdError};
use crate::hamiltonian::{interpolate, make_layer, make_schedule, GateSchedule, LocalHamiltonian, TimeAxis, TrotterOrder};
use crate::kernel::{ComplexMatrix, C64};
use crate::mps::{ChiProfile, LocalGate, TruncationPolicy, VidalMps};
use crate::observables::energy;
use crate::oracle::{self, DensePropagator, DenseState, TwoMagnonPropagator};

/// Tolerance on `T / δ` being an integer.
pub const STEP_COUNT_TOL: f64 = 1e-9;

/// Diagnostics captured at one sample point.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub step: usize,
    /// Real time, or accumulated imaginary time τ.
    pub time: f64,
    pub cumulative_discarded_weight: f64,
    pub chi_profile: ChiProfile,
    /// Schmidt coefficients of the requested bonds, in request order.
    pub spectra: Vec<(usize, Vec<f64>)>,
    pub fidelity_error: Option<f64>,
    pub energy: Option<f64>,
    /// `1 - |⟨previous probe|current⟩|²` (imaginary time only).
    pub overlap_change: Option<f64>,
}

/// Outcome of one imaginary-time stage.
#[derive(Clone, Debug, PartialEq)]
pub struct StageSummary {
    pub delta_tau: f64,
    pub steps: usize,
    pub converged: bool,
    pub final_overlap_change: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvolutionReport {
    pub samples: Vec<SampleRecord>,
    /// Wall-clock seconds per step. Merged steps share their block's time.
    pub step_seconds: Vec<f64>,
    pub steps: usize,
    /// Largest Schmidt rank seen on any bond after any gate layer.
    pub max_chi: usize,
    pub cumulative_discarded_weight: f64,
    pub stages: Vec<StageSummary>,
    /// `false` only when an imaginary-time stage ran out of steps.
    pub converged: bool,
}

impl EvolutionReport {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn fidelity_errors(&self) -> Vec<Option<f64>> {
        self.samples.iter().map(|s| s.fidelity_error).collect()
    }
}

/// What a sampler sees at each sample point.
pub struct StepSample<'a> {
    pub state: &'a VidalMps,
    pub record: &'a SampleRecord,
}

/// Callback invoked at every sample point.
pub trait Sampler {
    fn sample(&mut self, sample: &StepSample<'_>) -> Result<()>;
}

impl<F> Sampler for F
where
    F: FnMut(&StepSample<'_>) -> Result<()>,
{
    fn sample(&mut self, sample: &StepSample<'_>) -> Result<()> {
        self(sample)
    }
}

/// A sampler that does nothing.
pub struct NoSampler;

impl Sampler for NoSampler {
    fn sample(&mut self, _: &StepSample<'_>) -> Result<()> {
        Ok(())
    }
}

/// Exact trajectory against which fidelity errors are measured.
pub trait ExactReference {
    fn fidelity_error(&self, time: f64, state: &VidalMps) -> Result<f64>;
}

/// Dense propagation of a fixed initial vector.
pub struct DenseReference {
    propagator: DensePropagator,
    initial: DVector<C64>,
    n: usize,
    d: usize,
}

impl DenseReference {
    pub fn new(h: &LocalHamiltonian, initial: &VidalMps, cap: usize) -> Result<Self> {
        let propagator = DensePropagator::new(h, cap)?;
        let initial = oracle::dense_from_mps(initial, cap)?.into_amplitudes();
        Ok(Self { propagator, initial, n: h.n(), d: h.d() })
    }

    pub fn state_at(&self, time: f64) -> Result<DenseState> {
        DenseState::new(self.n, self.d, self.propagator.evolve_vector(&self.initial, time))
    }
}

impl ExactReference for DenseReference {
    fn fidelity_error(&self, time: f64, state: &VidalMps) -> Result<f64> {
        oracle::fidelity_error(&self.state_at(time)?, state)
    }
}

/// Two-magnon propagation from the configuration with sites `init` flipped.
pub struct TwoMagnonReference {
    propagator: TwoMagnonPropagator,
    init: (usize, usize),
}

impl TwoMagnonReference {
    pub fn new(n: usize, b_field: f64, j_coupling: f64, init: (usize, usize)) -> Result<Self> {
        let propagator = TwoMagnonPropagator::new(n, b_field, j_coupling)?;
        propagator.evolve(init, 0.0)?;
        Ok(Self { propagator, init })
    }
}

impl ExactReference for TwoMagnonReference {
    fn fidelity_error(&self, time: f64, state: &VidalMps) -> Result<f64> {
        oracle::fidelity_error(&self.propagator.evolve(self.init, time)?, state)
    }
}

/// Integer step count for `total / delta`.
pub fn step_count(total: f64, delta: f64) -> Result<usize> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(TebdError::InvalidArgument(format!("time step must be positive, got {delta}")));
    }
    if !(total >= 0.0) || !total.is_finite() {
        return Err(TebdError::InvalidArgument(format!("total time must be non-negative, got {total}")));
    }
    let ratio = total / delta;
    let steps = ratio.round();
    if (ratio - steps).abs() > STEP_COUNT_TOL * ratio.max(1.0) {
        return Err(TebdError::InvalidArgument(format!(
            "total time {total} is not an integer multiple of the step {delta}"
        )));
    }
    Ok(steps as usize)
}

#[derive(Clone, Debug)]
pub struct RealTimeParams {
    pub total_time: f64,
    pub delta: f64,
    pub order: TrotterOrder,
    pub policy: TruncationPolicy,
    /// Sample every this many steps. The first and last steps are always sampled.
    pub sample_every: usize,
    /// Fuse the trailing and leading half layers of consecutive second-order
    /// steps between sample points.
    pub merge_half_steps: bool,
    pub parallel: bool,
    /// Bonds whose spectra are copied into each sample.
    pub spectrum_bonds: Vec<usize>,
    /// Resume support: steps already taken and the weight discarded by them.
    pub start_step: usize,
    pub start_discarded_weight: f64,
}

impl RealTimeParams {
    pub fn new(total_time: f64, delta: f64, order: TrotterOrder) -> Self {
        Self {
            total_time,
            delta,
            order,
            policy: TruncationPolicy::exact(),
            sample_every: 1,
            merge_half_steps: false,
            parallel: false,
            spectrum_bonds: Vec::new(),
            start_step: 0,
            start_discarded_weight: 0.0,
        }
    }
}

/// Gate layers for stepping, plus the fused even layer for merged blocks.
struct Stepper {
    schedule: GateSchedule,
    full_even: Option<Vec<LocalGate>>,
}

impl Stepper {
    fn new(h: &LocalHamiltonian, delta: f64, order: TrotterOrder, axis: TimeAxis, merge: bool) -> Result<Self> {
        let schedule = make_schedule(h, delta, order, axis)?;
        let full_even = if merge && order == TrotterOrder::Second {
            Some(make_layer(&h.even_odd_split().even, delta, axis)?)
        } else {
            None
        };
        Ok(Self { schedule, full_even })
    }

    /// Layer sequence for `steps` consecutive steps.
    fn layers(&self, steps: usize) -> Vec<&[LocalGate]> {
        let l = &self.schedule.layers;
        let mut out: Vec<&[LocalGate]> = Vec::new();
        match &self.full_even {
            Some(full) if steps > 1 => {
                out.push(&l[0]);
                for k in 0..steps {
                    out.push(&l[1]);
                    out.push(if k + 1 == steps { &l[2] } else { full });
                }
            }
            _ => {
                for _ in 0..steps {
                    out.extend(l.iter().map(Vec::as_slice));
                }
            }
        }
        out
    }
}

/// Shared bookkeeping for a run.
struct Run<'a> {
    policy: TruncationPolicy,
    parallel: bool,
    spectrum_bonds: &'a [usize],
    report: EvolutionReport,
    last_good: VidalMps,
}

impl<'a> Run<'a> {
    fn new(state: &VidalMps, policy: TruncationPolicy, parallel: bool, spectrum_bonds: &'a [usize]) -> Result<Self> {
        policy.validate()?;
        for &b in spectrum_bonds {
            state.schmidt_spectrum(b)?;
        }
        let report = EvolutionReport { max_chi: state.chi_profile().chi, converged: true, ..Default::default() };
        Ok(Self { policy, parallel, spectrum_bonds, report, last_good: state.clone() })
    }

    /// Applies layers for `steps` steps, recording time and ranks. Any
    /// failure is turned into an abort carrying the last good state.
    fn advance(&mut self, state: &mut VidalMps, layers: &[&[LocalGate]], steps: usize, first_step: usize) -> Result<()> {
        let start = Instant::now();
        for layer in layers {
            let w = match state.apply_layer(layer, &self.policy, self.parallel) {
                Ok(w) => w,
                Err(e) => return Err(self.abort(first_step, e.to_string())),
            };
            self.report.cumulative_discarded_weight += w;
            self.report.max_chi = self.report.max_chi.max(state.chi_profile().chi);
        }
        if !state.is_finite() {
            return Err(self.abort(first_step, "non-finite tensor entry".into()));
        }
        let per_step = start.elapsed().as_secs_f64() / steps.max(1) as f64;
        self.report.step_seconds.extend(std::iter::repeat_n(per_step, steps));
        self.report.steps += steps;
        Ok(())
    }

    fn abort(&self, step: usize, reason: String) -> TebdError {
        TebdError::NumericalAbort { step, reason, last_good: Box::new(self.last_good.clone()) }
    }

    fn record(&self, state: &VidalMps, step: usize, time: f64) -> Result<SampleRecord> {
        let spectra = self
            .spectrum_bonds
            .iter()
            .map(|&b| Ok((b, state.schmidt_spectrum(b)?.to_vec())))
            .collect::<Result<_>>()?;
        Ok(SampleRecord {
            step,
            time,
            cumulative_discarded_weight: self.report.cumulative_discarded_weight,
            chi_profile: state.chi_profile(),
            spectra,
            fidelity_error: None,
            energy: None,
            overlap_change: None,
        })
    }

    fn emit(&mut self, state: &VidalMps, record: SampleRecord, sampler: &mut dyn Sampler) -> Result<()> {
        sampler.sample(&StepSample { state, record: &record })?;
        self.report.samples.push(record);
        self.last_good = state.clone();
        Ok(())
    }
}

fn is_sample_step(step: usize, every: usize, last: usize) -> bool {
    step % every == 0 || step == last
}

/// Real-time evolution `exp(-iHT)` in `T / δ` Trotter steps.
///
/// With `reference`, every sample carries the fidelity error against the
/// exact trajectory.
pub fn evolve_real(
    state: &mut VidalMps,
    h: &LocalHamiltonian,
    params: &RealTimeParams,
    reference: Option<&dyn ExactReference>,
    sampler: &mut dyn Sampler,
) -> Result<EvolutionReport> {
    check_match(state, h)?;
    if params.sample_every == 0 {
        return Err(TebdError::InvalidArgument("sample_every must be at least 1".into()));
    }
    let total = step_count(params.total_time, params.delta)?;
    if params.start_step > total {
        return Err(TebdError::InvalidArgument(format!(
            "start step {} is past the final step {total}",
            params.start_step
        )));
    }
    let stepper = Stepper::new(h, params.delta, params.order, TimeAxis::Real, params.merge_half_steps)?;
    let mut run = Run::new(state, params.policy, params.parallel, &params.spectrum_bonds)?;
    run.report.cumulative_discarded_weight = params.start_discarded_weight;

    let sample = |run: &mut Run, state: &VidalMps, step: usize, sampler: &mut dyn Sampler| -> Result<()> {
        let time = step as f64 * params.delta;
        let mut rec = run.record(state, step, time)?;
        if let Some(r) = reference {
            rec.fidelity_error = Some(r.fidelity_error(time, state)?);
        }
        run.emit(state, rec, sampler)
    };

    let mut step = params.start_step;
    if step == 0 {
        sample(&mut run, state, 0, sampler)?;
    }
    while step < total {
        let mut next = step + 1;
        while !is_sample_step(next, params.sample_every, total) {
            next += 1;
        }
        let layers = stepper.layers(next - step);
        run.advance(state, &layers, next - step, step)?;
        step = next;
        sample(&mut run, state, step, sampler)?;
    }
    Ok(run.report)
}

/// Convergence test for imaginary-time stages: the stage ends once
/// `1 - |⟨ψ(τ)|ψ(τ + τ′)⟩|² < overlap_tol`, probed every `probe_steps` steps
/// (so `τ′ = probe_steps · δτ`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceCriterion {
    pub overlap_tol: f64,
    pub probe_steps: usize,
}

impl Default for ConvergenceCriterion {
    fn default() -> Self {
        Self { overlap_tol: 1e-10, probe_steps: 10 }
    }
}

impl ConvergenceCriterion {
    pub fn validate(&self) -> Result<()> {
        if !(self.overlap_tol > 0.0) {
            return Err(TebdError::InvalidArgument("overlap_tol must be positive".into()));
        }
        if self.probe_steps == 0 {
            return Err(TebdError::InvalidArgument("probe interval must be at least one step".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct ImaginaryTimeParams {
    /// Strictly decreasing step sizes, each run to convergence.
    pub stages: Vec<f64>,
    pub order: TrotterOrder,
    pub policy: TruncationPolicy,
    pub criterion: ConvergenceCriterion,
    pub max_steps_per_stage: usize,
    pub parallel: bool,
    pub spectrum_bonds: Vec<usize>,
}

impl Default for ImaginaryTimeParams {
    fn default() -> Self {
        Self {
            stages: vec![0.1, 0.01, 0.001],
            order: TrotterOrder::Second,
            policy: TruncationPolicy::exact(),
            criterion: ConvergenceCriterion::default(),
            max_steps_per_stage: 100_000,
            parallel: false,
            spectrum_bonds: Vec::new(),
        }
    }
}

/// Projects onto the ground state with normalized `exp(-Hτ)` steps.
///
/// The initial state must overlap the ground state; this cannot be checked.
/// A stage that exhausts `max_steps_per_stage` stops the run and the report
/// has `converged == false`; the state reached so far is kept.
pub fn evolve_imaginary(
    state: &mut VidalMps,
    h: &LocalHamiltonian,
    params: &ImaginaryTimeParams,
    sampler: &mut dyn Sampler,
) -> Result<EvolutionReport> {
    check_match(state, h)?;
    params.criterion.validate()?;
    if params.stages.is_empty() {
        return Err(TebdError::InvalidArgument("imaginary-time schedule has no stages".into()));
    }
    for w in params.stages.windows(2) {
        if !(w[1] < w[0]) {
            return Err(TebdError::InvalidArgument("imaginary-time steps must strictly decrease".into()));
        }
    }
    if params.max_steps_per_stage == 0 {
        return Err(TebdError::InvalidArgument("step budget must be at least 1".into()));
    }
    let policy = TruncationPolicy { renormalize: true, ..params.policy };
    let mut run = Run::new(state, policy, params.parallel, &params.spectrum_bonds)?;
    if let Err(e) = state.normalize() {
        return Err(run.abort(0, e.to_string()));
    }

    let mut tau = 0.0;
    let mut step = 0;
    let mut rec = run.record(state, 0, 0.0)?;
    rec.energy = Some(energy(state, h)?);
    run.emit(state, rec, sampler)?;

    for &dtau in &params.stages {
        let stepper = Stepper::new(h, dtau, params.order, TimeAxis::Imaginary, false)?;
        let layers = stepper.layers(1);
        let mut probe = state.clone();
        let mut stage_steps = 0;
        let mut change = f64::INFINITY;
        let mut converged = false;
        while stage_steps < params.max_steps_per_stage {
            run.advance(state, &layers, 1, step)?;
            if let Err(e) = state.normalize() {
                return Err(run.abort(step, e.to_string()));
            }
            step += 1;
            stage_steps += 1;
            tau += dtau;
            if stage_steps % params.criterion.probe_steps != 0 {
                continue;
            }
            change = 1.0 - probe.inner_product(state)?.norm_sqr();
            let mut rec = run.record(state, step, tau)?;
            rec.energy = Some(energy(state, h)?);
            rec.overlap_change = Some(change);
            run.emit(state, rec, sampler)?;
            if change < params.criterion.overlap_tol {
                converged = true;
                break;
            }
            probe = state.clone();
        }
        run.report.stages.push(StageSummary { delta_tau: dtau, steps: stage_steps, converged, final_overlap_change: change });
        if !converged {
            run.report.converged = false;
            break;
        }
    }
    Ok(run.report)
}

#[derive(Clone, Debug)]
pub struct AdiabaticParams {
    pub ramp_time: f64,
    pub delta: f64,
    pub order: TrotterOrder,
    pub policy: TruncationPolicy,
    pub sample_every: usize,
    pub parallel: bool,
}

/// Real-time evolution under `H(s) = (1 - s) H_start + s H_end` with
/// `s = t / T`, constant within each step at the step midpoint.
///
/// The initial state should be the ground state of `h_start`.
pub fn evolve_adiabatic(
    state: &mut VidalMps,
    h_start: &LocalHamiltonian,
    h_end: &LocalHamiltonian,
    params: &AdiabaticParams,
    sampler: &mut dyn Sampler,
) -> Result<EvolutionReport> {
    check_match(state, h_start)?;
    check_match(state, h_end)?;
    if params.sample_every == 0 {
        return Err(TebdError::InvalidArgument("sample_every must be at least 1".into()));
    }
    let total = step_count(params.ramp_time, params.delta)?;
    let mut run = Run::new(state, params.policy, params.parallel, &[])?;
    let rec = run.record(state, 0, 0.0)?;
    run.emit(state, rec, sampler)?;
    for step in 0..total {
        let s = (step as f64 + 0.5) / total as f64;
        let h = interpolate(h_start, h_end, s)?;
        let stepper = Stepper::new(&h, params.delta, params.order, TimeAxis::Real, false)?;
        run.advance(state, &stepper.layers(1), 1, step)?;
        if is_sample_step(step + 1, params.sample_every, total) {
            let rec = run.record(state, step + 1, (step + 1) as f64 * params.delta)?;
            run.emit(state, rec, sampler)?;
        }
    }
    Ok(run.report)
}

/// Applies single-site factors in order, then normalizes. Returns the norm
/// of the excited state before normalization.
pub fn apply_local_excitation(state: &mut VidalMps, q: &[(usize, ComplexMatrix)]) -> Result<f64> {
    for (site, op) in q {
        state.apply_single_site_operator(*site, op)?;
    }
    state.canonicalize().map_err(|e| match e {
        TebdError::ZeroNorm(_) => TebdError::ZeroNorm("the excitation annihilates the state".into()),
        other => other,
    })
}

fn check_match(state: &VidalMps, h: &LocalHamiltonian) -> Result<()> {
    if state.n() != h.n() || state.d() != h.d() {
        return Err(TebdError::DimensionMismatch(format!(
            "state has n={}, d={} but Hamiltonian has n={}, d={}",
            state.n(),
            state.d(),
            h.n(),
            h.d()
        )));
    }
    Ok(())
}
