//! Energies, dynamic correlators, structure factors and Schmidt spectrum
//! trajectories.

use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{Result, TebdError};
use crate::evolution::{self, apply_local_excitation, EvolutionReport, NoSampler, RealTimeParams};
use crate::hamiltonian::{LocalHamiltonian, TrotterOrder};
use crate::kernel::{c64, ComplexMatrix, C64};
use crate::mps::{TruncationPolicy, VidalMps};

/// `Σ ⟨K1⟩ + Σ ⟨K2⟩` for a normalized state.
pub fn energy(state: &VidalMps, h: &LocalHamiltonian) -> Result<f64> {
    if state.n() != h.n() || state.d() != h.d() {
        return Err(TebdError::DimensionMismatch("state does not match Hamiltonian".into()));
    }
    let mut e = c64(0.0, 0.0);
    for (site, k1) in h.k1().iter().enumerate() {
        e += state.expect_local(site, k1)?;
    }
    for (l, k2) in h.k2().iter().enumerate() {
        e += state.expect_bond(l + 1, k2)?;
    }
    Ok(e.re)
}

/// Correlator values on a complete `(x, t)` grid.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelatorSeries {
    /// Site that plays the role of the origin.
    pub source: usize,
    /// Signed offsets from `source`.
    pub positions: Vec<isize>,
    pub times: Vec<f64>,
    /// Row-major over `(position, time)`.
    pub values: Vec<C64>,
    pub ground_energy: f64,
}

impl CorrelatorSeries {
    pub fn value(&self, xi: usize, ti: usize) -> C64 {
        self.values[xi * self.times.len() + ti]
    }
}

#[derive(Clone, Debug)]
pub struct CorrelatorParams {
    /// Defaults to the chain center `n / 2`.
    pub source: Option<usize>,
    pub positions: Vec<isize>,
    /// Non-decreasing, non-negative multiples of `delta`.
    pub times: Vec<f64>,
    pub delta: f64,
    pub order: TrotterOrder,
    pub policy: TruncationPolicy,
    pub parallel: bool,
}

/// `⟨O†(x, t) O(0, 0)⟩` in the ground state `gs` of `h`.
///
/// With `φ = O_src |gs⟩`, the value is `e^{iEt} ⟨O_x gs| e^{-iHt} |φ⟩`, where
/// `E` is the energy of `gs`. Norms of the unnormalized excited states are
/// carried explicitly, so magnitudes are physical.
pub fn dynamic_correlator(
    gs: &VidalMps,
    h: &LocalHamiltonian,
    op: &ComplexMatrix,
    params: &CorrelatorParams,
) -> Result<CorrelatorSeries> {
    let n = gs.n();
    let source = params.source.unwrap_or(n / 2);
    if source >= n {
        return Err(TebdError::IndexOutOfRange(format!("source site {source} with n={n}")));
    }
    if params.positions.is_empty() || params.times.is_empty() {
        return Err(TebdError::InvalidArgument("correlator grid is empty".into()));
    }
    let sites = params
        .positions
        .iter()
        .map(|&x| {
            let s = source as isize + x;
            if s < 0 || s >= n as isize {
                Err(TebdError::IndexOutOfRange(format!("offset {x} from site {source} leaves the chain")))
            } else {
                Ok(s as usize)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let mut steps = Vec::with_capacity(params.times.len());
    for &t in &params.times {
        steps.push(evolution::step_count(t, params.delta)?);
    }
    if steps.windows(2).any(|w| w[1] < w[0]) {
        return Err(TebdError::InvalidArgument("correlator times must be non-decreasing".into()));
    }

    let ground_energy = energy(gs, h)?;
    let mut phi = gs.clone();
    let phi_norm = apply_local_excitation(&mut phi, &[(source, op.clone())])?;

    // Normalized bras O_x|gs⟩ with their norms; annihilated ones contribute 0.
    let bras: Vec<Option<(VidalMps, f64)>> = sites
        .par_iter()
        .map(|&s| {
            let mut b = gs.clone();
            match apply_local_excitation(&mut b, &[(s, op.clone())]) {
                Ok(norm) => Ok(Some((b, norm))),
                Err(TebdError::ZeroNorm(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;

    let nt = params.times.len();
    let mut values = vec![c64(0.0, 0.0); sites.len() * nt];
    let mut done = 0;
    for (ti, &target) in steps.iter().enumerate() {
        if target > done {
            let mut p = RealTimeParams::new((target - done) as f64 * params.delta, params.delta, params.order);
            p.policy = params.policy;
            p.sample_every = target - done;
            p.merge_half_steps = true;
            p.parallel = params.parallel;
            evolution::evolve_real(&mut phi, h, &p, None, &mut NoSampler)?;
            done = target;
        }
        let t = target as f64 * params.delta;
        let phase = c64(0.0, ground_energy * t).exp() * phi_norm;
        let column: Vec<C64> = bras
            .par_iter()
            .map(|b| match b {
                Some((bra, norm)) => Ok(bra.inner_product(&phi)? * *norm * phase),
                None => Ok(c64(0.0, 0.0)),
            })
            .collect::<Result<_>>()?;
        for (xi, v) in column.into_iter().enumerate() {
            values[xi * nt + ti] = v;
        }
    }
    Ok(CorrelatorSeries {
        source,
        positions: params.positions.clone(),
        times: steps.iter().map(|&s| s as f64 * params.delta).collect(),
        values,
        ground_energy,
    })
}

/// Window applied along the time axis before transforming.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Taper {
    None,
    /// Symmetric Hann window, zero at both ends.
    Hann,
}

impl Taper {
    pub fn weights(self, len: usize) -> Vec<f64> {
        match self {
            Taper::None => vec![1.0; len],
            Taper::Hann if len < 2 => vec![1.0; len],
            Taper::Hann => (0..len)
                .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / (len - 1) as f64).cos()))
                .collect(),
        }
    }
}

/// `S(k, ω) = Σ_x Σ_t w(t) C(x, t) e^{-ikx} e^{+iωt}` on the discrete
/// Fourier grid, with `k` and `ω` sorted ascending and wrapped to the
/// symmetric range.
#[derive(Clone, Debug, PartialEq)]
pub struct StructureFactor {
    pub ks: Vec<f64>,
    pub omegas: Vec<f64>,
    /// Row-major over `(k, ω)`.
    pub values: Vec<C64>,
    pub taper: Taper,
    pub positions: Vec<isize>,
    pub times: Vec<f64>,
}

impl StructureFactor {
    pub fn value(&self, ki: usize, wi: usize) -> C64 {
        self.values[ki * self.omegas.len() + wi]
    }

    pub fn real_part(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.re).collect()
    }

    pub fn modulus(&self) -> Vec<f64> {
        self.values.iter().map(|z| z.norm()).collect()
    }

    /// Index of the entry with the largest modulus, as `(k index, ω index)`.
    pub fn peak(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, z) in self.values.iter().enumerate() {
            if z.norm() > self.values[best].norm() {
                best = i;
            }
        }
        (best / self.omegas.len(), best % self.omegas.len())
    }
}

/// Signed Fourier frequencies for `len` samples at spacing `step`, in FFT
/// order.
fn frequencies(len: usize, step: f64) -> Vec<f64> {
    (0..len)
        .map(|m| {
            let m = if m > len / 2 { m as f64 - len as f64 } else { m as f64 };
            2.0 * std::f64::consts::PI * m / (len as f64 * step)
        })
        .collect()
}

/// Permutation that sorts FFT-ordered frequencies ascending.
fn sorted_order(freqs: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..freqs.len()).collect();
    idx.sort_by(|&a, &b| freqs[a].total_cmp(&freqs[b]));
    idx
}

fn time_step(times: &[f64]) -> Result<f64> {
    if times.len() < 2 {
        return Ok(1.0);
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(TebdError::InvalidArgument("times must increase".into()));
    }
    for (j, &t) in times.iter().enumerate() {
        if (t - times[0] - j as f64 * dt).abs() > 1e-9 * dt.max(1.0) * (j.max(1) as f64) {
            return Err(TebdError::InvalidArgument("time grid is not uniform".into()));
        }
    }
    Ok(dt)
}

fn check_positions(positions: &[isize]) -> Result<()> {
    if positions.windows(2).any(|w| w[1] - w[0] != 1) {
        return Err(TebdError::InvalidArgument("positions must be consecutive integers".into()));
    }
    Ok(())
}

/// In-place 2-D transform of a row-major `(nx, nt)` grid: forward over `x`,
/// inverse (unnormalized) over `t`. `invert` swaps the two directions.
fn transform(grid: &mut [C64], nx: usize, nt: usize, invert: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (fx, ft) = if invert {
        (planner.plan_fft_inverse(nx), planner.plan_fft_forward(nt))
    } else {
        (planner.plan_fft_forward(nx), planner.plan_fft_inverse(nt))
    };
    for row in grid.chunks_mut(nt) {
        ft.process(row);
    }
    let mut column = vec![c64(0.0, 0.0); nx];
    for t in 0..nt {
        for x in 0..nx {
            column[x] = grid[x * nt + t];
        }
        fx.process(&mut column);
        for x in 0..nx {
            grid[x * nt + t] = column[x];
        }
    }
}

pub fn structure_factor(series: &CorrelatorSeries, taper: Taper) -> Result<StructureFactor> {
    let nx = series.positions.len();
    let nt = series.times.len();
    if nx == 0 || nt == 0 || series.values.len() != nx * nt {
        return Err(TebdError::DimensionMismatch("correlator grid is incomplete".into()));
    }
    check_positions(&series.positions)?;
    let dt = time_step(&series.times)?;
    let w = taper.weights(nt);
    let mut grid: Vec<C64> = series.values.iter().enumerate().map(|(i, v)| v * w[i % nt]).collect();
    transform(&mut grid, nx, nt, false);

    let x0 = series.positions[0] as f64;
    let t0 = series.times[0];
    let kf = frequencies(nx, 1.0);
    let wf = frequencies(nt, dt);
    let ko = sorted_order(&kf);
    let wo = sorted_order(&wf);
    let mut values = Vec::with_capacity(nx * nt);
    for &ki in &ko {
        for &wi in &wo {
            let shift = c64(0.0, -kf[ki] * x0 + wf[wi] * t0).exp();
            values.push(grid[ki * nt + wi] * shift);
        }
    }
    Ok(StructureFactor {
        ks: ko.iter().map(|&i| kf[i]).collect(),
        omegas: wo.iter().map(|&i| wf[i]).collect(),
        values,
        taper,
        positions: series.positions.clone(),
        times: series.times.clone(),
    })
}

/// Recovers the tapered correlator grid from a structure factor.
pub fn inverse_structure_factor(sf: &StructureFactor) -> Result<Vec<C64>> {
    let nx = sf.positions.len();
    let nt = sf.times.len();
    if sf.values.len() != nx * nt {
        return Err(TebdError::DimensionMismatch("structure factor grid is incomplete".into()));
    }
    let dt = time_step(&sf.times)?;
    let x0 = sf.positions[0] as f64;
    let t0 = sf.times[0];
    let kf = frequencies(nx, 1.0);
    let wf = frequencies(nt, dt);
    let ko = sorted_order(&kf);
    let wo = sorted_order(&wf);
    let mut grid = vec![c64(0.0, 0.0); nx * nt];
    for (a, &ki) in ko.iter().enumerate() {
        for (b, &wi) in wo.iter().enumerate() {
            let shift = c64(0.0, kf[ki] * x0 - wf[wi] * t0).exp();
            grid[ki * nt + wi] = sf.values[a * nt + b] * shift;
        }
    }
    transform(&mut grid, nx, nt, true);
    let scale = 1.0 / (nx * nt) as f64;
    Ok(grid.into_iter().map(|z| z * scale).collect())
}

/// Schmidt probabilities `p_α = λ_α²` of one bond over time.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumTrajectory {
    pub bond: usize,
    pub times: Vec<f64>,
    /// One row per sample, zero-padded to the largest rank seen.
    pub spectra: Vec<Vec<f64>>,
}

impl SpectrumTrajectory {
    pub fn max_rank(&self) -> usize {
        self.spectra.iter().map(|p| p.iter().filter(|&&x| x > 0.0).count()).max().unwrap_or(0)
    }
}

/// Extracts the trajectory of `bond` from a report whose samples recorded it.
pub fn spectrum_trajectory(report: &EvolutionReport, bond: usize) -> Result<SpectrumTrajectory> {
    let mut times = Vec::with_capacity(report.samples.len());
    let mut spectra = Vec::with_capacity(report.samples.len());
    for s in &report.samples {
        let lam = s
            .spectra
            .iter()
            .find(|(b, _)| *b == bond)
            .map(|(_, l)| l)
            .ok_or_else(|| TebdError::IndexOutOfRange(format!("bond {bond} was not recorded")))?;
        times.push(s.time);
        spectra.push(lam.iter().map(|x| x * x).collect::<Vec<f64>>());
    }
    let width = spectra.iter().map(Vec::len).max().unwrap_or(0);
    for p in &mut spectra {
        p.resize(width, 0.0);
    }
    Ok(SpectrumTrajectory { bond, times, spectra })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(TebdError::InvalidArgument("need at least two points".into()));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0)) {
        return Err(TebdError::InvalidArgument("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}
