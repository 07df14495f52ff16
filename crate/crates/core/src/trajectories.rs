//! Quantum-trajectory Monte Carlo.
//!
//! Each site's jump history is summarised by a [`JumpRecord`]. Raman
//! records come from a classical telegraph process that starts up with
//! probability `cos²(θ/2)` and flips at rates Γ_ud (up→down) and Γ_du
//! (down→up); Rayleigh jumps are Poisson with mean `Γ_el t/4` and only their
//! parity matters. Given the records, expectation values along a trajectory
//! are products of single-site factors, which are averaged here.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};

use crate::collective::{propagate_error, SpinMoments, MOMENT_COMPONENTS};
use crate::error::{Error, Result};
use crate::model::{CouplingMatrix, DecoherenceRates, DerivedRates, InitialProductState};
use crate::par::{map_indexed, pairwise_reduce, Parallelism};

/// Spin direction along z.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    pub fn value(self) -> f64 {
        match self {
            Spin::Up => 1.0,
            Spin::Down => -1.0,
        }
    }

    fn flipped(self) -> Self {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Stochastic summary of one site along one trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JumpRecord {
    /// Number of Raman (spin-flip) jumps.
    pub raman_count: u32,
    /// Whether an odd number of Rayleigh (dephasing) jumps occurred.
    pub rayleigh_odd: bool,
    /// `τ_up − τ_down`; zero when no Raman jump occurred.
    pub tau: f64,
    /// Direction after the last Raman jump; `None` when there was none.
    pub final_spin: Option<Spin>,
}

impl JumpRecord {
    /// `α = [R = 0]`
    pub fn unflipped(&self) -> bool {
        self.raman_count == 0
    }

    /// `β = (−1)^F`
    pub fn beta(&self) -> f64 {
        if self.rayleigh_odd {
            -1.0
        } else {
            1.0
        }
    }

    /// `κ`, or 0 when the site never flipped.
    pub fn kappa(&self) -> f64 {
        self.final_spin.map_or(0.0, Spin::value)
    }
}

/// Draws one site's jump record over `[0, t]` for a spin starting at polar angle `theta`.
pub fn sample_jump_record<R: Rng + ?Sized>(
    rates: &DecoherenceRates,
    theta: f64,
    t: f64,
    rng: &mut R,
) -> JumpRecord {
    let up_probability = (theta / 2.0).cos().powi(2);
    sample_with_up_probability(rates, up_probability, t, rng)
}

fn sample_with_up_probability<R: Rng + ?Sized>(
    rates: &DecoherenceRates,
    up_probability: f64,
    t: f64,
    rng: &mut R,
) -> JumpRecord {
    let dephasing_mean = rates.gamma_el() * t / 4.0;
    let rayleigh_odd = if dephasing_mean > 0.0 {
        let count: f64 = Poisson::new(dephasing_mean)
            .expect("positive finite mean")
            .sample(rng);
        count % 2.0 == 1.0
    } else {
        false
    };

    let mut spin = if rng.random::<f64>() < up_probability {
        Spin::Up
    } else {
        Spin::Down
    };
    let (mut now, mut tau, mut flips) = (0.0, 0.0, 0u32);
    loop {
        let rate = match spin {
            Spin::Up => rates.gamma_ud(),
            Spin::Down => rates.gamma_du(),
        };
        let dwell = if rate > 0.0 {
            Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        };
        if now + dwell >= t {
            tau += spin.value() * (t - now);
            break;
        }
        tau += spin.value() * dwell;
        now += dwell;
        spin = spin.flipped();
        flips += 1;
    }
    JumpRecord {
        raman_count: flips,
        rayleigh_odd,
        tau: if flips > 0 { tau } else { 0.0 },
        final_spin: (flips > 0).then_some(spin),
    }
}

/// Single-site operator inside a trajectory expectation value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteOp {
    Raise,
    Lower,
    Z,
}

impl SiteOp {
    fn transverse_sign(self) -> Option<f64> {
        match self {
            SiteOp::Raise => Some(1.0),
            SiteOp::Lower => Some(-1.0),
            SiteOp::Z => None,
        }
    }
}

/// SplitMix64 step.
fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The random stream for `(seed, trajectory, site)`.
///
/// The ChaCha key is derived from `(seed, site)` and the trajectory index
/// selects the stream, so any trajectory can be regenerated in isolation.
pub fn stream_rng(seed: u64, trajectory: u64, site: usize) -> ChaCha8Rng {
    let mut state = seed ^ (site as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(trajectory);
    rng
}

/// Per-site initial weights.
#[derive(Clone, Copy, Debug)]
struct SiteWeights {
    up: f64,
    down: f64,
    /// `f*(1) f(−1)`, the σ^+ coherence.
    coherence: Complex64,
}

impl SiteWeights {
    /// `(p_up e^{−x}, p_down e^{x}) / g(x)` for real `x`.
    fn split(&self, x: f64) -> (f64, f64) {
        let shift = x.abs();
        let (a, b) = (self.up * (-x - shift).exp(), self.down * (x - shift).exp());
        (a / (a + b), b / (a + b))
    }

    /// `T/g(x)` for the transverse coherence `T` and real `x`.
    fn coherence_ratio(&self, coherence: Complex64, x: f64) -> Complex64 {
        let shift = x.abs();
        coherence * (-shift).exp() / (self.up * (-x - shift).exp() + self.down * (x - shift).exp())
    }
}

/// A site's record combined with its initial weights at a fixed time.
#[derive(Clone, Copy, Debug)]
enum SiteState {
    Unflipped {
        /// Normalised up/down weights `p e^{∓2γt}/g(2γt)`.
        up: f64,
        down: f64,
        /// `β T/g(2γt)` for σ^+.
        raise: Complex64,
    },
    Flipped {
        tau: f64,
        kappa: f64,
    },
}

impl SiteState {
    /// Factor contributed by a site feeling longitudinal field `field`,
    /// with `σ^z` on the site when `z` is set.
    ///
    /// Unflipped: `g(x)/g(2γt)` or `h(x)/g(2γt)` at `x = 2t(γ − i·field/N)`.
    fn factor(&self, field: f64, t: f64, inv_n: f64, z: bool) -> Complex64 {
        match *self {
            SiteState::Unflipped { up, down, .. } => {
                if field == 0.0 {
                    return Complex64::new(if z { up - down } else { 1.0 }, 0.0);
                }
                let (sin, cos) = (2.0 * t * field * inv_n).sin_cos();
                if z {
                    Complex64::new((up - down) * cos, sin)
                } else {
                    Complex64::new(cos, (up - down) * sin)
                }
            }
            SiteState::Flipped { tau, kappa } => {
                let phase = if field == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::from_polar(1.0, 2.0 * field * tau * inv_n)
                };
                if z {
                    phase * kappa
                } else {
                    phase
                }
            }
        }
    }
}

/// Trajectory estimator for one model.
#[derive(Clone, Debug)]
pub struct TrajectorySimulator {
    couplings: CouplingMatrix,
    rates: DecoherenceRates,
    derived: DerivedRates,
    initial: InitialProductState,
    weights: Vec<SiteWeights>,
}

impl TrajectorySimulator {
    pub fn new(
        couplings: CouplingMatrix,
        rates: DecoherenceRates,
        initial: InitialProductState,
    ) -> Result<Self> {
        if couplings.n_spins() != initial.n_spins() {
            return Err(Error::invalid(
                "initial",
                format!("{} initial angles for {} spins", initial.n_spins(), couplings.n_spins()),
            ));
        }
        let weights = (0..initial.n_spins())
            .map(|j| {
                let (fu, fd) = initial.amplitudes(j);
                SiteWeights {
                    up: fu.norm_sqr(),
                    down: fd.norm_sqr(),
                    coherence: fu.conj() * fd,
                }
            })
            .collect();
        Ok(Self {
            derived: rates.derived(),
            couplings,
            rates,
            initial,
            weights,
        })
    }

    pub fn n_spins(&self) -> usize {
        self.couplings.n_spins()
    }

    pub fn couplings(&self) -> &CouplingMatrix {
        &self.couplings
    }

    pub fn initial(&self) -> &InitialProductState {
        &self.initial
    }

    /// Jump records for every site of trajectory `trajectory`.
    pub fn sample_records(&self, t: f64, seed: u64, trajectory: u64) -> Vec<JumpRecord> {
        (0..self.n_spins())
            .map(|j| {
                let mut rng = stream_rng(seed, trajectory, j);
                sample_with_up_probability(&self.rates, self.weights[j].up, t, &mut rng)
            })
            .collect()
    }

    /// `⟨∏ O_s⟩` along one trajectory, for operators on distinct sites.
    pub fn expectation(&self, records: &[JumpRecord], ops: &[(usize, SiteOp)], t: f64) -> Result<Complex64> {
        let n = self.n_spins();
        if records.len() != n {
            return Err(Error::invalid("records", format!("{} records for {n} spins", records.len())));
        }
        for (i, &(s, _)) in ops.iter().enumerate() {
            if s >= n {
                return Err(Error::invalid("site", format!("site {s} out of range for {n} spins")));
            }
            if ops[..i].iter().any(|&(other, _)| other == s) {
                return Err(Error::Domain(format!("site {s} appears twice; operators must act on distinct sites")));
            }
        }
        Ok(self.expectation_unchecked(records, ops, t))
    }

    fn site_states(&self, records: &[JumpRecord], t: f64) -> Vec<SiteState> {
        let x = 2.0 * self.derived.asymmetry * t;
        records
            .iter()
            .zip(&self.weights)
            .map(|(rec, w)| {
                if rec.unflipped() {
                    let (up, down) = w.split(x);
                    SiteState::Unflipped {
                        up,
                        down,
                        raise: w.coherence_ratio(w.coherence, x) * rec.beta(),
                    }
                } else {
                    SiteState::Flipped {
                        tau: rec.tau,
                        kappa: rec.kappa(),
                    }
                }
            })
            .collect()
    }

    fn expectation_unchecked(&self, records: &[JumpRecord], ops: &[(usize, SiteOp)], t: f64) -> Complex64 {
        self.product(&self.site_states(records, t), ops, t)
    }

    fn product(&self, states: &[SiteState], ops: &[(usize, SiteOp)], t: f64) -> Complex64 {
        let n = states.len();
        let inv_n = 1.0 / n as f64;
        let mut value = Complex64::new(1.0, 0.0);
        for &(s, op) in ops {
            if let Some(sign) = op.transverse_sign() {
                match states[s] {
                    SiteState::Unflipped { raise, .. } => {
                        value *= if sign > 0.0 { raise } else { raise.conj() };
                    }
                    SiteState::Flipped { .. } => return Complex64::new(0.0, 0.0),
                }
            }
        }
        for (l, state) in states.iter().enumerate() {
            let mut z = false;
            let mut transverse = false;
            let mut field = 0.0;
            for &(s, op) in ops {
                if s == l {
                    z = op == SiteOp::Z;
                    transverse = !z;
                }
                if let Some(m) = op.transverse_sign() {
                    field += m * self.couplings.get(s, l);
                }
            }
            if !transverse {
                value *= state.factor(field, t, inv_n, z);
            }
        }
        value
    }

    /// `⟨σ_j^+⟩` along one trajectory.
    pub fn trajectory_sigma_plus(&self, records: &[JumpRecord], j: usize, t: f64) -> Result<Complex64> {
        self.expectation(records, &[(j, SiteOp::Raise)], t)
    }

    /// Two-site correlator `⟨A_j B_k⟩` along one trajectory.
    pub fn trajectory_corr(
        &self,
        records: &[JumpRecord],
        j: usize,
        a: SiteOp,
        k: usize,
        b: SiteOp,
        t: f64,
    ) -> Result<Complex64> {
        if j == k {
            return Err(Error::Domain(format!("correlator needs distinct sites, got ({j}, {k})")));
        }
        self.expectation(records, &[(j, a), (k, b)], t)
    }

    /// Collective moments of one trajectory.
    pub fn trajectory_moments(&self, records: &[JumpRecord], t: f64) -> SpinMoments {
        let n = self.n_spins();
        let states = self.site_states(records, t);
        let plus: Vec<Complex64> = (0..n).map(|j| self.product(&states, &[(j, SiteOp::Raise)], t)).collect();
        let z: Vec<f64> = (0..n).map(|j| self.product(&states, &[(j, SiteOp::Z)], t).re).collect();
        let z_total: f64 = z.iter().sum();
        let mut m = SpinMoments {
            n,
            sx: plus.iter().map(|p| p.re).sum(),
            sy: plus.iter().map(|p| p.im).sum(),
            sz: 0.5 * z_total,
            zz: z_total * z_total - z.iter().map(|v| v * v).sum::<f64>(),
            ..SpinMoments::default()
        };
        for j in 0..n {
            if !records[j].unflipped() {
                continue;
            }
            for k in 0..n {
                if k == j {
                    continue;
                }
                m.yz += 2.0 * self.product(&states, &[(j, SiteOp::Raise), (k, SiteOp::Z)], t).im;
                if k > j && records[k].unflipped() {
                    let pp = self.product(&states, &[(j, SiteOp::Raise), (k, SiteOp::Raise)], t);
                    let pm = self.product(&states, &[(j, SiteOp::Raise), (k, SiteOp::Lower)], t);
                    m.xx += 4.0 * (pp.re + pm.re);
                    m.yy += 4.0 * (pm.re - pp.re);
                }
            }
        }
        m
    }
}

/// Monte Carlo run parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McConfig {
    pub n_trajectories: usize,
    pub seed: u64,
    pub parallelism: Parallelism,
}

impl McConfig {
    pub fn new(n_trajectories: usize, seed: u64) -> Self {
        Self {
            n_trajectories,
            seed,
            parallelism: Parallelism::default(),
        }
    }

    pub fn with_parallelism(mut self, parallelism: Parallelism) -> Self {
        self.parallelism = parallelism;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(Error::invalid("n_traj", "need at least two trajectories"));
        }
        Ok(())
    }
}

/// Sample mean of a complex observable with component-wise standard errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryEstimate {
    pub mean: Complex64,
    /// Standard error of the real part in `re`, imaginary part in `im`.
    pub std_error: Complex64,
    pub n_trajectories: usize,
    pub seed: u64,
}

impl TrajectoryEstimate {
    /// `|estimate − reference|` in units of the standard error, per component.
    pub fn deviation_sigmas(&self, reference: Complex64) -> (f64, f64) {
        let z = |d: f64, e: f64| if e > 0.0 { d.abs() / e } else if d == 0.0 { 0.0 } else { f64::INFINITY };
        (
            z(self.mean.re - reference.re, self.std_error.re),
            z(self.mean.im - reference.im, self.std_error.im),
        )
    }
}

/// Running mean and co-moment matrix, mergeable in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentAccumulator {
    count: f64,
    mean: Vec<f64>,
    /// Σ (x_a − mean_a)(x_b − mean_b), row-major.
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(dim: usize) -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; dim],
            comoment: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> usize {
        self.count as usize
    }

    pub fn push(&mut self, x: &[f64]) {
        let d = self.dim();
        self.count += 1.0;
        let delta: Vec<f64> = x.iter().zip(&self.mean).map(|(a, m)| a - m).collect();
        for (m, dl) in self.mean.iter_mut().zip(&delta) {
            *m += dl / self.count;
        }
        for a in 0..d {
            let after = x[a] - self.mean[a];
            for b in 0..d {
                self.comoment[a * d + b] += after * delta[b];
            }
        }
    }

    pub fn merge(&self, other: &Self) -> Self {
        let d = self.dim();
        let count = self.count + other.count;
        if count == 0.0 {
            return self.clone();
        }
        let delta: Vec<f64> = other.mean.iter().zip(&self.mean).map(|(a, b)| a - b).collect();
        let w = self.count * other.count / count;
        let mean = (0..d)
            .map(|a| self.mean[a] + delta[a] * other.count / count)
            .collect();
        let comoment = (0..d * d)
            .map(|ab| self.comoment[ab] + other.comoment[ab] + delta[ab / d] * delta[ab % d] * w)
            .collect();
        Self { count, mean, comoment }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Covariance matrix of the sample mean (sample covariance / n).
    pub fn mean_covariance(&self) -> Vec<f64> {
        let denom = (self.count - 1.0) * self.count;
        self.comoment.iter().map(|c| c / denom).collect()
    }
}

const CHUNK: usize = 256;

/// Accumulates `f(trajectory index)` over all trajectories.
///
/// Trajectories are grouped into fixed-size chunks that are reduced in index
/// order, so the result does not depend on the worker count.
fn accumulate<F>(cfg: &McConfig, dim: usize, f: F) -> MomentAccumulator
where
    F: Fn(u64, &mut Vec<f64>) + Sync + Send,
{
    let n_chunks = cfg.n_trajectories.div_ceil(CHUNK);
    let partials = map_indexed(n_chunks, cfg.parallelism, |c| {
        let mut acc = MomentAccumulator::new(dim);
        let mut buf = Vec::with_capacity(dim);
        let end = ((c + 1) * CHUNK).min(cfg.n_trajectories);
        for i in c * CHUNK..end {
            buf.clear();
            f(i as u64, &mut buf);
            acc.push(&buf);
        }
        acc
    });
    pairwise_reduce(&partials, &|a, b| a.merge(b)).unwrap_or_else(|| MomentAccumulator::new(dim))
}

/// Observables the generic estimator understands.
#[derive(Clone, Debug, PartialEq)]
pub enum McObservable {
    /// Product of single-site operators on distinct sites.
    Product(Vec<(usize, SiteOp)>),
    /// `⟨S^x⟩ + i⟨S^y⟩`.
    TransverseSpin,
}

/// Trajectory average of one observable at time `t`.
pub fn mc_estimate(
    sim: &TrajectorySimulator,
    observable: &McObservable,
    t: f64,
    cfg: &McConfig,
) -> Result<TrajectoryEstimate> {
    cfg.validate()?;
    check_time(t)?;
    if let McObservable::Product(ops) = observable {
        // Validate once up front.
        let probe = vec![
            JumpRecord {
                raman_count: 0,
                rayleigh_odd: false,
                tau: 0.0,
                final_spin: None
            };
            sim.n_spins()
        ];
        sim.expectation(&probe, ops, t)?;
    }
    let acc = accumulate(cfg, 2, |i, out| {
        let states = sim.site_states(&sim.sample_records(t, cfg.seed, i), t);
        let v = match observable {
            McObservable::Product(ops) => sim.product(&states, ops, t),
            McObservable::TransverseSpin => (0..sim.n_spins())
                .map(|j| sim.product(&states, &[(j, SiteOp::Raise)], t))
                .sum(),
        };
        out.extend([v.re, v.im]);
    });
    let cov = acc.mean_covariance();
    Ok(TrajectoryEstimate {
        mean: Complex64::new(acc.mean()[0], acc.mean()[1]),
        std_error: Complex64::new(cov[0].max(0.0).sqrt(), cov[3].max(0.0).sqrt()),
        n_trajectories: cfg.n_trajectories,
        seed: cfg.seed,
    })
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("t", format!("time must be finite and >= 0, got {t}")))
    }
}

/// Trajectory-averaged collective moments with their sampling covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct McMoments {
    pub moments: SpinMoments,
    /// Covariance of the mean of [`SpinMoments::to_array`], row-major.
    pub covariance: [[f64; MOMENT_COMPONENTS]; MOMENT_COMPONENTS],
    pub n_trajectories: usize,
    pub seed: u64,
}

/// A real-valued estimate with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RealEstimate {
    pub mean: f64,
    pub std_error: f64,
}

impl McMoments {
    fn delta(&self, value: f64, gradient: [f64; MOMENT_COMPONENTS]) -> RealEstimate {
        RealEstimate {
            mean: value,
            std_error: propagate_error(&self.covariance, &gradient),
        }
    }

    fn component(&self, i: usize) -> RealEstimate {
        RealEstimate {
            mean: self.moments.to_array()[i],
            std_error: self.covariance[i][i].max(0.0).sqrt(),
        }
    }

    pub fn spin_x(&self) -> RealEstimate {
        self.component(0)
    }

    pub fn spin_y(&self) -> RealEstimate {
        self.component(1)
    }

    pub fn spin_z(&self) -> RealEstimate {
        self.component(2)
    }

    /// `Var(S^ψ)` with a delta-method standard error.
    pub fn variance(&self, psi: f64) -> RealEstimate {
        self.delta(self.moments.variance(psi), self.moments.variance_gradient(psi))
    }

    /// `ξ(ψ)` with a delta-method standard error.
    pub fn squeezing(&self, psi: f64) -> RealEstimate {
        self.delta(self.moments.squeezing(psi).xi, self.moments.squeezing_gradient(psi))
    }

    /// `2ΔS^x/N` with a delta-method standard error.
    pub fn transverse_fluctuation_x(&self) -> RealEstimate {
        self.delta(
            self.moments.transverse_fluctuation_x(),
            self.moments.transverse_fluctuation_x_gradient(),
        )
    }
}

/// Trajectory-averaged [`SpinMoments`] at time `t`.
pub fn mc_moments(sim: &TrajectorySimulator, t: f64, cfg: &McConfig) -> Result<McMoments> {
    cfg.validate()?;
    check_time(t)?;
    let acc = accumulate(cfg, MOMENT_COMPONENTS, |i, out| {
        let records = sim.sample_records(t, cfg.seed, i);
        out.extend(sim.trajectory_moments(&records, t).to_array());
    });
    let mean: [f64; MOMENT_COMPONENTS] = acc.mean().try_into().expect("fixed dimension");
    let flat = acc.mean_covariance();
    let mut covariance = [[0.0; MOMENT_COMPONENTS]; MOMENT_COMPONENTS];
    for (a, row) in covariance.iter_mut().enumerate() {
        row.copy_from_slice(&flat[a * MOMENT_COMPONENTS..(a + 1) * MOMENT_COMPONENTS]);
    }
    Ok(McMoments {
        moments: SpinMoments::from_array(sim.n_spins(), mean),
        covariance,
        n_trajectories: cfg.n_trajectories,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn clean() -> JumpRecord {
        JumpRecord {
            raman_count: 0,
            rayleigh_odd: false,
            tau: 0.0,
            final_spin: None,
        }
    }

    fn sim(n: usize, rates: DecoherenceRates) -> TrajectorySimulator {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..n).map(|k| if j == k { 0.0 } else { 0.5 + 0.25 * ((j * k) % 3) as f64 }).collect())
            .collect();
        TrajectorySimulator::new(
            CouplingMatrix::from_rows(&rows).unwrap(),
            rates,
            InitialProductState::x_polarized(n),
        )
        .unwrap()
    }

    #[test]
    fn no_raman_rates_never_flip() {
        let rates = DecoherenceRates::new(0.0, 0.0, 1.0).unwrap();
        let mut rng = stream_rng(1, 0, 0);
        for _ in 0..1000 {
            let r = sample_jump_record(&rates, FRAC_PI_2, 3.0, &mut rng);
            assert_eq!(r.raman_count, 0);
            assert_eq!(r.tau, 0.0);
            assert_eq!(r.final_spin, None);
        }
    }

    #[test]
    fn dwell_time_bounded_by_duration() {
        let rates = DecoherenceRates::new(2.0, 1.5, 0.0).unwrap();
        let mut rng = stream_rng(9, 3, 1);
        for _ in 0..5000 {
            let r = sample_jump_record(&rates, 1.0, 2.0, &mut rng);
            assert!(r.tau.abs() <= 2.0);
            assert_eq!(r.final_spin.is_some(), r.raman_count > 0);
            if let Some(s) = r.final_spin {
                // Parity of flips ties the final spin to the hidden start.
                assert!(s == Spin::Up || s == Spin::Down);
            }
        }
    }

    #[test]
    fn clean_coherent_trajectory_factor_is_cosine() {
        let s = sim(3, DecoherenceRates::zero());
        let recs = vec![clean(); 3];
        let t = 1.3;
        let v = s.trajectory_sigma_plus(&recs, 0, t).unwrap();
        let expect = 0.5 * (2.0 * s.couplings().get(0, 1) * t / 3.0).cos() * (2.0 * s.couplings().get(0, 2) * t / 3.0).cos();
        assert_abs_diff_eq!((v - expect).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn flips_and_parity() {
        let s = sim(3, DecoherenceRates::new(0.4, 0.2, 0.3).unwrap());
        let mut recs = vec![clean(); 3];
        let base = s.trajectory_sigma_plus(&recs, 1, 0.8).unwrap();
        recs[1].rayleigh_odd = true;
        assert_abs_diff_eq!((s.trajectory_sigma_plus(&recs, 1, 0.8).unwrap() + base).norm(), 0.0, epsilon = 1e-15);
        recs[1] = JumpRecord { raman_count: 2, rayleigh_odd: false, tau: 0.1, final_spin: Some(Spin::Up) };
        assert_eq!(s.trajectory_sigma_plus(&recs, 1, 0.8).unwrap(), Complex64::new(0.0, 0.0));
        assert_eq!(
            s.trajectory_corr(&recs, 1, SiteOp::Lower, 2, SiteOp::Raise, 0.8).unwrap(),
            Complex64::new(0.0, 0.0)
        );
        // A flipped z-partner contributes its final spin sign.
        let zp = s.trajectory_corr(&recs, 0, SiteOp::Raise, 1, SiteOp::Z, 0.8).unwrap();
        recs[1].final_spin = Some(Spin::Down);
        let zm = s.trajectory_corr(&recs, 0, SiteOp::Raise, 1, SiteOp::Z, 0.8).unwrap();
        assert_abs_diff_eq!((zp + zm).norm(), 0.0, epsilon = 1e-15);
        assert!(zp.norm() > 0.0);
    }

    #[test]
    fn correlator_at_time_zero() {
        let s = sim(4, DecoherenceRates::new(0.4, 0.2, 0.3).unwrap());
        let recs = vec![clean(); 4];
        let v = s.trajectory_corr(&recs, 0, SiteOp::Lower, 2, SiteOp::Raise, 0.0).unwrap();
        assert_abs_diff_eq!((v - 0.25).norm(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            s.trajectory_corr(&recs, 2, SiteOp::Lower, 2, SiteOp::Raise, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn estimates_are_deterministic_across_parallelism() {
        let s = sim(4, DecoherenceRates::new(0.4, 0.2, 0.3).unwrap());
        let seq = McConfig::new(3000, 17).with_parallelism(Parallelism::Sequential);
        let par = McConfig::new(3000, 17).with_parallelism(Parallelism::Parallel);
        let a = mc_moments(&s, 1.1, &seq).unwrap();
        let b = mc_moments(&s, 1.1, &par).unwrap();
        assert_eq!(a, b);
        let obs = McObservable::Product(vec![(0, SiteOp::Raise), (3, SiteOp::Z)]);
        assert_eq!(mc_estimate(&s, &obs, 1.1, &seq).unwrap(), mc_estimate(&s, &obs, 1.1, &par).unwrap());
        assert!(mc_estimate(&s, &obs, 1.1, &McConfig::new(1, 0)).is_err());
    }

    #[test]
    fn accumulator_merge_matches_direct() {
        let data: Vec<[f64; 2]> = (0..1000).map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos() * 3.0]).collect();
        let mut whole = MomentAccumulator::new(2);
        data.iter().for_each(|x| whole.push(x));
        let mut a = MomentAccumulator::new(2);
        let mut b = MomentAccumulator::new(2);
        data[..313].iter().for_each(|x| a.push(x));
        data[313..].iter().for_each(|x| b.push(x));
        let merged = a.merge(&b);
        for (x, y) in whole.mean().iter().zip(merged.mean()) {
            assert_abs_diff_eq!(*x, *y, epsilon = 1e-14);
        }
        for (x, y) in whole.mean_covariance().iter().zip(merged.mean_covariance()) {
            assert_abs_diff_eq!(*x, y, epsilon = 1e-15);
        }
        // Two-pass oracle for the variance of the first component.
        let m: f64 = data.iter().map(|x| x[0]).sum::<f64>() / 1000.0;
        let v: f64 = data.iter().map(|x| (x[0] - m).powi(2)).sum::<f64>() / 999.0 / 1000.0;
        assert_abs_diff_eq!(whole.mean_covariance()[0], v, epsilon = 1e-15);
    }

    #[test]
    fn streams_are_distinct_and_reproducible() {
        let a: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 0, 0), |r, _| Some(r.random())).collect();
        let b: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 0, 0), |r, _| Some(r.random())).collect();
        let c: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 1, 0), |r, _| Some(r.random())).collect();
        let d: Vec<u64> = (0..4).map(|_| 0).scan(stream_rng(5, 0, 1), |r, _| Some(r.random())).collect();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }
}
