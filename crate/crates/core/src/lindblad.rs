//! Dense density-matrix integration of the master equation for small N.
//!
//! Basis index bit `j` is 0 when spin `j` points up (σ^z = +1). The
//! dissipator uses collapse operators `√Γ_ud σ^-`, `√Γ_du σ^+` and
//! `√(Γ_el/4) σ^z` on every site.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::collective::SpinMoments;
use crate::error::{Error, Result};
use crate::model::{CouplingMatrix, DecoherenceRates, InitialProductState};
use crate::ode::{integrate, OdeOptions};
use crate::par::{for_each_chunk_mut, Parallelism};

/// Largest supported system size.
pub const MAX_SPINS: usize = 12;
/// Largest size for which positivity is checked by full diagonalisation.
pub const EIGEN_CHECK_MAX_SPINS: usize = 8;

/// Single-site operator for [`OperatorString`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SiteOperator {
    Identity,
    X,
    Y,
    Z,
    Raise,
    Lower,
}

impl SiteOperator {
    /// `⟨out|O|in⟩` for single-site basis states (0 = up, 1 = down).
    fn element(self, out: usize, input: usize) -> Complex64 {
        let re = |v: f64| Complex64::new(v, 0.0);
        match (self, out, input) {
            (SiteOperator::Identity, a, b) if a == b => re(1.0),
            (SiteOperator::Z, 0, 0) => re(1.0),
            (SiteOperator::Z, 1, 1) => re(-1.0),
            (SiteOperator::X, a, b) if a != b => re(1.0),
            (SiteOperator::Y, 0, 1) => Complex64::new(0.0, -1.0),
            (SiteOperator::Y, 1, 0) => Complex64::new(0.0, 1.0),
            (SiteOperator::Raise, 0, 1) => re(1.0),
            (SiteOperator::Lower, 1, 0) => re(1.0),
            _ => Complex64::default(),
        }
    }

    fn flips(self) -> bool {
        matches!(self, SiteOperator::X | SiteOperator::Y | SiteOperator::Raise | SiteOperator::Lower)
    }
}

/// Tensor product of single-site operators on distinct sites.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorString {
    factors: Vec<(usize, SiteOperator)>,
}

impl OperatorString {
    pub fn new(factors: Vec<(usize, SiteOperator)>) -> Result<Self> {
        for (i, (s, _)) in factors.iter().enumerate() {
            if factors[..i].iter().any(|(o, _)| o == s) {
                return Err(Error::Domain(format!("site {s} appears twice in operator string")));
            }
        }
        Ok(Self { factors })
    }

    pub fn single(site: usize, op: SiteOperator) -> Self {
        Self { factors: vec![(site, op)] }
    }

    pub fn pair(j: usize, a: SiteOperator, k: usize, b: SiteOperator) -> Result<Self> {
        Self::new(vec![(j, a), (k, b)])
    }

    pub fn factors(&self) -> &[(usize, SiteOperator)] {
        &self.factors
    }
}

/// Options for [`evolve`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvolveOptions {
    pub ode: OdeOptions,
    /// Tolerance for trace, hermiticity and positivity checks.
    pub invariant_tol: f64,
    pub parallelism: Parallelism,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            invariant_tol: 1e-8,
            parallelism: Parallelism::default(),
        }
    }
}

/// Dense `2^N × 2^N` density matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n: usize,
    dim: usize,
    data: Vec<Complex64>,
}

fn check_size(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("n", "need at least one spin"));
    }
    if n > MAX_SPINS {
        return Err(Error::ResourceLimit(format!(
            "density matrix for {n} spins exceeds the {MAX_SPINS}-spin limit"
        )));
    }
    Ok(())
}

impl DensityMatrix {
    pub fn from_product_state(initial: &InitialProductState) -> Result<Self> {
        let n = initial.n_spins();
        check_size(n)?;
        let dim = 1usize << n;
        let amps: Vec<[Complex64; 2]> = (0..n)
            .map(|j| {
                let (u, d) = initial.amplitudes(j);
                [u, d]
            })
            .collect();
        let psi: Vec<Complex64> = (0..dim)
            .map(|a| (0..n).map(|j| amps[j][(a >> j) & 1]).product())
            .collect();
        let mut data = vec![Complex64::default(); dim * dim];
        for a in 0..dim {
            for b in 0..dim {
                data[a * dim + b] = psi[a] * psi[b].conj();
            }
        }
        Ok(Self { n, dim, data })
    }

    /// Wraps raw row-major data.
    pub fn from_raw(n: usize, data: Vec<Complex64>) -> Result<Self> {
        check_size(n)?;
        let dim = 1usize << n;
        if data.len() != dim * dim {
            return Err(Error::invalid("data", format!("expected {} entries, got {}", dim * dim, data.len())));
        }
        Ok(Self { n, dim, data })
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.data[a * self.dim + b]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|a| self.get(a, a)).sum()
    }

    /// `max |ρ − ρ†|`
    pub fn hermiticity_error(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in 0..self.dim {
            for b in a..self.dim {
                worst = worst.max((self.get(a, b) - self.get(b, a).conj()).norm());
            }
        }
        worst
    }

    pub fn purity(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = DMatrix::from_fn(self.dim, self.dim, |a, b| 0.5 * (self.get(a, b) + self.get(b, a).conj()));
        m.symmetric_eigen().eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Unit trace, hermiticity and positivity within `tol`.
    ///
    /// Positivity is checked from the full spectrum up to
    /// [`EIGEN_CHECK_MAX_SPINS`] spins and from the diagonal and 2×2 principal
    /// minors above that.
    pub fn check_invariants(&self, t: f64, tol: f64) -> Result<()> {
        let fail = |reason: String| Err(Error::InvariantViolation { t, reason });
        let tr = self.trace();
        if (tr - 1.0).norm() > tol {
            return fail(format!("trace {tr} differs from 1"));
        }
        let herm = self.hermiticity_error();
        if herm > tol {
            return fail(format!("hermiticity error {herm:e}"));
        }
        if self.n <= EIGEN_CHECK_MAX_SPINS {
            let min = self.min_eigenvalue();
            if min < -tol {
                return fail(format!("negative eigenvalue {min:e}"));
            }
        } else {
            for a in 0..self.dim {
                let paa = self.get(a, a).re;
                if paa < -tol {
                    return fail(format!("negative population {paa:e} at index {a}"));
                }
                for b in a + 1..self.dim {
                    let pbb = self.get(b, b).re;
                    let excess = self.get(a, b).norm_sqr() - paa.max(0.0) * pbb.max(0.0);
                    if excess > tol {
                        return fail(format!("coherence ({a}, {b}) exceeds population bound"));
                    }
                }
            }
        }
        Ok(())
    }

    /// `tr(ρ O)`
    pub fn expectation(&self, op: &OperatorString) -> Result<Complex64> {
        let mut mask = 0usize;
        for &(s, o) in op.factors() {
            if s >= self.n {
                return Err(Error::invalid("site", format!("site {s} out of range for {} spins", self.n)));
            }
            if o.flips() {
                mask |= 1 << s;
            }
        }
        let mut total = Complex64::default();
        for a in 0..self.dim {
            let b = a ^ mask;
            // tr(ρO) = Σ_a ρ_{a,b} ⟨b|O|a⟩
            let mut c = Complex64::new(1.0, 0.0);
            for &(s, o) in op.factors() {
                c *= o.element((b >> s) & 1, (a >> s) & 1);
            }
            if c != Complex64::default() {
                total += self.get(a, b) * c;
            }
        }
        Ok(total)
    }

    /// Reduced 2×2 state of one site, `[[ρ_uu, ρ_ud], [ρ_du, ρ_dd]]`.
    pub fn reduced_site(&self, j: usize) -> Result<[[Complex64; 2]; 2]> {
        if j >= self.n {
            return Err(Error::invalid("site", format!("site {j} out of range for {} spins", self.n)));
        }
        let mut r = [[Complex64::default(); 2]; 2];
        let bit = 1usize << j;
        for a in 0..self.dim {
            if a & bit != 0 {
                continue;
            }
            r[0][0] += self.get(a, a);
            r[0][1] += self.get(a, a | bit);
            r[1][0] += self.get(a | bit, a);
            r[1][1] += self.get(a | bit, a | bit);
        }
        Ok(r)
    }
}

/// Precomputed data for the master-equation right-hand side.
#[derive(Clone, Debug)]
pub struct MasterEquation {
    n: usize,
    dim: usize,
    energy: Vec<f64>,
    /// Anti-commutator decay `½ Σ_j Γ_out(bit_j)` per basis state.
    decay: Vec<f64>,
    gamma_ud: f64,
    gamma_du: f64,
    gamma_el: f64,
    parallelism: Parallelism,
}

impl MasterEquation {
    pub fn new(couplings: &CouplingMatrix, rates: &DecoherenceRates, parallelism: Parallelism) -> Result<Self> {
        let n = couplings.n_spins();
        check_size(n)?;
        let dim = 1usize << n;
        let spin = |a: usize, j: usize| if (a >> j) & 1 == 0 { 1.0 } else { -1.0 };
        let energy = (0..dim)
            .map(|a| {
                let mut e = 0.0;
                for j in 0..n {
                    for k in j + 1..n {
                        e += couplings.get(j, k) * spin(a, j) * spin(a, k);
                    }
                }
                e / n as f64
            })
            .collect();
        let decay = (0..dim)
            .map(|a| {
                (0..n)
                    .map(|j| if spin(a, j) > 0.0 { rates.gamma_ud() } else { rates.gamma_du() })
                    .sum::<f64>()
                    / 2.0
            })
            .collect();
        Ok(Self {
            n,
            dim,
            energy,
            decay,
            gamma_ud: rates.gamma_ud(),
            gamma_du: rates.gamma_du(),
            gamma_el: rates.gamma_el(),
            parallelism,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes `dρ/dt` into `out`.
    pub fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let dim = self.dim;
        let n = self.n;
        let mode = if n >= 7 { self.parallelism } else { Parallelism::Sequential };
        for_each_chunk_mut(out, dim, mode, |a, row| {
            for (b, slot) in row.iter_mut().enumerate() {
                let r = rho[a * dim + b];
                let diff = a ^ b;
                let mut v = Complex64::new(
                    -(self.decay[a] + self.decay[b] + 0.5 * self.gamma_el * diff.count_ones() as f64),
                    -(self.energy[a] - self.energy[b]),
                ) * r;
                for j in 0..n {
                    let bit = 1usize << j;
                    if diff & bit != 0 {
                        continue;
                    }
                    // Feeding from the flipped pair: σ^- fills down, σ^+ fills up.
                    let rate = if a & bit != 0 { self.gamma_ud } else { self.gamma_du };
                    if rate != 0.0 {
                        v += rho[(a ^ bit) * dim + (b ^ bit)] * rate;
                    }
                }
                *slot = v;
            }
        });
    }
}

/// Density matrices at each requested time.
#[derive(Clone, Debug)]
pub struct DensitySeries {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Integrates the master equation from `t = 0`.
pub fn evolve(
    initial: &DensityMatrix,
    times: &[f64],
    couplings: &CouplingMatrix,
    rates: &DecoherenceRates,
    opts: &EvolveOptions,
) -> Result<DensitySeries> {
    if couplings.n_spins() != initial.n_spins() {
        return Err(Error::invalid("initial", "state and coupling sizes differ"));
    }
    if let Some(t) = times.iter().find(|t| !t.is_finite() || **t < 0.0) {
        return Err(Error::invalid("times", format!("time {t} must be finite and >= 0")));
    }
    let eq = MasterEquation::new(couplings, rates, opts.parallelism)?;
    let n = initial.n_spins();
    let mut states = Vec::with_capacity(times.len());
    integrate(
        |_, y, dy| eq.apply(y, dy),
        0.0,
        initial.as_slice(),
        times,
        &opts.ode,
        |_, t, y| {
            let rho = DensityMatrix::from_raw(n, y.to_vec())?;
            rho.check_invariants(t, opts.invariant_tol)?;
            states.push(rho);
            Ok(())
        },
    )?;
    Ok(DensitySeries {
        times: times.to_vec(),
        states,
    })
}

/// Collective moments of a density matrix.
pub fn lindblad_moments(rho: &DensityMatrix) -> SpinMoments {
    use SiteOperator::{X, Y, Z};
    let n = rho.n_spins();
    let one = |op| -> f64 {
        (0..n)
            .map(|j| rho.expectation(&OperatorString::single(j, op)).expect("valid site").re)
            .sum::<f64>()
    };
    let two = |a, b| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                if j != k {
                    s += rho.expectation(&OperatorString::pair(j, a, k, b).expect("distinct")).expect("valid").re;
                }
            }
        }
        s
    };
    SpinMoments {
        n,
        sx: 0.5 * one(X),
        sy: 0.5 * one(Y),
        sz: 0.5 * one(Z),
        xx: two(X, X),
        yy: two(Y, Y),
        zz: two(Z, Z),
        yz: two(Y, Z),
    }
}
