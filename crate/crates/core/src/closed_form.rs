//! Exact trajectory-averaged observables for spins initially polarized
//! along +x.
//!
//! Every coupled neighbour `l` of a transverse operator contributes one
//! factor `Φ(J, t)`, and a σᶻ partner contributes `Ψ(J, t)`:
//!
//! ```text
//! Φ(J,t) = e^{−λt} [cos(t√(s²−r)) + λt·sinc(t√(s²−r))]
//! Ψ(J,t) = e^{−λt} (is − 2γ) t·sinc(t√(s²−r))
//! s = 2iγ + 2J/N,  λ = Γ_r/2,  r = Γ_ud·Γ_du
//! ```
//!
//! Each σ^x or σ^y in an observable additionally carries one `e^{−Γt}`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::model::{CouplingMatrix, DecoherenceRates, DerivedRates, InitialProductState};

const SINC_SERIES_RADIUS: f64 = 1e-4;

/// `sin(z)/z`, continued through z = 0.
pub fn sinc(z: Complex64) -> Complex64 {
    if z.norm() < SINC_SERIES_RADIUS {
        let z2 = z * z;
        Complex64::new(1.0, 0.0) - z2 / 6.0 + z2 * z2 / 120.0
    } else {
        z.sin() / z
    }
}

/// Which square root of `s² − r` to use. Φ and Ψ are even in it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Branch {
    #[default]
    Principal,
    Negated,
}

/// `(e^{−λt}cos(x), e^{−λt}sinc(x))` with `x = t·root`.
///
/// Written through `exp(±ix − λt)` because `|Im root| ≤ λ`, which keeps both
/// exponents non-positive and avoids `∞·0` at large `λt`.
fn damped_cos_sinc(root: Complex64, t: f64, lambda: f64) -> (Complex64, Complex64) {
    let x = root * t;
    if x.norm() < SINC_SERIES_RADIUS {
        let env = (-lambda * t).exp();
        return (x.cos() * env, sinc(x) * env);
    }
    let i = Complex64::i();
    let ep = (i * x - lambda * t).exp();
    let em = (-i * x - lambda * t).exp();
    ((ep + em) * 0.5, (ep - em) / (2.0 * i * x))
}

fn discriminant_root(coupling: f64, rates: &DerivedRates, n: usize, branch: Branch) -> (Complex64, Complex64) {
    let s = Complex64::new(2.0 * coupling / n as f64, 2.0 * rates.asymmetry);
    let root = (s * s - rates.product).sqrt();
    match branch {
        Branch::Principal => (s, root),
        Branch::Negated => (s, -root),
    }
}

/// `s² − r` for coupling `coupling`.
pub fn discriminant(coupling: f64, rates: &DerivedRates, n: usize) -> Complex64 {
    let s = Complex64::new(2.0 * coupling / n as f64, 2.0 * rates.asymmetry);
    s * s - rates.product
}

/// Φ(J, t) for an `n`-spin system.
pub fn phi(coupling: f64, t: f64, rates: &DerivedRates, n: usize) -> Complex64 {
    phi_with_branch(coupling, t, rates, n, Branch::Principal)
}

pub fn phi_with_branch(coupling: f64, t: f64, rates: &DerivedRates, n: usize, branch: Branch) -> Complex64 {
    debug_assert!(t >= 0.0 && n >= 1);
    let (_, root) = discriminant_root(coupling, rates, n, branch);
    let (c, sc) = damped_cos_sinc(root, t, rates.lambda);
    c + sc * (rates.lambda * t)
}

/// Ψ(J, t) for an `n`-spin system.
pub fn psi(coupling: f64, t: f64, rates: &DerivedRates, n: usize) -> Complex64 {
    psi_with_branch(coupling, t, rates, n, Branch::Principal)
}

pub fn psi_with_branch(coupling: f64, t: f64, rates: &DerivedRates, n: usize, branch: Branch) -> Complex64 {
    debug_assert!(t >= 0.0 && n >= 1);
    let (s, root) = discriminant_root(coupling, rates, n, branch);
    let (_, sc) = damped_cos_sinc(root, t, rates.lambda);
    (Complex64::i() * s - 2.0 * rates.asymmetry) * t * sc
}

/// How long products of Φ factors are accumulated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ProductMode {
    #[default]
    Direct,
    /// Sum of complex logarithms, exponentiated once at the end.
    LogSpace,
}

/// Product of complex factors in the chosen accumulation mode.
pub fn complex_product(factors: impl Iterator<Item = Complex64>, mode: ProductMode) -> Complex64 {
    match mode {
        ProductMode::Direct => factors.fold(Complex64::new(1.0, 0.0), |acc, f| acc * f),
        ProductMode::LogSpace => {
            let mut log_sum = Complex64::new(0.0, 0.0);
            for f in factors {
                if f == Complex64::new(0.0, 0.0) {
                    return f;
                }
                log_sum += f.ln();
            }
            log_sum.exp()
        }
    }
}

/// σ^+ or σ^−.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ladder {
    Raise,
    Lower,
}

impl Ladder {
    pub fn sign(self) -> f64 {
        match self {
            Ladder::Raise => 1.0,
            Ladder::Lower => -1.0,
        }
    }

    pub fn from_sign(sign: i32) -> Option<Self> {
        match sign {
            1 => Some(Ladder::Raise),
            -1 => Some(Ladder::Lower),
            _ => None,
        }
    }
}

/// Whether the closed forms include the many-body decoherence factors or
/// only a single-particle `e^{−Γt}` per transverse operator on top of the
/// decoherence-free dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Treatment {
    #[default]
    Exact,
    SingleParticle,
}

/// Closed-form evaluator bound to one coupling matrix and rate set.
#[derive(Clone, Debug)]
pub struct ClosedForm {
    couplings: CouplingMatrix,
    rates: DecoherenceRates,
    derived: DerivedRates,
    /// Rates entering Φ and Ψ: the physical ones, or zero for the
    /// single-particle treatment.
    kernel_rates: DerivedRates,
    treatment: Treatment,
    product_mode: ProductMode,
}

impl ClosedForm {
    /// Fails with [`Error::Unsupported`] unless every spin starts along +x.
    pub fn new(
        couplings: CouplingMatrix,
        rates: DecoherenceRates,
        initial: &InitialProductState,
    ) -> Result<Self> {
        if initial.n_spins() != couplings.n_spins() {
            return Err(Error::invalid(
                "initial",
                format!(
                    "{} initial angles for {} spins",
                    initial.n_spins(),
                    couplings.n_spins()
                ),
            ));
        }
        if !initial.is_x_polarized() {
            return Err(Error::Unsupported(
                "closed forms require every spin to start along +x (theta = pi/2, phi = 0); \
                 use the trajectories backend for general initial angles"
                    .into(),
            ));
        }
        Ok(Self::x_polarized(couplings, rates))
    }

    pub fn x_polarized(couplings: CouplingMatrix, rates: DecoherenceRates) -> Self {
        let derived = rates.derived();
        Self {
            couplings,
            rates,
            derived,
            kernel_rates: derived,
            treatment: Treatment::Exact,
            product_mode: ProductMode::Direct,
        }
    }

    pub fn with_treatment(mut self, treatment: Treatment) -> Self {
        self.treatment = treatment;
        self.kernel_rates = match treatment {
            Treatment::Exact => self.derived,
            Treatment::SingleParticle => DerivedRates::default(),
        };
        self
    }

    pub fn with_product_mode(mut self, mode: ProductMode) -> Self {
        self.product_mode = mode;
        self
    }

    pub fn couplings(&self) -> &CouplingMatrix {
        &self.couplings
    }

    pub fn rates(&self) -> &DecoherenceRates {
        &self.rates
    }

    pub fn derived(&self) -> &DerivedRates {
        &self.derived
    }

    pub fn treatment(&self) -> Treatment {
        self.treatment
    }

    pub fn n_spins(&self) -> usize {
        self.couplings.n_spins()
    }

    /// Φ under this evaluator's treatment.
    pub fn phi(&self, coupling: f64, t: f64) -> Complex64 {
        phi(coupling, t, &self.kernel_rates, self.n_spins())
    }

    pub fn psi(&self, coupling: f64, t: f64) -> Complex64 {
        psi(coupling, t, &self.kernel_rates, self.n_spins())
    }

    fn transverse_envelope(&self, t: f64, count: i32) -> f64 {
        (-self.derived.total * t * count as f64).exp()
    }

    fn check_time(t: f64) -> Result<()> {
        if t.is_finite() && t >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("t", format!("time must be finite and >= 0, got {t}")))
        }
    }

    fn check_site(&self, j: usize) -> Result<()> {
        if j < self.n_spins() {
            Ok(())
        } else {
            Err(Error::invalid("site", format!("site {j} out of range for {} spins", self.n_spins())))
        }
    }

    fn check_pair(&self, j: usize, k: usize) -> Result<()> {
        self.check_site(j)?;
        self.check_site(k)?;
        if j == k {
            return Err(Error::Domain(format!(
                "pair correlator needs distinct sites, got ({j}, {k}); use single-site identities instead"
            )));
        }
        Ok(())
    }

    /// `⟨σ_j^+(t)⟩ = ½ e^{−Γt} ∏_{k≠j} Φ(J_jk, t)`.
    pub fn sigma_plus(&self, j: usize, t: f64) -> Result<Complex64> {
        Self::check_time(t)?;
        self.check_site(j)?;
        let row = self.couplings.row(j);
        let prod = complex_product(
            (0..self.n_spins()).filter(|&k| k != j).map(|k| self.phi(row[k], t)),
            self.product_mode,
        );
        Ok(prod * (0.5 * self.transverse_envelope(t, 1)))
    }

    /// `⟨σ_j^μ σ_k^ν⟩ = ¼ e^{−2Γt} ∏_{l∉{j,k}} Φ(μJ_jl + νJ_kl, t)`.
    pub fn corr_pm(&self, j: usize, k: usize, mu: Ladder, nu: Ladder, t: f64) -> Result<Complex64> {
        Self::check_time(t)?;
        self.check_pair(j, k)?;
        let (rj, rk) = (self.couplings.row(j), self.couplings.row(k));
        let (m, n) = (mu.sign(), nu.sign());
        let prod = complex_product(
            (0..self.n_spins())
                .filter(|&l| l != j && l != k)
                .map(|l| self.phi(m * rj[l] + n * rk[l], t)),
            self.product_mode,
        );
        Ok(prod * (0.25 * self.transverse_envelope(t, 2)))
    }

    /// `⟨σ_j^μ σ_k^z⟩ = ½ e^{−Γt} Ψ(μJ_jk, t) ∏_{l∉{j,k}} Φ(μJ_jl, t)`.
    pub fn corr_pz(&self, j: usize, k: usize, mu: Ladder, t: f64) -> Result<Complex64> {
        Self::check_time(t)?;
        self.check_pair(j, k)?;
        let rj = self.couplings.row(j);
        let m = mu.sign();
        let prod = complex_product(
            (0..self.n_spins())
                .filter(|&l| l != j && l != k)
                .map(|l| self.phi(m * rj[l], t)),
            self.product_mode,
        );
        Ok(self.psi(m * rj[k], t) * prod * (0.5 * self.transverse_envelope(t, 1)))
    }

    /// `(⟨σ_j^z⟩, ⟨σ_j^z σ_k^z⟩)` for any `j ≠ k`.
    ///
    /// Populations follow independent classical rate equations, so
    /// `⟨σ^z(t)⟩ = −(4γ/Γ_r)(1 − e^{−Γ_r t})` and pairs factorize.
    pub fn sigma_z_moments(&self, t: f64) -> Result<(f64, f64)> {
        Self::check_time(t)?;
        Ok(sigma_z_moments(t, &self.kernel_rates))
    }

    /// `⟨S^x⟩ = Σ_j Re⟨σ_j^+⟩`.
    pub fn collective_spin_x(&self, t: f64) -> Result<f64> {
        Ok(self.transverse_sum(t)?.re)
    }

    /// `⟨S^y⟩ = Σ_j Im⟨σ_j^+⟩`.
    pub fn collective_spin_y(&self, t: f64) -> Result<f64> {
        Ok(self.transverse_sum(t)?.im)
    }

    /// `Σ_j ⟨σ_j^+⟩`, i.e. `⟨S^x⟩ + i⟨S^y⟩`.
    pub fn transverse_sum(&self, t: f64) -> Result<Complex64> {
        (0..self.n_spins()).try_fold(Complex64::new(0.0, 0.0), |acc, j| {
            Ok(acc + self.sigma_plus(j, t)?)
        })
    }
}

/// `(mean_z, pair_zz)` for an x-polarized start under the given rates.
pub fn sigma_z_moments(t: f64, rates: &DerivedRates) -> (f64, f64) {
    let mean = if rates.raman > 0.0 {
        -4.0 * rates.asymmetry / rates.raman * (-(-rates.raman * t).exp_m1())
    } else {
        0.0
    };
    (mean, mean * mean)
}
