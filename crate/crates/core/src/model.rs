//! Physical parameters: decoherence rates, Ising couplings, lattice
//! geometry and product initial states.
//!
//! Units follow ħ = 1: couplings and rates are both inverse times, and the
//! Hamiltonian is `H = (1/N) Σ_{j<k} J_jk σ_j^z σ_k^z`.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Uniform single-site decoherence rates.
///
/// `gamma_ud` drives spontaneous de-excitation (σ⁻), `gamma_du` spontaneous
/// excitation (σ⁺), and `gamma_el` elastic dephasing (σᶻ).
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DecoherenceRates {
    gamma_ud: f64,
    gamma_du: f64,
    gamma_el: f64,
}

/// Rate combinations that appear throughout the closed-form solution.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct DerivedRates {
    /// Total Raman rate Γ_r = Γ_ud + Γ_du.
    pub raman: f64,
    /// Raman asymmetry γ = (Γ_ud − Γ_du)/4.
    pub asymmetry: f64,
    /// Single-particle transverse decay rate Γ = (Γ_r + Γ_el)/2.
    pub total: f64,
    /// λ = Γ_r/2.
    pub lambda: f64,
    /// r = Γ_ud·Γ_du.
    pub product: f64,
}

impl DerivedRates {
    /// λ² − 4γ² − r, which vanishes identically.
    pub fn identity_residual(&self) -> f64 {
        self.lambda * self.lambda - 4.0 * self.asymmetry * self.asymmetry - self.product
    }
}

impl DecoherenceRates {
    pub fn new(gamma_ud: f64, gamma_du: f64, gamma_el: f64) -> Result<Self> {
        for (name, v) in [
            ("gamma_ud", gamma_ud),
            ("gamma_du", gamma_du),
            ("gamma_el", gamma_el),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(name, format!("rate must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self {
            gamma_ud,
            gamma_du,
            gamma_el,
        })
    }

    /// No decoherence at all.
    pub fn zero() -> Self {
        Self::default()
    }

    /// Balanced Raman rates with `Γ_el = dephasing_ratio · Γ_ud = dephasing_ratio · Γ_du`,
    /// scaled so that the total rate Γ equals `total`.
    pub fn balanced_with_dephasing_ratio(total: f64, dephasing_ratio: f64) -> Result<Self> {
        if !dephasing_ratio.is_finite() || dephasing_ratio < 0.0 {
            return Err(Error::invalid("dephasing_ratio", "must be finite and >= 0"));
        }
        // Γ = (2x + ratio·x)/2
        let x = 2.0 * total / (2.0 + dephasing_ratio);
        Self::new(x, x, dephasing_ratio * x)
    }

    pub fn gamma_ud(&self) -> f64 {
        self.gamma_ud
    }

    pub fn gamma_du(&self) -> f64 {
        self.gamma_du
    }

    pub fn gamma_el(&self) -> f64 {
        self.gamma_el
    }

    pub fn derived(&self) -> DerivedRates {
        let raman = self.gamma_ud + self.gamma_du;
        DerivedRates {
            raman,
            asymmetry: (self.gamma_ud - self.gamma_du) / 4.0,
            total: (raman + self.gamma_el) / 2.0,
            lambda: raman / 2.0,
            product: self.gamma_ud * self.gamma_du,
        }
    }
}

/// Free-function form of [`DecoherenceRates::derived`].
pub fn derived_rates(rates: &DecoherenceRates) -> DerivedRates {
    rates.derived()
}

/// Symmetric, zero-diagonal Ising coupling matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl CouplingMatrix {
    /// Builds from a row-major list of rows, rejecting anything that is not
    /// exactly symmetric with a zero diagonal.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("couplings", "matrix must have at least one row"));
        }
        let mut entries = Vec::with_capacity(n * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::invalid(
                    "couplings",
                    format!("row {j} has {} entries, expected {n}", row.len()),
                ));
            }
            entries.extend_from_slice(row);
        }
        Self::from_row_major(n, entries)
    }

    pub fn from_row_major(n: usize, entries: Vec<f64>) -> Result<Self> {
        if n == 0 || entries.len() != n * n {
            return Err(Error::invalid(
                "couplings",
                format!("expected {} entries for n = {n}, got {}", n * n, entries.len()),
            ));
        }
        for j in 0..n {
            if entries[j * n + j] != 0.0 {
                return Err(Error::invalid(
                    "couplings",
                    format!("diagonal entry ({j},{j}) is {}, must be 0", entries[j * n + j]),
                ));
            }
            for k in 0..n {
                let v = entries[j * n + k];
                if !v.is_finite() {
                    return Err(Error::invalid("couplings", format!("entry ({j},{k}) is not finite")));
                }
                if k > j && v != entries[k * n + j] {
                    return Err(Error::invalid(
                        "couplings",
                        format!(
                            "matrix is not symmetric: J[{j}][{k}] = {v} but J[{k}][{j}] = {}",
                            entries[k * n + j]
                        ),
                    ));
                }
            }
        }
        Ok(Self { n, entries })
    }

    /// Every pair coupled with the same strength (ζ = 0).
    pub fn all_to_all(n: usize, coupling: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("n", "need at least one spin"));
        }
        let mut entries = vec![coupling; n * n];
        for j in 0..n {
            entries[j * n + j] = 0.0;
        }
        Self::from_row_major(n, entries)
    }

    pub fn n_spins(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.entries[j * self.n + k]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.entries[j * self.n..(j + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.n)
    }

    /// The common off-diagonal value if every pair is coupled identically.
    pub fn uniform_value(&self) -> Option<f64> {
        if self.n < 2 {
            return Some(0.0);
        }
        let first = self.get(0, 1);
        let uniform = (0..self.n)
            .flat_map(|j| (0..self.n).map(move |k| (j, k)))
            .filter(|(j, k)| j != k)
            .all(|(j, k)| self.get(j, k) == first);
        uniform.then_some(first)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Open,
    /// Minimum-image distances on the lattice's natural supercell.
    Periodic,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LatticeKind {
    Chain { n: usize },
    Square { nx: usize, ny: usize },
    /// Triangular lattice with primitive vectors (1, 0) and (1/2, √3/2).
    Triangular { nx: usize, ny: usize },
    Explicit,
}

/// Site positions in lattice units.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeGeometry {
    kind: LatticeKind,
    boundary: Boundary,
    positions: Vec<[f64; 3]>,
    supercell: Vec<[f64; 3]>,
}

impl LatticeGeometry {
    pub fn chain(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("dims", "chain needs at least one site"));
        }
        let positions = (0..n).map(|i| [i as f64, 0.0, 0.0]).collect();
        Ok(Self {
            kind: LatticeKind::Chain { n },
            boundary: Boundary::Open,
            positions,
            supercell: vec![[n as f64, 0.0, 0.0]],
        })
    }

    pub fn square(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("dims", "square lattice dimensions must be positive"));
        }
        let positions = (0..ny)
            .flat_map(|y| (0..nx).map(move |x| [x as f64, y as f64, 0.0]))
            .collect();
        Ok(Self {
            kind: LatticeKind::Square { nx, ny },
            boundary: Boundary::Open,
            positions,
            supercell: vec![[nx as f64, 0.0, 0.0], [0.0, ny as f64, 0.0]],
        })
    }

    pub fn triangular(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid("dims", "triangular lattice dimensions must be positive"));
        }
        let h = 3f64.sqrt() / 2.0;
        let positions = (0..ny)
            .flat_map(|y| (0..nx).map(move |x| [x as f64 + 0.5 * y as f64, h * y as f64, 0.0]))
            .collect();
        Ok(Self {
            kind: LatticeKind::Triangular { nx, ny },
            boundary: Boundary::Open,
            positions,
            supercell: vec![[nx as f64, 0.0, 0.0], [0.5 * ny as f64, h * ny as f64, 0.0]],
        })
    }

    /// Arbitrary site positions; all must be finite and pairwise distinct.
    pub fn explicit(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("positions", "need at least one site"));
        }
        if positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("positions", "coordinates must be finite"));
        }
        for i in 0..positions.len() {
            for j in 0..i {
                if positions[i] == positions[j] {
                    return Err(Error::Domain(format!("sites {j} and {i} coincide")));
                }
            }
        }
        Ok(Self {
            kind: LatticeKind::Explicit,
            boundary: Boundary::Open,
            positions,
            supercell: Vec::new(),
        })
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Result<Self> {
        if boundary == Boundary::Periodic && self.supercell.is_empty() {
            return Err(Error::Unsupported(
                "periodic boundaries need a regular lattice, not explicit positions".into(),
            ));
        }
        self.boundary = boundary;
        Ok(self)
    }

    pub fn kind(&self) -> &LatticeKind {
        &self.kind
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn n_sites(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        if let LatticeKind::Triangular { nx, ny } = self.kind {
            return self.triangular_distance(i, j, nx, ny);
        }
        let d = sub(self.positions[i], self.positions[j]);
        match self.boundary {
            Boundary::Open => norm(d),
            Boundary::Periodic => self.minimum_image(d),
        }
    }

    /// Exact distance from integer lattice coordinates: `d² = a² + ab + b²`.
    fn triangular_distance(&self, i: usize, j: usize, nx: usize, ny: usize) -> f64 {
        let a = (i % nx) as i64 - (j % nx) as i64;
        let b = (i / nx) as i64 - (j / nx) as i64;
        let sq = |a: i64, b: i64| a * a + a * b + b * b;
        let best = match self.boundary {
            Boundary::Open => sq(a, b),
            Boundary::Periodic => {
                let (nx, ny) = (nx as i64, ny as i64);
                let mut best = i64::MAX;
                for m in -1..=1 {
                    for n in -1..=1 {
                        best = best.min(sq(a + m * nx, b + n * ny));
                    }
                }
                best
            }
        };
        (best as f64).sqrt()
    }

    fn minimum_image(&self, d: [f64; 3]) -> f64 {
        let shifts: [f64; 3] = [-1.0, 0.0, 1.0];
        let mut best = norm(d);
        match self.supercell.as_slice() {
            [a] => {
                for m in shifts {
                    best = best.min(norm(axpy(m, *a, d)));
                }
            }
            [a, b] => {
                for m in shifts {
                    for n in shifts {
                        best = best.min(norm(axpy(n, *b, axpy(m, *a, d))));
                    }
                }
            }
            _ => {}
        }
        best
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn axpy(s: f64, a: [f64; 3], d: [f64; 3]) -> [f64; 3] {
    [d[0] + s * a[0], d[1] + s * a[1], d[2] + s * a[2]]
}

fn norm(d: [f64; 3]) -> f64 {
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// `J_jk = J·|r_j − r_k|^(−ζ)`. ζ = 0 gives uniform all-to-all couplings.
pub fn build_power_law_couplings(
    geometry: &LatticeGeometry,
    coupling: f64,
    zeta: f64,
) -> Result<CouplingMatrix> {
    let n = geometry.n_sites();
    if n < 2 {
        return Err(Error::invalid("geometry", "power-law couplings need at least two sites"));
    }
    if !zeta.is_finite() || zeta < 0.0 {
        return Err(Error::invalid("zeta", format!("must be finite and >= 0, got {zeta}")));
    }
    if !coupling.is_finite() {
        return Err(Error::invalid("J", "must be finite"));
    }
    let mut entries = vec![0.0; n * n];
    for j in 0..n {
        for k in (j + 1)..n {
            let v = if zeta == 0.0 {
                coupling
            } else {
                let d = geometry.distance(j, k);
                if d == 0.0 {
                    return Err(Error::Domain(format!(
                        "sites {j} and {k} are at zero distance; power law with zeta = {zeta} diverges"
                    )));
                }
                coupling * d.powf(-zeta)
            };
            entries[j * n + k] = v;
            entries[k * n + j] = v;
        }
    }
    CouplingMatrix::from_row_major(n, entries)
}

/// `J` on unit-distance bonds, zero elsewhere.
pub fn build_nearest_neighbor_couplings(
    geometry: &LatticeGeometry,
    coupling: f64,
) -> Result<CouplingMatrix> {
    const BOND_TOL: f64 = 1e-9;
    let n = geometry.n_sites();
    if n < 2 {
        return Err(Error::invalid("geometry", "need at least two sites"));
    }
    let mut entries = vec![0.0; n * n];
    for j in 0..n {
        for k in (j + 1)..n {
            if (geometry.distance(j, k) - 1.0).abs() < BOND_TOL {
                entries[j * n + k] = coupling;
                entries[k * n + j] = coupling;
            }
        }
    }
    CouplingMatrix::from_row_major(n, entries)
}

/// Product state `⊗_j [f_j(1)|↑⟩ + f_j(−1)|↓⟩]` with
/// `f_j(1) = cos(θ_j/2)e^{iφ_j/2}` and `f_j(−1) = sin(θ_j/2)e^{−iφ_j/2}`.
///
/// With these amplitudes `⟨σ_j^+⟩ = ½ sin θ_j e^{−iφ_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialProductState {
    theta: Vec<f64>,
    phi: Vec<f64>,
}

impl InitialProductState {
    pub fn new(theta: Vec<f64>, phi: Vec<f64>) -> Result<Self> {
        if theta.is_empty() || theta.len() != phi.len() {
            return Err(Error::invalid(
                "initial",
                format!("theta has {} entries, phi has {}", theta.len(), phi.len()),
            ));
        }
        if let Some(t) = theta.iter().find(|t| !(0.0..=PI).contains(*t)) {
            return Err(Error::invalid("theta", format!("{t} is outside [0, pi]")));
        }
        if phi.iter().any(|p| !p.is_finite()) {
            return Err(Error::invalid("phi", "must be finite"));
        }
        let phi = phi.into_iter().map(|p| p.rem_euclid(2.0 * PI)).collect();
        Ok(Self { theta, phi })
    }

    pub fn uniform(n: usize, theta: f64, phi: f64) -> Result<Self> {
        Self::new(vec![theta; n], vec![phi; n])
    }

    /// All spins along +x (θ = π/2, φ = 0).
    pub fn x_polarized(n: usize) -> Self {
        Self {
            theta: vec![FRAC_PI_2; n],
            phi: vec![0.0; n],
        }
    }

    pub fn n_spins(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self, j: usize) -> f64 {
        self.theta[j]
    }

    pub fn phi(&self, j: usize) -> f64 {
        self.phi[j]
    }

    /// `(f_j(1), f_j(−1))`.
    pub fn amplitudes(&self, j: usize) -> (Complex64, Complex64) {
        let (t, p) = (self.theta[j], self.phi[j]);
        (
            Complex64::from_polar((t / 2.0).cos(), p / 2.0),
            Complex64::from_polar((t / 2.0).sin(), -p / 2.0),
        )
    }

    /// Probability of finding site `j` up: `cos²(θ_j/2)`.
    pub fn up_probability(&self, j: usize) -> f64 {
        (self.theta[j] / 2.0).cos().powi(2)
    }

    pub fn is_x_polarized(&self) -> bool {
        const TOL: f64 = 1e-12;
        self.theta.iter().all(|t| (t - FRAC_PI_2).abs() <= TOL)
            && self
                .phi
                .iter()
                .all(|p| p.abs() <= TOL || (2.0 * PI - p).abs() <= TOL)
    }
}
