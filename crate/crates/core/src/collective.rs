//! Collective-spin quantities assembled from one- and two-spin moments:
//! Bloch vector, quadrature variances, the squeezing parameter ξ(ψ) and the
//! transverse fluctuation diagnostic.
//!
//! All backends reduce to a [`SpinMoments`] value, so the formulas here are
//! shared by the closed forms, the trajectory estimator and the
//! density-matrix oracle.

use std::f64::consts::PI;

use crate::closed_form::{ClosedForm, Ladder};
use crate::error::{Error, Result};
use crate::par::{map_indexed, Parallelism};

/// Sums of one- and two-spin expectation values at a single time.
///
/// Pair sums run over ordered pairs `j ≠ k`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SpinMoments {
    pub n: usize,
    /// `⟨S^x⟩ = ½ Σ_j ⟨σ_j^x⟩`
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    /// `Σ_{j≠k} ⟨σ_j^x σ_k^x⟩`
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    /// `Σ_{j≠k} ⟨σ_j^y σ_k^z⟩`
    pub yz: f64,
}

/// Number of real components in [`SpinMoments::to_array`].
pub const MOMENT_COMPONENTS: usize = 7;

impl SpinMoments {
    pub fn to_array(&self) -> [f64; MOMENT_COMPONENTS] {
        [self.sx, self.sy, self.sz, self.xx, self.yy, self.zz, self.yz]
    }

    pub fn from_array(n: usize, a: [f64; MOMENT_COMPONENTS]) -> Self {
        Self {
            n,
            sx: a[0],
            sy: a[1],
            sz: a[2],
            xx: a[3],
            yy: a[4],
            zz: a[5],
            yz: a[6],
        }
    }

    pub fn bloch(&self) -> (f64, f64, f64) {
        (self.sx, self.sy, self.sz)
    }

    /// `Var(S^ψ)` with `σ^ψ = sin ψ σ^y + cos ψ σ^z`.
    pub fn variance(&self, psi: f64) -> f64 {
        let (s, c) = psi.sin_cos();
        let second = 0.25 * (self.n as f64 + s * s * self.yy + 2.0 * s * c * self.yz + c * c * self.zz);
        let mean = s * self.sy + c * self.sz;
        second - mean * mean
    }

    /// Gradient of [`Self::variance`] with respect to [`Self::to_array`].
    pub fn variance_gradient(&self, psi: f64) -> [f64; MOMENT_COMPONENTS] {
        let (s, c) = psi.sin_cos();
        let mean = s * self.sy + c * self.sz;
        [0.0, -2.0 * s * mean, -2.0 * c * mean, 0.0, 0.25 * s * s, 0.25 * c * c, 0.5 * s * c]
    }

    /// `Var(S^x)`.
    pub fn variance_x(&self) -> f64 {
        0.25 * (self.n as f64 + self.xx) - self.sx * self.sx
    }

    /// `2ΔS^x/N`, equal to one for an ideal macroscopic superposition along x.
    pub fn transverse_fluctuation_x(&self) -> f64 {
        2.0 * self.variance_x().max(0.0).sqrt() / self.n as f64
    }

    pub fn transverse_fluctuation_x_gradient(&self) -> [f64; MOMENT_COMPONENTS] {
        let var = self.variance_x();
        if var <= 0.0 {
            return [0.0; MOMENT_COMPONENTS];
        }
        let scale = 1.0 / (self.n as f64 * var.sqrt());
        [-2.0 * self.sx * scale, 0.0, 0.0, 0.25 * scale, 0.0, 0.0, 0.0]
    }

    /// `ξ(ψ) = √N ΔS^ψ / |⟨S^x⟩|`.
    pub fn squeezing(&self, psi: f64) -> Squeezing {
        let n = self.n as f64;
        if self.sx.abs() <= VANISHING_SPIN * n {
            return Squeezing {
                xi: f64::INFINITY,
                vanishing_spin: true,
            };
        }
        Squeezing {
            xi: (n * self.variance(psi).max(0.0)).sqrt() / self.sx.abs(),
            vanishing_spin: false,
        }
    }

    /// Gradient of `ξ(ψ)`; zero when the spin length vanishes.
    pub fn squeezing_gradient(&self, psi: f64) -> [f64; MOMENT_COMPONENTS] {
        let sq = self.squeezing(psi);
        let var = self.variance(psi);
        if sq.vanishing_spin || var <= 0.0 {
            return [0.0; MOMENT_COMPONENTS];
        }
        let mut g = self.variance_gradient(psi).map(|d| d * sq.xi / (2.0 * var));
        g[0] -= sq.xi / self.sx;
        g
    }

    /// Grid scan over ψ ∈ [0, π) followed by golden-section refinement.
    pub fn min_squeezing(&self, grid_size: usize) -> MinSqueezing {
        let grid_size = grid_size.max(3);
        let step = PI / grid_size as f64;
        let xi = |p: f64| self.squeezing(p).xi;
        let values: Vec<f64> = (0..grid_size).map(|i| xi(i as f64 * step)).collect();
        let (best, &best_xi) = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("grid is non-empty");
        let worst = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !best_xi.is_finite() {
            return MinSqueezing {
                psi: None,
                xi: best_xi,
                vanishing_spin: true,
            };
        }
        if worst - best_xi <= FLAT_TOL * best_xi.max(1.0) {
            return MinSqueezing {
                psi: None,
                xi: best_xi,
                vanishing_spin: false,
            };
        }
        let centre = best as f64 * step;
        let (p, v) = golden_section_min(xi, centre - step, centre + step, PSI_TOL);
        let (p, v) = if v <= best_xi { (p, v) } else { (centre, best_xi) };
        MinSqueezing {
            psi: Some(p.rem_euclid(PI)),
            xi: v,
            vanishing_spin: false,
        }
    }
}

/// Delta-method standard error `√(gᵀ C g)` for a function of the moments.
pub fn propagate_error(
    covariance: &[[f64; MOMENT_COMPONENTS]; MOMENT_COMPONENTS],
    gradient: &[f64; MOMENT_COMPONENTS],
) -> f64 {
    let mut var = 0.0;
    for a in 0..MOMENT_COMPONENTS {
        for b in 0..MOMENT_COMPONENTS {
            var += gradient[a] * covariance[a][b] * gradient[b];
        }
    }
    var.max(0.0).sqrt()
}

/// `|⟨S^x⟩| ≤ VANISHING_SPIN·N` is treated as zero spin length.
pub const VANISHING_SPIN: f64 = 1e-12;
/// Default ψ grid (one point per degree).
pub const DEFAULT_PSI_GRID: usize = 181;
const PSI_TOL: f64 = 1e-6;
const FLAT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Squeezing {
    pub xi: f64,
    /// Mean spin length vanished; `xi` is `+∞`.
    pub vanishing_spin: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MinSqueezing {
    /// Optimal quadrature angle in [0, π); `None` when ξ(ψ) is flat.
    pub psi: Option<f64>,
    pub xi: f64,
    pub vanishing_spin: bool,
}

/// Golden-section minimum of a unimodal function on `[lo, hi]`.
pub fn golden_section_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// How pair sums are assembled from the closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Assembly {
    /// Use the permutation-symmetric shortcut when all couplings are equal.
    #[default]
    Auto,
    /// Sum every ordered pair explicitly.
    Naive,
}

/// Closed-form [`SpinMoments`] at time `t`.
pub fn closed_form_moments(
    cf: &ClosedForm,
    t: f64,
    assembly: Assembly,
    parallelism: Parallelism,
) -> Result<SpinMoments> {
    if t.is_nan() || t < 0.0 {
        return Err(Error::invalid("t", format!("time must be >= 0, got {t}")));
    }
    match (assembly, cf.couplings().uniform_value()) {
        (Assembly::Auto, Some(j)) if cf.n_spins() >= 2 => Ok(symmetric_moments(cf, j, t)),
        _ => naive_moments(cf, t, parallelism),
    }
}

fn symmetric_moments(cf: &ClosedForm, coupling: f64, t: f64) -> SpinMoments {
    let n = cf.n_spins();
    let pairs = (n * (n - 1)) as f64;
    let d = cf.derived();
    let e1 = (-d.total * t).exp();
    let e2 = (-2.0 * d.total * t).exp();
    let rest = (n - 2) as i32;
    let p = cf.phi(coupling, t);
    let sp = 0.5 * e1 * p.powi(rest + 1);
    let pp = 0.25 * e2 * cf.phi(2.0 * coupling, t).powi(rest);
    let pm = 0.25 * e2 * cf.phi(0.0, t).powi(rest);
    let pz = 0.5 * e1 * cf.psi(coupling, t) * p.powi(rest);
    let (mz, zz) = cf.sigma_z_moments(t).expect("time validated");
    SpinMoments {
        n,
        sx: n as f64 * sp.re,
        sy: n as f64 * sp.im,
        sz: 0.5 * n as f64 * mz,
        xx: pairs * 2.0 * (pp.re + pm.re),
        yy: pairs * 2.0 * (pm.re - pp.re),
        zz: pairs * zz,
        yz: pairs * 2.0 * pz.im,
    }
}

fn naive_moments(cf: &ClosedForm, t: f64, parallelism: Parallelism) -> Result<SpinMoments> {
    let n = cf.n_spins();
    // Per-site partial sums, reduced in site order.
    let rows = map_indexed(n, parallelism, |j| -> Result<[f64; 5]> {
        let sp = cf.sigma_plus(j, t)?;
        let (mut xx, mut yy, mut yz) = (0.0, 0.0, 0.0);
        for k in 0..n {
            if k == j {
                continue;
            }
            if k > j {
                let pp = cf.corr_pm(j, k, Ladder::Raise, Ladder::Raise, t)?;
                let pm = cf.corr_pm(j, k, Ladder::Raise, Ladder::Lower, t)?;
                // (j,k) and (k,j) contribute equally.
                xx += 4.0 * (pp.re + pm.re);
                yy += 4.0 * (pm.re - pp.re);
            }
            yz += 2.0 * cf.corr_pz(j, k, Ladder::Raise, t)?.im;
        }
        Ok([sp.re, sp.im, xx, yy, yz])
    });
    let mut acc = [0.0; 5];
    for r in rows {
        let r = r?;
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
    }
    let (mz, zz) = cf.sigma_z_moments(t)?;
    Ok(SpinMoments {
        n,
        sx: acc[0],
        sy: acc[1],
        sz: 0.5 * n as f64 * mz,
        xx: acc[2],
        yy: acc[3],
        zz: (n * (n.saturating_sub(1))) as f64 * zz,
        yz: acc[4],
    })
}

/// `(⟨S^x⟩, ⟨S^y⟩, ⟨S^z⟩)` from the closed forms.
pub fn bloch_vector(cf: &ClosedForm, t: f64) -> Result<(f64, f64, f64)> {
    let sum = cf.transverse_sum(t)?;
    let (mz, _) = cf.sigma_z_moments(t)?;
    Ok((sum.re, sum.im, 0.5 * cf.n_spins() as f64 * mz))
}

pub fn variance_quadrature(cf: &ClosedForm, psi: f64, t: f64) -> Result<f64> {
    Ok(closed_form_moments(cf, t, Assembly::Auto, Parallelism::default())?.variance(psi))
}

pub fn squeezing_xi(cf: &ClosedForm, psi: f64, t: f64) -> Result<Squeezing> {
    Ok(closed_form_moments(cf, t, Assembly::Auto, Parallelism::default())?.squeezing(psi))
}

pub fn min_squeezing(cf: &ClosedForm, t: f64, psi_grid_size: usize) -> Result<MinSqueezing> {
    Ok(closed_form_moments(cf, t, Assembly::Auto, Parallelism::default())?.min_squeezing(psi_grid_size))
}

/// `2ΔS^x/N` from the closed forms.
pub fn transverse_fluctuation_x(cf: &ClosedForm, t: f64) -> Result<f64> {
    Ok(closed_form_moments(cf, t, Assembly::Auto, Parallelism::default())?.transverse_fluctuation_x())
}

/// Optimal squeezing over a time grid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimalSqueezing {
    pub t: f64,
    pub psi: Option<f64>,
    pub xi: f64,
}

/// Scans `times`, minimizing ξ over ψ at each point, and returns the best.
pub fn optimal_squeezing(
    cf: &ClosedForm,
    times: &[f64],
    psi_grid_size: usize,
    parallelism: Parallelism,
) -> Result<OptimalSqueezing> {
    let per_time = map_indexed(times.len(), parallelism, |i| {
        closed_form_moments(cf, times[i], Assembly::Auto, Parallelism::Sequential)
            .map(|m| m.min_squeezing(psi_grid_size))
    });
    let mut best: Option<OptimalSqueezing> = None;
    for (t, r) in times.iter().zip(per_time) {
        let r = r?;
        if best.is_none_or(|b| r.xi < b.xi) {
            best = Some(OptimalSqueezing { t: *t, psi: r.psi, xi: r.xi });
        }
    }
    best.ok_or_else(|| Error::invalid("times", "empty time grid"))
}

/// `τ_r = Nπ/(2J)`.
pub fn revival_time(n: usize, coupling: f64) -> Result<f64> {
    if coupling == 0.0 || !coupling.is_finite() {
        return Err(Error::invalid("J", "revival time needs a finite nonzero coupling"));
    }
    Ok(n as f64 * PI / (2.0 * coupling.abs()))
}

/// `Γ_r^c = 4J/N`, where Φ turns from oscillatory to overdamped at γ = 0.
pub fn critical_raman_rate(coupling: f64, n: usize) -> f64 {
    4.0 * coupling.abs() / n as f64
}
