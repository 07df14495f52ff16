//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use dissipative_ising::closed_form::{self, Branch, ClosedForm, Ladder, Treatment};
use dissipative_ising::collective::{
    closed_form_moments, optimal_squeezing, revival_time, Assembly, DEFAULT_PSI_GRID,
};
use dissipative_ising::lindblad::{
    evolve, lindblad_moments, DensityMatrix, EvolveOptions, OperatorString, SiteOperator,
};
use dissipative_ising::model::build_power_law_couplings;
use dissipative_ising::ode::OdeOptions;
use dissipative_ising::trajectories::{mc_moments, sample_jump_record, stream_rng};
use dissipative_ising::{
    CouplingMatrix, DecoherenceRates, InitialProductState, LatticeGeometry, McConfig, Parallelism,
    TrajectorySimulator,
};

// Tolerances and budgets.
const IDENTITY_TOL: f64 = 1e-12;
const BRACKET_REL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-6;
const MC_SIGMAS: f64 = 3.0;
const MC_ALLOWED_MISSES: usize = 1;
const JUMP_SIGMAS: f64 = 4.0;
const CHI2_LEVEL: f64 = 0.01;
const REVIVAL_TOL: f64 = 1e-9;
const MSS_TOL: f64 = 1e-6;
const FIG3C_MIN_REVIVAL: f64 = 0.05;
const FIG3C_RATIO_BAND: (f64, f64) = (10.0, 100.0);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(label: &str, budget: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = elapsed <= budget;
    let pass = out.pass && in_time;
    println!(
        "criterion {label}: {} ({}; {:.2?} of {:.0?} budget)",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed,
        budget
    );
    pass
}

fn uniform_rates(rng: &mut ChaCha8Rng, max: f64) -> DecoherenceRates {
    DecoherenceRates::new(rng.random::<f64>() * max, rng.random::<f64>() * max, rng.random::<f64>() * max).unwrap()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = uniform_rates(&mut rng, 2.0).derived();
        let n = rng.random_range(1..200);
        let t = rng.random::<f64>() * 20.0;
        let j = (rng.random::<f64>() - 0.5) * 8.0;
        let phi = |c, t| closed_form::phi(c, t, &d, n);
        worst = worst
            .max((phi(0.0, t) - 1.0).norm())
            .max((phi(j, 0.0) - 1.0).norm())
            .max(closed_form::psi(j, 0.0, &d, n).norm())
            .max((phi(-j, t) - phi(j, t).conj()).norm())
            .max((closed_form::phi_with_branch(j, t, &d, n, Branch::Negated) - phi(j, t)).norm())
            .max(
                (closed_form::psi_with_branch(j, t, &d, n, Branch::Negated) - closed_form::psi(j, t, &d, n))
                    .norm(),
            );
    }
    outcome(worst <= IDENTITY_TOL, format!("max identity residual {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut notes = Vec::new();
    for (n, j) in [(4usize, 1.0f64), (10, 2.5), (97, 1.0), (3, 0.7)] {
        let crit = 4.0 * j / n as f64;
        let at = |gr: f64| DecoherenceRates::new(gr / 2.0, gr / 2.0, 0.3).unwrap().derived();
        let below = closed_form::discriminant(j, &at(crit * (1.0 - BRACKET_REL)), n);
        let above = closed_form::discriminant(j, &at(crit * (1.0 + BRACKET_REL)), n);
        let bracket = below.re > 0.0 && above.re < 0.0;

        let t_max = 5.0 * n as f64 / j;
        let times: Vec<f64> = (1..=4000).map(|i| t_max * i as f64 / 4000.0).collect();
        let sign_changes = |gr: f64| {
            let d = at(gr);
            let re: Vec<f64> = times.iter().map(|&t| closed_form::phi(j, t, &d, n).re).collect();
            re.windows(2).filter(|w| w[0].signum() != w[1].signum() && w[0] != 0.0).count()
        };
        let damped = [1.0, 1.0 + 1e-6, 1.5, 4.0].iter().all(|m| sign_changes(crit * m) == 0);
        let oscillating = [0.0, 0.25, 0.49].iter().all(|m| sign_changes(crit * m) > 0);
        ok &= bracket && damped && oscillating;
        notes.push(format!("N={n}: bracket {bracket}, damped {damped}, oscillatory {oscillating}"));
    }
    outcome(ok, notes.join("; "))
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let times: Vec<f64> = (0..20).map(|k| 0.1 * k as f64).collect();
    let psis = [0.0, 0.7, 1.6, 2.4];
    let opts = EvolveOptions {
        ode: OdeOptions {
            rtol: 1e-11,
            atol: 1e-13,
            ..OdeOptions::default()
        },
        ..EvolveOptions::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.random_range(2..=6);
        let mut rows = vec![vec![0.0; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let v = rng.random_range(-2.0..=2.0);
                rows[a][b] = v;
                rows[b][a] = v;
            }
        }
        let j = CouplingMatrix::from_rows(&rows).unwrap();
        let rates = uniform_rates(&mut rng, 1.0);
        let cf = ClosedForm::x_polarized(j.clone(), rates);
        let rho0 = DensityMatrix::from_product_state(&InitialProductState::x_polarized(n)).unwrap();
        let series = match evolve(&rho0, &times, &j, &rates, &opts) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("oracle failed: {e}")),
        };
        for (&t, rho) in times.iter().zip(&series.states) {
            let exact = lindblad_moments(rho);
            let m = closed_form_moments(&cf, t, Assembly::Naive, Parallelism::Sequential).unwrap();
            worst = worst.max((m.sx - exact.sx).abs());
            for psi in psis {
                let (a, b) = (m.squeezing(psi).xi, exact.squeezing(psi).xi);
                worst = worst.max((a - b).abs());
            }
            let ladders = [(Ladder::Raise, SiteOperator::Raise), (Ladder::Lower, SiteOperator::Lower)];
            for a in 0..n {
                for b in 0..n {
                    if a == b {
                        continue;
                    }
                    for (mu, op_a) in ladders {
                        let pz = rho.expectation(&OperatorString::pair(a, op_a, b, SiteOperator::Z).unwrap()).unwrap();
                        worst = worst.max((pz - cf.corr_pz(a, b, mu, t).unwrap()).norm());
                        for (nu, op_b) in ladders {
                            let pm = rho.expectation(&OperatorString::pair(a, op_a, b, op_b).unwrap()).unwrap();
                            worst = worst.max((pm - cf.corr_pm(a, b, mu, nu, t).unwrap()).norm());
                        }
                    }
                }
            }
        }
    }
    outcome(worst <= ORACLE_TOL, format!("max |closed form - density matrix| {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let n = 8;
    let j = CouplingMatrix::all_to_all(n, 1.0).unwrap();
    let rates = DecoherenceRates::new(0.1, 0.05, 0.2).unwrap();
    let cf = ClosedForm::x_polarized(j.clone(), rates);
    let sim = TrajectorySimulator::new(j, rates, InitialProductState::x_polarized(n)).unwrap();
    let times: Vec<f64> = (1..=10).map(|k| 0.6 * k as f64).collect();
    let psi_y = std::f64::consts::FRAC_PI_2;
    let misses_for = |seed: u64| {
        let mut misses = 0;
        let mut worst: f64 = 0.0;
        for &t in &times {
            let exact = closed_form_moments(&cf, t, Assembly::Auto, Parallelism::Sequential).unwrap();
            let mc = mc_moments(&sim, t, &McConfig::new(100_000, seed)).unwrap();
            for (est, target) in [(mc.spin_x(), exact.sx), (mc.variance(psi_y), exact.variance(psi_y))] {
                let z = (est.mean - target).abs() / est.std_error;
                worst = worst.max(z);
                if z > MC_SIGMAS {
                    misses += 1;
                }
            }
        }
        (misses, worst)
    };
    let (misses, worst) = misses_for(2024);
    if misses <= MC_ALLOWED_MISSES {
        return outcome(true, format!("{misses}/20 beyond {MC_SIGMAS} sigma, worst {worst:.2} sigma"));
    }
    let (retry, worst_retry) = misses_for(2025);
    outcome(
        retry <= MC_ALLOWED_MISSES,
        format!("{misses}/20 misses on first seed, re-run: {retry}/20, worst {worst_retry:.2} sigma"),
    )
}

/// Raman record density for an odd number `2μ+1` of flips at signed dwell `τ`.
fn p_odd(mu: u32, tau: f64, t: f64, d: &dissipative_ising::DerivedRates) -> f64 {
    let fact: f64 = (1..=mu).map(f64::from).product();
    d.raman / 4.0 * (-d.raman * t / 2.0).exp() * (d.product / 4.0).powi(mu as i32) / (fact * fact)
        * (-2.0 * tau * d.asymmetry).exp()
        * (t * t - tau * tau).powi(mu as i32)
}

/// Raman record density for an even number `2μ+2` of flips.
fn p_even(mu: u32, tau: f64, t: f64, d: &dissipative_ising::DerivedRates) -> f64 {
    let fact: f64 = (1..=mu).map(f64::from).product();
    d.product * t / 4.0 * (-d.raman * t / 2.0).exp() * (d.product / 4.0).powi(mu as i32)
        / (fact * fact * f64::from(mu + 1))
        * (-2.0 * tau * d.asymmetry).exp()
        * (t * t - tau * tau).powi(mu as i32)
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / (2 * panels) as f64;
    let mut s = f(a) + f(b);
    for i in 1..2 * panels {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn criterion_5() -> Outcome {
    const SAMPLES: usize = 1_000_000;
    const MU_MAX: u32 = 4;
    const TAU_BINS: usize = 20;
    let rates = DecoherenceRates::new(0.7, 0.3, 0.5).unwrap();
    let d = rates.derived();
    let t = 2.0;

    // Bins: R = 0, then (parity, μ, τ-bin) for μ ≤ MU_MAX, then overflow.
    let cell = |odd: bool, mu: u32, bin: usize| 1 + ((odd as usize) * (MU_MAX as usize + 1) + mu as usize) * TAU_BINS + bin;
    let n_cells = 2 + 2 * (MU_MAX as usize + 1) * TAU_BINS;
    let mut counts = vec![0u64; n_cells];
    let mut parity_sum = 0.0;
    let mut rng = stream_rng(77, 0, 0);
    for _ in 0..SAMPLES {
        let rec = sample_jump_record(&rates, std::f64::consts::FRAC_PI_2, t, &mut rng);
        parity_sum += rec.beta();
        let idx = match rec.raman_count {
            0 => 0,
            r => {
                let odd = r % 2 == 1;
                let mu = if odd { (r - 1) / 2 } else { (r - 2) / 2 };
                if mu > MU_MAX {
                    n_cells - 1
                } else {
                    let bin = (((rec.tau + t) / (2.0 * t)) * TAU_BINS as f64).floor().clamp(0.0, (TAU_BINS - 1) as f64);
                    cell(odd, mu, bin as usize)
                }
            }
        };
        counts[idx] += 1;
    }

    let mut expected = vec![0.0; n_cells];
    let survival = (-d.raman * t / 2.0).exp() * (2.0 * d.asymmetry * t).cosh();
    expected[0] = survival;
    let width = 2.0 * t / TAU_BINS as f64;
    for odd in [false, true] {
        for mu in 0..=MU_MAX {
            for bin in 0..TAU_BINS {
                let lo = -t + bin as f64 * width;
                let p = if odd {
                    simpson(|x| p_odd(mu, x, t, &d), lo, lo + width, 32)
                } else {
                    simpson(|x| p_even(mu, x, t, &d), lo, lo + width, 32)
                };
                expected[cell(odd, mu, bin)] = p;
            }
        }
    }
    let listed: f64 = expected.iter().sum();
    expected[n_cells - 1] = (1.0 - listed).max(0.0);

    // Pool cells with fewer than five expected counts.
    let mut chi2 = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (o, p) in counts.iter().zip(&expected) {
        let e = p * SAMPLES as f64;
        if e < 5.0 {
            pooled_obs += *o as f64;
            pooled_exp += e;
        } else {
            chi2 += (*o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        chi2 += (pooled_obs - pooled_exp).powi(2) / pooled_exp.max(1e-300);
        cells += 1;
    }
    let critical = ChiSquared::new((cells - 1) as f64).unwrap().inverse_cdf(1.0 - CHI2_LEVEL);

    let m = SAMPLES as f64;
    let p0 = counts[0] as f64 / m;
    let z_survival = (p0 - survival).abs() / (survival * (1.0 - survival) / m).sqrt();
    let parity = parity_sum / m;
    let parity_exact = (-rates.gamma_el() * t / 2.0).exp();
    let z_parity = (parity - parity_exact).abs() / ((1.0 - parity_exact * parity_exact) / m).sqrt();
    let pass = z_survival <= JUMP_SIGMAS && z_parity <= JUMP_SIGMAS && chi2 <= critical;
    outcome(
        pass,
        format!(
            "Pr[R=0] {z_survival:.2} sigma, parity {z_parity:.2} sigma, chi2 {chi2:.1} vs {critical:.1} ({} dof)",
            cells - 1
        ),
    )
}

fn criterion_6() -> Outcome {
    let n = 20;
    let cf = ClosedForm::x_polarized(CouplingMatrix::all_to_all(n, 1.0).unwrap(), DecoherenceRates::zero());
    let tau = revival_time(n, 1.0).unwrap();
    let full = cf.collective_spin_x(tau).unwrap();
    let half = cf.collective_spin_x(tau / 2.0).unwrap();
    let revival_ok = (full.abs() - n as f64 / 2.0).abs() <= REVIVAL_TOL && half.abs() <= REVIVAL_TOL;

    let small = 6;
    let j6 = CouplingMatrix::all_to_all(small, 1.0).unwrap();
    let cf6 = ClosedForm::x_polarized(j6.clone(), DecoherenceRates::zero());
    let tau6 = revival_time(small, 1.0).unwrap();
    let grid: Vec<f64> = (0..=400).map(|i| tau6 * i as f64 / 400.0).collect();
    let fluct: Vec<f64> = grid
        .iter()
        .map(|&t| closed_form_moments(&cf6, t, Assembly::Auto, Parallelism::Sequential).unwrap().transverse_fluctuation_x())
        .collect();
    let peak_at = grid[fluct.iter().enumerate().fold(0, |b, (i, v)| if *v > fluct[b] { i } else { b })];
    let closed = closed_form_moments(&cf6, tau6 / 2.0, Assembly::Auto, Parallelism::Sequential)
        .unwrap()
        .transverse_fluctuation_x();
    let rho0 = DensityMatrix::from_product_state(&InitialProductState::x_polarized(small)).unwrap();
    let oracle = match evolve(&rho0, &[tau6 / 2.0], &j6, &DecoherenceRates::zero(), &EvolveOptions::default()) {
        Ok(s) => lindblad_moments(&s.states[0]).transverse_fluctuation_x(),
        Err(e) => return outcome(false, format!("oracle failed: {e}")),
    };
    let peak_ok = (peak_at - tau6 / 2.0).abs() <= tau6 / 400.0 && (closed - oracle).abs() <= MSS_TOL;
    outcome(
        revival_ok && peak_ok,
        format!(
            "Sx(tau_r) = {full:.12}, Sx(tau_r/2) = {half:.1e}; N=6 peak at {:.4} tau_r, 2dSx/N {closed:.9} vs oracle {oracle:.9}",
            peak_at / tau6
        ),
    )
}

fn criterion_7a() -> Outcome {
    let (n, j) = (4usize, 1.0);
    let crit = 4.0 * j / n as f64;
    let t_max = 5.0 * n as f64 / j;
    let depths: Vec<f64> = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|f| {
            let d = DecoherenceRates::new(crit * f / 2.0, crit * f / 2.0, 0.0).unwrap().derived();
            (0..=2000)
                .map(|i| closed_form::phi(j, t_max * i as f64 / 2000.0, &d, n).re)
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let monotone = depths.windows(2).all(|w| w[1] > w[0]);
    outcome(monotone, format!("first-minimum depths {depths:.4?}"))
}

fn criterion_7b() -> Outcome {
    let geometry = LatticeGeometry::triangular(10, 10).unwrap();
    let mut ok = true;
    let mut notes = Vec::new();
    for (zeta, t_max) in [(0.0, 4.0), (3.0, 12.0)] {
        let j = build_power_law_couplings(&geometry, 1.0, zeta).unwrap();
        let times: Vec<f64> = (1..=48).map(|i| t_max * i as f64 / 48.0).collect();
        let best = |total: f64| {
            let rates = DecoherenceRates::balanced_with_dephasing_ratio(total, 8.0).unwrap();
            let cf = ClosedForm::x_polarized(j.clone(), rates);
            optimal_squeezing(&cf, &times, DEFAULT_PSI_GRID, Parallelism::default()).unwrap()
        };
        let (clean, noisy) = (best(0.0), best(0.06));
        ok &= noisy.xi < 1.0 && noisy.xi > clean.xi;
        notes.push(format!(
            "zeta={zeta}: min xi {:.4} at t={:.2} (Gamma=0.06J) vs {:.4} at t={:.2} (Gamma=0)",
            noisy.xi, noisy.t, clean.xi, clean.t
        ));
    }
    outcome(ok, notes.join("; "))
}

fn preset_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../cli/presets").join(format!("{name}.json"))
}

fn criterion_7c() -> Outcome {
    let path = preset_path("fig3c");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("cannot read {}: {e}", path.display())),
    };
    let cfg: serde_json::Value = serde_json::from_str(&text).unwrap();
    let n = cfg["model"]["n"].as_u64().unwrap() as usize;
    let coupling = cfg["model"]["coupling"]["J"].as_f64().unwrap();
    let r = &cfg["rates"];
    let rates = DecoherenceRates::new(
        r["gamma_ud"].as_f64().unwrap(),
        r["gamma_du"].as_f64().unwrap(),
        r["gamma_el"].as_f64().unwrap(),
    )
    .unwrap();
    let j = CouplingMatrix::all_to_all(n, coupling).unwrap();
    let exact = ClosedForm::x_polarized(j.clone(), rates);
    let single = exact.clone().with_treatment(Treatment::SingleParticle);
    let tau = revival_time(n, coupling).unwrap();
    let (mut best_t, mut best) = (tau, 0.0f64);
    for i in 0..=400 {
        let t = tau * (0.9 + 0.2 * i as f64 / 400.0);
        let sx = exact.collective_spin_x(t).unwrap().abs();
        if sx > best {
            best = sx;
            best_t = t;
        }
    }
    let reference = single.collective_spin_x(best_t).unwrap().abs();
    let half = n as f64 / 2.0;
    let ratio = reference / best;
    let revival_ok = best > FIG3C_MIN_REVIVAL * half;
    let ratio_ok = ratio >= FIG3C_RATIO_BAND.0 && ratio <= FIG3C_RATIO_BAND.1;
    outcome(
        revival_ok && ratio_ok,
        format!(
            "revival {:.4} N/2 at {:.4} tau_r (needs > {FIG3C_MIN_REVIVAL}), single-particle {:.4} N/2, ratio {ratio:.1} (needs {:?})",
            best / half,
            best_t / tau,
            reference / half,
            FIG3C_RATIO_BAND
        ),
    )
}

fn main() {
    // Accept and ignore libtest flags passed by `cargo test`.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let selected = |label: &str| filter.is_empty() || filter.iter().any(|f| label.contains(f.as_str()));
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("1 (identities)", Duration::from_secs(1), criterion_1),
        ("2 (bifurcation)", Duration::from_secs(1), criterion_2),
        ("3 (oracle triangle)", Duration::from_secs(120), criterion_3),
        ("4 (Monte Carlo consistency)", Duration::from_secs(300), criterion_4),
        ("5 (jump-record statistics)", Duration::from_secs(120), criterion_5),
        ("6 (decoherence-free revival)", Duration::from_secs(10), criterion_6),
        ("7a (phi family)", Duration::from_secs(100), criterion_7a),
        ("7b (squeezing under decoherence)", Duration::from_secs(100), criterion_7b),
        ("7c (fig3c revival)", Duration::from_secs(100), criterion_7c),
    ];
    let mut failed = Vec::new();
    for (label, budget, f) in criteria {
        if selected(label) && !run(label, budget, f) {
            failed.push(label);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: {} failed: {}", failed.len(), failed.join(", "));
        std::process::exit(1);
    }
}
