//! Backend dispatch: evaluates the configured observables on the time grid.

use num_complex::Complex64;

use dissipative_ising::closed_form::{self, ClosedForm, Ladder, Treatment};
use dissipative_ising::collective::{
    closed_form_moments, critical_raman_rate, propagate_error, Assembly, SpinMoments, DEFAULT_PSI_GRID,
    MOMENT_COMPONENTS,
};
use dissipative_ising::lindblad::{self, DensityMatrix, EvolveOptions, OperatorString, SiteOperator};
use dissipative_ising::trajectories::{mc_estimate, mc_moments, McObservable, SiteOp};
use dissipative_ising::{
    DecoherenceRates, McConfig, ObservableSeries, Parallelism, SeriesValues, TrajectorySimulator,
};

use crate::config::{Backend, CorrKind, Observable, Plan, PsiSpec, Reference};
use crate::error::CliResult;

type Covariance = [[f64; MOMENT_COMPONENTS]; MOMENT_COMPONENTS];

/// One time point of one observable component.
#[derive(Clone, Copy, Debug)]
enum Point {
    Real(f64, Option<f64>),
    Complex(Complex64, Option<Complex64>),
}

/// A solver bound to one parameter set.
enum Engine {
    ClosedForm(ClosedForm),
    Lindblad(Vec<DensityMatrix>),
    Trajectories(TrajectorySimulator, McConfig),
}

/// Collective moments at one time, with their sampling covariance for Monte Carlo.
struct Moments {
    m: SpinMoments,
    cov: Option<Covariance>,
}

impl Moments {
    fn real(&self, value: f64, gradient: [f64; MOMENT_COMPONENTS]) -> Point {
        Point::Real(value, self.cov.as_ref().map(|c| propagate_error(c, &gradient)))
    }

    fn unit(&self, i: usize) -> Point {
        let mut g = [0.0; MOMENT_COMPONENTS];
        g[i] = 1.0;
        self.real(self.m.to_array()[i], g)
    }
}

/// Output of one backend: the series for every configured observable, in order.
struct BackendOutput {
    label: &'static str,
    series: Vec<ObservableSeries>,
}

/// Everything a run produces before serialization.
pub struct RunOutput {
    pub times: Vec<f64>,
    /// Primary backend(s) first, then references.
    pub blocks: Vec<Block>,
}

/// A group of columns sharing a name suffix.
pub struct Block {
    pub suffix: String,
    pub series: Vec<ObservableSeries>,
}

fn fmt_num(v: f64) -> String {
    format!("{v}")
}

fn ladder_pair(kind: CorrKind) -> (Ladder, Option<Ladder>) {
    match kind {
        CorrKind::PlusPlus => (Ladder::Raise, Some(Ladder::Raise)),
        CorrKind::PlusMinus => (Ladder::Raise, Some(Ladder::Lower)),
        CorrKind::MinusPlus => (Ladder::Lower, Some(Ladder::Raise)),
        CorrKind::MinusMinus => (Ladder::Lower, Some(Ladder::Lower)),
        CorrKind::PlusZ => (Ladder::Raise, None),
        CorrKind::MinusZ => (Ladder::Lower, None),
    }
}

fn site_op(l: Ladder) -> SiteOp {
    match l {
        Ladder::Raise => SiteOp::Raise,
        Ladder::Lower => SiteOp::Lower,
    }
}

fn site_operator(l: Ladder) -> SiteOperator {
    match l {
        Ladder::Raise => SiteOperator::Raise,
        Ladder::Lower => SiteOperator::Lower,
    }
}

/// Raman rates for one `phi_curve` entry.
fn phi_rates(plan: &Plan, coupling: f64, ratio: Option<f64>) -> CliResult<DecoherenceRates> {
    match ratio {
        None => Ok(plan.rates),
        Some(r) => {
            let g = r * critical_raman_rate(coupling, plan.n()) / 2.0;
            Ok(DecoherenceRates::new(g, g, plan.rates.gamma_el())?)
        }
    }
}

/// Column base names and site lists for each component of `obs`.
fn components(obs: &Observable) -> Vec<(String, Vec<usize>)> {
    match obs {
        Observable::SpinLength => vec![("spin_length".into(), vec![])],
        Observable::Bloch => vec![("sx".into(), vec![]), ("sy".into(), vec![]), ("sz".into(), vec![])],
        Observable::FluctX => vec![("fluct_x".into(), vec![])],
        Observable::Corr { j, k, kind } => vec![(format!("corr_{}_{j}_{k}", kind.tag()), vec![*j, *k])],
        Observable::Variance { psi } => vec![(format!("variance_psi_{}", fmt_num(*psi)), vec![])],
        Observable::Squeezing { psi: PsiSpec::Angle(p) } => vec![(format!("xi_psi_{}", fmt_num(*p)), vec![])],
        Observable::Squeezing { psi: PsiSpec::Keyword(_) } => {
            vec![("xi_min".into(), vec![]), ("psi_min".into(), vec![])]
        }
        Observable::PhiCurve { raman_ratios: None, .. } => vec![("phi".into(), vec![])],
        Observable::PhiCurve { raman_ratios: Some(rs), .. } => {
            rs.iter().map(|r| (format!("phi_ratio_{}", fmt_num(*r)), vec![])).collect()
        }
    }
}

fn needs_moments(obs: &Observable) -> bool {
    !matches!(obs, Observable::Corr { .. } | Observable::PhiCurve { .. })
}

impl Engine {
    fn moments(&self, i: usize, t: f64) -> CliResult<Moments> {
        Ok(match self {
            Engine::ClosedForm(cf) => Moments {
                m: closed_form_moments(cf, t, Assembly::Auto, Parallelism::default())?,
                cov: None,
            },
            Engine::Lindblad(states) => Moments {
                m: lindblad::lindblad_moments(&states[i]),
                cov: None,
            },
            Engine::Trajectories(sim, cfg) => {
                let mc = mc_moments(sim, t, cfg)?;
                Moments {
                    m: mc.moments,
                    cov: Some(mc.covariance),
                }
            }
        })
    }

    fn corr(&self, i: usize, t: f64, j: usize, k: usize, kind: CorrKind) -> CliResult<Point> {
        let (mu, nu) = ladder_pair(kind);
        Ok(match self {
            Engine::ClosedForm(cf) => Point::Complex(
                match nu {
                    Some(nu) => cf.corr_pm(j, k, mu, nu, t)?,
                    None => cf.corr_pz(j, k, mu, t)?,
                },
                None,
            ),
            Engine::Lindblad(states) => {
                let second = nu.map_or(SiteOperator::Z, site_operator);
                let op = OperatorString::pair(j, site_operator(mu), k, second)?;
                Point::Complex(states[i].expectation(&op)?, None)
            }
            Engine::Trajectories(sim, cfg) => {
                let second = nu.map_or(SiteOp::Z, site_op);
                let obs = McObservable::Product(vec![(j, site_op(mu)), (k, second)]);
                let est = mc_estimate(sim, &obs, t, cfg)?;
                Point::Complex(est.mean, Some(est.std_error))
            }
        })
    }

    fn evaluate(&self, plan: &Plan, obs: &Observable, i: usize, t: f64, moments: Option<&Moments>) -> CliResult<Vec<Point>> {
        let m = || moments.expect("moments computed for moment observables");
        Ok(match obs {
            Observable::SpinLength => vec![m().unit(0)],
            Observable::Bloch => vec![m().unit(0), m().unit(1), m().unit(2)],
            Observable::FluctX => {
                let mm = m();
                vec![mm.real(mm.m.transverse_fluctuation_x(), mm.m.transverse_fluctuation_x_gradient())]
            }
            Observable::Variance { psi } => {
                let mm = m();
                vec![mm.real(mm.m.variance(*psi), mm.m.variance_gradient(*psi))]
            }
            Observable::Squeezing { psi: PsiSpec::Angle(p) } => {
                let mm = m();
                vec![mm.real(mm.m.squeezing(*p).xi, mm.m.squeezing_gradient(*p))]
            }
            Observable::Squeezing { psi: PsiSpec::Keyword(_) } => {
                let mm = m();
                let best = mm.m.min_squeezing(DEFAULT_PSI_GRID);
                let xi = match best.psi {
                    Some(p) => mm.real(best.xi, mm.m.squeezing_gradient(p)),
                    None => mm.real(best.xi, [0.0; MOMENT_COMPONENTS]),
                };
                vec![xi, Point::Real(best.psi.unwrap_or(f64::NAN), None)]
            }
            Observable::Corr { j, k, kind } => vec![self.corr(i, t, *j, *k, *kind)?],
            Observable::PhiCurve { j, raman_ratios } => {
                let ratios: Vec<Option<f64>> = match raman_ratios {
                    None => vec![None],
                    Some(rs) => rs.iter().map(|r| Some(*r)).collect(),
                };
                ratios
                    .into_iter()
                    .map(|r| {
                        let d = phi_rates(plan, *j, r)?.derived();
                        Ok(Point::Complex(closed_form::phi(*j, t, &d, plan.n()), None))
                    })
                    .collect::<CliResult<_>>()?
            }
        })
    }

    fn run(&self, plan: &Plan, observables: &[&Observable]) -> CliResult<Vec<ObservableSeries>> {
        let times = plan.times.points();
        let any_moments = observables.iter().any(|o| needs_moments(o));
        // points[obs][component][time]
        let mut points: Vec<Vec<Vec<Point>>> = observables.iter().map(|o| vec![Vec::new(); components(o).len()]).collect();
        for (i, &t) in times.iter().enumerate() {
            let moments = if any_moments { Some(self.moments(i, t)?) } else { None };
            for (o, obs) in observables.iter().enumerate() {
                for (c, p) in self.evaluate(plan, obs, i, t, moments.as_ref())?.into_iter().enumerate() {
                    points[o][c].push(p);
                }
            }
        }
        let mut out = Vec::new();
        for (obs, per_component) in observables.iter().zip(points) {
            for ((name, sites), pts) in components(obs).into_iter().zip(per_component) {
                out.push(to_series(plan, name, sites, &pts)?);
            }
        }
        Ok(out)
    }
}

fn to_series(plan: &Plan, name: String, sites: Vec<usize>, pts: &[Point]) -> CliResult<ObservableSeries> {
    let (values, errors) = match pts.first() {
        Some(Point::Complex(..)) => {
            let mut v = Vec::with_capacity(pts.len());
            let mut e = Vec::with_capacity(pts.len());
            for p in pts {
                if let Point::Complex(x, s) = p {
                    v.push(*x);
                    if let Some(s) = s {
                        e.push(*s);
                    }
                }
            }
            let errors = (e.len() == v.len()).then_some(SeriesValues::Complex(e));
            (SeriesValues::Complex(v), errors)
        }
        _ => {
            let mut v = Vec::with_capacity(pts.len());
            let mut e = Vec::with_capacity(pts.len());
            for p in pts {
                if let Point::Real(x, s) = p {
                    v.push(*x);
                    if let Some(s) = s {
                        e.push(*s);
                    }
                }
            }
            let errors = (e.len() == v.len()).then_some(SeriesValues::Real(e));
            (SeriesValues::Real(v), errors)
        }
    };
    let series = ObservableSeries::new(name, &plan.times, values)?.with_sites(sites);
    Ok(match errors {
        Some(e) => series.with_std_errors(e)?,
        None => series,
    })
}

fn closed_form_engine(plan: &Plan, rates: DecoherenceRates, treatment: Treatment) -> CliResult<Engine> {
    let cf = ClosedForm::new(plan.couplings.clone(), rates, &plan.initial)?.with_treatment(treatment);
    Ok(Engine::ClosedForm(cf))
}

fn lindblad_engine(plan: &Plan) -> CliResult<Engine> {
    let rho0 = DensityMatrix::from_product_state(&plan.initial)?;
    let series = lindblad::evolve(
        &rho0,
        plan.times.points(),
        &plan.couplings,
        &plan.rates,
        &EvolveOptions::default(),
    )?;
    Ok(Engine::Lindblad(series.states))
}

fn trajectory_engine(plan: &Plan) -> CliResult<Engine> {
    let sim = TrajectorySimulator::new(plan.couplings.clone(), plan.rates, plan.initial.clone())?;
    Ok(Engine::Trajectories(sim, McConfig::new(plan.n_traj, plan.seed)))
}

fn engine_for(plan: &Plan, backend: Backend) -> CliResult<Engine> {
    match backend {
        Backend::ClosedForm => closed_form_engine(plan, plan.rates, Treatment::Exact),
        Backend::Lindblad => lindblad_engine(plan),
        Backend::Trajectories => trajectory_engine(plan),
        Backend::Compare => unreachable!("compare expands to the three solvers"),
    }
}

/// Pointwise `other − reference`, dropping standard errors.
fn deviation(reference: &ObservableSeries, other: &ObservableSeries) -> ObservableSeries {
    let values = match (&reference.values, &other.values) {
        (SeriesValues::Real(a), SeriesValues::Real(b)) => SeriesValues::Real(b.iter().zip(a).map(|(b, a)| b - a).collect()),
        (SeriesValues::Complex(a), SeriesValues::Complex(b)) => {
            SeriesValues::Complex(b.iter().zip(a).map(|(b, a)| b - a).collect())
        }
        _ => unreachable!("backends agree on value kinds"),
    };
    ObservableSeries {
        name: reference.name.clone(),
        sites: reference.sites.clone(),
        times: reference.times.clone(),
        values,
        std_errors: None,
    }
}

/// Evaluates every configured observable with the configured backend and references.
pub fn execute(plan: &Plan) -> CliResult<RunOutput> {
    let run = &plan.config.run;
    let observables: Vec<&Observable> = run.observables.iter().collect();
    let mut blocks = Vec::new();
    if run.backend == Backend::Compare {
        let mut outputs = Vec::new();
        for backend in [Backend::ClosedForm, Backend::Lindblad, Backend::Trajectories] {
            let series = engine_for(plan, backend)?.run(plan, &observables)?;
            outputs.push(BackendOutput {
                label: backend.name(),
                series,
            });
        }
        let deviations: Vec<Block> = outputs[1..]
            .iter()
            .map(|o| Block {
                suffix: format!("_dev_{}", o.label),
                series: outputs[0].series.iter().zip(&o.series).map(|(r, s)| deviation(r, s)).collect(),
            })
            .collect();
        for o in outputs {
            blocks.push(Block {
                suffix: format!("_{}", o.label),
                series: o.series,
            });
        }
        blocks.extend(deviations);
    } else {
        blocks.push(Block {
            suffix: String::new(),
            series: engine_for(plan, run.backend)?.run(plan, &observables)?,
        });
    }

    let reference_obs: Vec<&Observable> = observables
        .iter()
        .copied()
        .filter(|o| !matches!(o, Observable::PhiCurve { .. }))
        .collect();
    if !reference_obs.is_empty() {
        for r in &run.references {
            let (engine, suffix) = match r {
                Reference::SingleParticle => (closed_form_engine(plan, plan.rates, Treatment::SingleParticle)?, "_single"),
                Reference::DecoherenceFree => (closed_form_engine(plan, DecoherenceRates::zero(), Treatment::Exact)?, "_gamma0"),
            };
            blocks.push(Block {
                suffix: suffix.into(),
                series: engine.run(plan, &reference_obs)?,
            });
        }
    }
    Ok(RunOutput {
        times: plan.times.points().to_vec(),
        blocks,
    })
}
