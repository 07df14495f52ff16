//! CSV/JSON tables and the metadata sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use dissipative_ising::collective::{critical_raman_rate, revival_time};
use dissipative_ising::model::LatticeKind;
use dissipative_ising::{SeriesValues, VERSION};

use crate::config::{Format, Observable, Plan};
use crate::error::{CliError, CliResult};
use crate::run::RunOutput;

/// A named output column.
#[derive(Debug, Clone)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
}

fn push_values(cols: &mut Vec<Column>, name: &str, values: &SeriesValues) {
    match values {
        SeriesValues::Real(v) => cols.push(Column {
            name: name.to_string(),
            values: v.clone(),
        }),
        SeriesValues::Complex(v) => {
            cols.push(Column {
                name: format!("{name}_re"),
                values: v.iter().map(|z| z.re).collect(),
            });
            cols.push(Column {
                name: format!("{name}_im"),
                values: v.iter().map(|z| z.im).collect(),
            });
        }
    }
}

/// Flattens a run into columns, time first.
pub fn columns(out: &RunOutput) -> Vec<Column> {
    let mut cols = vec![Column {
        name: "t".into(),
        values: out.times.clone(),
    }];
    for block in &out.blocks {
        for s in &block.series {
            let name = format!("{}{}", s.name, block.suffix);
            push_values(&mut cols, &name, &s.values);
            if let Some(e) = &s.std_errors {
                let before = cols.len();
                push_values(&mut cols, &name, e);
                for c in &mut cols[before..] {
                    c.name.push_str("_stderr");
                }
            }
        }
    }
    cols
}

/// Shortest round-trip text, switching to exponent form for very small or large magnitudes.
pub fn format_number(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::io(format!("{}: writing CSV", path.display()), std::io::Error::other(e))
}

pub fn write_csv(path: &Path, cols: &[Column]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(cols.iter().map(|c| c.name.as_str())).map_err(|e| csv_error(path, e))?;
    let rows = cols.first().map_or(0, |c| c.values.len());
    for i in 0..rows {
        w.write_record(cols.iter().map(|c| format_number(c.values[i])))
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path.display().to_string(), e))
}

fn json_number(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

/// `{"columns": [...], "rows": [[...], ...]}` with non-finite values as `null`.
pub fn write_json(path: &Path, cols: &[Column]) -> CliResult<()> {
    let rows = cols.first().map_or(0, |c| c.values.len());
    let data: Vec<Value> = (0..rows)
        .map(|i| Value::Array(cols.iter().map(|c| json_number(c.values[i])).collect()))
        .collect();
    let doc = json!({
        "columns": cols.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
        "rows": data,
    });
    write_pretty(path, &doc)
}

pub fn write_pretty(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))
}

/// Data file and metadata sidecar paths under `dir`.
pub fn output_paths(plan: &Plan, dir: &Path) -> (PathBuf, PathBuf) {
    let ext = match plan.config.output.format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    let base = dir.join(&plan.config.output.path);
    let data = if base.extension().is_some_and(|e| e == ext) {
        base.clone()
    } else {
        let mut s = base.clone().into_os_string();
        s.push(format!(".{ext}"));
        PathBuf::from(s)
    };
    let mut meta = data.clone().into_os_string();
    meta.push(".meta.json");
    (data, PathBuf::from(meta))
}

fn geometry_json(plan: &Plan) -> Value {
    let Some(g) = &plan.geometry else {
        return Value::Null;
    };
    let kind = match g.kind() {
        LatticeKind::Chain { n } => json!({ "kind": "chain", "n": n }),
        LatticeKind::Square { nx, ny } => json!({ "kind": "square", "nx": nx, "ny": ny }),
        LatticeKind::Triangular { nx, ny } => json!({ "kind": "triangular", "nx": nx, "ny": ny }),
        LatticeKind::Explicit => json!({ "kind": "explicit" }),
    };
    json!({ "lattice": kind, "boundary": format!("{:?}", g.boundary()).to_lowercase(), "sites": g.n_sites() })
}

fn coupling_json(plan: &Plan) -> Value {
    let c = &plan.couplings;
    let n = c.n_spins();
    let mut off: Vec<f64> = Vec::new();
    for j in 0..n {
        for k in (j + 1)..n {
            off.push(c.get(j, k));
        }
    }
    let min = off.iter().copied().fold(f64::INFINITY, f64::min);
    let max = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    json!({
        "uniform": c.uniform_value().map_or(Value::Null, json_number),
        "min": json_number(min),
        "max": json_number(max),
    })
}

fn derived_json(plan: &Plan) -> Value {
    let d = plan.rates.derived();
    let mut v = json!({
        "gamma_r": d.raman,
        "gamma": d.asymmetry,
        "Gamma": d.total,
        "lambda": d.lambda,
        "r": d.product,
    });
    if let Some(j) = plan.config.model.coupling.j.filter(|j| *j != 0.0) {
        let n = plan.n();
        v["critical_raman_rate"] = json_number(critical_raman_rate(j, n));
        if let Ok(tau) = revival_time(n, j) {
            v["revival_time"] = json_number(tau);
        }
    }
    v
}

/// Best point of `xi_min` over the time grid for each block that has one.
fn squeezing_summary(plan: &Plan, out: &RunOutput) -> Value {
    if !plan
        .config
        .run
        .observables
        .iter()
        .any(|o| matches!(o, Observable::Squeezing { .. }))
    {
        return Value::Null;
    }
    let mut summary = serde_json::Map::new();
    for block in &out.blocks {
        let find = |name: &str| block.series.iter().find(|s| s.name == name);
        let (Some(xi), Some(psi)) = (find("xi_min"), find("psi_min")) else {
            continue;
        };
        let (SeriesValues::Real(xi), SeriesValues::Real(psi)) = (&xi.values, &psi.values) else {
            continue;
        };
        let best = xi
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .min_by(|a, b| a.1.total_cmp(b.1));
        if let Some((i, &v)) = best {
            let key = format!("optimal_squeezing{}", block.suffix);
            summary.insert(
                key,
                json!({ "t": out.times[i], "xi": v, "psi": json_number(psi[i]), "xi_db": 20.0 * v.log10() }),
            );
        }
    }
    Value::Object(summary)
}

/// Metadata sidecar contents.
pub fn metadata(plan: &Plan, out: &RunOutput, cols: &[Column], timestamp: Option<u64>) -> Value {
    let mut meta = json!({
        "code": { "name": "dissipative-ising", "version": VERSION },
        "config": plan.config,
        "resolved": {
            "n": plan.n(),
            "backend": plan.config.run.backend.name(),
            "seed": plan.seed,
            "n_traj": plan.n_traj,
            "x_polarized": plan.initial.is_x_polarized(),
            "times": {
                "count": out.times.len(),
                "first": out.times.first(),
                "last": out.times.last(),
            },
            "geometry": geometry_json(plan),
            "couplings": coupling_json(plan),
        },
        "rates": {
            "gamma_ud": plan.rates.gamma_ud(),
            "gamma_du": plan.rates.gamma_du(),
            "gamma_el": plan.rates.gamma_el(),
        },
        "derived_rates": derived_json(plan),
        "columns": cols.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(),
        "summary": squeezing_summary(plan, out),
    });
    if let Some(ts) = timestamp {
        meta["timestamp"] = json!(ts);
    }
    meta
}
