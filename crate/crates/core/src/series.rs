//! Time grids and named observable series.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Point spacing of a [`TimeGrid`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Spacing {
    Linear,
    Log,
}

/// Strictly increasing, non-negative time points.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("times", "grid is empty"));
        }
        if points.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::invalid("times", "times must be finite and >= 0"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("times", "times must be strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `count` points from `start` to `stop` inclusive.
    ///
    /// Log spacing needs `start > 0`.
    pub fn build(start: f64, stop: f64, count: usize, spacing: Spacing) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("times.count", "must be at least 1"));
        }
        if !(start.is_finite() && stop.is_finite()) || start < 0.0 {
            return Err(Error::invalid("times.start", "start and stop must be finite with start >= 0"));
        }
        if count == 1 {
            return Self::new(vec![start]);
        }
        if stop <= start {
            return Err(Error::invalid("times.stop", "stop must exceed start when count > 1"));
        }
        let steps = (count - 1) as f64;
        let points = match spacing {
            Spacing::Linear => (0..count)
                .map(|i| if i + 1 == count { stop } else { start + (stop - start) * i as f64 / steps })
                .collect(),
            Spacing::Log => {
                if start <= 0.0 {
                    return Err(Error::invalid("times.start", "log spacing needs start > 0"));
                }
                let (a, b) = (start.ln(), stop.ln());
                (0..count)
                    .map(|i| if i + 1 == count { stop } else { (a + (b - a) * i as f64 / steps).exp() })
                    .collect()
            }
        };
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Values of an observable series.
#[derive(Clone, Debug, PartialEq)]
pub enum SeriesValues {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl SeriesValues {
    pub fn len(&self) -> usize {
        match self {
            SeriesValues::Real(v) => v.len(),
            SeriesValues::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One observable sampled on a time grid, with optional standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableSeries {
    pub name: String,
    pub sites: Vec<usize>,
    pub times: Vec<f64>,
    pub values: SeriesValues,
    /// Same shape as `values`; complex errors are stored component-wise.
    pub std_errors: Option<SeriesValues>,
}

impl ObservableSeries {
    pub fn new(name: impl Into<String>, times: &TimeGrid, values: SeriesValues) -> Result<Self> {
        if values.len() != times.len() {
            return Err(Error::invalid(
                "values",
                format!("{} values for {} time points", values.len(), times.len()),
            ));
        }
        Ok(Self {
            name: name.into(),
            sites: Vec::new(),
            times: times.points().to_vec(),
            values,
            std_errors: None,
        })
    }

    pub fn with_sites(mut self, sites: Vec<usize>) -> Self {
        self.sites = sites;
        self
    }

    pub fn with_std_errors(mut self, errors: SeriesValues) -> Result<Self> {
        let same_kind = matches!(
            (&self.values, &errors),
            (SeriesValues::Real(_), SeriesValues::Real(_)) | (SeriesValues::Complex(_), SeriesValues::Complex(_))
        );
        if !same_kind || errors.len() != self.times.len() {
            return Err(Error::invalid("std_errors", "must match the shape of the values"));
        }
        self.std_errors = Some(errors);
        Ok(self)
    }
}
