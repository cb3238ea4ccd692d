//! Sampled coherence series shared by all engines.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_exponential, fit_osc_exponential, one_over_e_time, FitResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Mc,
    Lindblad,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Analytic => "analytic",
            Engine::Mc => "mc",
            Engine::Lindblad => "lindblad",
        }
    }
}

impl std::fmt::Display for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Engine::Analytic),
            "mc" => Ok(Engine::Mc),
            "lindblad" => Ok(Engine::Lindblad),
            _ => Err(Error::InvalidParams(format!("unknown engine '{s}'"))),
        }
    }
}

/// Coherence samples `(t, c(t))` with optional standard errors, provenance
/// key/value pairs and attached fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    pub engine: Engine,
    pub times: Vec<f64>,
    pub values: Vec<Complex64>,
    pub std_err: Option<Vec<f64>>,
    pub provenance: BTreeMap<String, String>,
    pub fits: Vec<FitResult>,
}

impl DecayCurve {
    pub fn new(engine: Engine, times: Vec<f64>, values: Vec<Complex64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::LengthMismatch(format!(
                "{} times for {} values",
                times.len(),
                values.len()
            )));
        }
        Ok(Self {
            engine,
            times,
            values,
            std_err: None,
            provenance: BTreeMap::new(),
            fits: Vec::new(),
        })
    }

    pub fn with_std_err(mut self, se: Vec<f64>) -> Result<Self> {
        if se.len() != self.times.len() {
            return Err(Error::LengthMismatch(format!("{} errors for {} samples", se.len(), self.times.len())));
        }
        self.std_err = Some(se);
        Ok(self)
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_string(), value.to_string());
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// `(t, |c(t)|)` pairs.
    pub fn envelope(&self) -> Vec<(f64, f64)> {
        self.times.iter().zip(&self.values).map(|(&t, c)| (t, c.norm())).collect()
    }

    /// `(t, Re c(t))` pairs.
    pub fn real_part(&self) -> Vec<(f64, f64)> {
        self.times.iter().zip(&self.values).map(|(&t, c)| (t, c.re)).collect()
    }

    /// First 1/e crossing of the envelope.
    pub fn one_over_e(&self) -> Result<f64> {
        one_over_e_time(&self.envelope())
    }

    /// Fit the envelope with a plain exponential and attach the result.
    pub fn fit_envelope(&mut self) -> Result<&FitResult> {
        let f = fit_exponential(&self.envelope())?;
        self.fits.push(f);
        Ok(self.fits.last().unwrap())
    }

    /// Fit the real part with an oscillating exponential and attach it.
    pub fn fit_fringe(&mut self) -> Result<&FitResult> {
        let f = fit_osc_exponential(&self.real_part())?;
        self.fits.push(f);
        Ok(self.fits.last().unwrap())
    }

    /// Largest `|a(t) - b(t)|` over shared sample times.
    pub fn max_abs_deviation(&self, other: &DecayCurve) -> Result<f64> {
        if self.times != other.times {
            return Err(Error::LengthMismatch("curves are sampled at different times".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }
}
