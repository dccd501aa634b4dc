//! Recurrent-event simulation under `lambda_i(t) = lambda0(t) * exp(f(t) z_i)`.
//!
//! Event times are generated by thinning a homogeneous Poisson process of
//! rate `bar` that dominates the subject's hazard on `[0, C_i]`: candidate
//! gaps are exponential with rate `bar`, and a candidate at `T` is kept with
//! probability `lambda_i(T) / bar`.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::effect::{EffectFamily, EffectSpec};
use crate::error::{Error, Result};
use crate::rng::{fnv1a, subject_rng, SimRng};
use crate::trial_data::{Arm, Subject, TrialDataset};

/// Piecewise-constant baseline hazard (events per person-month).
///
/// Segment `i` covers `[breakpoints[i], breakpoints[i+1])`; the last segment
/// runs to `horizon` (inclusive) or is unbounded when no horizon is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BaselineRepr")]
pub struct BaselineHazard {
    breakpoints: Vec<f64>,
    rates: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
}

#[derive(Deserialize)]
struct BaselineRepr {
    breakpoints: Vec<f64>,
    rates: Vec<f64>,
    #[serde(default)]
    horizon: Option<f64>,
}

impl TryFrom<BaselineRepr> for BaselineHazard {
    type Error = Error;

    fn try_from(r: BaselineRepr) -> Result<Self> {
        BaselineHazard::new(r.breakpoints, r.rates, r.horizon)
    }
}

impl BaselineHazard {
    pub fn new(breakpoints: Vec<f64>, rates: Vec<f64>, horizon: Option<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != rates.len() {
            return Err(Error::Validation(
                "baseline needs one rate per breakpoint and at least one segment".into(),
            ));
        }
        if breakpoints[0] != 0.0 {
            return Err(Error::Validation("first baseline breakpoint must be 0".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::Validation("baseline breakpoints must be finite and strictly increasing".into()));
        }
        if rates.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::Validation("baseline rates must be finite and >= 0".into()));
        }
        if let Some(h) = horizon {
            if !h.is_finite() || h < *breakpoints.last().unwrap() {
                return Err(Error::Validation("baseline horizon must be finite and cover every breakpoint".into()));
            }
        }
        Ok(Self { breakpoints, rates, horizon })
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![rate], None)
    }

    /// 0.1 for the first six months, 0.2 thereafter.
    pub fn low_high(horizon: f64) -> Self {
        Self::new(vec![0.0, 6.0], vec![0.1, 0.2], Some(horizon)).expect("valid step baseline")
    }

    /// 0.2 for the first six months, 0.1 thereafter.
    pub fn high_low(horizon: f64) -> Self {
        Self::new(vec![0.0, 6.0], vec![0.2, 0.1], Some(horizon)).expect("valid step baseline")
    }

    pub fn with_horizon(mut self, horizon: f64) -> Result<Self> {
        self.horizon = Some(horizon);
        Self::new(self.breakpoints, self.rates, self.horizon)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn horizon(&self) -> Option<f64> {
        self.horizon
    }

    pub fn is_seasonal(&self) -> bool {
        self.rates.windows(2).any(|w| w[0] != w[1])
    }

    fn segment(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Domain(format!("baseline hazard undefined at t = {t}")));
        }
        if let Some(h) = self.horizon {
            if t > h {
                return Err(Error::Domain(format!("t = {t} beyond baseline horizon {h}")));
            }
        }
        Ok(self.breakpoints.partition_point(|&b| b <= t) - 1)
    }

    pub fn rate_at(&self, t: f64) -> Result<f64> {
        Ok(self.rates[self.segment(t)?])
    }

    /// Largest rate of any segment meeting `[0, horizon]`.
    pub fn max_rate(&self, horizon: f64) -> f64 {
        self.breakpoints
            .iter()
            .zip(&self.rates)
            .filter(|(b, _)| **b <= horizon)
            .map(|(_, r)| *r)
            .fold(0.0, f64::max)
    }

    /// `int_0^t lambda0(u) du`.
    pub fn cumulative(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        for (i, (&b, &r)) in self.breakpoints.iter().zip(&self.rates).enumerate() {
            if b >= t {
                break;
            }
            let end = self.breakpoints.get(i + 1).copied().unwrap_or(f64::INFINITY).min(t);
            acc += r * (end - b);
        }
        acc
    }

    /// Calendar month (1-based, counted from time zero) at which the
    /// highest-rate segment starts.
    pub fn peak_start_month(&self) -> u32 {
        let (i, _) = self
            .rates
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &r)| if r > best.1 { (i, r) } else { best });
        self.breakpoints[i].floor() as u32 + 1
    }
}

/// Hazard of a subject in `arm` at time `t`.
pub fn hazard_value(baseline: &BaselineHazard, effect: &EffectSpec, arm: Arm, t: f64) -> Result<f64> {
    let base = baseline.rate_at(t)?;
    match arm {
        Arm::Control => Ok(base),
        Arm::Vaccine => Ok(base * effect.hazard_ratio(t)?),
    }
}

/// A constant rate dominating the hazard on `[0, horizon]`.
///
/// All supported effect families are monotone in `t`, so the hazard ratio
/// peaks at an end of the interval; the bound is the largest segment rate
/// times that peak.
pub fn hazard_upper_bound(baseline: &BaselineHazard, effect: &EffectSpec, arm: Arm, horizon: f64) -> Result<f64> {
    if !horizon.is_finite() || horizon < 0.0 {
        return Err(Error::Domain(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    let base = baseline.max_rate(horizon);
    match arm {
        Arm::Control => Ok(base),
        Arm::Vaccine => {
            let at_zero = effect.hazard_ratio_at_zero().ok_or_else(|| {
                Error::Unsupported(format!(
                    "{} effect with beta1 = {} is unbounded near t = 0",
                    effect.family, effect.beta1
                ))
            })?;
            let at_end = if horizon > 0.0 { effect.hazard_ratio(horizon)? } else { at_zero };
            Ok(base * at_zero.max(at_end))
        }
    }
}

/// Event times of one subject followed up to `censor_time`.
pub fn simulate_subject(
    baseline: &BaselineHazard,
    effect: &EffectSpec,
    arm: Arm,
    censor_time: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    let bound = hazard_upper_bound(baseline, effect, arm, censor_time)?;
    simulate_subject_with_bound(baseline, effect, arm, censor_time, bound, rng)
}

/// Thinning with a caller-chosen dominating rate `bound`.
///
/// Fails with an internal error if the hazard ever exceeds `bound`.
pub fn simulate_subject_with_bound(
    baseline: &BaselineHazard,
    effect: &EffectSpec,
    arm: Arm,
    censor_time: f64,
    bound: f64,
    rng: &mut SimRng,
) -> Result<Vec<f64>> {
    if !censor_time.is_finite() || censor_time <= 0.0 {
        return Err(Error::Validation(format!("censor time must be > 0, got {censor_time}")));
    }
    if !bound.is_finite() || bound < 0.0 {
        return Err(Error::Internal(format!("invalid thinning bound {bound}")));
    }
    let mut events = Vec::new();
    if bound == 0.0 {
        // Only valid if the hazard is identically zero; check the endpoints.
        let at_end = hazard_value(baseline, effect, arm, censor_time)?;
        if at_end > 0.0 {
            return Err(Error::Internal("zero thinning bound with positive hazard".into()));
        }
        return Ok(events);
    }
    let mut t = 0.0;
    loop {
        t += exponential(rng, bound);
        if t > censor_time {
            break;
        }
        let rate = hazard_value(baseline, effect, arm, t)?;
        if rate > bound * (1.0 + 1e-12) {
            return Err(Error::Internal(format!("hazard {rate} at t = {t} exceeds thinning bound {bound}")));
        }
        let v: f64 = rng.random();
        if v <= rate / bound {
            events.push(t);
        }
    }
    Ok(events)
}

/// Inverse-CDF exponential draw; `U = 0` is resampled.
fn exponential(rng: &mut SimRng, rate: f64) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -u.ln() / rate;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Censoring {
    /// Everyone followed to the planned horizon.
    Fixed,
    /// `C_i ~ U(a, b)` independently.
    Uniform { a: f64, b: f64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioId {
    Builtin(u8),
    Custom(String),
}

impl ScenarioId {
    /// Key folded into replicate seeds.
    pub fn key(&self) -> u64 {
        match self {
            ScenarioId::Builtin(id) => *id as u64,
            ScenarioId::Custom(label) => fnv1a(label.as_bytes()),
        }
    }
}

impl Default for ScenarioId {
    fn default() -> Self {
        ScenarioId::Custom("custom".into())
    }
}

impl std::fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioId::Builtin(id) => write!(f, "{id}"),
            ScenarioId::Custom(label) => f.write_str(label),
        }
    }
}

fn default_vaccination_month() -> u8 {
    1
}

/// A simulated trial design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default)]
    pub scenario_id: ScenarioId,
    /// Planned study duration, months.
    pub tau: f64,
    pub n_per_arm: usize,
    pub censoring: Censoring,
    pub baseline: BaselineHazard,
    pub effect: EffectSpec,
    /// Calendar month stamped on every simulated subject.
    #[serde(default = "default_vaccination_month")]
    pub vaccination_month: u8,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() || self.tau <= 0.0 {
            return Err(Error::Validation(format!("tau must be > 0, got {}", self.tau)));
        }
        if self.n_per_arm == 0 {
            return Err(Error::Validation("n_per_arm must be > 0".into()));
        }
        if let Censoring::Uniform { a, b } = self.censoring {
            if !(a > 0.0 && a < b && b <= self.tau) {
                return Err(Error::Validation(format!(
                    "uniform censoring needs 0 < a < b <= tau, got a = {a}, b = {b}, tau = {}",
                    self.tau
                )));
            }
        }
        if !(1..=12).contains(&self.vaccination_month) {
            return Err(Error::Validation("vaccination_month must be within 1..=12".into()));
        }
        if self.effect.family == EffectFamily::Log && self.effect.beta1 < 0.0 {
            return Err(Error::Unsupported("log effect with negative slope cannot be simulated by thinning".into()));
        }
        if let Some(h) = self.baseline.horizon() {
            if h < self.tau {
                return Err(Error::Validation("baseline horizon shorter than tau".into()));
            }
        }
        Ok(())
    }

    /// Calendar month at which the highest-incidence season starts, if the
    /// baseline is seasonal.
    pub fn high_season_start(&self) -> Option<u32> {
        self.baseline.is_seasonal().then(|| self.baseline.peak_start_month())
    }
}

/// Simulation parameters of the eight built-in scenarios: four with a flat
/// baseline of 0.15 (12 or 10 months, with or without attrition) and four with
/// a six-month step between 0.1 and 0.2. All share `f(t) = -4 + 0.33 t`.
pub fn builtin_scenario(id: u8) -> Result<ScenarioSpec> {
    let (tau, attrition, baseline) = match id {
        1 => (12.0, false, BaselineHazard::constant(0.15)?),
        2 => (10.0, false, BaselineHazard::constant(0.15)?),
        3 => (12.0, true, BaselineHazard::constant(0.15)?),
        4 => (10.0, true, BaselineHazard::constant(0.15)?),
        5 => (12.0, false, BaselineHazard::low_high(12.0)),
        6 => (12.0, false, BaselineHazard::high_low(12.0)),
        7 => (12.0, true, BaselineHazard::low_high(12.0)),
        8 => (12.0, true, BaselineHazard::high_low(12.0)),
        other => return Err(Error::Validation(format!("unknown scenario id {other} (expected 1..=8)"))),
    };
    let censoring = if attrition {
        Censoring::Uniform { a: 0.6 * tau, b: tau }
    } else {
        Censoring::Fixed
    };
    Ok(ScenarioSpec {
        scenario_id: ScenarioId::Builtin(id),
        tau,
        n_per_arm: 1000,
        censoring,
        baseline,
        effect: EffectSpec::linear(-4.0, 0.33),
        vaccination_month: 1,
    })
}

/// Simulate one trial: `n_per_arm` controls followed by `n_per_arm`
/// vaccinees, all in stratum `"1"`.
///
/// Subject `i` draws its censoring time and then its events from the stream
/// `subject_rng(seed, i)`, so the output is identical however the subjects
/// are scheduled.
pub fn simulate_trial(spec: &ScenarioSpec, seed: u64) -> Result<TrialDataset> {
    spec.validate()?;
    let n = spec.n_per_arm;
    let subjects = (0..2 * n)
        .into_par_iter()
        .map(|i| {
            let arm = if i < n { Arm::Control } else { Arm::Vaccine };
            let mut rng = subject_rng(seed, i as u64);
            let censor_time = match spec.censoring {
                Censoring::Fixed => spec.tau,
                Censoring::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
            };
            let events = simulate_subject(&spec.baseline, &spec.effect, arm, censor_time, &mut rng)?;
            let prefix = if arm == Arm::Control { 'c' } else { 'v' };
            Ok(Subject {
                id: format!("{prefix}{:05}", i % n + 1),
                arm,
                stratum: "1".into(),
                censor_time,
                event_times: events,
                vaccination_month: Some(spec.vaccination_month),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    TrialDataset::new(subjects)
}
