//! VE curves and the area under them.
//!
//! `VE(t) = 1 - exp(f(t))`. The AUC over `[t1, t2]` is the mean of `VE` over
//! the interval, i.e. `(1 / (t2 - t1)) int_{t1}^{t2} VE(t) dt`, a proportion
//! that can be compared directly with a constant-effect VE.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ag_estimator::{fit, FitOptions, RiskSetRule};
use crate::effect::{EffectFamily, EffectSpec};
use crate::error::{Error, Result};
use crate::rng::{mix_seed, SimRng};
use crate::trial_data::{Subject, TrialDataset};
use rand::SeedableRng;

/// Default number of Simpson panels.
pub const DEFAULT_PANELS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VeCurve {
    pub effect: EffectSpec,
}

impl VeCurve {
    pub fn new(effect: EffectSpec) -> Self {
        Self { effect }
    }

    pub fn hr_at(&self, t: f64) -> Result<f64> {
        self.effect.hazard_ratio(t)
    }

    pub fn ve_at(&self, t: f64) -> Result<f64> {
        ve_at(self, t)
    }
}

impl From<EffectSpec> for VeCurve {
    fn from(effect: EffectSpec) -> Self {
        Self { effect }
    }
}

/// Average VE over `[t1, t2]`, as a proportion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucValue {
    pub t1: f64,
    pub t2: f64,
    pub value: f64,
}

impl AucValue {
    pub fn percent(&self) -> f64 {
        100.0 * self.value
    }
}

pub fn ve_at(curve: &VeCurve, t: f64) -> Result<f64> {
    Ok(1.0 - curve.effect.hazard_ratio(t)?)
}

fn check_interval(t1: f64, t2: f64) -> Result<()> {
    if !t1.is_finite() || !t2.is_finite() || t1 < 0.0 {
        return Err(Error::Validation(format!("AUC interval must be finite with t1 >= 0, got [{t1}, {t2}]")));
    }
    if t1 >= t2 {
        return Err(Error::Validation(format!("AUC interval needs t1 < t2, got [{t1}, {t2}]")));
    }
    Ok(())
}

/// Exact AUC for the constant, linear and log families.
///
/// Linear: `[(t2 - e^{b0+b1 t2}/b1) - (t1 - e^{b0+b1 t1}/b1)] / (t2 - t1)`,
/// reducing to `1 - e^{b0}` when `b1 = 0`. The difference of exponentials is
/// evaluated through `expm1` so the result stays accurate as `b1 -> 0`.
///
/// Log: `1 - e^{b0} (t2^{b1+1} - t1^{b1+1}) / ((b1+1)(t2 - t1))`, defined
/// for `b1 > -1` including `t1 = 0`.
pub fn auc_closed_form(effect: &EffectSpec, t1: f64, t2: f64) -> Result<AucValue> {
    check_interval(t1, t2)?;
    let (b0, b1) = (effect.beta0, effect.beta1);
    let width = t2 - t1;
    let value = match effect.family {
        EffectFamily::Constant => 1.0 - b0.exp(),
        EffectFamily::Linear if b1 == 0.0 => 1.0 - b0.exp(),
        EffectFamily::Linear => {
            let integral_hr = (b0 + b1 * t1).exp() * (b1 * width).exp_m1() / b1;
            1.0 - integral_hr / width
        }
        EffectFamily::Log => {
            if b1 <= -1.0 {
                return Err(Error::Unsupported(format!(
                    "log-family AUC requires beta1 > -1, got {b1}"
                )));
            }
            let k = b1 + 1.0;
            1.0 - b0.exp() * (t2.powf(k) - t1.powf(k)) / (k * width)
        }
        EffectFamily::Sqrt => {
            return Err(Error::Unsupported("no closed-form AUC for the sqrt family; use quadrature".into()))
        }
    };
    Ok(AucValue { t1, t2, value })
}

/// Composite Simpson estimate of the AUC with `n_panels` (even) panels.
///
/// The log and sqrt families have a time term that is not smooth at 0, so
/// they are integrated in `u = sqrt(t)`, where `VE(u^2) 2u` is smooth for
/// sqrt and has only a mild power singularity for log. At `u = 0` the log
/// integrand takes its limit 0, which exists for `beta1 > -1/2`.
pub fn auc_quadrature(curve: &VeCurve, t1: f64, t2: f64, n_panels: usize) -> Result<AucValue> {
    check_interval(t1, t2)?;
    if n_panels < 2 || !n_panels.is_multiple_of(2) {
        return Err(Error::Validation(format!("n_panels must be even and >= 2, got {n_panels}")));
    }
    let effect = &curve.effect;
    let integral = match effect.family {
        EffectFamily::Constant | EffectFamily::Linear => simpson(|t| ve_at(curve, t), t1, t2, n_panels)?,
        EffectFamily::Log | EffectFamily::Sqrt => {
            if effect.family == EffectFamily::Log && t1 == 0.0 && effect.beta1 <= -0.5 {
                return Err(Error::Unsupported(format!(
                    "log-family quadrature from t = 0 requires beta1 > -0.5, got {}; use the closed form",
                    effect.beta1
                )));
            }
            let integrand = |u: f64| -> Result<f64> {
                if u == 0.0 {
                    // 2u (1 - HR(u^2)) -> 0 for both families
                    return Ok(0.0);
                }
                Ok(2.0 * u * ve_at(curve, u * u)?)
            };
            simpson(integrand, t1.sqrt(), t2.sqrt(), n_panels)?
        }
    };
    Ok(AucValue { t1, t2, value: integral / (t2 - t1) })
}

fn simpson(f: impl Fn(f64) -> Result<f64>, a: f64, b: f64, n_panels: usize) -> Result<f64> {
    let h = (b - a) / n_panels as f64;
    let mut sum = f(a)? + f(b)?;
    for i in 1..n_panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h)?;
    }
    Ok(sum * h / 3.0)
}

/// Closed form where one exists, Simpson quadrature otherwise.
pub fn auc(curve: &VeCurve, t1: f64, t2: f64) -> Result<AucValue> {
    match curve.effect.family {
        EffectFamily::Sqrt => auc_quadrature(curve, t1, t2, DEFAULT_PANELS),
        _ => auc_closed_form(&curve.effect, t1, t2),
    }
}

/// AUC of each consecutive interval `[s_{k-1}, s_k]` with `s_k` the running
/// sum of `delta_times` from 0.
pub fn interval_aucs(curve: &VeCurve, delta_times: &[f64]) -> Result<Vec<f64>> {
    if delta_times.is_empty() {
        return Err(Error::Validation("delta_times must not be empty".into()));
    }
    let mut lo = 0.0;
    let mut out = Vec::with_capacity(delta_times.len());
    for &d in delta_times {
        if !d.is_finite() || d <= 0.0 {
            return Err(Error::Validation(format!("interval durations must be > 0, got {d}")));
        }
        let hi = lo + d;
        out.push(auc(curve, lo, hi)?.value);
        lo = hi;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DurationRelation {
    Interpolation,
    Extrapolation,
    SameHorizon,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossDurationAuc {
    pub auc: AucValue,
    pub fitted_horizon: f64,
    pub relation: DurationRelation,
}

/// AUC over `[0, target_horizon]` from a curve fitted on follow-up up to
/// `fitted_horizon`.
pub fn auc_cross_duration(curve: &VeCurve, fitted_horizon: f64, target_horizon: f64) -> Result<CrossDurationAuc> {
    let value = auc(curve, 0.0, target_horizon)?;
    let relation = if target_horizon < fitted_horizon {
        DurationRelation::Interpolation
    } else if target_horizon > fitted_horizon {
        DurationRelation::Extrapolation
    } else {
        DurationRelation::SameHorizon
    };
    Ok(CrossDurationAuc { auc: value, fitted_horizon, relation })
}

/// Percentile bootstrap interval for an AUC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapInterval {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub n_resamples: usize,
    pub n_failed: usize,
}

/// Subject-level nonparametric bootstrap of `AUC_{t1-t2}`.
///
/// Resamples subjects with replacement within the whole dataset, refits the
/// model on each resample and reports the percentile interval at `level`.
/// Resample `b` uses the stream seeded by `(seed, b)`.
#[allow(clippy::too_many_arguments)]
pub fn bootstrap_auc(
    ds: &TrialDataset,
    family: EffectFamily,
    rule: RiskSetRule,
    t1: f64,
    t2: f64,
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<BootstrapInterval> {
    if n_resamples < 2 || !(0.0 < level && level < 1.0) {
        return Err(Error::Validation("bootstrap needs >= 2 resamples and 0 < level < 1".into()));
    }
    let opts = FitOptions::default();
    let point = fit(ds, family, rule, &opts)?;
    let estimate = auc(&VeCurve::new(point.effect()), t1, t2)?.value;
    let subjects = ds.subjects();
    let n = subjects.len();
    let draws: Vec<Option<f64>> = (0..n_resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = SimRng::seed_from_u64(mix_seed(&[seed, b as u64]));
            let sample: Vec<Subject> = (0..n)
                .map(|k| {
                    let s = &subjects[rng.random_range(0..n)];
                    Subject { id: format!("{}#{k}", s.id), ..s.clone() }
                })
                .collect();
            let ds_b = TrialDataset::new(sample).ok()?;
            let f = fit(&ds_b, family, rule, &opts).ok().filter(|f| f.converged)?;
            auc(&VeCurve::new(f.effect()), t1, t2).ok().map(|a| a.value)
        })
        .collect();
    let mut values: Vec<f64> = draws.iter().flatten().copied().collect();
    let n_failed = n_resamples - values.len();
    if values.len() < 2 {
        return Err(Error::Degenerate("too few successful bootstrap fits".into()));
    }
    values.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok(BootstrapInterval {
        estimate,
        lower: quantile(&values, alpha),
        upper: quantile(&values, 1.0 - alpha),
        level,
        n_resamples,
        n_failed,
    })
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(t, VE(t))` on `[start, end]` with spacing `step`; the log family starts
/// at its first positive grid point.
pub fn ve_grid(curve: &VeCurve, start: f64, end: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    if !(step > 0.0) || !(end >= start) || start < 0.0 {
        return Err(Error::Validation("grid needs step > 0 and 0 <= start <= end".into()));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = start + i as f64 * step;
        if t == 0.0 && curve.effect.family == EffectFamily::Log {
            continue;
        }
        out.push((t, ve_at(curve, t)?));
    }
    Ok(out)
}
