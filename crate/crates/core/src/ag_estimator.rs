//! Stratified Cox-type partial likelihood for recurrent events.
//!
//! The only covariate is the arm indicator `z`, entered either as a constant
//! effect (`x = z`) or together with a time interaction (`x = (z, g(t) z)`).
//! Under the Andersen-Gill rule a subject stays in the risk set after each
//! event until censoring; under the first-event rule a subject leaves the
//! risk set at their first event and later events are ignored. Ties use the
//! Breslow convention.
//!
//! Because every subject in an arm shares the same covariate value at a given
//! time, the risk-set sum reduces to `N0(t) + N1(t) exp(f(t))` where `Na(t)`
//! counts at-risk subjects of arm `a` in the stratum. [`fit`] and friends use
//! that reduction; [`log_partial_likelihood_reference`] evaluates the
//! subject-by-subject sum directly and serves as a cross-check.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::effect::{EffectFamily, EffectSpec};
use crate::error::{Error, Result};
use crate::trial_data::{Arm, Subject, TrialDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskSetRule {
    /// Andersen-Gill: at risk until censoring regardless of past events.
    Ag,
    /// Cox time-to-first-event: removed from the risk set after the first event.
    FirstEvent,
}

impl std::str::FromStr for RiskSetRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ag" => Ok(RiskSetRule::Ag),
            "first_event" | "first" | "cox" => Ok(RiskSetRule::FirstEvent),
            other => Err(Error::Validation(format!("unknown risk-set rule '{other}'"))),
        }
    }
}

impl std::fmt::Display for RiskSetRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RiskSetRule::Ag => "ag",
            RiskSetRule::FirstEvent => "first_event",
        })
    }
}

/// Events counted in the likelihood and the time the subject leaves the risk set.
fn subject_events(s: &Subject, rule: RiskSetRule) -> (&[f64], f64) {
    match rule {
        RiskSetRule::Ag => (&s.event_times, s.censor_time),
        RiskSetRule::FirstEvent => match s.event_times.first() {
            Some(&t) => (&s.event_times[..1], t),
            None => (&[], s.censor_time),
        },
    }
}

fn group_by_stratum(ds: &TrialDataset) -> Vec<Vec<&Subject>> {
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<Vec<&Subject>> = Vec::new();
    for s in ds.subjects() {
        let k = *index.entry(s.stratum.as_str()).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[k].push(s);
    }
    groups
}

/// Distinct event times of one stratum with per-arm event and at-risk counts.
#[derive(Debug, Clone)]
struct StratumRisk {
    times: Vec<f64>,
    g: Vec<f64>,
    events: [Vec<f64>; 2],
    at_risk: [Vec<f64>; 2],
}

#[derive(Debug, Clone)]
struct SubjectRisk {
    stratum: usize,
    arm: Arm,
    /// Number of the stratum's event times at which the subject is at risk.
    n_at_risk_times: usize,
    event_slots: Vec<usize>,
}

/// Dataset reduced to the sufficient counts for one family and rule.
#[derive(Debug, Clone)]
struct RiskSets {
    family: EffectFamily,
    strata: Vec<StratumRisk>,
    subjects: Vec<SubjectRisk>,
    n_events: usize,
    events_by_arm: [usize; 2],
}

impl RiskSets {
    fn build(ds: &TrialDataset, family: EffectFamily, rule: RiskSetRule) -> Result<Self> {
        let mut strata = Vec::new();
        let mut subjects = Vec::with_capacity(ds.len());
        let mut n_events = 0;
        let mut events_by_arm = [0usize; 2];
        for (si, group) in group_by_stratum(ds).into_iter().enumerate() {
            let mut times: Vec<f64> = group
                .iter()
                .flat_map(|s| subject_events(s, rule).0.iter().copied())
                .collect();
            times.sort_by(f64::total_cmp);
            times.dedup();
            let g = times.iter().map(|&t| family.time_term(t)).collect::<Result<Vec<_>>>()?;

            let mut exits: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
            let mut events = [vec![0.0; times.len()], vec![0.0; times.len()]];
            for s in &group {
                let (ev, exit) = subject_events(s, rule);
                let a = s.arm.index();
                exits[a].push(exit);
                let slots: Vec<usize> = ev
                    .iter()
                    .map(|t| times.binary_search_by(|x| x.total_cmp(t)).expect("event time indexed"))
                    .collect();
                for &j in &slots {
                    events[a][j] += 1.0;
                }
                n_events += slots.len();
                events_by_arm[a] += slots.len();
                subjects.push(SubjectRisk {
                    stratum: si,
                    arm: s.arm,
                    n_at_risk_times: times.partition_point(|&t| t <= exit),
                    event_slots: slots,
                });
            }
            let arm_present = [!exits[0].is_empty(), !exits[1].is_empty()];
            let at_risk = exits.map(|mut e| {
                e.sort_by(f64::total_cmp);
                times
                    .iter()
                    .map(|&t| (e.len() - e.partition_point(|&x| x < t)) as f64)
                    .collect::<Vec<_>>()
            });
            let stratum_events = events[0].iter().sum::<f64>() + events[1].iter().sum::<f64>();
            if stratum_events > 0.0 && arm_present.contains(&false) {
                return Err(Error::Validation(format!(
                    "stratum '{}' has events but lacks one of the arms",
                    group[0].stratum
                )));
            }
            strata.push(StratumRisk { times, g, events, at_risk });
        }
        Ok(Self { family, strata, subjects, n_events, events_by_arm })
    }

    fn p(&self) -> usize {
        self.family.n_params()
    }

    fn covariate(&self, g: f64) -> [f64; 2] {
        match self.family {
            EffectFamily::Constant => [1.0, 0.0],
            _ => [1.0, g],
        }
    }

    fn eta(&self, coefs: &[f64], g: f64) -> f64 {
        match self.family {
            EffectFamily::Constant => coefs[0],
            _ => coefs[0] + coefs[1] * g,
        }
    }

    /// `ln(N0 + N1 e^eta)` and the vaccine share `N1 e^eta / (N0 + N1 e^eta)`.
    fn log_denominator(n0: f64, n1: f64, eta: f64) -> Result<(f64, f64)> {
        match (n0 > 0.0, n1 > 0.0) {
            (false, false) => Err(Error::Degenerate("event time with empty risk set".into())),
            (true, false) => Ok((n0.ln(), 0.0)),
            (false, true) => Ok((n1.ln() + eta, 1.0)),
            (true, true) => {
                let (a, b) = (n0.ln(), n1.ln() + eta);
                let m = a.max(b);
                let lse = m + ((a - m).exp() + (b - m).exp()).ln();
                Ok((lse, (b - lse).exp()))
            }
        }
    }

    fn loglik(&self, coefs: &[f64]) -> Result<f64> {
        let mut ll = 0.0;
        for st in &self.strata {
            for j in 0..st.times.len() {
                let eta = self.eta(coefs, st.g[j]);
                let (ln_s0, _) = Self::log_denominator(st.at_risk[0][j], st.at_risk[1][j], eta)?;
                let (d0, d1) = (st.events[0][j], st.events[1][j]);
                ll += d1 * eta - (d0 + d1) * ln_s0;
            }
        }
        Ok(ll)
    }

    fn derivatives(&self, coefs: &[f64]) -> Result<Derivatives> {
        let p = self.p();
        let mut ll = 0.0;
        let mut score = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for st in &self.strata {
            for j in 0..st.times.len() {
                let eta = self.eta(coefs, st.g[j]);
                let (ln_s0, share) = Self::log_denominator(st.at_risk[0][j], st.at_risk[1][j], eta)?;
                let (d0, d1) = (st.events[0][j], st.events[1][j]);
                let d = d0 + d1;
                ll += d1 * eta - d * ln_s0;
                let x = self.covariate(st.g[j]);
                let v = d * share * (1.0 - share);
                for r in 0..p {
                    score[r] += (d1 - d * share) * x[r];
                    for c in 0..p {
                        info[(r, c)] += v * x[r] * x[c];
                    }
                }
            }
        }
        Ok(Derivatives { loglik: ll, score, information: info })
    }

    /// Per-subject score residuals `int (x_i(t) - xbar(t)) dM_i(t)`.
    fn score_residuals(&self, coefs: &[f64]) -> Result<Vec<DVector<f64>>> {
        let p = self.p();
        // at_event[a][j]: residual increment for an own event of arm a at slot j
        // prefix[a][j]: compensator part accumulated over slots < j
        let mut per_stratum = Vec::with_capacity(self.strata.len());
        for st in &self.strata {
            let n = st.times.len();
            let mut at_event = [Vec::with_capacity(n), Vec::with_capacity(n)];
            let mut prefix = [vec![DVector::zeros(p)], vec![DVector::zeros(p)]];
            for j in 0..n {
                let eta = self.eta(coefs, st.g[j]);
                let (ln_s0, share) = Self::log_denominator(st.at_risk[0][j], st.at_risk[1][j], eta)?;
                let d = st.events[0][j] + st.events[1][j];
                let xv = DVector::from_column_slice(&self.covariate(st.g[j])[..p]);
                // x_a - xbar for each arm
                let diff0 = &xv * (-share);
                let diff1 = &xv * (1.0 - share);
                let hazard0 = d * (-ln_s0).exp();
                let hazard1 = d * (eta - ln_s0).exp();
                let next0 = &prefix[0][j] - &diff0 * hazard0;
                let next1 = &prefix[1][j] - &diff1 * hazard1;
                prefix[0].push(next0);
                prefix[1].push(next1);
                at_event[0].push(diff0);
                at_event[1].push(diff1);
            }
            per_stratum.push((at_event, prefix));
        }
        Ok(self
            .subjects
            .iter()
            .map(|s| {
                let (at_event, prefix) = &per_stratum[s.stratum];
                let a = s.arm.index();
                let mut r = prefix[a][s.n_at_risk_times].clone();
                for &j in &s.event_slots {
                    r += &at_event[a][j];
                }
                r
            })
            .collect())
    }
}

/// Log partial likelihood with its analytic gradient and observed information.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub loglik: f64,
    pub score: DVector<f64>,
    /// Negative Hessian.
    pub information: DMatrix<f64>,
}

fn check_coefs(family: EffectFamily, coefs: &[f64]) -> Result<()> {
    EffectSpec::from_coefs(family, coefs).map(|_| ())
}

/// Log partial likelihood at `coefs` (one per family parameter).
pub fn log_partial_likelihood(ds: &TrialDataset, family: EffectFamily, coefs: &[f64], rule: RiskSetRule) -> Result<f64> {
    check_coefs(family, coefs)?;
    RiskSets::build(ds, family, rule)?.loglik(coefs)
}

/// Gradient and observed information of the log partial likelihood.
pub fn score_and_information(ds: &TrialDataset, family: EffectFamily, coefs: &[f64], rule: RiskSetRule) -> Result<Derivatives> {
    check_coefs(family, coefs)?;
    RiskSets::build(ds, family, rule)?.derivatives(coefs)
}

/// Log partial likelihood computed by summing `exp(x_k(t) beta)` over every
/// at-risk subject at every event time. Quadratic in the data size; used to
/// validate the count-based evaluation.
pub fn log_partial_likelihood_reference(
    ds: &TrialDataset,
    family: EffectFamily,
    coefs: &[f64],
    rule: RiskSetRule,
) -> Result<f64> {
    let effect = EffectSpec::from_coefs(family, coefs)?;
    let lin = |s: &Subject, t: f64| -> Result<f64> {
        Ok(match s.arm {
            Arm::Control => 0.0,
            Arm::Vaccine => effect.log_hr(t)?,
        })
    };
    let mut ll = 0.0;
    for group in group_by_stratum(ds) {
        let mut times: Vec<f64> = group.iter().flat_map(|s| subject_events(s, rule).0.to_vec()).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        for &t in &times {
            let mut denom = 0.0;
            let mut numer = 0.0;
            let mut d = 0.0;
            for s in &group {
                let (ev, exit) = subject_events(s, rule);
                if exit >= t {
                    denom += lin(s, t)?.exp();
                }
                if ev.contains(&t) {
                    numer += lin(s, t)?;
                    d += 1.0;
                }
            }
            if denom <= 0.0 {
                return Err(Error::Degenerate(format!("empty risk set at t = {t}")));
            }
            ll += numer - d * denom.ln();
        }
    }
    Ok(ll)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Relative change in log likelihood below which iteration may stop.
    pub loglik_rel_tol: f64,
    /// Max-norm of the score required for convergence.
    pub score_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 50, max_halvings: 20, loglik_rel_tol: 1e-9, score_tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub family: EffectFamily,
    pub rule: RiskSetRule,
    pub coef: Vec<f64>,
    pub se_model: Vec<f64>,
    pub se_robust: Vec<f64>,
    pub cov_model: Vec<Vec<f64>>,
    pub cov_robust: Vec<Vec<f64>>,
    pub loglik: f64,
    pub bic: f64,
    pub n_events: usize,
    pub n_subjects: usize,
    pub n_strata: usize,
    pub iterations: usize,
    pub converged: bool,
    pub max_abs_score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl FitResult {
    pub fn effect(&self) -> EffectSpec {
        EffectSpec::from_coefs(self.family, &self.coef).expect("fitted coefficients are finite")
    }

    /// VE = 1 - exp(beta) for a constant-effect fit.
    pub fn ve(&self) -> Option<f64> {
        (self.family == EffectFamily::Constant).then(|| 1.0 - self.coef[0].exp())
    }

    /// 95% interval for constant VE, `1 - exp(beta -/+ 1.96 SE)`, using the
    /// robust or model-based standard error.
    pub fn ve_interval(&self, robust: bool) -> Option<(f64, f64)> {
        if self.family != EffectFamily::Constant {
            return None;
        }
        let se = if robust { self.se_robust[0] } else { self.se_model[0] };
        let b = self.coef[0];
        Some((1.0 - (b + 1.96 * se).exp(), 1.0 - (b - 1.96 * se).exp()))
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Maximize the partial likelihood by Newton-Raphson from zero with step
/// halving.
///
/// If one arm has no events the likelihood is monotone and has no finite
/// maximizer; the last iterate is returned with `converged = false` and a
/// warning rather than an error.
pub fn fit(ds: &TrialDataset, family: EffectFamily, rule: RiskSetRule, options: &FitOptions) -> Result<FitResult> {
    let rs = RiskSets::build(ds, family, rule)?;
    if rs.n_events == 0 {
        return Err(Error::Degenerate("no events to fit".into()));
    }
    let separated = rs.events_by_arm.contains(&0);
    let p = rs.p();
    let mut beta = DVector::zeros(p);
    let mut cur = rs.derivatives(beta.as_slice())?;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < options.max_iter {
        iterations += 1;
        let step = cur
            .information
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Degenerate("information matrix is not positive definite".into()))?
            .solve(&cur.score);
        let mut scale = 1.0;
        let mut next_beta = &beta + &step;
        let mut next = rs.derivatives(next_beta.as_slice())?;
        let mut halvings = 0;
        while !(next.loglik >= cur.loglik - 1e-12 * cur.loglik.abs()) && halvings < options.max_halvings {
            halvings += 1;
            scale *= 0.5;
            next_beta = &beta + &step * scale;
            next = rs.derivatives(next_beta.as_slice())?;
        }
        let rel_change = (next.loglik - cur.loglik).abs() / cur.loglik.abs().max(f64::MIN_POSITIVE);
        beta = next_beta;
        cur = next;
        if rel_change < options.loglik_rel_tol && cur.score.amax() < options.score_tol {
            converged = true;
            break;
        }
    }

    let max_abs_score = cur.score.amax();
    let warning = if separated {
        converged = false;
        Some("monotone likelihood: one arm has no events; coefficients diverge".to_string())
    } else if !converged {
        return Err(Error::NonConvergence { iterations, coef: beta.as_slice().to_vec() });
    } else {
        None
    };

    let (cov_model, cov_robust) = match cur.information.clone().cholesky() {
        Some(ch) => {
            let inv = symmetrize(ch.inverse());
            let residuals = rs.score_residuals(beta.as_slice())?;
            let mut meat = DMatrix::zeros(p, p);
            for r in &residuals {
                meat += r * r.transpose();
            }
            let robust = symmetrize(&inv * meat * &inv);
            (inv, robust)
        }
        None if separated => (
            DMatrix::from_element(p, p, f64::NAN),
            DMatrix::from_element(p, p, f64::NAN),
        ),
        None => return Err(Error::Degenerate("singular information at the optimum".into())),
    };
    let se = |m: &DMatrix<f64>| (0..p).map(|i| m[(i, i)].max(0.0).sqrt()).collect::<Vec<_>>();

    Ok(FitResult {
        family,
        rule,
        coef: beta.as_slice().to_vec(),
        se_model: se(&cov_model),
        se_robust: se(&cov_robust),
        cov_model: to_rows(&cov_model),
        cov_robust: to_rows(&cov_robust),
        loglik: cur.loglik,
        bic: bic(cur.loglik, p, rs.n_events),
        n_events: rs.n_events,
        n_subjects: ds.len(),
        n_strata: rs.strata.len(),
        iterations,
        converged,
        max_abs_score,
        warning,
    })
}

/// `-2 loglik + p ln(n_events)`.
pub fn bic(loglik: f64, n_params: usize, n_events: usize) -> f64 {
    -2.0 * loglik + n_params as f64 * (n_events as f64).ln()
}

/// Fits ordered by ascending BIC.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BicComparison {
    /// Indices into the input, best (lowest BIC) first.
    pub ranking: Vec<usize>,
    pub bic: Vec<f64>,
    /// `delta[i][j] = bic[i] - bic[j]`.
    pub delta: Vec<Vec<f64>>,
}

impl BicComparison {
    pub fn best(&self) -> usize {
        self.ranking[0]
    }
}

/// Rank fits of the same data and risk-set rule by BIC.
pub fn compare_bic(fits: &[FitResult]) -> Result<BicComparison> {
    let first = fits.first().ok_or_else(|| Error::Validation("no fits to compare".into()))?;
    for f in &fits[1..] {
        if f.rule != first.rule || f.n_events != first.n_events || f.n_subjects != first.n_subjects {
            return Err(Error::Validation(
                "BIC comparison requires fits of the same dataset and risk-set rule".into(),
            ));
        }
    }
    let bic: Vec<f64> = fits.iter().map(|f| f.bic).collect();
    let mut ranking: Vec<usize> = (0..fits.len()).collect();
    ranking.sort_by(|&a, &b| bic[a].total_cmp(&bic[b]));
    let delta = bic.iter().map(|a| bic.iter().map(|b| a - b).collect()).collect();
    Ok(BicComparison { ranking, bic, delta })
}
