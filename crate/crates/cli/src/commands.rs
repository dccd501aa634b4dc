use std::fs::{self, File};
use std::io::{BufReader, Write};
use std::path::Path;

use serde::Serialize;
use vecurve_core::ag_estimator::compare_bic;
use vecurve_core::impact_metrics::nnv_from_value;
use vecurve_core::study_runner::{render_table2, render_table3};
use vecurve_core::trial_data::{read_events_csv, read_incidence_csv, write_events_csv};
use vecurve_core::ve_metrics::{auc_closed_form, auc_cross_duration, auc_quadrature, bootstrap_auc, ve_grid};
use vecurve_core::{
    builtin_scenario, fit, interval_aucs, nca_auc, nca_auc_age, nca_auc_seasonal, nca_by_start_month, nca_sf,
    run_table1_study, simulate_trial, EffectFamily, EffectSpec, Error, FitOptions, IncidenceTable, NcaResult, Result,
    ScenarioSpec, TrialDataset, VeCurve,
};

use crate::output::{open_output, write_json, Provenance};
use crate::{
    AucArgs, AucMethod, Command, CurveArgs, FitArgs, NcaArgs, NcaByStartArgs, NcaVariantArg, SimulateArgs, StudyArgs,
    VeCurveArgs,
};

pub enum Outcome {
    Done,
    /// Output was written but the fit is not a proper maximum.
    NumericalWarning(String),
}

pub fn run(command: Command, argv: &[String]) -> Result<Outcome> {
    match command {
        Command::Simulate(a) => simulate(a, argv),
        Command::Fit(a) => fit_cmd(a, argv),
        Command::Auc(a) => auc_cmd(a, argv),
        Command::Nca(a) => nca_cmd(a, argv),
        Command::VeCurve(a) => ve_curve(a, argv),
        Command::NcaByStart(a) => nca_by_start(a, argv),
        Command::Study(a) => study(a, argv),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_dataset(path: &Path) -> Result<TrialDataset> {
    read_events_csv(open(path)?)
}

fn read_table(path: &Path) -> Result<IncidenceTable> {
    read_incidence_csv(open(path)?)
}

fn simulate(a: SimulateArgs, argv: &[String]) -> Result<Outcome> {
    let mut spec: ScenarioSpec = match (&a.scenario, &a.spec) {
        (Some(id), _) => builtin_scenario(*id)?,
        (None, Some(path)) => serde_json::from_reader(open(path)?)?,
        (None, None) => return Err(Error::Validation("either --scenario or --spec is required".into())),
    };
    if let Some(n) = a.n_per_arm {
        spec.n_per_arm = n;
    }
    let ds = simulate_trial(&spec, a.seed)?;
    let prov = Provenance::new(argv, Some(a.seed), &spec);
    let mut out = open_output(a.out.as_deref())?;
    write_events_csv(&ds, &mut out, &prov.comment_lines())?;
    out.flush()?;
    Ok(Outcome::Done)
}

fn fit_cmd(a: FitArgs, argv: &[String]) -> Result<Outcome> {
    let ds = read_dataset(&a.events)?;
    let rule = a.rule.into();
    let fits = a
        .family
        .families()
        .into_iter()
        .map(|f| fit(&ds, f, rule, &FitOptions::default()))
        .collect::<Result<Vec<_>>>()?;
    let prov = Provenance::new(argv, None, &a);
    let warnings: Vec<String> = fits
        .iter()
        .filter(|f| !f.converged)
        .map(|f| format!("{} fit: {}", f.family, f.warning.as_deref().unwrap_or("not converged")))
        .collect();
    if fits.len() == 1 {
        write_json(a.out.as_deref(), &fits[0], &prov)?;
    } else {
        #[derive(Serialize)]
        struct Comparison<'a> {
            fits: &'a [vecurve_core::FitResult],
            bic_comparison: vecurve_core::BicComparison,
        }
        let bic_comparison = compare_bic(&fits)?;
        write_json(a.out.as_deref(), Comparison { fits: &fits, bic_comparison }, &prov)?;
    }
    Ok(if warnings.is_empty() { Outcome::Done } else { Outcome::NumericalWarning(warnings.join("; ")) })
}

/// Family and coefficients of a single fit saved by `fit`.
#[derive(serde::Deserialize)]
struct SavedFit {
    family: EffectFamily,
    coef: Vec<f64>,
}

fn load_curve(c: &CurveArgs) -> Result<EffectSpec> {
    if let Some(path) = &c.fit {
        let text = read_text(path)?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("fits").is_some() {
            return Err(Error::Validation(format!(
                "{} holds several fits; refit a single family",
                path.display()
            )));
        }
        let saved: SavedFit = serde_json::from_value(value)?;
        return EffectSpec::from_coefs(saved.family, &saved.coef);
    }
    let (Some(family), Some(b0)) = (c.family, c.beta0) else {
        return Err(Error::Validation("a VE curve is required: --fit FILE or --family with --beta0/--beta1".into()));
    };
    let family: EffectFamily = family.into();
    match (family, c.beta1) {
        (EffectFamily::Constant, None) => Ok(EffectSpec::constant(b0)),
        (EffectFamily::Constant, Some(_)) => Err(Error::Validation("the constant family takes no --beta1".into())),
        (_, None) => Err(Error::Validation(format!("the {family} family needs --beta1"))),
        (_, Some(b1)) => EffectSpec::from_coefs(family, &[b0, b1]),
    }
}

fn auc_cmd(a: AucArgs, argv: &[String]) -> Result<Outcome> {
    let effect = load_curve(&a.curve)?;
    let curve = VeCurve::new(effect);
    let value = match a.method {
        AucMethod::Auto => vecurve_core::auc(&curve, a.t1, a.t2)?,
        AucMethod::ClosedForm => auc_closed_form(&effect, a.t1, a.t2)?,
        AucMethod::Quadrature => auc_quadrature(&curve, a.t1, a.t2, a.panels)?,
    };
    let relation = match a.fitted_horizon {
        Some(h) if a.t1 == 0.0 => Some(auc_cross_duration(&curve, h, a.t2)?.relation),
        Some(_) => return Err(Error::Validation("--fitted-horizon applies to intervals starting at 0".into())),
        None => None,
    };
    let bootstrap = match &a.bootstrap_events {
        Some(path) => {
            let ds = read_dataset(path)?;
            let rule = saved_rule(a.curve.fit.as_deref().expect("clap enforces --fit"))?;
            Some(bootstrap_auc(&ds, effect.family, rule, a.t1, a.t2, a.resamples, a.level, a.seed)?)
        }
        None => None,
    };

    #[derive(Serialize)]
    struct AucOut {
        effect: EffectSpec,
        t1: f64,
        t2: f64,
        value: f64,
        percent: String,
        #[serde(skip_serializing_if = "Option::is_none")]
        relation: Option<vecurve_core::ve_metrics::DurationRelation>,
        #[serde(skip_serializing_if = "Option::is_none")]
        bootstrap: Option<vecurve_core::ve_metrics::BootstrapInterval>,
    }
    let seed = a.bootstrap_events.as_ref().map(|_| a.seed);
    let prov = Provenance::new(argv, seed, &a);
    let out = AucOut {
        effect,
        t1: value.t1,
        t2: value.t2,
        value: value.value,
        percent: format!("{:.1}", value.percent()),
        relation,
        bootstrap,
    };
    write_json(a.out.as_deref(), out, &prov)?;
    Ok(Outcome::Done)
}

fn saved_rule(path: &Path) -> Result<vecurve_core::RiskSetRule> {
    #[derive(serde::Deserialize)]
    struct Rule {
        rule: vecurve_core::RiskSetRule,
    }
    let r: Rule = serde_json::from_str(&read_text(path)?)?;
    Ok(r.rule)
}

/// Monthly AUCs over the first year, paired with calendar tables.
fn monthly_aucs(c: &CurveArgs) -> Result<Vec<f64>> {
    interval_aucs(&VeCurve::new(load_curve(c)?), &[1.0; 12])
}

fn nca_cmd(a: NcaArgs, argv: &[String]) -> Result<Outcome> {
    let table = read_table(&a.incidence)?;
    let result: NcaResult = match a.variant {
        NcaVariantArg::Sf => nca_sf(&table)?,
        NcaVariantArg::Auc => {
            let aucs = interval_aucs(&VeCurve::new(load_curve(&a.curve)?), &table.delta_times())?;
            nca_auc(&aucs, &table)?
        }
        NcaVariantArg::AucSeason => {
            let s = a.s.ok_or_else(|| Error::Validation("--s is required for auc-season".into()))?;
            nca_auc_seasonal(&monthly_aucs(&a.curve)?, &table, s)?
        }
        NcaVariantArg::AucAge => nca_auc_age(&monthly_aucs(&a.curve)?, &table)?,
    };

    #[derive(Serialize)]
    struct NcaOut {
        #[serde(flatten)]
        nca: NcaResult,
        unit: String,
        rounded: i64,
        #[serde(skip_serializing_if = "Option::is_none")]
        nnv_per_1000_cases: Option<f64>,
    }
    let nnv = nnv_from_value(result.value).ok().map(|v| 1000.0 * v);
    let prov = Provenance::new(argv, None, &a);
    let out = NcaOut {
        unit: result.unit_label(),
        rounded: result.value.round() as i64,
        nnv_per_1000_cases: nnv,
        nca: result,
    };
    write_json(a.out.as_deref(), out, &prov)?;
    Ok(Outcome::Done)
}

fn ve_curve(a: VeCurveArgs, argv: &[String]) -> Result<Outcome> {
    let curve = VeCurve::new(load_curve(&a.curve)?);
    let grid = ve_grid(&curve, a.start, a.horizon, a.step)?;
    let prov = Provenance::new(argv, None, &a);
    let mut out = open_output(a.out.as_deref())?;
    for line in prov.comment_lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "t,ve")?;
    for (t, ve) in grid {
        writeln!(out, "{t},{ve}")?;
    }
    out.flush()?;
    Ok(Outcome::Done)
}

fn nca_by_start(a: NcaByStartArgs, argv: &[String]) -> Result<Outcome> {
    let table = read_table(&a.incidence)?;
    let all = nca_by_start_month(&monthly_aucs(&a.curve)?, &table)?;
    let prov = Provenance::new(argv, None, &a);
    let mut out = open_output(a.out.as_deref())?;
    for line in prov.comment_lines() {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "start_month,nca")?;
    for r in all {
        writeln!(out, "{},{}", r.s.unwrap_or_default(), r.value)?;
    }
    out.flush()?;
    Ok(Outcome::Done)
}

/// Parse `1-8`, `2`, `1,3,5-6`.
pub fn parse_scenarios(list: &str) -> Result<Vec<u8>> {
    let bad = || Error::Validation(format!("invalid scenario list {list:?}; expected e.g. 1-8 or 1,3,5"));
    let mut ids = Vec::new();
    for part in list.split(',').map(str::trim) {
        let (lo, hi) = match part.split_once('-') {
            Some((lo, hi)) => (lo.trim().parse::<u8>().map_err(|_| bad())?, hi.trim().parse::<u8>().map_err(|_| bad())?),
            None => {
                let id = part.parse::<u8>().map_err(|_| bad())?;
                (id, id)
            }
        };
        if lo > hi {
            return Err(bad());
        }
        for id in lo..=hi {
            if !(1..=8).contains(&id) {
                return Err(Error::Validation(format!("unknown scenario {id}; built-in ids are 1..=8")));
            }
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    Ok(ids)
}

fn study(a: StudyArgs, argv: &[String]) -> Result<Outcome> {
    let ids = parse_scenarios(&a.scenarios)?;
    if a.replicates == 0 {
        return Err(Error::Validation("--replicates must be >= 1".into()));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        if j == 0 {
            return Err(Error::Validation("--jobs must be >= 1".into()));
        }
        pool = pool.num_threads(j);
    }
    let pool = pool.build().map_err(|e| Error::Internal(e.to_string()))?;
    let summaries = pool.install(|| run_table1_study(&ids, a.replicates, a.seed))?;

    let prov = Provenance::new(argv, Some(a.seed), &a);
    let mut tables = String::new();
    for line in prov.comment_lines() {
        tables.push_str(&format!("# {line}\n"));
    }
    tables.push_str(&render_table2(&summaries));
    tables.push('\n');
    tables.push_str(&render_table3(&summaries));

    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
        for s in &summaries {
            write_json(Some(&dir.join(format!("scenario_{}.json", s.scenario_id))), s, &prov)?;
        }
        fs::write(dir.join("tables.txt"), &tables)?;
    }
    let mut out = open_output(None)?;
    out.write_all(tables.as_bytes())?;
    out.flush()?;

    let flagged: Vec<String> = summaries.iter().filter(|s| s.flagged).map(|s| s.scenario_id.to_string()).collect();
    Ok(if flagged.is_empty() {
        Outcome::Done
    } else {
        Outcome::NumericalWarning(format!("more than 1% failed fits in scenarios {}", flagged.join(",")))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_lists() {
        assert_eq!(parse_scenarios("1-8").unwrap(), (1..=8).collect::<Vec<_>>());
        assert_eq!(parse_scenarios("1,3,5-6").unwrap(), vec![1, 3, 5, 6]);
        assert_eq!(parse_scenarios("2").unwrap(), vec![2]);
        assert!(parse_scenarios("0-3").is_err());
        assert!(parse_scenarios("5-2").is_err());
        assert!(parse_scenarios("a").is_err());
        assert!(parse_scenarios("9").is_err());
    }
}
