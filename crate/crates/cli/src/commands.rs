use std::fs::File;

use omega_core::bayes::{sample_posterior, SamplerControl};
use omega_core::diagnostics::{
    influence, information_criteria, krippendorff_alpha_bootstrap, simulate, CoderRef, InfluenceRow,
};
use omega_core::fit::{fit, ConfintKind, FitOptions, FitResult};
use omega_core::{Level, Method, ScoreMatrix};

use crate::report::{Convergence, Dataset, Report, Row, Table};
use crate::{AlphaArgs, BayesArgs, Command, Common, Failure, FitArgs, InfluenceArgs};

type Outcome = Result<(Report, Option<Failure>), Failure>;

pub fn run(command: &Command, common: &Common, call: String) -> Outcome {
    let mut report = Report::new(call);
    let data = load(common)?;
    match command {
        Command::Fit(a) => run_fit(&mut report, &data, a, common.seed),
        Command::Bayes(a) => run_bayes(&mut report, &data, a, common.seed),
        Command::Simulate(a) => run_simulate(&mut report, &data, a, common.seed),
        Command::Influence(a) => run_influence(&mut report, &data, a, common.seed),
        Command::Alpha(a) => run_alpha(&mut report, &data, a, common.seed),
    }
    .map(|failure| (report, failure))
}

fn load(common: &Common) -> Result<ScoreMatrix, Failure> {
    let path = common
        .input
        .as_ref()
        .ok_or_else(|| Failure::Config("--input is required".into()))?;
    let level: Level = common.level.parse()?;
    let file = File::open(path).map_err(|e| Failure::Data(format!("cannot read {}: {e}", path.display())))?;
    Ok(ScoreMatrix::from_csv(file, level)?)
}

fn fit_options(a: &FitArgs, seed: u64) -> Result<FitOptions, Failure> {
    Ok(FitOptions {
        method: a.method.as_deref().map(str::parse::<Method>).transpose()?,
        family: a.dist.as_deref().map(str::parse).transpose()?,
        confint: a.confint.parse()?,
        n_boot: Some(a.bootit),
        boot_interval: a.interval.parse()?,
        ecdf: a.ecdf.parse()?,
        seed,
        ..Default::default()
    })
}

fn threads() -> String {
    rayon::current_num_threads().to_string()
}

fn convergence(f: &FitResult) -> Convergence {
    Convergence {
        converged: f.converged,
        objective: f.objective_value,
        iterations: f.iterations,
        message: f.message.clone(),
    }
}

fn describe_fit(report: &mut Report, f: &FitResult, a: &FitArgs, seed: u64) {
    report.convergence = Some(convergence(f));
    report.set("method", f.method);
    report.set("dist", f.family);
    report.set("confint", f.options().confint);
    if f.options().confint != ConfintKind::None {
        report.set("bootit", a.bootit);
    }
    if f.options().confint == ConfintKind::Bootstrap {
        report.set("interval", f.options().boot_interval);
    }
    report.set("seed", seed);
    report.set("threads", threads());
}

fn run_fit(report: &mut Report, data: &ScoreMatrix, a: &FitArgs, seed: u64) -> Result<Option<Failure>, Failure> {
    let opts = fit_options(a, seed)?;
    let f = fit(data, &opts)?;
    describe_fit(report, &f, a, seed);
    let with_ci = f.intervals.is_some();
    let mut columns = vec!["Estimate".to_string()];
    if with_ci {
        columns.extend(["Lower".to_string(), "Upper".to_string()]);
    }
    report.tables.push(Table {
        title: "Coefficients".into(),
        columns,
        rows: f
            .coefficients()
            .into_iter()
            .map(|c| Row {
                name: c.name,
                values: if with_ci {
                    vec![Some(c.estimate), c.lower, c.upper]
                } else {
                    vec![Some(c.estimate)]
                },
            })
            .collect(),
    });
    if let Some(b) = &f.bootstrap {
        report.tables.push(Table {
            title: "Bootstrap draws".into(),
            columns: vec!["SD".into(), "MCSE".into()],
            rows: f
                .names()
                .into_iter()
                .enumerate()
                .map(|(j, name)| Row {
                    name,
                    values: vec![Some(b.sd[j]), Some(b.mcse[j])],
                })
                .collect(),
        });
        report.scalar("Replicates used", (b.requested - b.dropped) as f64);
    }
    if let Some(i) = f.intervals.as_ref().and_then(|i| i.sandwich_replicates) {
        report.scalar("Sandwich replicates used", i as f64);
    }
    if let Ok(ic) = information_criteria(&f) {
        report.scalar("AIC", ic.aic);
        report.scalar("BIC", ic.bic);
    }
    report.notes.extend(f.warnings.iter().cloned());
    Ok(f.interval_error.clone().map(Failure::from))
}

fn run_bayes(report: &mut Report, data: &ScoreMatrix, a: &BayesArgs, seed: u64) -> Result<Option<Failure>, Failure> {
    let control = SamplerControl {
        family: a.dist.parse()?,
        minit: a.minit,
        maxit: a.maxit,
        tol: a.tol,
        sigma1: a.sigma1,
        sigma2: a.sigma2,
        sigma_omega: a.sigma_omega.clone(),
    };
    let r = sample_posterior(data, &control, seed)?;
    report.samples = Some(r.draws_taken);
    report.set("dist", control.family);
    report.set("minit", control.minit);
    report.set("maxit", control.maxit);
    report.set("tol", control.tol);
    report.set("sigma.1", control.sigma1);
    report.set("sigma.2", control.sigma2);
    let so: Vec<String> = control.validate(r.acceptance_len_omega())?.iter().map(f64::to_string).collect();
    report.set("sigma.omega", so.join(","));
    report.set("seed", seed);
    report.tables.push(Table {
        title: "Coefficients".into(),
        columns: ["Estimate", "Lower", "Upper", "MCSE"].map(String::from).to_vec(),
        rows: r
            .names
            .iter()
            .enumerate()
            .map(|(j, n)| Row {
                name: n.clone(),
                values: vec![Some(r.means[j]), Some(r.lower[j]), Some(r.upper[j]), Some(r.mcse[j])],
            })
            .collect(),
    });
    let n_omega = r.acceptance_len_omega();
    let mut acc = vec![Row {
        name: "omega".into(),
        values: vec![Some(r.acceptance.omega)],
    }];
    acc.extend(r.names[n_omega..].iter().zip(&r.acceptance.psi).map(|(n, &v)| Row {
        name: n.clone(),
        values: vec![Some(v)],
    }));
    report.tables.push(Table {
        title: "Acceptance rates".into(),
        columns: vec!["Rate".into()],
        rows: acc,
    });
    if let Some(d) = r.dic {
        report.scalar("DIC", d);
    }
    report.notes.extend(r.warnings.iter().cloned());
    if let Some(path) = &a.draws {
        let file = File::create(path).map_err(|e| Failure::Config(format!("cannot write {}: {e}", path.display())))?;
        r.write_draws(file)?;
    }
    Ok(None)
}

trait OmegaCount {
    fn acceptance_len_omega(&self) -> usize;
}

impl OmegaCount for omega_core::bayes::PosteriorResult {
    fn acceptance_len_omega(&self) -> usize {
        self.names.len() - self.acceptance.psi.len()
    }
}

fn run_simulate(report: &mut Report, data: &ScoreMatrix, a: &FitArgs, seed: u64) -> Result<Option<Failure>, Failure> {
    let mut opts = fit_options(a, seed)?;
    opts.confint = ConfintKind::None;
    let f = fit(data, &opts)?;
    describe_fit(report, &f, a, seed);
    let sim = simulate(&f, seed)?;
    report.data = Some(Dataset {
        labels: sim.labels().iter().map(|l| l.to_string()).collect(),
        rows: sim.embed_original(),
    });
    Ok(None)
}

fn parse_coder(s: &str) -> Result<CoderRef, Failure> {
    let bad = || Failure::Config(format!("cannot read coder {s:?}; use N or mM.N"));
    let (method, coder) = match s.strip_prefix('m') {
        Some(rest) => rest.split_once('.').ok_or_else(bad)?,
        None => ("1", s),
    };
    Ok(CoderRef {
        method: method.parse().map_err(|_| bad())?,
        coder: coder.parse().map_err(|_| bad())?,
    })
}

fn influence_table(title: &str, names: &[String], rows: &[InfluenceRow], notes: &mut Vec<String>) -> Table {
    Table {
        title: title.into(),
        columns: names.to_vec(),
        rows: rows
            .iter()
            .map(|r| {
                if let Some(e) = &r.error {
                    notes.push(format!("{} {}: {e}", title, r.entity));
                }
                Row {
                    name: r.entity.clone(),
                    values: match &r.dfbeta {
                        Some(d) => d.iter().map(|&v| Some(v)).collect(),
                        None => vec![None; names.len()],
                    },
                }
            })
            .collect(),
    }
}

fn run_influence(
    report: &mut Report,
    data: &ScoreMatrix,
    a: &InfluenceArgs,
    seed: u64,
) -> Result<Option<Failure>, Failure> {
    if a.units.is_empty() && a.coders.is_empty() {
        return Err(Failure::Config("give --units and/or --coders".into()));
    }
    let coders = a.coders.iter().map(|c| parse_coder(c)).collect::<Result<Vec<_>, _>>()?;
    let mut opts = fit_options(&a.fit, seed)?;
    opts.confint = ConfintKind::None;
    let f = fit(data, &opts)?;
    describe_fit(report, &f, &a.fit, seed);
    let inf = influence(&f, &a.units, &coders);
    let mut notes = Vec::new();
    if !inf.units.is_empty() {
        report.tables.push(influence_table("dfbeta.units", &inf.names, &inf.units, &mut notes));
    }
    if !inf.coders.is_empty() {
        report.tables.push(influence_table("dfbeta.coders", &inf.names, &inf.coders, &mut notes));
    }
    report.notes.extend(notes);
    Ok(None)
}

fn run_alpha(report: &mut Report, data: &ScoreMatrix, a: &AlphaArgs, seed: u64) -> Result<Option<Failure>, Failure> {
    let r = krippendorff_alpha_bootstrap(data, a.bootit, seed)?;
    report.set("metric", "discrete");
    report.set("bootit", a.bootit);
    report.set("seed", seed);
    report.set("threads", threads());
    report.tables.push(Table {
        title: "Bootstrap intervals".into(),
        columns: vec!["Lower".into(), "Upper".into()],
        rows: vec![
            Row {
                name: "gaussian".into(),
                values: vec![Some(r.gaussian.0), Some(r.gaussian.1)],
            },
            Row {
                name: "quantile".into(),
                values: vec![Some(r.quantile.0), Some(r.quantile.1)],
            },
        ],
    });
    report.scalar("alpha", r.alpha);
    report.scalar("Bootstrap SD", r.sd);
    report.scalar("Replicates used", r.used as f64);
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coder_references() {
        assert_eq!(parse_coder("3").unwrap(), CoderRef { method: 1, coder: 3 });
        assert_eq!(parse_coder("m2.4").unwrap(), CoderRef { method: 2, coder: 4 });
        assert!(parse_coder("m2").is_err());
        assert!(parse_coder("x").is_err());
    }
}
