use std::path::Path;

use ddro::alloc::{optimize_allocation, AllocOptions};
use ddro::data::{RandomSource, Summary};
use ddro::portfolio::{self, FactorMarket, ReplicationRow};
use ddro::queue::{self, BoundKind, BoundRequest, QueueData, QueueModel, Variant};
use ddro::robust::{solve_cutting_plane, SolveOptions};
use ddro::sets::{FitSpec, SetChoice, SupportEval};
use serde::Serialize;

use crate::error::CliError;
use crate::io::{num, opt, parse_list, read_column, read_dataset, read_set};
use crate::problem::ProblemFile;
use crate::{AllocArgs, CvArgs, FitArgs, PortfolioArgs, QueueArgs, SolveArgs, SupportArgs};

fn parse_sets(s: &str) -> Result<Vec<SetChoice>, CliError> {
    let sets = s.split(',').map(str::parse).collect::<Result<Vec<SetChoice>, _>>()?;
    if sets.is_empty() {
        return Err(CliError::usage("set", "need at least one set"));
    }
    Ok(sets)
}

fn check_unit(field: &str, x: f64) -> Result<(), CliError> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(CliError::usage(field, format!("must lie in (0,1), got {x}")))
    }
}

fn solve_options(tol: Option<f64>) -> Result<SolveOptions, CliError> {
    let mut o = SolveOptions::default();
    if let Some(t) = tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::usage("tol", "must be positive"));
        }
        o.feas_tol = t;
    }
    Ok(o)
}

fn base_dir(p: &Path) -> &Path {
    p.parent().unwrap_or(Path::new("."))
}

pub fn fit(a: FitArgs) -> Result<(), CliError> {
    let set: SetChoice = a.set.parse()?;
    check_unit("alpha", a.alpha)?;
    let eps = match (set, a.eps) {
        (SetChoice::M, None) => return Err(CliError::usage("eps", "the m set needs --eps")),
        (_, Some(e)) => {
            check_unit("eps", e)?;
            e
        }
        (_, None) => 0.5,
    };
    if a.clip && a.support_box.is_none() {
        return Err(CliError::usage("clip", "needs --box"));
    }
    let data = read_dataset(&a.data, a.support_box.as_deref())?;
    let spec = FitSpec::new(set, a.alpha, a.nb, eps);
    let mut fitted = spec.fit(&data, &RandomSource::new(a.seed))?;
    if a.clip {
        fitted = fitted.intersect(data.support_box().expect("box was parsed"))?;
    }
    a.output.raw(&(fitted.to_json() + "\n"))
}

#[derive(Serialize)]
struct SupportOut<'a> {
    eps: f64,
    v: &'a [f64],
    #[serde(flatten)]
    eval: SupportEval,
}

pub fn support(a: SupportArgs) -> Result<(), CliError> {
    let set = read_set(&a.set_file)?;
    let v = parse_list("v", &a.v)?;
    let eval = set.support(&v, a.eps)?;
    a.output.json(&SupportOut { eps: a.eps, v: &v, eval })
}

pub fn solve(a: SolveArgs) -> Result<(), CliError> {
    let rlp = ProblemFile::load(&a.problem)?.build(base_dir(&a.problem))?;
    let mut opts = solve_options(a.tol)?;
    opts.min_norm = a.min_norm;
    let sol = solve_cutting_plane(&rlp, &opts)?;
    a.output.json(&sol)
}

pub fn alloc(a: AllocArgs) -> Result<(), CliError> {
    check_unit("eps-bar", a.eps_bar)?;
    let rlp = ProblemFile::load(&a.problem)?.build(base_dir(&a.problem))?;
    let opts = AllocOptions {
        kappa: a.kappa,
        max_rounds: a.max_rounds,
        solve: solve_options(a.tol)?,
    };
    let (solution, allocation) = optimize_allocation(&rlp, a.eps_bar, &opts)?;
    let m = allocation.eps.len();
    let mut header: Vec<String> = vec!["round".into()];
    header.extend((1..=m).map(|j| format!("eps{j}")));
    header.extend(["objective", "accepted", "kappa"].map(String::from));
    let rows: Vec<Vec<String>> = allocation
        .trace
        .iter()
        .map(|r| {
            let mut row = vec![r.round.to_string()];
            row.extend(r.eps.iter().map(|&e| num(e)));
            row.extend([num(r.objective), r.accepted.to_string(), num(r.kappa)]);
            row
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    a.output.table(&header, &rows)?;
    #[derive(Serialize)]
    struct Out {
        solution: ddro::robust::RobustSolution,
        allocation: ddro::alloc::EpsilonAllocation,
    }
    a.output.json(&Out { solution, allocation })
}

#[derive(Serialize)]
struct SetSummary {
    set: String,
    z_in: Summary,
    z_out: Summary,
    cv: Option<Summary>,
    mean_holdings: Vec<f64>,
    rows: Vec<ReplicationRow>,
}

pub fn portfolio(a: PortfolioArgs) -> Result<(), CliError> {
    check_unit("alpha", a.alpha)?;
    check_unit("eps", a.eps)?;
    if a.reps == 0 {
        return Err(CliError::usage("reps", "must be positive"));
    }
    let sets = parse_sets(&a.set)?;
    let market = FactorMarket::default();
    let seeds: Vec<u64> = (0..a.reps as u64).map(|r| a.seed + r).collect();
    let mut out = Vec::new();
    let mut tsv = Vec::new();
    for set in sets {
        let spec = FitSpec::new(set, a.alpha, a.nb, a.eps);
        let rows = portfolio::replicate(&market, &spec, a.n, a.eps, &seeds, a.folds)?;
        let col = |f: fn(&ReplicationRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let cvs: Option<Vec<f64>> = rows.iter().map(|r| r.cv).collect();
        let d = market.d();
        let mean_holdings = (0..d)
            .map(|i| rows.iter().map(|r| r.x[i]).sum::<f64>() / rows.len() as f64)
            .collect();
        for r in &rows {
            tsv.push(vec![r.seed.to_string(), r.set.clone(), num(r.z_in), opt(r.cv), num(r.z_out)]);
        }
        out.push(SetSummary {
            set: set.name().into(),
            z_in: Summary::of(&col(|r| r.z_in)),
            z_out: Summary::of(&col(|r| r.z_out)),
            cv: cvs.filter(|c| !c.is_empty()).map(|c| Summary::of(&c)),
            mean_holdings,
            rows,
        });
    }
    a.output.table(&["seed", "set", "z_in", "cv", "z_out"], &tsv)?;
    a.output.json(&out)
}

#[derive(Serialize)]
struct QueueBound {
    variant: String,
    n: usize,
    eps: f64,
    bound: f64,
}

#[derive(Serialize)]
struct QueueSummary {
    variant: String,
    summary: Summary,
    bounds: Vec<f64>,
}

fn variant_name(kind: BoundKind, v: Variant) -> String {
    match v {
        Variant::Kingman => "kingman".into(),
        _ => format!(
            "{}{}",
            match kind {
                BoundKind::Fb => "fb",
                BoundKind::Cs => "cs",
            },
            match v {
                Variant::W1 => 1,
                Variant::W2 => 2,
                _ => 3,
            }
        ),
    }
}

pub fn queue(a: QueueArgs) -> Result<(), CliError> {
    check_unit("alpha", a.alpha)?;
    check_unit("eps", a.eps)?;
    let variants = a
        .variant
        .split(',')
        .map(queue::parse_variant)
        .collect::<Result<Vec<_>, _>>()?;
    let requests: Vec<BoundRequest> = variants
        .iter()
        .map(|&(kind, variant)| BoundRequest {
            kind,
            variant,
            n: a.n,
            alpha: a.alpha,
            n_b: a.nb,
        })
        .collect();
    let names: Vec<String> = variants.iter().map(|&(k, v)| variant_name(k, v)).collect();
    let root = RandomSource::new(a.seed);

    if let Some(reps) = a.reps {
        if a.service.is_some() {
            return Err(CliError::usage("reps", "replications use the built-in model; drop the data files"));
        }
        if reps == 0 {
            return Err(CliError::usage("reps", "must be positive"));
        }
        let seeds: Vec<u64> = (0..reps as u64).map(|r| a.seed + r).collect();
        let reps = queue::replicate(&QueueModel::default(), a.samples, a.eps, &requests, &seeds)?;
        let mut tsv = Vec::new();
        for r in &reps {
            for (name, b) in names.iter().zip(&r.bounds) {
                tsv.push(vec![r.seed.to_string(), name.clone(), a.n.to_string(), num(a.eps), num(*b)]);
            }
        }
        a.output.table(&["seed", "variant", "n", "eps", "bound"], &tsv)?;
        let out: Vec<QueueSummary> = names
            .iter()
            .enumerate()
            .map(|(i, name)| {
                let bounds: Vec<f64> = reps.iter().map(|r| r.bounds[i]).collect();
                QueueSummary {
                    variant: name.clone(),
                    summary: Summary::of(&bounds),
                    bounds,
                }
            })
            .collect();
        return a.output.json(&out);
    }

    let (Some(sp), Some(ip)) = (&a.service, &a.interarrival) else {
        return Err(CliError::usage("data", "give service and interarrival CSV files, or --reps"));
    };
    let service = read_column(sp)?;
    let inter = read_column(ip)?;
    let max = |xs: &[f64]| xs.iter().cloned().fold(0.0, f64::max);
    let data = QueueData::new(
        service.clone(),
        inter.clone(),
        a.service_bound.unwrap_or_else(|| max(&service)),
        a.interarrival_bound.unwrap_or_else(|| max(&inter)),
    )?;
    let grid = match &a.eps_grid {
        Some(g) => parse_list("eps-grid", g)?,
        None => vec![a.eps],
    };
    let mut out = Vec::new();
    for (i, (req, name)) in requests.iter().zip(&names).enumerate() {
        let env = queue::cdf_envelope(&data, req, &grid, &root.derive(i as u64))?;
        out.extend(env.into_iter().map(|(eps, bound)| QueueBound {
            variant: name.clone(),
            n: a.n,
            eps,
            bound,
        }));
    }
    let tsv: Vec<Vec<String>> = out
        .iter()
        .map(|b| vec![b.variant.clone(), b.n.to_string(), num(b.eps), num(b.bound)])
        .collect();
    a.output.table(&["variant", "n", "eps", "bound"], &tsv)?;
    a.output.json(&out)
}

pub fn cv(a: CvArgs) -> Result<(), CliError> {
    check_unit("alpha", a.alpha)?;
    check_unit("eps", a.eps)?;
    let sets = parse_sets(&a.set)?;
    let data = read_dataset(&a.data, a.support_box.as_deref())?;
    let specs: Vec<FitSpec> = sets.iter().map(|&s| FitSpec::new(s, a.alpha, a.nb, a.eps)).collect();
    let scores = portfolio::cross_validate(&specs, &data, a.folds, a.eps, &RandomSource::new(a.seed))?;
    for s in scores.iter().filter(|s| s.mean.is_none()) {
        eprintln!("warning: {} excluded from the ranking: {}", s.set, s.failures.join("; "));
    }
    let tsv: Vec<Vec<String>> = scores
        .iter()
        .flat_map(|s| {
            s.folds
                .iter()
                .enumerate()
                .map(move |(f, v)| vec![s.set.clone(), f.to_string(), opt(*v)])
        })
        .collect();
    a.output.table(&["set", "fold", "holdout_quantile"], &tsv)?;
    a.output.json(&scores)
}
