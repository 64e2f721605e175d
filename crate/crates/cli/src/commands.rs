use crate::args::*;
use crate::files::{load_assignment, load_cohort, read_text, SchemaSpec};
use crate::format::{p_value, probability};
use crate::CliError;
use balancelab::allocation::{allocate, stream_rng, MinimizationState, StrategyConfig, StrategyKind};
use balancelab::exact::{
    binary_comparability_prob, binary_imbalance_distribution, binary_sample_size,
    continuous_comparability_prob, continuous_sample_size, joint_comparability,
    joint_non_comparability, rank_comparability_prob, rank_sample_size, sign_test_pvalue,
    BinaryModel, ContinuousModel, ImbalanceScale, RankModel,
};
use balancelab::metrics::{imbalance_report, is_comparable, ImbalanceReport, ReportOptions, Thresholds};
use balancelab::simulation::{
    compare_strategies, run_replications_with, CohortSource, Comparison, SimulationConfig,
    SimulationResult,
};
use balancelab::{Allocation, Cohort, Unit};
use serde::Serialize;
use std::io::{BufRead, Write};

type Out<'a> = &'a mut dyn Write;

/// Replications used when neither `--reps` nor the configuration says.
const DEFAULT_REPLICATIONS: u64 = 1000;

pub fn prob(model: ProbModel, out: Out) -> Result<(), CliError> {
    let (q, precision) = match model {
        ProbModel::Binary { i, n, p, precision } => {
            (binary_comparability_prob(i, &BinaryModel::new(n, p)?)?, precision)
        }
        ProbModel::Rank { i, n, precision } => (rank_comparability_prob(i, &RankModel::new(n)?)?, precision),
        ProbModel::Continuous {
            l,
            n,
            absolute,
            precision,
        } => {
            let scale = if absolute {
                ImbalanceScale::Absolute
            } else {
                ImbalanceScale::Relative
            };
            (continuous_comparability_prob(l, &ContinuousModel::new(n)?, scale)?, precision)
        }
    };
    writeln!(out, "{}", probability(q, precision.precision))?;
    Ok(())
}

pub fn samplesize(model: SizeModel, out: Out) -> Result<(), CliError> {
    let n = match model {
        SizeModel::Binary { i, k, p } => binary_sample_size(i, k, p)?,
        SizeModel::Rank { i, k } => rank_sample_size(i, k)?,
        SizeModel::Continuous { l, k } => continuous_sample_size(l, k)?,
    };
    writeln!(out, "{n}")?;
    Ok(())
}

pub fn pmf(model: PmfModel, out: Out) -> Result<(), CliError> {
    let rows: Vec<(i64, f64)> = match model {
        PmfModel::Binary { n, p } => {
            let model = BinaryModel::new(n, p)?;
            binary_imbalance_distribution(&model)
                .into_iter()
                .enumerate()
                .map(|(j, q)| (j as i64 - i64::from(n), q))
                .collect()
        }
        PmfModel::Rank { n } => RankModel::new(n)?.distribution().support(),
    };
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["d", "probability"])?;
    for (d, q) in rows {
        w.write_record([d.to_string(), q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn joint(args: JointArgs, out: Out) -> Result<(), CliError> {
    let qs: Vec<f64> = args
        .q
        .iter()
        .flat_map(|&q| std::iter::repeat_n(q, args.m))
        .collect();
    let value = if args.complement {
        joint_non_comparability(&qs)?
    } else {
        joint_comparability(&qs)?
    };
    writeln!(out, "{}", probability(value, args.precision.precision))?;
    Ok(())
}

pub fn figure(args: FigureArgs, out: Out) -> Result<(), CliError> {
    if args.i == 0 {
        return Err(CliError::Domain("i must be at least 1".into()));
    }
    if args.k <= 0.0 {
        return Err(CliError::Domain("k must be positive".into()));
    }
    for &p in &args.p {
        BinaryModel::new(1, p)?;
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["n".to_string(), "threshold".to_string()];
    header.extend(args.p.iter().map(|p| format!("k_sd_p{p}")));
    w.write_record(&header)?;
    for n in 1..=args.n_max {
        let n = f64::from(n);
        let mut row = vec![n.to_string(), (n / f64::from(args.i)).to_string()];
        row.extend(
            args.p
                .iter()
                .map(|p| (args.k * (2.0 * p * (1.0 - p) * n).sqrt()).to_string()),
        );
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn signtest(n: u32, precision: Precision, out: Out) -> Result<(), CliError> {
    writeln!(out, "{}", p_value(sign_test_pvalue(n)?, precision.precision))?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationOutput<'a> {
    seed: u64,
    replications: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a SimulationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<&'a Comparison>,
}

pub fn simulate(args: SimulateArgs, out: Out) -> Result<(), CliError> {
    let text = read_text(&args.config)?;
    let config: SimulationConfig = toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {}", args.config.display(), e.message())))?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let reps = args.reps.or(config.replications).unwrap_or(DEFAULT_REPLICATIONS);
    if config.strategy.is_none() && config.compare.is_none() {
        return Err(CliError::Data(format!(
            "{}: needs a [strategy] or a [compare] section",
            args.config.display()
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.map_or(0, |j| j as usize))
        .build()
        .map_err(|e| CliError::Io(e.to_string()))?;
    let (result, comparison) = pool.install(|| -> Result<_, CliError> {
        let result = match &config.strategy {
            Some(strategy) => Some(run_replications_with(
                &config.population,
                strategy,
                &config.thresholds(),
                reps,
                seed,
                &config.harness_options(),
            )?),
            None => None,
        };
        let comparison = match &config.compare {
            Some(compare) => Some(compare_strategies(
                &CohortSource::Synthetic(config.population.clone()),
                compare,
                reps,
                seed,
            )?),
            None => None,
        };
        Ok((result, comparison))
    })?;

    match args.format {
        OutputFormat::Text => {
            let doc = SimulationOutput {
                seed,
                replications: reps,
                result: result.as_ref(),
                comparison: comparison.as_ref(),
            };
            let text = toml::to_string(&doc).map_err(|e| CliError::Io(e.to_string()))?;
            out.write_all(text.as_bytes())?;
        }
        OutputFormat::Csv => {
            let mut first = true;
            if let Some(r) = &result {
                write_result_csv(r, &mut *out)?;
                first = false;
            }
            if let Some(c) = &comparison {
                if !first {
                    writeln!(out)?;
                }
                write_comparison_csv(c, &mut *out)?;
            }
        }
    }
    Ok(())
}

fn write_result_csv(r: &SimulationResult, out: Out) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "strategy",
        "factor",
        "replications",
        "seed",
        "comparable_rate",
        "comparable_se",
        "mean_abs_imbalance",
        "mean_signed_imbalance",
    ])?;
    let common = [r.strategy.clone(), String::new(), r.replications.to_string(), r.seed.to_string()];
    let mut all = common.to_vec();
    all[1] = "*".into();
    all.extend([r.comparable.rate.to_string(), r.comparable.se.to_string(), String::new(), String::new()]);
    w.write_record(&all)?;
    for f in &r.factors {
        let mut row = common.to_vec();
        row[1] = f.name.clone();
        row.extend([
            f.comparable.rate.to_string(),
            f.comparable.se.to_string(),
            f.mean_abs_imbalance.to_string(),
            f.mean_signed_imbalance.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_comparison_csv(c: &Comparison, out: Out) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "factor",
        "role",
        "replications",
        "seed",
        "mean_random",
        "se_random",
        "mean_systematic",
        "se_systematic",
        "mean_difference",
        "se_difference",
        "margin_random",
        "margin_systematic",
        "structure",
    ])?;
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let rows = std::iter::once(("observed", &c.observed)).chain(c.unobserved.iter().map(|f| ("unobserved", f)));
    for (role, f) in rows {
        w.write_record([
            f.name.clone(),
            role.to_string(),
            c.replications.to_string(),
            c.seed.to_string(),
            f.mean_random.to_string(),
            f.se_random.to_string(),
            f.mean_systematic.to_string(),
            f.se_systematic.to_string(),
            f.mean_difference.to_string(),
            f.se_difference.to_string(),
            opt(f.margin_random),
            opt(f.margin_systematic),
            f.structure.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn strategy_config(args: &StrategyArgs) -> StrategyConfig {
    let mut config = StrategyConfig::new(args.strategy).with_seed(args.seed.unwrap_or(0));
    config.biased_coin = args.biased_coin;
    if let Some(b) = args.budget {
        config.budget = b;
    }
    if let Some(w) = args.size_weight {
        config.size_weight = w;
    }
    config.weights = args.weights.iter().cloned().collect();
    config
}

fn report_options(flags: &ReportFlags) -> ReportOptions {
    ReportOptions {
        interaction_order: flags.interactions,
        ..ReportOptions::default()
    }
}

/// The imbalance report as `key,value` CSV, followed by the verdict when
/// thresholds were given.
pub fn render_report(report: &ImbalanceReport, flags: &ReportFlags, out: Out) -> Result<(), CliError> {
    let mut rows = report.to_key_values();
    if !flags.thresholds.is_empty() || flags.interaction_threshold.is_some() {
        let thresholds = Thresholds {
            factors: flags.thresholds.iter().cloned().collect(),
            interactions: flags.interaction_threshold,
        };
        let verdict = is_comparable(report, &thresholds)?;
        rows.push(("verdict.comparable".into(), verdict.comparable.to_string()));
        rows.push((
            "verdict.first_violation".into(),
            verdict.first_violation.clone().unwrap_or_default(),
        ));
        for v in verdict.factors.iter().chain(&verdict.cells) {
            rows.push((format!("verdict.{}.statistic", v.name), v.statistic.to_string()));
            rows.push((format!("verdict.{}.bound", v.name), v.bound.to_string()));
            rows.push((format!("verdict.{}.within", v.name), v.within.to_string()));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "value"])?;
    for (k, v) in rows {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(())
}

fn write_assignment(cohort: &Cohort, alloc: &Allocation, pairs: &[(usize, usize)], out: Out) -> Result<(), CliError> {
    let mut pair_of = vec![None; cohort.len()];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        pair_of[a] = Some(k + 1);
        pair_of[b] = Some(k + 1);
    }
    let mut w = csv::Writer::from_writer(out);
    if pairs.is_empty() {
        w.write_record(["id", "arm"])?;
    } else {
        w.write_record(["id", "arm", "pair"])?;
    }
    for (i, unit) in cohort.units().iter().enumerate() {
        let arm = alloc.arm(i).label().to_string();
        match pair_of[i] {
            Some(p) if !pairs.is_empty() => w.write_record([unit.id.clone(), arm, p.to_string()])?,
            _ => w.write_record([unit.id.clone(), arm])?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn allocate_batch(
    cohort: &std::path::Path,
    schema: &std::path::Path,
    strategy: &StrategyArgs,
    flags: &ReportFlags,
    report_out: Option<&std::path::Path>,
    out: Out,
    log: Out,
) -> Result<(), CliError> {
    let spec = SchemaSpec::load(schema)?;
    let cohort = load_cohort(cohort, &spec)?;
    let config = strategy_config(strategy);
    let outcome = allocate(&cohort, &config, &mut config.rng())?;
    let report = imbalance_report(&cohort, &outcome.allocation, &report_options(flags))?;
    let mut rendered = Vec::new();
    render_report(&report, flags, &mut rendered)?;
    write_assignment(&cohort, &outcome.allocation, &outcome.pairs, out)?;
    match report_out {
        Some(path) => std::fs::write(path, &rendered)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => log.write_all(&rendered)?,
    }
    Ok(())
}

pub fn allocate_sequential(
    schema: &std::path::Path,
    strategy: &StrategyArgs,
    input: &mut dyn BufRead,
    out: Out,
) -> Result<(), CliError> {
    if strategy.strategy != StrategyKind::Minimization {
        return Err(CliError::Usage(format!(
            "sequential allocation supports the minimization strategy only, not {}",
            strategy.strategy
        )));
    }
    let spec = SchemaSpec::load(schema)?;
    let config = strategy_config(strategy);
    config.validate()?;
    let weights = config.resolve_weights(&spec.schema)?;
    let mut state = MinimizationState::new(
        &spec.schema,
        &weights,
        config.size_weight,
        config.biased_coin.expect("validated"),
    )?;
    let mut rng = stream_rng(config.seed, 0);
    let mut line = String::new();
    let mut number = 0u64;
    loop {
        line.clear();
        if input.read_line(&mut line)? == 0 {
            break;
        }
        number += 1;
        let unit = parse_unit_line(line.trim_end_matches(['\r', '\n']), &spec, number)?;
        let arm = state.allocate(&unit, &mut rng)?;
        writeln!(out, "{}", arm.label())?;
        out.flush()?;
    }
    Ok(())
}

/// Parses `id,value,...` with values in schema order.
fn parse_unit_line(line: &str, spec: &SchemaSpec, number: u64) -> Result<Unit, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(line.as_bytes());
    let record = reader
        .records()
        .next()
        .transpose()
        .map_err(|e| CliError::Data(format!("line {number}: {e}")))?
        .unwrap_or_default();
    let attrs = spec.schema.attributes();
    if record.len() != attrs.len() + 1 {
        return Err(CliError::Data(format!(
            "line {number}: expected id plus {} values, got {} fields",
            attrs.len(),
            record.len()
        )));
    }
    let values = attrs
        .iter()
        .enumerate()
        .map(|(j, a)| {
            spec.parse_cell(j, &record[j + 1])
                .map_err(|e| CliError::Data(format!("line {number}, column {}: {e}", a.name)))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Unit::new(&record[0], values))
}

pub fn report(args: ReportArgs, out: Out) -> Result<(), CliError> {
    let spec = SchemaSpec::load(&args.schema)?;
    let cohort = load_cohort(&args.cohort, &spec)?;
    let alloc = load_assignment(&args.assignment, &cohort)?;
    let report = imbalance_report(&cohort, &alloc, &report_options(&args.report))?;
    render_report(&report, &args.report, out)
}
