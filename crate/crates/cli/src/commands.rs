use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ciu_core::baselines::{lime_surrogate, shapley_mc, AttributionMethod, AttributionVector, LimeConfig};
use ciu_core::global::{run_global, GlobalImportance, GlobalMethod, GlobalProtocol, InstanceSource};
use ciu_core::render::{
    box_text, ciu_text, cp_text, influence_text, render_box_plot, render_ciu_barplot, render_cp_plot,
    render_influence_barplot, PlotDoc,
};
use ciu_core::report::global_table;
use ciu_core::stability::{run_stability, summarize, Budgets, StabilityConfig};
use ciu_core::tabular::{holdout_split, load_csv, save_csv, train_ensemble, CsvSchema, EnsembleParams, TargetKind, Task};
use ciu_core::{CiuExplainer, Error, FeatureKind, ModelConfig, Result, SeededRng};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{ExplainArgs, Format, GlobalArgs, StabilityArgs, TargetKindArg, TrainArgs, WhatifArgs};
use crate::context::Context;

// Sub-streams of the run seed. CIU itself forks per feature index, so the
// other consumers sit far away from small stream numbers.
const SHAPLEY_STREAM: u64 = 1 << 40;
const LIME_STREAM: u64 = (1 << 40) + 1;
const BACKGROUND_STREAM: u64 = (1 << 40) + 2;
const SPLIT_STREAM: u64 = (1 << 40) + 3;
const TRAIN_STREAM: u64 = (1 << 40) + 4;

struct Outputs {
    dir: PathBuf,
    formats: Vec<Format>,
}

impl Outputs {
    fn new(dir: &Path, formats: &[Format]) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let mut formats = formats.to_vec();
        formats.sort();
        formats.dedup();
        Ok(Outputs {
            dir: dir.to_path_buf(),
            formats,
        })
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write(&self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content)?;
        info!("wrote {}", path.display());
        Ok(())
    }

    fn json(&self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }

    fn svg(&self, name: &str, doc: &PlotDoc) -> Result<()> {
        self.write(name, &doc.svg)
    }
}

fn snapshot<T: Serialize>(command: &str, args: &T) -> Result<Value> {
    let mut v = serde_json::to_value(args)?;
    v["command"] = json!(command);
    Ok(v)
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn parse_methods(names: &[String]) -> Result<Vec<AttributionMethod>> {
    let mut out: Vec<AttributionMethod> = Vec::new();
    for n in names {
        let m: AttributionMethod = n.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    Ok(out)
}

fn check_budgets(shapley: usize, lime: usize) -> Result<()> {
    if shapley == 0 || lime == 0 {
        return Err(Error::InvalidArgument("budgets must be positive".into()));
    }
    Ok(())
}

pub fn explain(args: &ExplainArgs) -> Result<()> {
    let c = &args.common;
    let methods = parse_methods(&args.methods)?;
    check_budgets(c.shapley_budget, c.lime_samples)?;
    let ctx = Context::load(c)?;
    let out = Outputs::new(&c.output_dir, &c.format)?;
    let x = ctx.instance(args.instance.as_deref())?;
    let root = SeededRng::new(c.seed);
    let names = ctx.space.names();
    let y = ctx
        .predictor
        .evaluate_output(std::slice::from_ref(&x), ctx.output)?[0];

    let mut blocks = Vec::new();
    let mut text = String::new();
    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    for method in methods {
        let start = Instant::now();
        let (attr, block) = match method {
            AttributionMethod::ContextualInfluence => {
                let explainer = CiuExplainer::new(&*ctx.predictor, &ctx.space, &ctx.utility, ctx.output, &root)?
                    .samples(c.samples)
                    .phi0(c.phi0);
                let e = explainer.explain(&x, &root)?;
                for (i, f) in e.features.iter().enumerate() {
                    if f.ciu.instability {
                        warn!("feature '{}': output left the range [{}, {}]", f.name, e.range.min, e.range.max);
                    }
                    csv_rows.push(vec![
                        method.tag().into(),
                        f.name.clone(),
                        ctx.space.format_value(i, f.value),
                        f.ciu.influence.to_string(),
                        f.ciu.ci.to_string(),
                        f.ciu.cu.to_string(),
                    ]);
                }
                if out.wants(Format::Svg) {
                    out.svg("explain_ciu.svg", &render_ciu_barplot(&e, &ctx.space))?;
                }
                if out.wants(Format::Text) {
                    text.push_str(&ciu_text(&e, &ctx.space));
                    text.push('\n');
                }
                (AttributionVector::from(&e), e.to_json())
            }
            AttributionMethod::ShapleyMc => {
                let background = ctx.background(c.background, &mut root.fork(BACKGROUND_STREAM))?;
                let a = shapley_mc(
                    &*ctx.predictor,
                    &x,
                    &background,
                    c.shapley_budget,
                    &mut root.fork(SHAPLEY_STREAM),
                    ctx.output,
                )?;
                let block = a.to_json(&names);
                (a, block)
            }
            AttributionMethod::LimeSurrogate => {
                let config = LimeConfig {
                    n_samples: c.lime_samples,
                    ..LimeConfig::default()
                };
                let a = lime_surrogate(&*ctx.predictor, &ctx.space, &x, &config, &mut root.fork(LIME_STREAM), ctx.output)?;
                let block = a.to_json(&names);
                (a, block)
            }
        };
        info!("{} took {:.3}s", method.tag(), start.elapsed().as_secs_f64());
        if method != AttributionMethod::ContextualInfluence {
            for (i, phi) in attr.phi.iter().enumerate() {
                csv_rows.push(vec![
                    method.tag().into(),
                    names[i].clone(),
                    ctx.space.format_value(i, x.get(i)),
                    phi.to_string(),
                    String::new(),
                    String::new(),
                ]);
            }
        }
        let title = format!("{}: {} = {:.3}", method.tag(), ctx.utility.outputs[ctx.output].name, y);
        if out.wants(Format::Svg) {
            out.svg(
                &format!("explain_{}_influence.svg", method.tag()),
                &render_influence_barplot(&title, &names, &attr.phi),
            )?;
        }
        if out.wants(Format::Text) {
            text.push_str(&format!("{title}\n"));
            text.push_str(&influence_text(&names, &attr.phi));
            text.push('\n');
        }
        blocks.push(block);
    }

    if out.wants(Format::Json) {
        out.json(
            "explain.json",
            &json!({
                "config": snapshot("explain", args)?,
                "instance": ctx.space.decode_json(&x),
                "output": ctx.output,
                "output_name": ctx.utility.outputs[ctx.output].name,
                "prediction": y,
                "results": blocks,
            }),
        )?;
    }
    if out.wants(Format::Csv) {
        out.write("explain.csv", &csv_table(&["method", "feature", "value", "phi", "ci", "cu"], &csv_rows)?)?;
    }
    if out.wants(Format::Text) {
        print!("{text}");
    }
    Ok(())
}

fn csv_table(header: &[&str], rows: &[Vec<String>]) -> Result<String> {
    let table = ciu_core::report::SummaryTable {
        header: header.iter().map(|s| s.to_string()).collect(),
        rows: rows.to_vec(),
    };
    table.to_csv()
}

fn parse_global_methods(names: &[String]) -> Result<Vec<GlobalMethod>> {
    let mut out = Vec::new();
    for n in names {
        let m: GlobalMethod = n.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("no methods given".into()));
    }
    Ok(out)
}

pub fn global(args: &GlobalArgs) -> Result<()> {
    let c = &args.common;
    let methods = parse_global_methods(&args.methods)?;
    check_budgets(c.shapley_budget, c.lime_samples)?;
    if args.iterations == 0 || args.instances == 0 || args.repeats == 0 {
        return Err(Error::InvalidArgument(
            "--iterations, --instances and --repeats must be positive".into(),
        ));
    }
    let ctx = Context::load(c)?;
    let out = Outputs::new(&c.output_dir, &c.format)?;
    let protocol = GlobalProtocol {
        iterations: args.iterations,
        instances: args.instances,
        ciu_samples: c.samples,
        shapley_budget: c.shapley_budget,
        pfi_repeats: args.repeats,
        background: c.background,
        output: ctx.output,
        normalize: !args.raw,
    };
    let source = match &ctx.data {
        Some(d) => InstanceSource::Dataset(d),
        None => InstanceSource::Uniform,
    };
    let mut results: Vec<GlobalImportance> = Vec::new();
    for method in methods {
        let r = run_global(method, &*ctx.predictor, &ctx.utility, &ctx.space, source, &protocol, c.seed)?;
        info!("{} took {:.3}s", method.tag(), r.elapsed.as_secs_f64());
        results.push(r);
    }
    if out.wants(Format::Json) {
        out.json(
            "global.json",
            &json!({
                "config": snapshot("global", args)?,
                "results": results.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
            }),
        )?;
    }
    let table = global_table(&results, true)?;
    if out.wants(Format::Csv) {
        out.write("global.csv", &table.to_csv()?)?;
    }
    if out.wants(Format::Svg) {
        for r in &results {
            let title = format!("{} over {} x {} instances", r.method.tag(), r.n_iterations, r.n_instances);
            out.svg(
                &format!("global_{}.svg", r.method.tag()),
                &render_influence_barplot(&title, &r.names, &r.mean),
            )?;
        }
    }
    if out.wants(Format::Text) {
        print!("{}", table.to_text());
    }
    Ok(())
}

pub fn whatif(args: &WhatifArgs) -> Result<()> {
    let c = &args.common;
    let ctx = Context::load(c)?;
    let out = Outputs::new(&c.output_dir, &c.format)?;
    let x = ctx.instance(args.instance.as_deref())?;
    let features: Vec<usize> = if args.features.is_empty() {
        (0..ctx.space.len())
            .filter(|&i| ctx.space.features()[i].is_numeric())
            .collect()
    } else {
        args.features
            .iter()
            .map(|n| {
                let i = ctx.space.index_of(n)?;
                if let FeatureKind::Categorical { .. } = ctx.space.features()[i].kind {
                    return Err(Error::CategoricalFeature(format!(
                        "{n} (what-if curves need a numeric feature; use `ciu explain` for categorical ones)"
                    )));
                }
                Ok(i)
            })
            .collect::<Result<_>>()?
    };
    if features.is_empty() {
        return Err(Error::InvalidArgument("no numeric features to plot".into()));
    }
    let root = SeededRng::new(c.seed);
    let explainer = CiuExplainer::new(&*ctx.predictor, &ctx.space, &ctx.utility, ctx.output, &root)?
        .samples(c.samples)
        .phi0(c.phi0);
    let mut blocks = Vec::new();
    let mut text = String::new();
    let mut csv_rows = Vec::new();
    for i in features {
        let w = explainer.what_if(&x, i, args.grid, &root)?;
        let a = &w.annotations;
        if out.wants(Format::Svg) {
            out.svg(
                &format!("whatif_{}.svg", file_safe(&w.feature)),
                &render_cp_plot(&w.feature, &w.points, a)?,
            )?;
        }
        if out.wants(Format::Text) {
            text.push_str(&cp_text(&w.feature, &w.points, a));
            text.push('\n');
        }
        for (px, py) in &w.points {
            csv_rows.push(vec![w.feature.clone(), px.to_string(), py.to_string()]);
        }
        blocks.push(json!({
            "feature": w.feature,
            "value": a.x_value,
            "out_min": a.out_min,
            "out_max": a.out_max,
            "ymin": a.ymin,
            "ymax": a.ymax,
            "y": a.y,
            "y_u0": a.y_u0,
            "ci": w.ciu.ci,
            "cu": w.ciu.cu,
            "influence": w.ciu.influence,
            "flags": w.ciu.flags(),
            "curve": w.points.iter().map(|p| [p.0, p.1]).collect::<Vec<_>>(),
        }));
    }
    if out.wants(Format::Json) {
        out.json(
            "whatif.json",
            &json!({
                "config": snapshot("whatif", args)?,
                "instance": ctx.space.decode_json(&x),
                "range_estimated": explainer.range().estimated,
                "features": blocks,
            }),
        )?;
    }
    if out.wants(Format::Csv) {
        out.write("whatif.csv", &csv_table(&["feature", "x", "y"], &csv_rows)?)?;
    }
    if out.wants(Format::Text) {
        print!("{text}");
    }
    Ok(())
}

pub fn stability(args: &StabilityArgs) -> Result<()> {
    let c = &args.common;
    let methods = parse_methods(&args.methods)?;
    check_budgets(c.shapley_budget, c.lime_samples)?;
    if args.runs < 2 {
        return Err(Error::InvalidArgument(format!(
            "--runs must be at least 2 to measure spread, got {}",
            args.runs
        )));
    }
    let ctx = Context::load(c)?;
    let out = Outputs::new(&c.output_dir, &c.format)?;
    let x = ctx.instance(args.instance.as_deref())?;
    let background = ctx.background(c.background, &mut SeededRng::new(c.seed).fork(BACKGROUND_STREAM))?;
    let config = StabilityConfig {
        methods,
        runs: args.runs,
        budgets: Budgets {
            ciu_samples: c.samples,
            shapley_budget: c.shapley_budget,
            lime_samples: c.lime_samples,
        },
        seed: c.seed,
        output: ctx.output,
        phi0: c.phi0,
        parallel: args.parallel,
    };
    let reports = run_stability(&*ctx.predictor, &ctx.utility, &ctx.space, &x, &background, &config)?;
    if out.wants(Format::Json) {
        out.json(
            "stability.json",
            &json!({
                "config": snapshot("stability", args)?,
                "instance": ctx.space.decode_json(&x),
                "reports": reports.iter().map(|r| r.to_json()).collect::<Vec<_>>(),
            }),
        )?;
    }
    if out.wants(Format::Csv) {
        let mut csv = String::new();
        for (k, r) in reports.iter().enumerate() {
            let body = r.to_csv()?;
            let skip = if k == 0 { 0 } else { 1 };
            for line in body.lines().skip(skip) {
                csv.push_str(line);
                csv.push('\n');
            }
        }
        out.write("stability.csv", &csv)?;
        out.write("stability_summary.csv", &summarize(&reports, true)?.to_csv()?)?;
    }
    if out.wants(Format::Svg) {
        for r in &reports {
            out.svg(&format!("stability_{}.svg", r.method.tag()), &render_box_plot(r))?;
        }
    }
    if out.wants(Format::Text) {
        let mut text = summarize(&reports, true)?.to_text();
        if args.parallel {
            text.push_str("(parallel run: elapsed times are not comparable)\n");
        }
        for r in &reports {
            text.push('\n');
            text.push_str(&box_text(r));
        }
        print!("{text}");
    }
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "--test-fraction must lie in (0, 1), got {}",
            args.test_fraction
        )));
    }
    let space = match &args.config {
        Some(path) => Some(ModelConfig::from_json(&fs::read_to_string(path)?)?.space),
        None => None,
    };
    let schema = CsvSchema {
        target: args.target.clone(),
        space,
        target_kind: match args.target_kind {
            TargetKindArg::Auto => TargetKind::Auto,
            TargetKindArg::Classes => TargetKind::Classes,
            TargetKindArg::Real => TargetKind::Real,
        },
    };
    let data = load_csv(&args.data, &schema)?;
    let root = SeededRng::new(args.seed);
    let (train_set, test_set) = holdout_split(&data, args.test_fraction, &mut root.fork(SPLIT_STREAM))?;
    let params = EnsembleParams {
        n_trees: args.trees,
        max_depth: args.max_depth,
        feature_subsample: args.mtry,
        ..EnsembleParams::default()
    };
    let start = Instant::now();
    let model = train_ensemble(&train_set, &params, &root.fork(TRAIN_STREAM))?;
    info!("training took {:.3}s", start.elapsed().as_secs_f64());
    for w in &model.warnings {
        eprintln!("warning: {w}");
    }
    fs::create_dir_all(&args.output_dir)?;
    let model_path = args.output_dir.join("model.json");
    model.save(&model_path)?;
    save_csv(&test_set, args.output_dir.join("holdout.csv"))?;

    let (metric, value) = match model.task {
        Task::Classification { .. } => ("accuracy", model.accuracy(&test_set)?),
        Task::Regression { .. } => ("rmse", model.rmse(&test_set)?),
    };
    println!("holdout {metric}: {value:.4} ({} train / {} test rows)", train_set.len(), test_set.len());
    let report = json!({
        "config": snapshot("train", args)?,
        "model": "model.json",
        "holdout": "holdout.csv",
        "n_train": train_set.len(),
        "n_test": test_set.len(),
        "metric": metric,
        "value": value,
        "warnings": model.warnings,
    });
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(args.output_dir.join("train.json"), text)?;
    Ok(())
}
