use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use pchart_core::analysis::{compile, verify, CompileError, Compiled};
use pchart_core::chart::{Attachment, Chart, Query};
use pchart_core::checker::{monte_carlo, CheckOptions, McOptions, QueryResult, ResultKind, Value};
use pchart_core::codegen::{generate_code, CodegenOptions};
use pchart_core::diag::{has_errors, Diagnostic};
use pchart_core::dsl::{format_query, parse_chart, parse_chart_with, parse_query, pretty_print, ParseOptions};
use pchart_core::mdp::{apply_digital_clocks, BuildOptions, Mdp};
use pchart_core::normalize::normalize;
use pchart_core::prism::{export_model, export_properties};
use serde::Serialize;

use crate::output::*;
use crate::*;

pub(crate) enum Failure {
    Usage(String),
    Io(String),
    Diagnostics(String, Vec<Diagnostic>),
    Analysis(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => EXIT_USAGE,
            Failure::Diagnostics(..) | Failure::Analysis(_) => EXIT_FAILED,
        }
    }
}

type Outcome = Result<i32, Failure>;

pub(crate) fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let json = match &command {
        Command::Check(a) => a.input.json,
        Command::Verify(a) => a.input.json,
        Command::Export(a) => a.input.json,
        Command::Codegen(a) => a.input.json,
        Command::Simulate(a) => a.input.json,
        Command::Stats(a) => a.input.json,
        Command::Dump(a) => a.input.json,
        Command::Fmt(a) => a.input.json,
        Command::Schema { .. } => false,
    };
    let result = match command {
        Command::Check(a) => check(&a, out, err),
        Command::Verify(a) => cmd_verify(&a, out, err),
        Command::Export(a) => export(&a, out, err),
        Command::Codegen(a) => codegen(&a, out, err),
        Command::Simulate(a) => simulate(&a, out, err),
        Command::Stats(a) => stats(&a, out, err),
        Command::Dump(a) => dump(&a, out, err),
        Command::Fmt(a) => fmt(&a, out),
        Command::Schema { command } => {
            let _ = write!(out, "{}", schema(command));
            Ok(EXIT_OK)
        }
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let code = f.code();
            report_failure(f, json, out, err);
            code
        }
    }
}

fn report_failure(f: Failure, json: bool, out: &mut dyn Write, err: &mut dyn Write) {
    let (kind, message, diagnostics) = match f {
        Failure::Usage(m) => ("usage", m, Vec::new()),
        Failure::Io(m) => ("io", m, Vec::new()),
        Failure::Analysis(m) => ("analysis", m, Vec::new()),
        Failure::Diagnostics(file, ds) => {
            if !json {
                print_diagnostics(err, &file, &ds);
                return;
            }
            let n = ds.iter().filter(|d| d.is_error()).count();
            ("diagnostics", format!("{file}: {n} error{}", if n == 1 { "" } else { "s" }), ds)
        }
    };
    if json {
        emit_json(out, &ErrorJson { error: ErrorBody { kind, message, diagnostics } });
    } else {
        let _ = writeln!(err, "error: {message}");
    }
}

fn emit_json<T: Serialize>(out: &mut dyn Write, value: &T) {
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

fn print_diagnostics(err: &mut dyn Write, file: &str, ds: &[Diagnostic]) {
    for d in ds {
        let _ = writeln!(err, "{file}:{d}");
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display())))
}

/// Parses the chart; errors become a diagnostics failure, warnings are
/// returned.
fn load(path: &Path) -> Result<(Chart, Vec<Diagnostic>), Failure> {
    let text = read(path)?;
    let parsed = parse_chart(&text);
    match parsed.chart {
        Some(chart) => Ok((chart, parsed.diagnostics)),
        None => Err(Failure::Diagnostics(path.display().to_string(), parsed.diagnostics)),
    }
}

fn build_options() -> Result<BuildOptions, Failure> {
    match std::env::var(STATE_LIMIT_VAR) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(BuildOptions { state_limit: n }),
            _ => Err(Failure::Usage(format!("{STATE_LIMIT_VAR} must be a positive integer, got `{v}`"))),
        },
        Err(_) => Ok(BuildOptions::default()),
    }
}

fn compile_chart(path: &Path, chart: &Chart) -> Result<Compiled, Failure> {
    compile(chart, build_options()?).map_err(|e| match e {
        CompileError::Diagnostics(ds) => Failure::Diagnostics(path.display().to_string(), ds),
        CompileError::Build(b) => Failure::Analysis(b.to_string()),
    })
}

fn warn(err: &mut dyn Write, json: bool, path: &Path, ds: &[Diagnostic]) {
    if !json {
        print_diagnostics(err, &path.display().to_string(), ds);
    }
}

fn check(a: &CheckArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let text = read(path)?;
    let parsed = parse_chart_with(&text, ParseOptions { strict: a.strict });
    let mut diagnostics = parsed.diagnostics;
    if let Some(chart) = &parsed.chart {
        match normalize(chart) {
            Ok(n) => diagnostics.extend(n.warnings),
            Err(ds) => diagnostics.extend(ds),
        }
    }
    let mut seen = Vec::new();
    diagnostics.retain(|d| {
        let fresh = !seen.contains(d);
        seen.push(d.clone());
        fresh
    });
    let ok = !has_errors(&diagnostics);
    if a.input.json {
        emit_json(out, &CheckJson { file: path.display().to_string(), ok, diagnostics });
    } else {
        print_diagnostics(err, &path.display().to_string(), &diagnostics);
        if ok {
            let _ = writeln!(out, "{}: ok", path.display());
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn check_options(tolerance: f64, bounds: BoundSemantics) -> Result<CheckOptions, Failure> {
    if !(tolerance > 0.0 && tolerance < 1.0) {
        return Err(Failure::Usage(format!("tolerance must lie strictly between 0 and 1, got {tolerance}")));
    }
    Ok(CheckOptions { tolerance, strict_bounds: bounds == BoundSemantics::Strict, ..CheckOptions::default() })
}

/// True when no state offers a choice, so the uniform scheduler of the
/// simulator is the only scheduler.
fn deterministic(mdp: &Mdp) -> bool {
    mdp.actions.iter().all(|a| a.len() <= 1)
}

fn cross_check(compiled: &Compiled, chart: &Chart, q: &Query, r: &QueryResult, a: &VerifyArgs) -> Option<CrossCheck> {
    if a.no_cross_check || r.kind != ResultKind::Numeric || !deterministic(&compiled.mdp) {
        return None;
    }
    let Value::Number(v) = r.value else { return None };
    let goal = compiled.goal(chart, q).ok()?;
    let options = McOptions {
        samples: a.samples,
        seed: 0,
        strict_bounds: a.bound_semantics == BoundSemantics::Strict,
        ..McOptions::default()
    };
    let est = monte_carlo(&compiled.mdp, q, &goal, &options).ok()?;
    let (low, high) = (est.mean - 3.0 * est.std_err, est.mean + 3.0 * est.std_err);
    // value iteration stops within its tolerance of the fixpoint
    let slack = a.tolerance.max(1e-12);
    Some(CrossCheck {
        mean: est.mean,
        std_err: est.std_err,
        low,
        high,
        samples: est.samples,
        seed: options.seed,
        truncated: est.truncated,
        agrees: est.truncated == 0 && low - slack <= v && v <= high + slack,
    })
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let options = check_options(a.tolerance, a.bound_semantics)?;
    let (chart, mut warnings) = load(path)?;
    let compiled = compile_chart(path, &chart)?;
    warnings.extend(compiled.normalized.warnings.iter().cloned());
    warn(err, a.input.json, path, &warnings);
    let report = verify(&chart, &compiled, &options);
    let rows: Vec<VerifyRow> = chart
        .queries
        .iter()
        .zip(report.queries)
        .map(|(q, o)| {
            let cross_check = o.result.as_ref().and_then(|r| cross_check(&compiled, &chart, q, r, a));
            VerifyRow { state: o.state, query: format_query(q), result: o.result, error: o.error, cross_check }
        })
        .collect();
    let holds = |r: &QueryResult| r.value != Value::Bool(false);
    let ok = report.invariant.as_ref().map_or(true, holds)
        && rows.iter().all(|r| r.error.is_none() && r.result.as_ref().map_or(true, holds));
    if a.input.json {
        emit_json(
            out,
            &VerifyJson {
                file: path.display().to_string(),
                chart: report.chart,
                states: report.states,
                transitions: report.transitions,
                ok,
                invariant: report.invariant,
                queries: rows,
                warnings,
            },
        );
    } else {
        let _ = writeln!(out, "Chart {}: {} states, {} transitions", report.chart, report.states, report.transitions);
        let mut table = vec![["State".to_string(), "Query".into(), "Result".into(), "Cross-check".into()]];
        let mut notes = Vec::new();
        if let Some(inv) = &report.invariant {
            table.push(["-".into(), "invariant".into(), value(inv.value), String::new()]);
            if let Some(trace) = &inv.counterexample {
                let steps: Vec<String> = trace
                    .iter()
                    .map(|t| match &t.action {
                        Some(act) => format!("{} --{act}-->", t.state),
                        None => t.state.clone(),
                    })
                    .collect();
                notes.push(format!("invariant counterexample: {}", steps.join(" ")));
            }
        }
        for row in &rows {
            let state = row.state.clone().unwrap_or_else(|| "-".into());
            let result = match (&row.result, &row.error) {
                (Some(r), _) => {
                    let mut s = value(r.value);
                    if let Some(c) = r.compared {
                        s.push_str(&format!(" (value {})", value(c)));
                    }
                    if !r.converged {
                        s.push_str(" (not converged)");
                    }
                    s
                }
                (None, Some(e)) => format!("error: {e}"),
                (None, None) => String::new(),
            };
            let check = match &row.cross_check {
                Some(c) => format!(
                    "[{}, {}] {}",
                    number(c.low),
                    number(c.high),
                    if c.agrees { "ok" } else { "MISMATCH" }
                ),
                None => String::new(),
            };
            table.push([state, row.query.clone(), result, check]);
        }
        if table.len() > 1 {
            let width: Vec<usize> = (0..4).map(|i| table.iter().map(|r| r[i].chars().count()).max().unwrap()).collect();
            let _ = writeln!(out);
            for r in &table {
                let line = format!("{:w0$}  {:w1$}  {:w2$}  {}", r[0], r[1], r[2], r[3], w0 = width[0], w1 = width[1], w2 = width[2]);
                let _ = writeln!(out, "{}", line.trim_end());
            }
        }
        for n in notes {
            let _ = writeln!(out, "{n}");
        }
    }
    Ok(if ok { EXIT_OK } else { EXIT_FAILED })
}

fn default_output(input: &Path, ext: &str) -> PathBuf {
    let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "chart".into());
    PathBuf::from(format!("{stem}.{ext}"))
}

fn export(a: &ExportArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let (chart, mut warnings) = load(path)?;
    let normalized = normalize(&chart).map_err(|ds| Failure::Diagnostics(path.display().to_string(), ds))?;
    warnings.extend(normalized.warnings.iter().cloned());
    warn(err, a.input.json, path, &warnings);
    let system = apply_digital_clocks(&normalized.system);
    let model = export_model(&system);
    let props = export_properties(&chart, &normalized)
        .map_err(|d| Failure::Diagnostics(path.display().to_string(), vec![d]))?;
    let model_path = a.prism.clone().unwrap_or_else(|| default_output(path, "pm"));
    let props_path = a.props.clone().unwrap_or_else(|| default_output(path, "props"));
    write_file(&model_path, &model)?;
    write_file(&props_path, &props)?;
    let property_count = props.lines().count();
    if a.input.json {
        emit_json(
            out,
            &ExportJson {
                model: model_path.display().to_string(),
                properties: props_path.display().to_string(),
                variables: system.vars.len(),
                commands: system.commands.len(),
                property_count,
            },
        );
    } else {
        let _ = writeln!(
            out,
            "wrote {} ({} variables, {} commands)",
            model_path.display(),
            system.vars.len(),
            system.commands.len()
        );
        let _ = writeln!(out, "wrote {} ({property_count} properties)", props_path.display());
    }
    Ok(EXIT_OK)
}

fn codegen(a: &CodegenArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let (chart, warnings) = load(path)?;
    warn(err, a.input.json, path, &warnings);
    let options = CodegenOptions { main: !a.no_main, assertions: a.assertions };
    let code = generate_code(&chart, options).map_err(|ds| Failure::Diagnostics(path.display().to_string(), ds))?;
    warn(err, a.input.json, path, &code.warnings);
    if let Some(c) = &a.c {
        write_file(c, &code.source)?;
    }
    if let Some(h) = &a.header {
        write_file(h, &code.header)?;
    }
    if a.input.json {
        emit_json(
            out,
            &CodegenJson {
                output: a.c.as_ref().map(|p| p.display().to_string()),
                header: a.header.as_ref().map(|p| p.display().to_string()),
                source: a.c.is_none().then(|| code.source.clone()),
                entry_points: code
                    .entry_points
                    .iter()
                    .map(|(e, p)| EntryPoint { event: e.clone(), procedure: p.clone() })
                    .collect(),
                warnings: code.warnings,
            },
        );
    } else if a.c.is_none() {
        let _ = write!(out, "{}", code.source);
    } else {
        let c = a.c.as_ref().unwrap();
        let _ = writeln!(out, "wrote {} ({} entry points)", c.display(), code.entry_points.len());
    }
    Ok(EXIT_OK)
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let (chart, warnings) = load(path)?;
    let queries: Vec<Query> = match &a.query {
        Some(text) => {
            let mut q = parse_query(text).map_err(|d| Failure::Diagnostics("--query".into(), vec![d]))?;
            if let Some(s) = &a.state {
                q.attachment = Attachment::State(chart.resolve_state(s).map_err(Failure::Analysis)?);
            }
            vec![q]
        }
        None => chart.queries.clone(),
    };
    let compiled = compile_chart(path, &chart)?;
    warn(err, a.input.json, path, &warnings);
    let seed = match a.seed {
        Seed::Fixed(s) => s,
        Seed::Random => rand::random(),
    };
    let options = McOptions {
        samples: a.samples,
        seed,
        max_steps: a.max_steps,
        strict_bounds: a.bound_semantics == BoundSemantics::Strict,
    };
    let mut estimates = Vec::new();
    for q in &queries {
        let goal = compiled.goal(&chart, q).map_err(Failure::Analysis)?;
        let estimate = monte_carlo(&compiled.mdp, q, &goal, &options).map_err(|e| match e {
            pchart_core::checker::CheckError::TooFewSamples(_) => Failure::Usage(e.to_string()),
            _ => Failure::Analysis(format!("{}: {e}", format_query(q))),
        })?;
        let state = match q.attachment {
            Attachment::State(s) => Some(chart.name(s).to_string()),
            Attachment::Floating => None,
        };
        estimates.push(Estimate { state, query: format_query(q), estimate });
    }
    if a.input.json {
        emit_json(out, &SimulateJson { seed, estimates });
    } else {
        let _ = writeln!(out, "{} samples per query, seed {seed}", a.samples);
        for e in &estimates {
            let m = &e.estimate;
            let _ = write!(
                out,
                "{} {}: {} (std err {}, 95% CI [{}, {}])",
                e.state.as_deref().unwrap_or("-"),
                e.query,
                number(m.mean),
                number(m.std_err),
                number(m.ci_low),
                number(m.ci_high)
            );
            if m.truncated > 0 {
                let _ = write!(out, " [{} runs truncated]", m.truncated);
            }
            let _ = writeln!(out);
        }
    }
    Ok(EXIT_OK)
}

fn stats(a: &StatsArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let (chart, warnings) = load(path)?;
    let compiled = compile_chart(path, &chart)?;
    warn(err, a.input.json, path, &warnings);
    let s = StatsJson {
        chart: chart.name.clone(),
        states: compiled.stats.num_states,
        transitions: compiled.stats.num_transitions,
        variables: compiled.system.vars.len(),
        commands: compiled.system.commands.len(),
        time_base: compiled.mdp.time_base.map(|b| format!("1{}", b.suffix())),
        build_seconds: compiled.stats.build_time.as_secs_f64(),
    };
    if a.input.json {
        emit_json(out, &s);
    } else {
        let _ = writeln!(out, "{} states, {} transitions", s.states, s.transitions);
        let _ = writeln!(out, "{} variables, {} commands", s.variables, s.commands);
        if let Some(t) = &s.time_base {
            let _ = writeln!(out, "one tick = {t}");
        }
        let _ = writeln!(out, "built in {:.3} s", s.build_seconds);
    }
    Ok(EXIT_OK)
}

fn dump(a: &DumpArgs, out: &mut dyn Write, err: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let (chart, warnings) = load(path)?;
    let compiled = compile_chart(path, &chart)?;
    warn(err, a.input.json, path, &warnings);
    let text = compiled.mdp.dump();
    if let Some(o) = &a.output {
        write_file(o, &text)?;
    }
    if a.input.json {
        emit_json(
            out,
            &DumpJson {
                states: compiled.stats.num_states,
                transitions: compiled.stats.num_transitions,
                output: a.output.as_ref().map(|p| p.display().to_string()),
                dump: a.output.is_none().then_some(text),
            },
        );
    } else if a.output.is_none() {
        let _ = write!(out, "{text}");
    }
    Ok(EXIT_OK)
}

fn fmt(a: &FmtArgs, out: &mut dyn Write) -> Outcome {
    let path = &a.input.file;
    let text = read(path)?;
    let parsed = parse_chart(&text);
    let chart = parsed.chart.ok_or_else(|| Failure::Diagnostics(path.display().to_string(), parsed.diagnostics))?;
    let formatted = pretty_print(&chart);
    let changed = formatted != text;
    if a.write && changed {
        write_file(path, &formatted)?;
    }
    if a.input.json {
        emit_json(out, &FmtJson { formatted: formatted.clone(), changed });
    } else if a.check {
        if changed {
            let _ = writeln!(out, "{}: not formatted", path.display());
        }
    } else if !a.write {
        let _ = write!(out, "{formatted}");
    }
    Ok(if a.check && changed { EXIT_FAILED } else { EXIT_OK })
}
