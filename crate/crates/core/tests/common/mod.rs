//! Shared helpers for integration tests: a random chart generator and the
//! gcc harness for generated code.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::process::{Command, ExitStatus, Stdio};

use pchart_core::analysis::{compile, CompileError};
use pchart_core::chart::Chart;
use pchart_core::codegen::{generate_code, CodegenOptions};
use pchart_core::dsl::parse_chart;
use pchart_core::mdp::{BuildOptions, Mdp};
use pchart_core::num::{to_f64, Rational};
use pchart_core::normalize::{nested_codegen_form, VarRole};
use pchart_core::reference::{explore, Config, Interpreter, Options};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Gen {
    rng: ChaCha8Rng,
    /// Every non-root state with whether it is a region of an AND state.
    states: Vec<(String, bool)>,
    next: usize,
}

impl Gen {
    fn block(&mut self, out: &mut String, depth: usize, indent: &str) {
        let n = self.rng.gen_range(2..=3);
        for _ in 0..n {
            let roll = if depth >= 2 { 0 } else { self.rng.gen_range(0..6) };
            let id = self.next;
            self.next += 1;
            match roll {
                4 => {
                    let name = format!("X{id}");
                    self.states.push((name.clone(), false));
                    let _ = writeln!(out, "{indent}xor {name} {{");
                    self.block(out, depth + 1, &format!("{indent}    "));
                    let _ = writeln!(out, "{indent}}}");
                }
                5 => {
                    let name = format!("A{id}");
                    self.states.push((name.clone(), false));
                    let _ = writeln!(out, "{indent}and {name} {{");
                    for r in 0..2 {
                        let region = format!("{name}r{r}");
                        self.states.push((region.clone(), true));
                        let _ = writeln!(out, "{indent}    xor {region} {{");
                        self.block(out, depth + 2, &format!("{indent}        "));
                        let _ = writeln!(out, "{indent}    }}");
                    }
                    let _ = writeln!(out, "{indent}}}");
                }
                _ => {
                    let name = format!("S{id}");
                    self.states.push((name.clone(), false));
                    let _ = writeln!(out, "{indent}state {name};");
                }
            }
        }
    }

    fn pick(&mut self) -> String {
        loop {
            let (name, region) = self.states[self.rng.gen_range(0..self.states.len())].clone();
            if !region {
                return name;
            }
        }
    }
}

/// Source text of a small random chart: nested XOR and AND states, one
/// bounded counter, guards, assignments, a broadcast and timed triggers.
/// With `probabilistic` some transitions branch.
pub fn random_source(seed: u64, probabilistic: bool) -> String {
    let mut g = Gen { rng: ChaCha8Rng::seed_from_u64(seed), states: Vec::new(), next: 0 };
    let mut out = format!("chart G{seed} {{\n    var x: int[0..3] = 0;\n");
    g.block(&mut out, 0, "    ");
    let n = g.rng.gen_range(4..=8);
    for i in 0..n {
        let source = g.pick();
        let internal = i == 0;
        let trigger = if internal {
            "b".to_string()
        } else if g.rng.gen_ratio(1, 6) {
            format!("after {}s", g.rng.gen_range(1..=3))
        } else {
            format!("e{}", g.rng.gen_range(0..3))
        };
        let guard = match g.rng.gen_range(0..6) {
            0 => " when x < 3".to_string(),
            1 => " when x > 0".to_string(),
            2 => format!(" when in {}", g.pick()),
            _ => String::new(),
        };
        let alt = |g: &mut Gen| {
            let mut s = g.pick();
            if !internal && g.rng.gen_ratio(1, 3) {
                s.push_str(" / b");
            }
            match g.rng.gen_range(0..5) {
                0 => s.push_str(" do x := 3 - x"),
                1 => s.push_str(" do x := 0"),
                2 => s.push_str(" do x := 2"),
                _ => {}
            }
            s
        };
        let target = if probabilistic && g.rng.gen_ratio(1, 2) {
            let a = alt(&mut g);
            let b = alt(&mut g);
            format!("prob {{ 0.25: {a}; 0.75: {b}; }}")
        } else {
            alt(&mut g)
        };
        let _ = writeln!(out, "    on {trigger} from {source}{guard} -> {target};");
    }
    out.push_str("}\n");
    out
}

/// A random chart that parses, or `None` when the generator produced
/// something the front end rejects.
pub fn try_random_chart(seed: u64, probabilistic: bool) -> Option<Chart> {
    parse_chart(&random_source(seed, probabilistic)).chart
}

pub fn random_chart(seed: u64, probabilistic: bool) -> Chart {
    let src = random_source(seed, probabilistic);
    let parsed = parse_chart(&src);
    parsed.chart.unwrap_or_else(|| panic!("{:?}\n{src}", parsed.diagnostics))
}

/// Compiles `source` with gcc into a temporary directory and runs it with
/// `stdin`. Returns the exit status and standard output.
pub fn compile_and_run(source: &str, stdin: &str) -> (ExitStatus, String) {
    let dir = std::env::temp_dir().join(format!("pchart-c-{}-{}", std::process::id(), unique()));
    std::fs::create_dir_all(&dir).unwrap();
    let c = dir.join("main.c");
    let exe = dir.join("main");
    std::fs::write(&c, source).unwrap();
    let cc = Command::new("gcc")
        .args(["-std=c99", "-Wall", "-Werror", "-Wno-unused-function", "-O1", "-o"])
        .arg(&exe)
        .arg(&c)
        .output()
        .expect("gcc is required for the generated code tests");
    assert!(cc.status.success(), "gcc failed:\n{}\n{source}", String::from_utf8_lossy(&cc.stderr));
    let mut child = Command::new(&exe).stdin(Stdio::piped()).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap();
    let mut pipe = child.stdin.take().unwrap();
    let input = stdin.to_string();
    // a separate writer keeps a full stdout pipe from blocking the child
    let writer = std::thread::spawn(move || pipe.write_all(input.as_bytes()));
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap().unwrap();
    let _ = std::fs::remove_dir_all(&dir);
    (out.status, String::from_utf8(out.stdout).unwrap())
}

fn unique() -> usize {
    use std::sync::atomic::{AtomicUsize, Ordering};
    static N: AtomicUsize = AtomicUsize::new(0);
    N.fetch_add(1, Ordering::Relaxed)
}

/// Reference configurations reachable from `from` by `event` whose visible
/// projection equals `observed`. Nothing firing leaves the configuration.
pub fn advance(
    it: &Interpreter,
    from: &BTreeSet<Config>,
    event: &str,
    observed: &[i64],
    project: &dyn Fn(&Config) -> Vec<i64>,
) -> BTreeSet<Config> {
    let mut out = BTreeSet::new();
    for cfg in from {
        let dists = it.step(cfg, event);
        let succ: Vec<Config> = if dists.is_empty() {
            vec![cfg.clone()]
        } else {
            dists.into_iter().flat_map(|d| d.into_iter().map(|(_, c)| c)).collect()
        };
        out.extend(succ.into_iter().filter(|c| project(c) == observed));
    }
    out
}

/// Runs every sequence of external events of length `len` through the
/// generated code, with invariant assertions on, and checks that each step
/// lands on a successor the reference interpreter allows.
pub fn c_equivalence(chart: &Chart, len: u32) {
    let form = nested_codegen_form(chart).unwrap();
    let code = generate_code(chart, CodegenOptions { main: false, assertions: true }).unwrap();
    let it = Interpreter::new(chart, Options { clocks: false });
    let events = it.events();
    let procs: Vec<String> = events
        .iter()
        .map(|e| {
            code.entry_points
                .iter()
                .find(|(ev, _)| ev == e)
                .map(|(_, p)| p.clone())
                .unwrap_or_else(|| panic!("no entry point for `{e}` in {:?}", code.entry_points))
        })
        .collect();
    assert_eq!(procs.len(), code.entry_points.len(), "entry points {:?} vs events {events:?}", code.entry_points);
    let visible: Vec<usize> =
        (0..form.layout.vars.len()).filter(|i| !matches!(form.layout.vars[*i].role, VarRole::Clock(_))).collect();

    let mut c = code.source.clone();
    c.push_str("\n#include <stdio.h>\n\nstatic void dump(void) {\n");
    for i in &visible {
        let _ = writeln!(c, "    printf(\"%d,\", (int){});", form.layout.vars[*i].name);
    }
    c.push_str("    putchar(' ');\n}\n\nint main(void) {\n    char line[64];\n");
    if procs.is_empty() {
        c.push_str("    while (fgets(line, sizeof line, stdin)) {\n        init();\n        dump();\n        putchar('\\n');\n    }\n    return 0;\n}\n");
    } else {
        c.push_str("    static void (*const events[])(void) = {");
        c.push_str(&procs.join(", "));
        c.push_str("};\n    while (fgets(line, sizeof line, stdin)) {\n        init();\n        dump();\n");
        c.push_str("        for (char *p = line; *p >= '0' && *p <= '9'; p++) {\n            events[*p - '0']();\n            dump();\n        }\n");
        c.push_str("        putchar('\\n');\n    }\n    return 0;\n}\n");
    }

    assert!(events.len() <= 10);
    let k = events.len().max(1);
    let count = (k as u64).pow(len);
    let mut input = String::new();
    for mut n in 0..count {
        for _ in 0..len {
            input.push(char::from(b'0' + (n % k as u64) as u8));
            n /= k as u64;
        }
        input.push('\n');
    }
    let (status, stdout) = compile_and_run(&c, &input);
    assert!(status.success(), "harness exited with {status} (an invariant assertion failed?)\n{}", code.source);

    let project = |cfg: &Config| -> Vec<i64> {
        let full = it.encode(&form.layout, cfg);
        visible.iter().map(|i| full[*i]).collect()
    };
    let parse = |s: &str| -> Vec<i64> { s.split(',').filter(|x| !x.is_empty()).map(|x| x.parse().unwrap()).collect() };
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len() as u64, count);
    for (line, seq) in lines.iter().zip(input.lines()) {
        let states: Vec<Vec<i64>> = line.split_whitespace().map(parse).collect();
        let init = it.initial();
        assert_eq!(states[0], project(&init), "initial state of `{}`", chart.name);
        let mut current: BTreeSet<Config> = [init].into();
        for (i, ch) in seq.chars().enumerate().take_while(|_| !procs.is_empty()) {
            let e = &events[ch as usize - '0' as usize];
            let next = advance(&it, &current, e, &states[i + 1], &project);
            assert!(
                !next.is_empty(),
                "chart `{}`: after {:?} the code reached {:?}, which the reference does not allow\n{}",
                chart.name,
                seq[..=i].chars().map(|c| events[c as usize - '0' as usize].as_str()).collect::<Vec<_>>(),
                states[i + 1],
                code.source
            );
            current = next;
        }
    }
}

/// A flat chart whose transitions only move forward, so every run ends in a
/// sink. States `S0..Sn` with `n <= 12`; `S_goal` carries `?P.min` and
/// `?P.max`.
pub fn acyclic_source(seed: u64) -> (String, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(3..=12);
    let goal = format!("S{}", rng.gen_range(1..n));
    let mut out = format!("chart Dag{seed} {{\n");
    for i in 0..n {
        let name = format!("S{i}");
        if name == goal {
            let _ = writeln!(out, "    state {name} {{ query \"?P.min\"; query \"?P.max\"; }}");
        } else {
            let _ = writeln!(out, "    state {name};");
        }
    }
    for i in 0..n - 1 {
        let events = rng.gen_range(0..=2);
        for e in 0..events {
            let k = rng.gen_range(1..=3.min(n - 1 - i));
            let mut targets: Vec<usize> = (i + 1..n).collect();
            for j in 0..k {
                let pick = rng.gen_range(j..targets.len());
                targets.swap(j, pick);
            }
            targets.truncate(k);
            let weights: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
            let total: u32 = weights.iter().sum();
            let alts: Vec<String> = weights.iter().zip(&targets).map(|(w, t)| format!("{w}/{total}: S{t};")).collect();
            let _ = writeln!(out, "    on e{e} from S{i} -> prob {{ {} }}", alts.join(" "));
        }
    }
    out.push_str("}\n");
    (out, goal)
}

pub type Edges = BTreeSet<(Vec<i64>, String, Vec<(Vec<i64>, Rational)>)>;

/// Command labels carry a `_k` suffix per alternative; map them back to the
/// triggering event and drop the deadlock self-loops.
pub fn mdp_edges(mdp: &Mdp, events: &[String]) -> Edges {
    let mut out = Edges::new();
    for (s, acts) in mdp.actions.iter().enumerate() {
        for a in acts {
            if a.label == "deadlock" {
                continue;
            }
            let label = if a.label == "tick" || events.contains(&a.label) {
                a.label.clone()
            } else {
                let (base, k) = a.label.rsplit_once('_').unwrap_or_else(|| panic!("unexpected label {}", a.label));
                assert!(k.parse::<u32>().is_ok() && events.iter().any(|e| e == base), "unexpected label {}", a.label);
                base.to_string()
            };
            let mut dist: Vec<(Vec<i64>, Rational)> = a.dist.iter().map(|(t, p)| (mdp.states[*t].clone(), *p)).collect();
            dist.sort();
            out.insert((mdp.states[s].clone(), label, dist));
        }
    }
    out
}

/// Compares the flat system with the reference interpreter. `Ok(false)`
/// means the chart is rejected by the well-formedness checks.
pub fn same_semantics(chart: &Chart) -> Result<bool, String> {
    let compiled = match compile(chart, BuildOptions::default()) {
        Ok(c) => c,
        Err(CompileError::Diagnostics(_)) => return Ok(false),
        Err(e) => return Err(e.to_string()),
    };
    let it = Interpreter::new(chart, Options::default());
    // the interpreter reacts to broadcast-triggered events too; keep only
    // the external ones, which is what the flat system offers
    let events = it.events();
    let lts = explore(chart, &compiled.normalized.layout, Options::default(), 100_000)?;
    let states: BTreeSet<Vec<i64>> = compiled.mdp.states.iter().cloned().collect();
    if states != lts.states {
        return Err(format!("chart `{}`: reachable states differ", chart.name));
    }
    let ours = mdp_edges(&compiled.mdp, &events);
    if ours != lts.transitions {
        let extra: Vec<_> = ours.difference(&lts.transitions).collect();
        let missing: Vec<_> = lts.transitions.difference(&ours).collect();
        return Err(format!("chart `{}`\nonly in the flat system: {extra:?}\nonly in the reference: {missing:?}", chart.name));
    }
    Ok(true)
}

/// Reachability by enumerating every memoryless deterministic scheduler and
/// every path it induces. Sinks are states whose only action loops back.
pub fn enumerate_paths(mdp: &Mdp, goal: &[bool]) -> (f64, f64) {
    let n = mdp.states.len();
    let choices: Vec<usize> = (0..n).map(|s| mdp.actions[s].len().max(1)).collect();
    let mut pick = vec![0usize; n];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    loop {
        let p = paths_from(mdp, goal, &pick, mdp.initial);
        lo = lo.min(p);
        hi = hi.max(p);
        // next scheduler in mixed-radix order
        let mut i = 0;
        while i < n {
            pick[i] += 1;
            if pick[i] < choices[i] {
                break;
            }
            pick[i] = 0;
            i += 1;
        }
        if i == n {
            return (lo, hi);
        }
    }
}

fn paths_from(mdp: &Mdp, goal: &[bool], pick: &[usize], s: usize) -> f64 {
    if goal[s] {
        return 1.0;
    }
    let Some(a) = mdp.actions[s].get(pick[s]) else { return 0.0 };
    if a.dist.iter().all(|(t, _)| *t == s) {
        return 0.0;
    }
    a.dist.iter().map(|(t, p)| to_f64(p) * paths_from(mdp, goal, pick, *t)).sum()
}

