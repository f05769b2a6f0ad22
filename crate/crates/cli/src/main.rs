use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use adroop::plot::{plot_script, Comparison};
use adroop::{ControllerKind, Scenario, Summary, Trace};
use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

/// DC microgrid simulator with adaptive droop secondary control.
#[derive(Parser, Debug)]
#[command(name = "adroop", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a scenario and write `<name>.csv` and `<name>.summary.json`.
    Run {
        scenario: PathBuf,
        /// Output directory (overrides the scenario's `output.dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Secondary controller (overrides the scenario's `controller`).
        #[arg(long)]
        controller: Option<ControllerKind>,
        /// Do not print the summary.
        #[arg(long)]
        quiet: bool,
    },
    /// Write a matplotlib script for a trace.
    Plot {
        trace: PathBuf,
        /// Second trace to overlay, with a per-window ISE panel.
        #[arg(long)]
        compare: Option<PathBuf>,
        /// ISE window length in seconds for `--compare`.
        #[arg(long, default_value_t = 4.0)]
        window: f64,
        /// Script path; defaults to the trace path with a `.py` extension.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Parse and check a scenario without running it.
    Validate { scenario: PathBuf },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            controller,
            quiet,
        } => run(&scenario, out, controller, quiet),
        Command::Plot {
            trace,
            compare,
            window,
            output,
        } => plot(&trace, compare.as_deref(), window, output),
        Command::Validate { scenario } => {
            let sc = Scenario::load(&scenario)?;
            println!(
                "{}: ok ({} converters, {} events, {} s)",
                scenario.display(),
                sc.n_converters(),
                sc.events.len(),
                sc.duration
            );
            Ok(())
        }
    }
}

fn run(path: &Path, out: Option<PathBuf>, controller: Option<ControllerKind>, quiet: bool) -> Result<()> {
    let mut sc = Scenario::load(path)?;
    if let Some(dir) = out {
        sc.output.dir = dir;
    }
    if let Some(kind) = controller {
        sc.controller = kind;
    }
    let started = Instant::now();
    let output = adroop::run(&sc).with_context(|| format!("simulating {}", path.display()))?;
    let elapsed = started.elapsed();

    fs::create_dir_all(&sc.output.dir)
        .with_context(|| format!("creating {}", sc.output.dir.display()))?;
    let trace_path = sc.trace_path();
    let file = File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    output.trace.write_csv(BufWriter::new(file))?;
    fs::write(sc.summary_path(), output.summary.to_json()?)?;

    if !quiet {
        print_summary(&output.summary);
        println!(
            "wrote {} ({} rows) in {:.2} s",
            trace_path.display(),
            output.trace.len(),
            elapsed.as_secs_f64()
        );
    }
    Ok(())
}

fn print_summary(s: &Summary) {
    let fmt = |xs: &[f64]| xs.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" / ");
    let settle = |x: Option<f64>| x.map_or("not settled".to_string(), |t| format!("{t:.3} s"));
    println!("{} ({} controller, {} s)", s.name, s.controller, s.duration);
    println!(
        "  start : I = {} A, V_bus = {:.4} V, R_d = {} ohm",
        fmt(&s.initial.i_line),
        s.initial.v_bus,
        fmt(&s.initial.droop)
    );
    for seg in &s.segments {
        println!("  t = {} s: {}", seg.t_event, seg.actions.join(", "));
        println!(
            "    steady I = {} A, V_bus = {:.4} V, R_d = {} ohm",
            fmt(&seg.steady.i_line),
            seg.steady.v_bus,
            fmt(&seg.steady.droop)
        );
        let si: Vec<String> = seg.settling_i.iter().map(|x| settle(*x)).collect();
        println!("    settling I: {}, V_bus: {}", si.join(" / "), settle(seg.settling_v));
    }
    for w in &s.ise {
        println!(
            "  ISE [{}, {}]: V = {:.6} V^2 s, I = {:.6} A^2 s",
            w.t_start, w.t_end, w.ise_v, w.ise_i
        );
    }
    if let Some(b) = &s.bounds {
        println!(
            "  adaptive bounds: |theta|/M = {:.4}, |b|/M_b = {:.4}, min m = {:.4}",
            b.theta_ratio, b.b_ratio, b.min_m
        );
    }
    if s.load_clamped_steps > 0 {
        println!("  constant-power floor active for {} steps", s.load_clamped_steps);
    }
    for f in &s.faults {
        println!("  fault: {f:?}");
    }
}

fn read_trace(path: &Path) -> Result<Trace> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Trace::read_csv(file).with_context(|| format!("reading {}", path.display()))
}

fn label(path: &Path) -> String {
    path.file_stem().map_or("trace".into(), |s| s.to_string_lossy().into_owned())
}

fn plot(path: &Path, compare: Option<&Path>, window: f64, output: Option<PathBuf>) -> Result<()> {
    let trace = read_trace(path)?;
    let other = compare.map(read_trace).transpose()?;
    let other_label = compare.map(label).unwrap_or_default();
    let cmp = match (compare, &other) {
        (Some(p), Some(tr)) => Some(Comparison {
            label: &other_label,
            path: p,
            trace: tr,
            window,
        }),
        _ => None,
    };
    let script = plot_script(path, &trace, &label(path), cmp.as_ref())?;
    let out = output.unwrap_or_else(|| path.with_extension("py"));
    fs::write(&out, script).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}
