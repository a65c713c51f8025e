use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rayon::prelude::*;

use armsafe::harness::{
    compare, run_scenario, write_outputs, Comparison, RunOutput, Scenario, Summary, Trace,
};
use armsafe::model::{end_effector_pose, load_model, mass_matrix, RobotModel};

#[derive(Parser)]
#[command(name = "armsafe", version, about = "Contact-aware manipulator control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its trace and summary.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare two traces and write the comparison as JSON.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a robot model file.
    CheckModel {
        #[arg(long)]
        model: PathBuf,
    },
    /// Run every scenario in a directory, then compare declared pairs.
    Batch {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (default: `<dir>/results`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum Outcome {
    Pass,
    Fail,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, out } => cmd_run(&scenario, &out),
        Command::Compare { a, b, out } => cmd_compare(&a, &b, &out),
        Command::CheckModel { model } => cmd_check_model(&model),
        Command::Batch { dir, jobs, out } => {
            let out = out.unwrap_or_else(|| dir.join("results"));
            cmd_batch(&dir, jobs, &out)
        }
    };
    match result {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn print_summary(s: &Summary) {
    let m = &s.metrics;
    println!(
        "{}: {} ticks, peak force {:.3} N, peak gamma {:.3} N·m, peak error {:.4} m, wiped {:.3}, switches {}",
        s.scenario,
        s.ticks,
        m.peak_ee_force,
        m.peak_gamma,
        m.peak_ee_error_max(),
        m.wiped_fraction,
        m.mode_switches
    );
    for c in &s.checks {
        let verdict = if c.pass { "pass" } else { "FAIL" };
        println!("  {verdict}: {} = {:.6} (limit {})", c.name, c.value, c.limit);
    }
}

type Run = (Scenario, RunOutput, PathBuf);

fn run_one(path: &Path, out: &Path) -> Result<Run> {
    let scenario = Scenario::load(path)?;
    let output = run_scenario(&scenario).with_context(|| format!("running {}", path.display()))?;
    let written = write_outputs(&output, out, scenario.output_stem())?;
    log::info!("wrote {}", written.trace.display());
    Ok((scenario, output, written.trace))
}

fn cmd_run(path: &Path, out: &Path) -> Result<Outcome> {
    let (_, output, _) = run_one(path, out)?;
    print_summary(&output.summary);
    Ok(if output.summary.pass { Outcome::Pass } else { Outcome::Fail })
}

fn write_comparison(cmp: &Comparison, out: &Path) -> Result<()> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let json = serde_json::to_string_pretty(cmp)?;
    std::fs::write(out, json + "\n").with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}

fn cmd_compare(a: &Path, b: &Path, out: &Path) -> Result<Outcome> {
    let ta = Trace::load(a)?;
    let tb = Trace::load(b)?;
    let cmp = compare(&ta, &tb, None)?;
    print!("{}", cmp.to_text());
    write_comparison(&cmp, out)?;
    Ok(if cmp.pass { Outcome::Pass } else { Outcome::Fail })
}

fn cmd_check_model(path: &Path) -> Result<Outcome> {
    let model = load_model(path)?;
    describe_model(&model)?;
    Ok(Outcome::Pass)
}

fn describe_model(model: &RobotModel) -> Result<()> {
    let n = model.dof();
    let total: f64 = model.links().iter().map(|l| l.mass).sum();
    println!("{n} joints, total mass {total:.3} kg");
    for (j, l) in model.joints().iter().zip(model.links()) {
        let (lo, hi) = j.limits.position;
        println!(
            "  {:<16} [{lo:+.4}, {hi:+.4}] rad, {:.1} N·m, link {} {:.3} kg",
            j.name, j.limits.torque, l.name, l.mass
        );
    }
    let q = model.range_midpoint();
    let m = mass_matrix(model, &q);
    if m.clone().cholesky().is_none() {
        bail!("mass matrix is not positive definite at the range midpoint");
    }
    let x = end_effector_pose(model, &q);
    println!(
        "tool at range midpoint: ({:.4}, {:.4}, {:.4}) m",
        x.position.x, x.position.y, x.position.z
    );
    Ok(())
}

fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if path.is_file() && name.ends_with(".json") && !name.ends_with(".summary.json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn cmd_batch(dir: &Path, jobs: usize, out: &Path) -> Result<Outcome> {
    let files = scenario_files(dir)?;
    if files.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build()?;
    let results: Vec<(PathBuf, Result<Run>)> = pool.install(|| {
        files
            .par_iter()
            .map(|f| (f.clone(), run_one(f, out)))
            .collect()
    });

    let mut failed = false;
    let mut errored = false;
    let mut done = Vec::new();
    for (path, r) in results {
        match r {
            Ok(run) => {
                print_summary(&run.1.summary);
                failed |= !run.1.summary.pass;
                let key = path.canonicalize().unwrap_or(path);
                done.push((key, run));
            }
            Err(e) => {
                eprintln!("error: {}: {e:#}", path.display());
                errored = true;
            }
        }
    }

    for (_, (scenario, output, trace)) in &done {
        let Some(partner) = scenario.compare_path() else {
            continue;
        };
        let partner = partner.canonicalize().unwrap_or(partner);
        let other = done.iter().find(|(key, _)| *key == partner).map(|(_, run)| run);
        let Some((other_scenario, other_output, other_trace)) = other else {
            eprintln!(
                "error: {}: comparison partner {} was not part of the batch",
                scenario.name(),
                partner.display()
            );
            errored = true;
            continue;
        };
        let mut cmp = compare(&output.trace, &other_output.trace, Some(&scenario.thresholds))?;
        cmp.ratios.insert(
            "peak_obstacle_force".into(),
            armsafe::harness::ratio(
                output.summary.extras.peak_obstacle_force,
                other_output.summary.extras.peak_obstacle_force,
            ),
        );
        let file = out.join(format!("{}.compare.json", scenario.output_stem()));
        write_comparison(&cmp, &file)?;
        println!(
            "{} vs {} ({} vs {}):",
            scenario.name(),
            other_scenario.name(),
            trace.display(),
            other_trace.display()
        );
        print!("{}", cmp.to_text());
        println!(
            "peak obstacle force {:.3} N vs {:.3} N",
            output.summary.extras.peak_obstacle_force,
            other_output.summary.extras.peak_obstacle_force
        );
        failed |= !cmp.pass;
    }

    if errored {
        bail!("batch finished with errors");
    }
    Ok(if failed { Outcome::Fail } else { Outcome::Pass })
}
