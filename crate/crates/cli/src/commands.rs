use crate::{CompareArgs, ReportArgs, RunArgs, TraceAction, TraceArgs, ValidateArgs};
use anyhow::{anyhow, bail, Context, Result};
use padnet::padding::DefenseSpec;
use padnet::report::{group_runs, write_compare, write_reports};
use padnet::runfiles::{read_run_dir, run_and_write, RunMeta};
use padnet::scenario::{RunManifest, Scenario};
use padnet::trace::{
    apply_defense_to_trace, read_trace_csv, trace_from_record, trace_overheads, write_trace_csv,
    write_trace_report,
};
use padnet::workload::DownloadStatus;
use std::path::PathBuf;

fn out_root(cli: Option<PathBuf>) -> PathBuf {
    cli.or_else(|| std::env::var_os("PADNET_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

/// Apply CLI overrides on top of the scenario file; overrides end up in the
/// manifest because the manifest embeds the resolved scenario.
fn apply_overrides(scenario: &mut Scenario, args: &RunArgs) -> Result<()> {
    if let Some(seed) = args.seed {
        scenario.seeds = vec![seed];
    }
    if let Some(seeds) = &args.seeds {
        scenario.seeds = seeds.clone();
    }
    if let Some(duration) = args.duration {
        scenario.duration_us = (duration * 1e6).round() as u64;
    }
    if args.events_log {
        scenario.emit_events_log = true;
    }
    if let Some(name) = &args.defense {
        let params = args.defense_params.as_deref();
        if name != &scenario.defense_name() || params.is_some() {
            scenario.defense = build_defense(name, params)?;
        }
    } else if args.defense_params.is_some() {
        bail!("--defense-params requires --defense");
    }
    scenario.validate()?;
    Ok(())
}

fn build_defense(name: &str, params: Option<&str>) -> Result<DefenseSpec> {
    let mut object = match params {
        Some(text) => {
            let value: serde_json::Value =
                serde_json::from_str(text).context("parsing --defense-params")?;
            let serde_json::Value::Object(map) = value else {
                bail!("--defense-params must be a JSON object");
            };
            map
        }
        None => serde_json::Map::new(),
    };
    object.insert("name".into(), serde_json::Value::String(name.to_string()));
    let spec: DefenseSpec = serde_json::from_value(serde_json::Value::Object(object))
        .map_err(|e| anyhow!("defense `{name}`: {e} (missing --defense-params?)"))?;
    Ok(spec)
}

pub fn run(args: RunArgs) -> Result<()> {
    let (scenario, out) = if let Some(manifest_path) = &args.from_manifest {
        let manifest = RunManifest::from_path(manifest_path)?;
        let mut scenario = manifest.scenario;
        scenario.seeds = vec![manifest.seed];
        scenario.validate()?;
        (scenario, out_root(args.out.clone()))
    } else {
        let path = args.scenario.as_ref().expect("clap enforces presence");
        let mut scenario = Scenario::from_path(path)?;
        apply_overrides(&mut scenario, &args)?;
        (scenario, out_root(args.out.clone()))
    };

    let seeds = scenario.seeds.clone();
    // Defense hash in the name keeps same-family, different-parameter runs
    // from landing in the same directory.
    let dhash = scenario.defense_hash();
    let jobs: Vec<(u64, PathBuf)> = seeds
        .iter()
        .map(|&seed| {
            let dir = out.join(format!(
                "{}-{}-{}-s{seed}",
                scenario.name,
                scenario.defense_name(),
                &dhash[..6]
            ));
            (seed, dir)
        })
        .collect();

    let workers = args
        .workers
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
        .clamp(1, jobs.len().max(1));

    let queue = std::sync::Mutex::new(jobs.into_iter());
    let results: std::sync::Mutex<Vec<(u64, PathBuf, RunMeta)>> = std::sync::Mutex::new(Vec::new());
    let failure: std::sync::Mutex<Option<anyhow::Error>> = std::sync::Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let job = queue.lock().unwrap().next();
                let Some((seed, dir)) = job else { break };
                match run_and_write(&scenario, seed, &dir) {
                    Ok(meta) => results.lock().unwrap().push((seed, dir, meta)),
                    Err(err) => {
                        *failure.lock().unwrap() = Some(anyhow!("seed {seed}: {err}"));
                        break;
                    }
                }
            });
        }
    });
    if let Some(err) = failure.into_inner().unwrap() {
        return Err(err);
    }

    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(seed, _, _)| *seed);
    for (seed, dir, meta) in &results {
        let s = &meta.summary;
        let busiest = s
            .host_utilization
            .iter()
            .filter(|u| matches!(u.role.as_str(), "guard" | "middle" | "exit"))
            .max_by(|a, b| a.utilization.partial_cmp(&b.utilization).unwrap());
        println!(
            "seed {seed}: {} downloads ({} ok), {} padding cells, busiest relay {}, -> {}",
            s.downloads_attempted,
            s.downloads_succeeded,
            s.padding_injected_cells,
            busiest.map_or("n/a".to_string(), |u| format!(
                "{} {} at {:.0}%",
                u.role,
                u.host,
                u.utilization * 100.0
            )),
            dir.display()
        );
    }
    Ok(())
}

pub fn report(args: ReportArgs) -> Result<()> {
    let mut runs = Vec::new();
    for dir in &args.run_dirs {
        runs.push(read_run_dir(dir).with_context(|| format!("reading {}", dir.display()))?);
    }
    let groups = group_runs(runs)?;
    let files = write_reports(&groups, &args.out, args.pad_bin_width)?;
    println!("wrote {} report files to {}", files.len(), args.out.display());
    Ok(())
}

pub fn trace(args: TraceArgs) -> Result<()> {
    match args.action {
        TraceAction::Gen { run, download, out } => {
            let data = read_run_dir(&run)?;
            let record = match download {
                Some(id) => data
                    .records
                    .iter()
                    .find(|r| r.id == id)
                    .ok_or_else(|| anyhow!("download {id} not found in {}", run.display()))?,
                None => data
                    .records
                    .iter()
                    .find(|r| r.status == DownloadStatus::Success)
                    .ok_or_else(|| anyhow!("no successful download in {}", run.display()))?,
            };
            let trace = trace_from_record(record);
            write_trace_csv(&trace.cells, &out)?;
            println!(
                "wrote {} cells from download {} to {}",
                trace.cells.len(),
                record.id,
                out.display()
            );
            Ok(())
        }
        TraceAction::Apply {
            trace,
            defense,
            defense_params,
            scenario,
            seed,
            out,
            report,
        } => {
            let spec = match (&defense, &scenario) {
                (Some(name), None) => build_defense(name, defense_params.as_deref())?,
                (None, Some(path)) => Scenario::from_path(path)?.defense,
                _ => bail!("give either --defense or --scenario"),
            };
            if matches!(spec, DefenseSpec::None) {
                bail!("trace mode applies a real defense; `none` transforms nothing");
            }
            let input = read_trace_csv(&trace)?;
            let defended = apply_defense_to_trace(&input, &spec, seed)?;
            write_trace_csv(&defended.cells, &out)?;
            let (bandwidth, latency) = trace_overheads(&input, &defended);
            if let Some(report_path) = report {
                write_trace_report(spec.display_name(), bandwidth, latency, &report_path)?;
            }
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.1}%"));
            println!(
                "{}: {} content + {} padding cells, bandwidth {}, latency {}",
                spec.display_name(),
                defended.content_cells(),
                defended.padding_cells(),
                fmt(bandwidth),
                fmt(latency)
            );
            Ok(())
        }
    }
}

pub fn compare(args: CompareArgs) -> Result<()> {
    write_compare(
        &args.report_dir,
        &args.trace_report,
        &args.size,
        &args.control,
        &args.out,
    )?;
    println!("wrote {}", args.out.display());
    Ok(())
}

pub fn validate(args: ValidateArgs) -> Result<()> {
    let scenario = Scenario::from_path(&args.scenario)?;
    println!(
        "{}: ok (defense {}, {} seeds, {:.0}s simulated, scenario hash {})",
        scenario.name,
        scenario.defense_name(),
        scenario.seeds.len(),
        scenario.duration_us as f64 / 1e6,
        scenario.scenario_hash()
    );
    Ok(())
}

