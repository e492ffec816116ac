use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cgtrack::alignment::serialize_timeline;
use cgtrack::cgc::{serialize_records, serialize_turns};
use cgtrack::goalgen::{generate_goal, goal_json, render_views, Palette};
use cgtrack::importer::import_group;
use cgtrack::llmbridge::{
    AuditLog, ChatClient, EndpointClient, Experiment, MockClient, MockFixtures,
};
use cgtrack::metrics::DscMode;
use cgtrack::pipeline::{
    read_reports, run_group_dir, run_groups, summary_csv, validate_group, write_reports,
    PipelineError, RunConfig,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ENDPOINT: u8 = 3;

#[derive(Parser)]
#[command(name = "cgtrack", version, about = "Common-ground tracking pipeline and experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a group's annotation files, replay the structure log and align; print warnings.
    Validate {
        #[arg(required = true)]
        groups: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Print the validation report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Generate a goal structure and its three side views.
    Generate {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the merged multimodal timeline of a group as JSONL.
    Align {
        group: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run common-ground inference; writes cg.jsonl and turns.jsonl.
    Cgc {
        group: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory; records go to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one experiment (1-4) over one or more groups and write report files.
    RunExp {
        experiment: Experiment,
        #[arg(required = true)]
        groups: Vec<PathBuf>,
        #[command(flatten)]
        run: RunArgs,
        /// Mock fixture file, or `oracle` to echo the ground truth.
        #[arg(long)]
        mock: Option<String>,
        /// Append every model request and reply to this JSONL file.
        #[arg(long)]
        audit: Option<PathBuf>,
        /// Report directory.
        #[arg(long, default_value = "reports")]
        out: PathBuf,
    },
    /// Combine the report files in a directory into one CSV table.
    Report {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Convert a released group directory into the canonical annotation files.
    Import {
        #[arg(long)]
        src: PathBuf,
        #[arg(long)]
        dest: PathBuf,
    },
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Key-value config file (pipeline and model settings).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    grounding_window: Option<f64>,
    #[arg(long)]
    window_before: Option<f64>,
    #[arg(long)]
    window_after: Option<f64>,
    #[arg(long)]
    emblem_window: Option<f64>,
    #[arg(long)]
    tau_move: Option<f64>,
    #[arg(long)]
    dsc_mode: Option<DscMode>,
    /// Only run experiments that do not score against the structure annotation.
    #[arg(long)]
    skip_structure_truth: bool,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                RunConfig::from_kv_text(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        let secs = [
            ("grounding_window", self.grounding_window),
            ("window_before", self.window_before),
            ("window_after", self.window_after),
            ("emblem_window", self.emblem_window),
            ("tau_move", self.tau_move),
        ];
        for (key, v) in secs {
            if let Some(v) = v {
                cfg.set(key, &v.to_string()).map_err(|m| Usage(format!("--{}: {m}", key.replace('_', "-"))))?;
            }
        }
        if let Some(m) = self.dsc_mode {
            cfg.dsc_mode = m;
        }
        cfg.skip_structure_truth |= self.skip_structure_truth;
        Ok(cfg)
    }
}

/// A request the tool cannot act on, as opposed to bad data.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn print_warnings(group: &str, warnings: &[cgtrack::Warning]) {
    for w in warnings {
        eprintln!("{group}: warning: {w}");
    }
}

fn write_or_print(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn client_for(exp: Experiment, mock: Option<&str>, cfg: &RunConfig) -> Result<Option<Box<dyn ChatClient>>> {
    if !exp.uses_model() {
        return Ok(None);
    }
    let client: Box<dyn ChatClient> = match mock {
        Some("oracle") => Box::new(MockClient::new(MockFixtures::oracle())),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading mock fixtures {path}"))?;
            Box::new(MockClient::new(MockFixtures::from_json(&text).with_context(|| format!("in {path}"))?))
        }
        None => Box::new(EndpointClient::http(cfg.model.clone())?),
    };
    Ok(Some(client))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { groups, run, json } => {
            let cfg = run.load()?;
            let mut failed = None;
            for g in &groups {
                match validate_group(g, &cfg) {
                    Ok(report) => {
                        print_warnings(&report.group, &report.warnings);
                        if json {
                            println!("{}", serde_json::to_string_pretty(&report)?);
                        } else {
                            println!(
                                "{}: ok ({} propositions, {} actions, {} gestures, {} stances, {} CG records, {} warnings)",
                                report.group,
                                report.propositions,
                                report.actions,
                                report.gestures,
                                report.stances,
                                report.cg_records,
                                report.warnings.len()
                            );
                        }
                    }
                    Err(e) if failed.is_none() => failed = Some(e),
                    Err(e) => eprintln!("error: {e}"),
                }
            }
            if let Some(e) = failed {
                return Err(e.into());
            }
        }
        Command::Generate { seed, out } => {
            let goal = generate_goal(seed, &Palette::default());
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = out.join("goal.json");
            fs::write(&path, goal_json(seed, &goal)).with_context(|| format!("writing {}", path.display()))?;
            for v in render_views(&goal).iter() {
                let path = out.join(format!("view_{}.txt", v.side.as_str()));
                fs::write(&path, v.to_text()).with_context(|| format!("writing {}", path.display()))?;
            }
            println!("wrote goal for seed {seed} to {}", out.display());
        }
        Command::Align { group, run, out } => {
            let cfg = run.load()?;
            let r = run_group_dir(&group, &cfg)?;
            print_warnings(&r.data.name, &r.warnings);
            write_or_print(out.as_deref(), &serialize_timeline(&r.timeline))?;
        }
        Command::Cgc { group, run, out } => {
            let cfg = run.load()?;
            let r = run_group_dir(&group, &cfg)?;
            print_warnings(&r.data.name, &r.warnings);
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    write_or_print(Some(&dir.join("cg.jsonl")), &serialize_records(&r.cgc.records))?;
                    write_or_print(Some(&dir.join("turns.jsonl")), &serialize_turns(&r.cgc.turns))?;
                }
                None => print!("{}", serialize_records(&r.cgc.records)),
            }
        }
        Command::RunExp {
            experiment,
            groups,
            run,
            mock,
            audit,
            out,
        } => {
            let cfg = run.load()?;
            let client = client_for(experiment, mock.as_deref(), &cfg)?;
            let audit = audit
                .map(|p| AuditLog::create(&p).with_context(|| format!("opening {}", p.display())))
                .transpose()?;
            let results = run_groups(&groups, experiment, &cfg, client.as_deref(), audit.as_ref());
            let mut reports = Vec::new();
            let mut first_err = None;
            for r in results {
                match r {
                    Ok(rep) => {
                        print_warnings(&rep.group, &rep.warnings);
                        println!(
                            "{} experiment {}: average DSC {:.3}, global DSC {:.3}, {} turns, {} parse failures",
                            rep.group,
                            experiment,
                            rep.average_dsc,
                            rep.global_dsc,
                            rep.per_turn.len(),
                            rep.parse_failures
                        );
                        reports.push(rep);
                    }
                    Err(e) if first_err.is_none() => first_err = Some(e),
                    Err(e) => eprintln!("error: {e}"),
                }
            }
            if !reports.is_empty() {
                let (j, c) = write_reports(&out, experiment, &reports)?;
                println!("wrote {} and {}", j.display(), c.display());
            }
            if let Some(e) = first_err {
                return Err(e.into());
            }
        }
        Command::Report { dir, out } => {
            let reports = read_reports(&dir)?;
            if reports.is_empty() {
                bail!(Usage(format!("no report_exp*.json files in {}", dir.display())));
            }
            write_or_print(out.as_deref(), &summary_csv(&reports))?;
        }
        Command::Import { src, dest } => {
            let report = import_group(&src, &dest)?;
            for f in &report.files {
                println!(
                    "{:?}: {} source records, {} imported, {} skipped",
                    f.kind, f.source_records, f.imported, f.skipped
                );
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<Usage>().is_some() {
        return EXIT_USAGE;
    }
    match err.downcast_ref::<PipelineError>() {
        Some(e) if e.is_endpoint() => EXIT_ENDPOINT,
        Some(PipelineError::StructureTruthSkipped { .. } | PipelineError::NoClient { .. }) => EXIT_USAGE,
        Some(PipelineError::Config { .. }) => EXIT_USAGE,
        Some(_) => EXIT_DATA,
        None => match err.downcast_ref::<cgtrack::llmbridge::LlmError>() {
            Some(e) if e.is_endpoint() => EXIT_ENDPOINT,
            Some(_) => EXIT_USAGE,
            None => EXIT_DATA,
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Library errors already embed their cause, so only new text is appended.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(exit_code(&e))
        }
    }
}
