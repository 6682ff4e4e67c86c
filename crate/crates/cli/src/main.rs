use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use hindsight::dynexec::{trace, Schedule};
use hindsight::feedback::{parse_counterexamples, run_loop, serialize_counterexamples, to_edge_set, Counterexample};
use hindsight::ir::{parse_program, parse_spec_file, ProgramBundle, SpecSet};
use hindsight::monitor::{monitoring_scheme, MonitoringScheme, SchemeKind};
use hindsight::oracle::suite::{self, Corpus};
use hindsight::oracle::{enumerate_executions, random_schedules, MAX_BRANCHES};
use hindsight::pta::{
    compute_pointsto, may_alias, points_to_classes, resolve_var, taint_flows, AbstractObject, MissingEdgeSet,
    PointsToSet,
};
use hindsight::specinfer::{infer_min_spec, infer_proxy_specs, InferMode, Target};

#[derive(Parser)]
#[command(name = "hindsight", version, about = "Points-to analysis with missing library code, refined by runtime counterexamples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Program bundle (.ir).
    bundle: PathBuf,
    /// Spec file or directory of .spec files to activate; repeatable.
    #[arg(long = "specs")]
    specs: Vec<PathBuf>,
}

#[derive(Args)]
struct Output {
    /// Directory for artifacts.
    #[arg(long, env = "HINDSIGHT_OUT", default_value = "hindsight-out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Compute Π and write pi.txt.
    Analyze {
        #[command(flatten)]
        input: Input,
        /// Counterexamples to inject.
        #[arg(long)]
        counterexamples: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Run one schedule under a monitoring scheme and write reports.txt.
    Execute {
        #[command(flatten)]
        input: Input,
        /// Branch decisions, e.g. `01` or `-` for none.
        #[arg(long)]
        schedule: Schedule,
        #[arg(long, default_value = "min")]
        scheme: SchemeKind,
        /// Π the scheme is planned against; optimistic Π if absent.
        #[arg(long)]
        pi: Option<PathBuf>,
        /// Also write the full event trace to trace.txt.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Run the feedback loop to quiescence.
    Loop {
        #[command(flatten)]
        input: Input,
        /// `exhaustive[:k]`, `random:SEED:COUNT` or `list:S1,S2,..`.
        #[arg(long, default_value = "exhaustive")]
        schedules: ScheduleSource,
        #[arg(long, default_value = "opt")]
        scheme: SchemeKind,
        /// Print monitor counts of the naive, minimal and optimized schemes.
        #[arg(long)]
        report_reduction: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Infer a minimal spec deriving a target edge; writes specs/<fn>.spec.
    Infer {
        #[command(flatten)]
        input: Input,
        /// Target edge, e.g. `main.data -> site:o_str`.
        #[arg(long, value_parser = parse_target, required_unless_present = "counterexamples")]
        target: Option<(String, String)>,
        #[arg(long, default_value = "restricted")]
        mode: InferMode,
        /// Counterexamples already known; proxies among them also yield
        /// proxy specs.
        #[arg(long)]
        counterexamples: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Answer client queries from a persisted Π file.
    Query {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        pi: PathBuf,
        #[command(subcommand)]
        query: Query,
    },
    /// Run the oracle property suites over a generated corpus.
    OracleCheck {
        /// `seed=N n=M`.
        #[arg(long, num_args = 1.., value_parser = parse_corpus_param, default_values = ["seed=7", "n=200"])]
        corpus: Vec<CorpusParam>,
        /// Adversarial constructions required by the minimality suite.
        #[arg(long, default_value_t = 1)]
        min_pairs: usize,
    },
}

#[derive(Subcommand)]
enum Query {
    /// May `x` and `y` point to a common object?
    Alias { x: String, y: String },
    /// Classes `x` may point to.
    Types { x: String },
    /// Source-to-sink flows.
    Flows,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load(input: &Input) -> Result<(ProgramBundle, SpecSet)> {
    let mut b = parse_program(&read(&input.bundle)?).with_context(|| format!("parsing {}", input.bundle.display()))?;
    let mut active = SpecSet::new();
    for p in &input.specs {
        let files: Vec<PathBuf> = if p.is_dir() {
            let mut v: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "spec"))
                .collect();
            v.sort();
            v
        } else {
            vec![p.clone()]
        };
        for f in files {
            let spec = parse_spec_file(&read(&f)?).with_context(|| format!("parsing {}", f.display()))?;
            active.extend(b.merge_specs(spec).with_context(|| format!("merging {}", f.display()))?);
        }
    }
    Ok((b, active))
}

fn counterexamples(path: Option<&PathBuf>, b: &ProgramBundle) -> Result<Vec<Counterexample>> {
    match path {
        Some(p) => parse_counterexamples(&read(p)?, b).with_context(|| format!("parsing {}", p.display())),
        None => Ok(Vec::new()),
    }
}

#[derive(Clone, Debug)]
enum ScheduleSource {
    Exhaustive(usize),
    Random { seed: u64, count: usize },
    List(Vec<Schedule>),
}

impl FromStr for ScheduleSource {
    type Err = String;

    fn from_str(spec: &str) -> Result<Self, String> {
        let num = |s: &str, what: &str| s.parse::<u64>().map_err(|_| format!("bad {what} {s:?}"));
        let parts: Vec<&str> = spec.split(':').collect();
        Ok(match parts.as_slice() {
            ["exhaustive"] => ScheduleSource::Exhaustive(MAX_BRANCHES),
            ["exhaustive", k] => ScheduleSource::Exhaustive(num(k, "branch cap")? as usize),
            ["random", seed, count] => ScheduleSource::Random {
                seed: num(seed, "seed")?,
                count: num(count, "count")? as usize,
            },
            ["list", items] => {
                ScheduleSource::List(items.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?)
            }
            _ => return Err(format!("expected exhaustive[:k], random:SEED:COUNT or list:S1,S2,.. (got {spec:?})")),
        })
    }
}

fn schedules(b: &ProgramBundle, source: &ScheduleSource) -> Result<Vec<Schedule>> {
    Ok(match source {
        ScheduleSource::Exhaustive(k) => enumerate_executions(b, *k)?,
        ScheduleSource::Random { seed, count } => random_schedules(b, *seed, *count, MAX_BRANCHES)?,
        ScheduleSource::List(l) => l.clone(),
    })
}

fn parse_target(s: &str) -> Result<(String, String), String> {
    s.split_once("->")
        .map(|(v, o)| (v.trim().to_string(), o.trim().to_string()))
        .ok_or_else(|| "expected `VAR -> OBJECT`".to_string())
}

#[derive(Clone, Copy, Debug)]
enum CorpusParam {
    Seed(u64),
    Count(usize),
}

fn parse_corpus_param(s: &str) -> Result<CorpusParam, String> {
    let bad = || format!("expected seed=N or n=M (got {s:?})");
    match s.split_once('=') {
        Some(("seed", v)) => v.parse().map(CorpusParam::Seed).map_err(|_| bad()),
        Some(("n", v)) => v.parse().map(CorpusParam::Count).map_err(|_| bad()),
        _ => Err(bad()),
    }
}

fn scheme_counts(b: &ProgramBundle, specs: &SpecSet, pi: &PointsToSet) -> String {
    let line = |k: SchemeKind| {
        let s: MonitoringScheme = monitoring_scheme(k, b, specs, pi);
        format!("{k} {} (alloc {})", s.len(), s.alloc.len())
    };
    format!(
        "{}, {}, {}",
        line(SchemeKind::Naive),
        line(SchemeKind::Min),
        line(SchemeKind::Opt)
    )
}

/// Returns whether every checked invariant held.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Analyze {
            input,
            counterexamples: ces,
            output,
        } => {
            let (b, specs) = load(&input)?;
            let miss = to_edge_set(&counterexamples(ces.as_ref(), &b)?);
            let pi = compute_pointsto(&b, &specs, &miss);
            let path = write(&output.out, "pi.txt", &pi.serialize())?;
            println!("{} edges -> {}", pi.len(), path.display());
        }
        Command::Execute {
            input,
            schedule,
            scheme,
            pi,
            trace: want_trace,
            output,
        } => {
            let (b, specs) = load(&input)?;
            let pi = match pi {
                Some(p) => PointsToSet::parse(&read(&p)?, &b)?,
                None => compute_pointsto(&b, &specs, &MissingEdgeSet::default()),
            };
            let m = monitoring_scheme(scheme, &b, &specs, &pi);
            let exec = trace(&b, &m, &schedule)?;
            let path = write(&output.out, "reports.txt", &exec.report_log())?;
            if want_trace {
                write(&output.out, "trace.txt", &exec.trace_log())?;
            }
            print!("{}", exec.report_log());
            eprintln!("{} reports -> {}", exec.reports.len(), path.display());
        }
        Command::Loop {
            input,
            schedules: source,
            scheme,
            report_reduction,
            output,
        } => {
            let (b, specs) = load(&input)?;
            let scheds = schedules(&b, &source)?;
            let pi0 = compute_pointsto(&b, &specs, &MissingEdgeSet::default());
            let out = run_loop(&b, &specs, &scheds, scheme)?;
            let transcript = out.transcript();
            write(&output.out, "transcript.txt", &transcript)?;
            write(&output.out, "pi.txt", &out.pi.serialize())?;
            write(&output.out, "scheme.txt", &out.scheme.serialize())?;
            let ces: Vec<Counterexample> = out.iterations.iter().flat_map(|i| i.delta.iter().cloned()).collect();
            write(&output.out, "counterexamples.txt", &serialize_counterexamples(&ces))?;
            print!("{transcript}");
            if report_reduction {
                println!("monitors initial: {}", scheme_counts(&b, &specs, &pi0));
                println!("monitors final: {}", scheme_counts(&b, &specs, &out.pi));
            }
        }
        Command::Infer {
            input,
            target,
            mode,
            counterexamples: ces,
            output,
        } => {
            let (b, specs) = load(&input)?;
            let known = counterexamples(ces.as_ref(), &b)?;
            let inf = match target {
                Some((var, obj)) => {
                    let target = Target {
                        var: resolve_var(&b, &var)?,
                        object: AbstractObject::parse(&obj, &b).map_err(|e| anyhow!(e))?,
                    };
                    Some(infer_min_spec(&b, &specs, &to_edge_set(&known), &target, mode)?)
                }
                None => None,
            };
            for (name, text) in inf.iter().flat_map(|i| i.spec_files()) {
                let path = write(&output.out, &format!("specs/{name}"), &text)?;
                eprintln!("wrote {}", path.display());
                print!("{text}");
            }
            let proxies: String = infer_proxy_specs(known.iter().filter_map(|c| match c {
                Counterexample::Edge(_, o) => Some(o),
                Counterexample::Reach(_) => None,
            }))
            .iter()
            .map(|p| format!("{p}\n"))
            .collect();
            if !proxies.is_empty() {
                write(&output.out, "specs/proxies.spec", &proxies)?;
                print!("{proxies}");
            }
            if let Some(inf) = inf {
                println!("cost {}{}", inf.cost, if inf.optimal { "" } else { " (upper bound)" });
            }
        }
        Command::Query { input, pi, query } => {
            let (b, specs) = load(&input)?;
            let pi = PointsToSet::parse(&read(&pi)?, &b)?;
            match query {
                Query::Alias { x, y } => println!("{}", may_alias(&b, &pi, &x, &y)?),
                Query::Types { x } => {
                    let cs: Vec<String> = points_to_classes(&b, &pi, &x)?.iter().map(|c| c.to_string()).collect();
                    println!("{}", cs.join(" "));
                }
                Query::Flows => {
                    for (src, sink) in taint_flows(&b, &specs, &pi) {
                        println!("{src} -> {sink}");
                    }
                }
            }
        }
        Command::OracleCheck { corpus, min_pairs } => {
            let (mut seed, mut n) = (7, 200);
            for p in corpus {
                match p {
                    CorpusParam::Seed(v) => seed = v,
                    CorpusParam::Count(v) => n = v,
                }
            }
            let c = Corpus::generate(seed, n)?;
            let suites: [(&str, suite::Outcome); 7] = [
                ("eventual-soundness", suite::eventual_soundness(&c)),
                ("monitoring-soundness", suite::monitoring_soundness(&c)),
                ("minimality", suite::minimality(&c, min_pairs)),
                ("precision", suite::precision(&c)),
                ("proxy-equivalence", suite::proxy_equivalence(&c)),
                ("monitor-reduction", suite::monitor_reduction(&c)),
                ("solver-agreement", suite::solver_agreement(&c)),
            ];
            let mut ok = true;
            for (name, r) in suites {
                match r {
                    Ok(msg) => println!("{name}: PASS {msg}"),
                    Err(msg) => {
                        println!("{name}: FAIL {msg}");
                        ok = false;
                    }
                }
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
