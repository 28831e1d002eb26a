use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;
use twoadic::cmcat::Catalog;
use twoadic::galimg::{self, GRAPH_MIN_LEVEL};
use twoadic::matgrp::{Ambient, ImageSpec, IntMat, Vec2};
use twoadic::tables::VERIFY_MIN_LEVEL;
use twoadic::{BigInt, Error, IntPoly, RationalCyclic};

const MAX_CLI_LEVEL: u32 = 8;
const WARN_LEVEL: u32 = 6;

#[derive(Parser)]
#[command(
    name = "twoadic",
    version,
    about = "2-adic images of CM elliptic curves at finite level"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Order, stability, torsion and rational 2-power lines of an image.
    Analyze {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, default_value_t = 5)]
        level: u32,
    },
    /// Push an image forward along a rational cyclic kernel.
    Push {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, default_value_t = 5)]
        level: u32,
        /// Kernel generator `x,y` at the working level.
        #[arg(long, allow_hyphen_values = true)]
        kernel: String,
        /// Kernel order, e.g. `2`, `4` or `2^2`.
        #[arg(long)]
        order: String,
    },
    /// The 2-power isogeny graph reachable from an image.
    Graph {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, default_value_t = 5)]
        level: u32,
        /// Also write the graph in DOT format.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Verify table rows from a fixture file.
    VerifyTables {
        /// Fixture path; the shipped tables are used when omitted.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        level: u32,
        #[arg(long)]
        row: Option<String>,
        /// Also write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Lift a simple root of a polynomial p-adically.
    Hensel {
        /// Coefficients from the constant term up, e.g. `1,0,7` for 7x^2 + 1.
        #[arg(long, allow_hyphen_values = true)]
        poly: String,
        #[arg(long, allow_hyphen_values = true)]
        seed: String,
        #[arg(long)]
        level: u32,
        #[arg(long, default_value_t = 2)]
        prime: u64,
        /// First exponent of the chain (default 2 tau + 1).
        #[arg(long)]
        start: Option<u32>,
    },
    /// List the registry or print one registered group.
    Catalog {
        #[arg(long, conflicts_with = "name")]
        list: bool,
        #[arg(long, requires = "level")]
        name: Option<String>,
        #[arg(long)]
        level: Option<u32>,
    },
}

#[derive(Args)]
struct GroupArgs {
    /// Registry name, inline JSON, or a path ending in `.json`.
    #[arg(
        long,
        required_unless_present = "group_file",
        conflicts_with = "group_file"
    )]
    group: Option<String>,
    /// JSON file with `{"generators": [[[a,b],[c,d]], ...]}`.
    #[arg(long)]
    group_file: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NotStabilized(_) | Error::KenkuViolation(_) => Failure::Verify(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

fn check_level(level: u32, min: u32) -> CliResult<()> {
    if level < min {
        return usage(format!("level must be at least {min}"));
    }
    if level > MAX_CLI_LEVEL {
        return usage(format!("level {level} is above the cap {MAX_CLI_LEVEL}"));
    }
    if level > WARN_LEVEL {
        eprintln!(
            "warning: level {level} may need a lot of memory; full-group closures are refused"
        );
    }
    Ok(())
}

fn spec_from_json(text: &str, origin: &str) -> CliResult<ImageSpec> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| Failure::Usage(format!("{origin}: {e}")))?;
    let gens: Vec<IntMat> = v
        .get("generators")
        .cloned()
        .ok_or_else(|| Failure::Usage(format!("{origin}: missing `generators`")))
        .and_then(|g| {
            serde_json::from_value(g).map_err(|e| Failure::Usage(format!("{origin}: {e}")))
        })?;
    if gens.is_empty() {
        return usage(format!("{origin}: empty generator list"));
    }
    let name = v.get("name").and_then(Value::as_str);
    let mut spec = ImageSpec::new(name, gens);
    if let Some(a) = v.get("ambient") {
        let (delta, phi): (i64, i64) = serde_json::from_value(a.clone())
            .map_err(|e| Failure::Usage(format!("{origin}: ambient: {e}")))?;
        spec = spec.with_ambient(Ambient::Normalizer { delta, phi });
    }
    Ok(spec)
}

fn read(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn resolve_group(g: &GroupArgs) -> CliResult<ImageSpec> {
    match (&g.group, &g.group_file) {
        (Some(_), Some(_)) => usage("give either --group or --group-file"),
        (None, Some(p)) => spec_from_json(&read(p)?, &p.display().to_string()),
        (Some(s), None) if s.trim_start().starts_with('{') => spec_from_json(s, "--group"),
        (Some(s), None) if s.ends_with(".json") => {
            let p = Path::new(s);
            spec_from_json(&read(p)?, s)
        }
        (Some(s), None) => Ok(Catalog::builtin().get(s)?.spec()),
        (None, None) => usage("missing --group"),
    }
}

fn parse_order(s: &str) -> CliResult<u32> {
    let n: u64 = match s.split_once('^') {
        Some(("2", e)) => e
            .parse::<u32>()
            .ok()
            .and_then(|e| 1u64.checked_shl(e))
            .ok_or_else(|| Failure::Usage(format!("bad order `{s}`")))?,
        Some(_) => return usage(format!("bad order `{s}`")),
        None => s
            .parse()
            .map_err(|_| Failure::Usage(format!("bad order `{s}`")))?,
    };
    if !n.is_power_of_two() {
        return usage(format!("order {n} is not a power of 2"));
    }
    Ok(n.trailing_zeros())
}

fn parse_ints(s: &str) -> CliResult<Vec<i64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<i64>()
                .map_err(|_| Failure::Usage(format!("bad integer `{t}`")))
        })
        .collect()
}

fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    // a closed pipe downstream is not an error here
    let _ = writeln!(out, "{text}").and_then(|_| out.flush());
}

fn print_json(v: &impl serde::Serialize) {
    emit(&serde_json::to_string_pretty(v).expect("serializable"));
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze { group, level } => {
            check_level(level, 2)?;
            let spec = resolve_group(&group)?;
            print_json(&galimg::analyze(&spec, level)?);
        }
        Command::Push {
            group,
            level,
            kernel,
            order,
        } => {
            check_level(level, 2)?;
            let spec = resolve_group(&group)?;
            let r = parse_order(&order)?;
            let xy = parse_ints(&kernel)?;
            let [x, y] = xy[..] else {
                return usage("kernel must be `x,y`");
            };
            let k = RationalCyclic::new(Vec2::new(level, x, y)?);
            if k.order_exp != r {
                return usage(format!(
                    "({x},{y}) has order 2^{} at level {level}, not 2^{r}",
                    k.order_exp
                ));
            }
            let g = spec.at_level(level)?;
            let w = galimg::pushforward(&g, &k)?;
            print_json(&w.to_json(spec.name.as_deref()));
        }
        Command::Graph { group, level, dot } => {
            check_level(level, GRAPH_MIN_LEVEL)?;
            let spec = resolve_group(&group)?;
            let graph = galimg::isogeny_graph2(&spec, level)?;
            if let Some(p) = dot {
                std::fs::write(&p, graph.to_dot())
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            }
            print_json(&graph.to_json());
        }
        Command::VerifyTables {
            fixtures,
            level,
            row,
            json,
        } => {
            check_level(level, VERIFY_MIN_LEVEL)?;
            let mut rows = match fixtures {
                Some(p) => twoadic::load_fixture(&p)?,
                None => twoadic::builtin_fixture()?,
            };
            if let Some(id) = row {
                rows.retain(|r| r.row.row_id == id);
                if rows.is_empty() {
                    return usage(format!("no row `{id}` in fixture"));
                }
            }
            let summary = twoadic::verify_all(&rows, level);
            let text = summary.to_json();
            if let Some(p) = json {
                std::fs::write(&p, format!("{text}\n"))
                    .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?;
            }
            eprint!("{}", summary.to_table());
            emit(&text);
            if !summary.all_pass() {
                return Err(Failure::Verify(format!(
                    "{} of {} rows failed",
                    summary.failed, summary.total
                )));
            }
        }
        Command::Hensel {
            poly,
            seed,
            level,
            prime,
            start,
        } => {
            let f = IntPoly::from_i64(&parse_ints(&poly)?);
            let seed: BigInt = seed
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("bad seed `{seed}`")))?;
            let sol = twoadic::hensel_solve(&f, &seed, level, prime, start)?;
            print_json(&sol.to_json(&f));
        }
        Command::Catalog { list, name, level } => {
            let cat = Catalog::builtin();
            match (list, name) {
                (true, _) => {
                    let items: Vec<Value> = cat
                        .entries
                        .iter()
                        .map(|e| serde_json::json!({"name": e.name, "kind": e.kind, "provenance": e.provenance}))
                        .collect();
                    print_json(&items);
                }
                (false, Some(n)) => {
                    let level = level.expect("clap enforces --level");
                    check_level(level, 1)?;
                    let g = cat.get(&n)?.at_level(level)?;
                    print_json(&g.to_json(Some(&n)));
                }
                (false, None) => return usage("give --list or --name"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verify(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
