use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use serde_json::{Map, Value};

use obsred::experiment::{
    bounds_csv, run_bounds, run_experiment, run_sampling, samples_csv, Manifest, RunConfig,
    StageError,
};
use obsred::selftest::run_selftest;

const DEFAULT_OUT: &str = "obsred-out";

#[derive(Debug)]
enum Failure {
    Config(String),
    Stage(StageError),
    Io(String),
    Selftest(usize),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Stage(_) | Failure::Selftest(_) => 3,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Stage(e) => write!(f, "numerical error in stage `{}`: {}", e.stage, e.source),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
            Failure::Selftest(n) => write!(f, "{n} self-test check(s) failed"),
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

/// Config keys with their default values, which also fix each key's type.
fn config_keys() -> Map<String, Value> {
    match serde_json::to_value(RunConfig::for_setup(2)) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("RunConfig serializes to an object"),
    }
}

fn run_args(cmd: Command, with_setup: bool) -> Command {
    let mut cmd = cmd
        .args_override_self(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("FILE")
                .help("TOML config file, or a manifest.json from an earlier run"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .default_value(DEFAULT_OUT)
                .help("Output directory"),
        );
    for key in config_keys().keys() {
        if key == "setup" && !with_setup {
            continue;
        }
        let id: &'static str = Box::leak(key.clone().into_boxed_str());
        cmd = cmd.arg(Arg::new(id).long(id).value_name("VALUE").help("Overrides the config key"));
    }
    cmd
}

fn cli() -> Command {
    Command::new("obsred")
        .about("Reduction experiments for partially observed solution manifolds")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(run_args(Command::new("setup1").about("Thermal-block experiment"), false))
        .subcommand(run_args(Command::new("setup2").about("Synthetic misaligned experiment"), false))
        .subcommand(run_args(
            Command::new("bounds").about("Bound curves of the first repetition's world"),
            true,
        ))
        .subcommand(run_args(
            Command::new("sample").about("Dump posterior samples of the first repetition's world"),
            true,
        ))
        .subcommand(
            Command::new("selftest").about("Property checks on small random instances").arg(
                Arg::new("seed")
                    .long("seed")
                    .value_name("SEED")
                    .default_value("0")
                    .value_parser(clap::value_parser!(u64)),
            ),
        )
}

fn parse_flag(key: &str, raw: &str, default: &Value) -> Result<Value, Failure> {
    let bad = |what: &str| Failure::Config(format!("--{key}: expected {what}, got `{raw}`"));
    match default {
        Value::Number(n) if n.is_u64() => raw.parse::<u64>().map(Value::from).map_err(|_| bad("an integer")),
        Value::Number(_) => match raw.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(Value::from(x)),
            _ => Err(bad("a finite number")),
        },
        _ => Ok(Value::String(raw.to_string())),
    }
}

/// The config table of a TOML file or of a manifest's `config` entry.
fn load_file(path: &Path) -> Result<Map<String, Value>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let value: Value = if json {
        serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
    } else {
        toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?
    };
    let Value::Object(mut table) = value else {
        return Err(Failure::Config(format!("{}: not a table", path.display())));
    };
    match table.remove("config") {
        Some(Value::Object(c)) => Ok(c),
        Some(_) => Err(Failure::Config(format!("{}: `config` is not a table", path.display()))),
        None => Ok(table),
    }
}

fn setup_value(v: &Value) -> Result<u8, Failure> {
    v.as_u64()
        .and_then(|s| u8::try_from(s).ok())
        .ok_or_else(|| Failure::Config(format!("setup must be 1 or 2, got {v}")))
}

/// Defaults of the chosen setup, then the file, then the flags.
fn build_config(m: &ArgMatches, fixed_setup: Option<u8>) -> Result<RunConfig, Failure> {
    let keys = config_keys();
    let file = match m.get_one::<String>("config") {
        Some(p) => load_file(Path::new(p))?,
        None => Map::new(),
    };
    let mut flags = Map::new();
    for (key, default) in &keys {
        if key == "setup" && fixed_setup.is_some() {
            continue;
        }
        if let Some(raw) = m.get_one::<String>(key) {
            flags.insert(key.clone(), parse_flag(key, raw, default)?);
        }
    }
    let setup = match fixed_setup {
        Some(s) => {
            if let Some(v) = file.get("setup") {
                let from_file = setup_value(v)?;
                if from_file != s {
                    return Err(Failure::Config(format!(
                        "config file is for setup {from_file}, not setup {s}"
                    )));
                }
            }
            s
        }
        None => match flags.get("setup").or(file.get("setup")) {
            Some(v) => setup_value(v)?,
            None => 2,
        },
    };
    if setup != 1 && setup != 2 {
        return Err(Failure::Config(format!("setup must be 1 or 2, got {setup}")));
    }
    let Value::Object(mut merged) = serde_json::to_value(RunConfig::for_setup(setup))
        .map_err(|e| Failure::Config(e.to_string()))?
    else {
        unreachable!("RunConfig serializes to an object")
    };
    merged.extend(file);
    merged.extend(flags);
    merged.insert("setup".into(), Value::from(setup));
    let cfg: RunConfig =
        serde_json::from_value(Value::Object(merged)).map_err(|e| Failure::Config(e.to_string()))?;
    cfg.validate().map_err(Failure::Config)?;
    Ok(cfg)
}

fn stage_failure(e: StageError) -> Failure {
    if e.stage == "config" {
        Failure::Config(e.source.to_string())
    } else {
        Failure::Stage(e)
    }
}

fn out_dir(m: &ArgMatches) -> Result<PathBuf, Failure> {
    let dir = PathBuf::from(m.get_one::<String>("out").expect("has a default"));
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    Ok(dir)
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, files: &[&str]) -> Result<(), Failure> {
    let manifest = Manifest {
        tool: "obsred".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command.into(),
        seed: cfg.seed,
        files: files.iter().map(|f| f.to_string()).collect(),
        config: cfg.clone(),
        diagnostics: Vec::new(),
    };
    let path = dir.join("manifest.json");
    manifest.write(&path).map_err(io_err(&path))
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))
}

fn experiment(command: &str, m: &ArgMatches, setup: u8) -> Result<(), Failure> {
    let cfg = build_config(m, Some(setup))?;
    let dir = out_dir(m)?;
    let out = run_experiment(&cfg).map_err(stage_failure)?;
    out.write_to(&dir, command).map_err(io_err(&dir))?;
    for d in &out.diagnostics {
        eprintln!(
            "rep {}: p = {}, q = {}, k* = {}, eps = {:e}, first finite post index {}",
            d.rep,
            d.p,
            d.q,
            d.k_star,
            d.eps,
            d.first_finite_post.map_or("none".into(), |i| i.to_string())
        );
    }
    eprintln!("wrote curves.csv, summary.csv and manifest.json to {}", dir.display());
    Ok(())
}

fn bounds(m: &ArgMatches) -> Result<(), Failure> {
    let cfg = build_config(m, None)?;
    let dir = out_dir(m)?;
    let rows = run_bounds(&cfg).map_err(stage_failure)?;
    write_file(&dir, "bounds.csv", &bounds_csv(&rows))?;
    write_manifest(&dir, "bounds", &cfg, &["bounds.csv"])?;
    eprintln!("wrote bounds.csv and manifest.json to {}", dir.display());
    Ok(())
}

fn sample(m: &ArgMatches) -> Result<(), Failure> {
    let cfg = build_config(m, None)?;
    let dir = out_dir(m)?;
    let samples = run_sampling(&cfg).map_err(stage_failure)?;
    write_file(&dir, "samples.csv", &samples_csv(&samples))?;
    write_manifest(&dir, "sample", &cfg, &["samples.csv"])?;
    eprintln!(
        "wrote {} samples ({} draws) to {}",
        samples.samples.len(),
        samples.draws,
        dir.join("samples.csv").display()
    );
    Ok(())
}

fn selftest(m: &ArgMatches) -> Result<(), Failure> {
    let seed = *m.get_one::<u64>("seed").expect("has a default");
    let results = run_selftest(seed);
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!("{status} {}: {}", r.name, r.detail);
    }
    match results.iter().filter(|r| !r.passed).count() {
        0 => Ok(()),
        n => Err(Failure::Selftest(n)),
    }
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("setup1", m)) => experiment("setup1", m, 1),
        Some(("setup2", m)) => experiment("setup2", m, 2),
        Some(("bounds", m)) => bounds(m),
        Some(("sample", m)) => sample(m),
        Some(("selftest", m)) => selftest(m),
        _ => unreachable!("a subcommand is required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("obsred: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matches(args: &[&str]) -> ArgMatches {
        let m = cli().try_get_matches_from(args).unwrap();
        m.subcommand().unwrap().1.clone()
    }

    #[test]
    fn cli_definition_is_consistent() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_defaults() {
        let m = matches(&["obsred", "setup2", "--m", "7", "--delta", "0.01", "--pi", "uniform-beta"]);
        let cfg = build_config(&m, Some(2)).unwrap();
        assert_eq!(cfg.m, 7);
        assert_eq!(cfg.delta, 0.01);
        assert_eq!(cfg.pi, "uniform-beta");
        assert_eq!(cfg.n, RunConfig::for_setup(2).n);
    }

    #[test]
    fn setup_defaults_follow_subcommand() {
        let m = matches(&["obsred", "setup1"]);
        assert_eq!(build_config(&m, Some(1)).unwrap(), RunConfig::for_setup(1));
        let m = matches(&["obsred", "bounds", "--setup", "1", "--seed", "9"]);
        let cfg = build_config(&m, None).unwrap();
        assert_eq!(cfg, RunConfig { seed: 9, ..RunConfig::for_setup(1) });
    }

    #[test]
    fn bad_values_are_config_errors() {
        for (args, fixed) in [
            (&["obsred", "setup2", "--m", "x"][..], Some(2)),
            (&["obsred", "setup2", "--m", "0"], Some(2)),
            (&["obsred", "setup2", "--delta", "nan"], Some(2)),
            (&["obsred", "bounds", "--setup", "3"], None),
        ] {
            let e = build_config(&matches(args), fixed).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{args:?}: {e}");
        }
    }
}
