//! Drive the command-line layer from code and print its versioned report.
use sbrana::cli::{render, run, CommandKind, RunConfig};

fn main() {
    let mut cfg = RunConfig::new(CommandKind::Moduli, "gallery:flat_torus_p1");
    cfg.seed = 1;
    let outcome = run(&cfg);
    eprintln!("{}", outcome.summary);
    print!("{}", render(&outcome.report));
    std::process::exit(outcome.code);
}
