//! Drive a config file through the same path as `bhl run` and `bhl report`.

use std::path::Path;

use bhl::cli;

fn main() -> bhl::error::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/minimal.toml");
    println!("{}", cli::validate(&config)?);
    let out = std::env::temp_dir().join("bhl-example-run");
    let outcome = cli::run(&config, Some(&out))?;
    print!("{}", cli::report(&outcome.dir)?);
    println!("exit code {}, artifacts in {}", outcome.exit_code, outcome.dir.display());
    Ok(())
}
