use anyhow::Result;
use clap::Parser;

use causal_gym::harness::{execute, Cli};

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cmd = Cli::parse().resolve()?;
    println!("{}", execute(&cmd)?);
    Ok(())
}
