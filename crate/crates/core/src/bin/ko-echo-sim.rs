//! Reference simulator for the `kocal` line protocol: answers `theta . x`.
//!
//! `--fail MESSAGE` refuses every evaluation; `--exit-after N` quits after N.

use std::io::{stdin, stdout, BufWriter};

use clap::Parser;

#[derive(Parser)]
#[command(name = "ko-echo-sim", version, about = "Echo simulator returning theta . x")]
struct Args {
    #[arg(long)]
    fail: Option<String>,
    #[arg(long)]
    exit_after: Option<usize>,
}

fn main() {
    let args = Args::parse();
    let out = BufWriter::new(stdout().lock());
    if let Err(e) = ko_calib::cli::echo_simulator(stdin().lock(), out, args.fail.as_deref(), args.exit_after) {
        eprintln!("ko-echo-sim: {e}");
        std::process::exit(1);
    }
}
