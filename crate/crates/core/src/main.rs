use clap::Parser;

use agelab::cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => println!("{}", out.display()),
        Err(err) => {
            eprintln!("agelab: {err}");
            std::process::exit(1);
        }
    }
}
