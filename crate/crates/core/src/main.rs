use clap::Parser;

use relu_concolic::cli::{exit_code, run, Cli};

fn main() {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    std::process::exit(exit_code(run(&cli, &mut stdout)));
}
