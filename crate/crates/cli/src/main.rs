use clap::Parser;

fn main() {
    let cli = oil_cli::Cli::parse();
    if let Err(e) = oil_cli::run(cli) {
        let msg = format!("{e:#}").replace('\n', " ");
        eprintln!("error: {msg}");
        std::process::exit(1);
    }
}
