use clap::Parser;

fn main() {
    let cli = spfts::cli::Cli::parse();
    match spfts::cli::run(cli) {
        Ok(text) => print!("{text}"),
        Err(err) => {
            eprintln!("spfts: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
