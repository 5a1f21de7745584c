use clap::Parser;

fn main() {
    let cli = aidl::cli::Cli::parse();
    if let Err(err) = aidl::cli::run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
