use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = smdl_cli::args::Cli::parse();
    if let Err(err) = smdl_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(smdl_cli::exit_code(&err));
    }
}
