use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SGL_LOG", "warn")).init();
    let cli = sgl_cli::Cli::parse();
    std::process::exit(sgl_cli::run(&cli));
}
