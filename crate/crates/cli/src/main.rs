fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let result = latent_align_cli::run(std::env::args_os());
    if let Some(reason) = &result.reason {
        eprintln!("{reason}");
    }
    std::process::exit(result.exit_code);
}
