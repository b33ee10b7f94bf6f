use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let env: Vec<(String, String)> = std::env::vars().collect();
    ExitCode::from(preshape_cli::app::run(std::env::args_os(), &env))
}
