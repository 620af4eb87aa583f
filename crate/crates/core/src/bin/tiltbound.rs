use std::process::ExitCode;

fn main() -> ExitCode {
    if let Err(e) = tiltbound::configure_threads_from_env() {
        eprintln!("{}", serde_json::json!({ "error": e.to_string() }));
        return ExitCode::from(tiltbound::cli::EXIT_FAILURE as u8);
    }
    let code = tiltbound::cli::main_with_args(std::env::args_os());
    ExitCode::from(code as u8)
}
