use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(convbid_cli::cli::main_with_args(std::env::args_os()))
}
