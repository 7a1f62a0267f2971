use std::process::ExitCode;

fn main() -> ExitCode {
    isac_core::cli::run(std::env::args_os())
}
