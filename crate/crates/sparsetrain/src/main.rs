use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(sparsetrain::cli::main(std::env::args_os()))
}
