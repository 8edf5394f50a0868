use std::process::ExitCode;

fn main() -> ExitCode {
    depthsim_cli::main_with(std::env::args_os())
}
