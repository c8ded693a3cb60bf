use std::process::ExitCode;

fn main() -> ExitCode {
    bnmf_community::cli::main_with_args(std::env::args_os())
}
