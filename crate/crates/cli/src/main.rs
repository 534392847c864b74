use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(seqinv_cli::execute(std::env::args_os()))
}
