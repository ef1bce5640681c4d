use std::process::ExitCode;

fn main() -> ExitCode {
    invariant_transfer_harness::cli_main(std::env::args_os())
}
