use std::process::ExitCode;

fn main() -> ExitCode {
    hormsim::cli::main()
}
