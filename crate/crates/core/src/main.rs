use std::process::ExitCode;

fn main() -> ExitCode {
    oct1d::cli::main_entry()
}
