use std::process::ExitCode;

fn main() -> ExitCode {
    ctrlvol::cli::main()
}
