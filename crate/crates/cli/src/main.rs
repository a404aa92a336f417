use std::process::ExitCode;

fn main() -> ExitCode {
    ltcnn_cli::main_with_args(std::env::args())
}
