use std::process::ExitCode;

fn main() -> ExitCode {
    let code = cia_cli::cli_main(std::env::args_os());
    ExitCode::from(code.clamp(0, 255) as u8)
}
