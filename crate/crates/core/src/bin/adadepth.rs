use std::process::ExitCode;

fn main() -> ExitCode {
    let mut stdout = std::io::stdout();
    match adadepth::cli::run(std::env::args_os(), &mut stdout) {
        Ok(()) => ExitCode::SUCCESS,
        Err(adadepth::Error::InvalidArgument(msg))
            if msg.starts_with("Usage") || msg.contains("\nUsage:") =>
        {
            eprint!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
