fn main() -> std::process::ExitCode {
    lcapheno::cli::run(std::env::args_os())
}
