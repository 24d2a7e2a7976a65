fn main() -> std::process::ExitCode {
    maelab::cli::run(std::env::args_os())
}
