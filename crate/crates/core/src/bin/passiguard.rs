fn main() -> std::process::ExitCode {
    passiguard::cli::main_with_args(std::env::args_os())
}
