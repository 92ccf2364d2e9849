fn main() -> std::process::ExitCode {
    stablepca_cli::main_with(std::env::args_os())
}
