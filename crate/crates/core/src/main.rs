fn main() -> std::process::ExitCode {
    volindex::cli::main_with_args(std::env::args_os())
}
