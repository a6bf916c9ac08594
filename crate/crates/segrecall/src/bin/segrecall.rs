fn main() -> std::process::ExitCode {
    segrecall::cli::main()
}
