fn main() -> std::process::ExitCode {
    algorec::cli::main()
}
