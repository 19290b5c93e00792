fn main() -> std::process::ExitCode {
    cfsec::cli::main()
}
