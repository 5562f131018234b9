fn main() -> std::process::ExitCode {
    resilient_consensus::cli::main()
}
