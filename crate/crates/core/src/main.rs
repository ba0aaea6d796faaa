fn main() -> std::process::ExitCode {
    adaptive_smc::cli::main()
}
