fn main() -> std::process::ExitCode {
    crowdnav::cli::main()
}
