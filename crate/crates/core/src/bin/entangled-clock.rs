fn main() -> std::process::ExitCode {
    entangled_clock::cli::main()
}
