fn main() -> std::process::ExitCode {
    mosaic_core::cli::main()
}
