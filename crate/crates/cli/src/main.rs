fn main() -> std::process::ExitCode {
    lsrp_cli::main_with_args()
}
