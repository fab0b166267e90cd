fn main() {
    std::process::exit(qchaos_core::cli::run_command(std::env::args_os()));
}
