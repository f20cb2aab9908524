fn main() {
    std::process::exit(crl_cli::run_command(std::env::args().skip(1)));
}
