fn main() {
    std::process::exit(crc_cli::run_command(std::env::args().collect()));
}
