fn main() {
    std::process::exit(breathid_cli::run(std::env::args_os()));
}
