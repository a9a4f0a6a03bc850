fn main() {
    std::process::exit(ctsearch::cli::run_command(std::env::args_os()));
}
