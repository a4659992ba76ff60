fn main() {
    std::process::exit(needlestack::cli::run_command(std::env::args_os()));
}
