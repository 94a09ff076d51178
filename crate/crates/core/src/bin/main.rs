fn main() {
    std::process::exit(cascade_activity::cli::run_from(std::env::args_os()));
}
