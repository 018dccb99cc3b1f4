fn main() {
    std::process::exit(ccrf::cli::run_from(std::env::args_os()));
}
