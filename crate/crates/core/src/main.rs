fn main() {
    std::process::exit(dss_sage::harness::cli::run(std::env::args_os()));
}
