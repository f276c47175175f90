fn main() {
    std::process::exit(wesn_core::harness::cli::run());
}
