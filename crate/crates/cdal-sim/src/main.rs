fn main() {
    std::process::exit(cdal_sim::cli::run());
}
