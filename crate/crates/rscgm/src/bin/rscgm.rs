fn main() {
    std::process::exit(rscgm::cli::run());
}
