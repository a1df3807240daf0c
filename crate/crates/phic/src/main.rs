fn main() {
    std::process::exit(phic::cli::run());
}
