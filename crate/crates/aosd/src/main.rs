fn main() {
    std::process::exit(aosd::cli::run());
}
