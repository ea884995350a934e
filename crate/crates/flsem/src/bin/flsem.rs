fn main() {
    std::process::exit(flsem::cli::run());
}
