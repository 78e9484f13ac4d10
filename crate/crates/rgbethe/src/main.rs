fn main() {
    std::process::exit(rgbethe::cli::run());
}
