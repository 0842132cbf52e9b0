fn main() {
    std::process::exit(sck::cli::run());
}
