fn main() {
    std::process::exit(vht_lab::cli::run());
}
