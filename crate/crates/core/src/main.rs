fn main() {
    std::process::exit(hhl_lab::cli::run());
}
