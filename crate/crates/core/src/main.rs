fn main() {
    std::process::exit(guarded_saturation::cli::run());
}
