fn main() {
    std::process::exit(ko_calib::cli::main());
}
