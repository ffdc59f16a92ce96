fn main() {
    std::process::exit(sparsefolio::cli::main());
}
