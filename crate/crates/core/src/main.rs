fn main() {
    std::process::exit(rpss::cli::main());
}
