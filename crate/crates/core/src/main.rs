fn main() {
    std::process::exit(vptd::cli::main());
}
