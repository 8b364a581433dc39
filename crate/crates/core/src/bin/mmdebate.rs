fn main() {
    std::process::exit(mmdebate::cli::main());
}
