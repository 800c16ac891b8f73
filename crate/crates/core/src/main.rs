fn main() {
    std::process::exit(smily::cli::main())
}
