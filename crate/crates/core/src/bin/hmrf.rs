fn main() { std::process::exit(hmrf::cli::main()) }
