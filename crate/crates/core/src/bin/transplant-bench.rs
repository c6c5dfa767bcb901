fn main() { std::process::exit(transplant_bench::cli::main()) }
