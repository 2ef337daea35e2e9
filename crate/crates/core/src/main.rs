fn main() {
    std::process::exit(cora::harness::cli::run(std::env::args_os()));
}
