fn main() {
    std::process::exit(nll_core::cli::run(std::env::args_os()));
}
