fn main() {
    std::process::exit(umtsvm::cli::run(std::env::args_os()));
}
