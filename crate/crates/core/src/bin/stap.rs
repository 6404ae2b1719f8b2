fn main() {
    std::process::exit(stap_hmm::cli::run(std::env::args_os()));
}
