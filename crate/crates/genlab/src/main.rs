fn main() {
    std::process::exit(genlab::cli::run());
}
