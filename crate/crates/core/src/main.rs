fn main() {
    std::process::exit(audsae::cli::run_from_env());
}
