fn main() {
    std::process::exit(noisychain_cli::run_cli());
}
