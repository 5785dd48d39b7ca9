fn main() {
    std::process::exit(perclab_cli::run::execute());
}
