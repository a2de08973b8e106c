fn main() {
    std::process::exit(taboo_server::cli::run(std::env::args_os().collect()));
}
