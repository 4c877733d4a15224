fn main() {
    std::process::exit(spotlight::cli::run(std::env::args_os()));
}
