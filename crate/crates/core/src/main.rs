fn main() {
    std::process::exit(bownmt::app::cli::run(std::env::args_os()));
}
