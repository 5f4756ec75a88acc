fn main() {
    env_logger::init();
    std::process::exit(structckn::cli::run(std::env::args_os()));
}
