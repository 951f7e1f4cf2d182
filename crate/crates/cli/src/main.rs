fn main() {
    std::process::exit(spinsq_cli::app::run(std::env::args_os()));
}
