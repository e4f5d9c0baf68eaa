fn main() {
    std::process::exit(cdnsim::cli::run(std::env::args_os()));
}
