fn main() {
    std::process::exit(tfc::cli::run(std::env::args_os()));
}
