fn main() {
    std::process::exit(fracpme::cli::run(std::env::args_os()));
}
