fn main() {
    std::process::exit(crbgate::cli::run(std::env::args_os()));
}
