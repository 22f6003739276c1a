fn main() {
    std::process::exit(zscfc::cli::run(std::env::args_os()));
}
