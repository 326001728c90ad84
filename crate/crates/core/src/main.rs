fn main() {
    std::process::exit(varndrr::cli::run(std::env::args_os()));
}
