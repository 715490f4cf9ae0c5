fn main() {
    std::process::exit(geomsplat::cli::run(std::env::args_os()));
}
