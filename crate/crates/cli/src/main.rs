fn main() {
    std::process::exit(spinlat_cli::run(std::env::args_os()));
}
