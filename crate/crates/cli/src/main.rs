fn main() {
    std::process::exit(geossl_cli::main_with_args(std::env::args_os()));
}
