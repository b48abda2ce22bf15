fn main() {
    std::process::exit(wayfind::cli::cli_main(std::env::args_os()));
}
