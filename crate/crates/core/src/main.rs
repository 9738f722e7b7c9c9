fn main() {
    std::process::exit(duetlite_core::cli::cli_main(std::env::args_os()));
}
