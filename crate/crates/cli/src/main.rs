fn main() {
    std::process::exit(alm_cli::main_with(std::env::args_os()));
}
