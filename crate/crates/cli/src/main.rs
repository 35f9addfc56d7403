fn main() {
    std::process::exit(cpnet_cli::main_with(std::env::args_os()));
}
