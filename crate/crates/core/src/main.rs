fn main() {
    std::process::exit(edgeamc::cli::main_with(std::env::args_os()));
}
