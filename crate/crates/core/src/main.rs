fn main() {
    std::process::exit(dualcap::cli::main_with(std::env::args_os()));
}
