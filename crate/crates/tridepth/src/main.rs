fn main() {
    std::process::exit(tridepth::cli::main_with(std::env::args_os()));
}
