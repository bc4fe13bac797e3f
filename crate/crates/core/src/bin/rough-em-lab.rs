fn main() {
    std::process::exit(rough_em_lab::cli::main_with_args(std::env::args_os()));
}
