fn main() {
    std::process::exit(preqmdl::cli::main_with_args(std::env::args_os()));
}
