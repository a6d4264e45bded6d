fn main() {
    std::process::exit(rot_infer::cli::main_with_args(std::env::args_os()));
}
