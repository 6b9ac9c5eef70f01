fn main() {
    std::process::exit(protoflow::cli::main_with_args(std::env::args_os()));
}
