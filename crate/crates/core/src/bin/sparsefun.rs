fn main() {
    std::process::exit(sparsefun::cli::main_with_args(std::env::args_os()));
}
