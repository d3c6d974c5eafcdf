fn main() {
    std::process::exit(sparse_diff_bench::cli::main_with_args(std::env::args_os()));
}
