fn main() {
    std::process::exit(hybrid_spmv::cli::cli_main(std::env::args_os()));
}
