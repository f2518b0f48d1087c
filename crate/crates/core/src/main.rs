fn main() {
    std::process::exit(bimodal_mvs::cli::run(std::env::args_os()));
}
