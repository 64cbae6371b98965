fn main() {
    std::process::exit(mellin_deconv::cli::run(std::env::args_os()));
}
