fn main() {
    std::process::exit(hardness_dro::cli::run(std::env::args_os()));
}
