fn main() {
    std::process::exit(qudit_mbqc::cli::run(std::env::args_os()));
}
