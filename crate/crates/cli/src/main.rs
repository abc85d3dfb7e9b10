fn main() {
    std::process::exit(tie_cli::run(std::env::args_os()));
}
