fn main() {
    std::process::exit(rwt_cli::run(std::env::args_os()));
}
