fn main() {
    std::process::exit(tpsqli::run(std::env::args_os()));
}
