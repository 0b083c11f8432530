fn main() {
    std::process::exit(valmetric::run(std::env::args_os()));
}
