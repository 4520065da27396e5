fn main() {
    std::process::exit(flexsector::harness::cli_main());
}
