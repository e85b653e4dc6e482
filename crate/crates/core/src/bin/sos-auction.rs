fn main() {
    std::process::exit(sos_auction::cli::main());
}
