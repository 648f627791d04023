fn main() {
    std::process::exit(debias::cli::main_entry());
}
