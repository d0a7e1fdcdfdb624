fn main() {
    std::process::exit(prefix_dag::cli::main());
}
