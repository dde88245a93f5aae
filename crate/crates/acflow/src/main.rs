fn main() {
    // CLI wiring lands with the cli module.
    eprintln!("acflow: not yet wired");
    std::process::exit(1);
}
