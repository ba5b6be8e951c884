fn main() {
    std::process::exit(fixsim::main_entry());
}
