fn main() {
    std::process::exit(swordsman::harness::main_with_args(std::env::args_os()));
}
