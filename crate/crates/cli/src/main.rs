fn main() {
    std::process::exit(li_qt::run_command(std::env::args_os()));
}
