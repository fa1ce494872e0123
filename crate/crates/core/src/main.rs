fn main() {
    let (code, text) = advrl::cli::run(std::env::args_os());
    if text.is_empty() {
    } else if code == 0 || text.trim_start().starts_with('{') {
        println!("{text}");
    } else {
        eprintln!("{text}");
    }
    std::process::exit(code);
}
