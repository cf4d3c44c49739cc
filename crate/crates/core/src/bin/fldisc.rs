//! `fldisc` command-line tool; see [`fldisc::cli`].

fn main() {
    std::process::exit(fldisc::cli::main_with_env());
}
