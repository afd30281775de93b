fn main() {
    if let Err(e) = neural_ndcg::cli::run() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
