//! Named random streams: each label under a root seed gets its own
//! reproducible sequence.
//!
//! cargo run --example rng_streams -- 42

use offline_distill::rng::RngStream;

fn main() {
    let root: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(42);
    for label in ["collect:episode:0", "collect:episode:1", "student:0"] {
        let mut rng = RngStream::derive(root, label);
        let draws: Vec<String> = (0..4).map(|_| format!("{:.4}", rng.next_uniform())).collect();
        println!("{label:<20} {}", draws.join(" "));
    }
    let mut rng = RngStream::derive(root, "demo");
    println!("shuffle(8)           {:?}", rng.shuffle(8));
    println!("gauss                {:.4} {:.4}", rng.next_gauss(), rng.next_gauss());
    let replay = RngStream::derive(root, "collect:episode:0").next_uniform();
    println!("replayed first draw  {replay:.4}");
}
