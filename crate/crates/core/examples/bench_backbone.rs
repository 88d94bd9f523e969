//! Scratch throughput check for the backbone at production size.
use faultmeta::imaging::GrayImage;
use faultmeta::net::backbone::{backward, forward, BackboneCfg, EmbeddingParams};
use faultmeta::rng::Rng;
use std::time::Instant;

fn main() {
    let params = EmbeddingParams::<f32>::init(BackboneCfg::default(), 1);
    let mut rng = Rng::new(2);
    let images: Vec<GrayImage> = (0..32)
        .map(|_| GrayImage::new(64, (0..4096).map(|_| rng.uniform() as f32).collect()).unwrap())
        .collect();
    let refs: Vec<&GrayImage> = images.iter().collect();
    let (emb, cache) = forward(&params, &refs).unwrap();
    let _ = backward(&params, &cache, &emb).unwrap();
    let t0 = Instant::now();
    for _ in 0..10 {
        let (emb, cache) = forward(&params, &refs).unwrap();
        let _ = backward(&params, &cache, &emb).unwrap();
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("fwd+bwd: {:.1} images/s", 320.0 / dt);
}
