use qdistill::codes::{sample_hsw_code, DecoderStyle};
use qdistill::entropy::{holevo_information, Side};
use qdistill::rng::stream_rng;
use qdistill::source::CqqSource;

fn main() {
    let src = CqqSource::two_pure(0.5, 0.6, 0.6).unwrap();
    let i_b = holevo_information(&src, Side::B).unwrap();
    for n in [2usize, 4, 6, 8] {
        let size_f = 1usize << ((n as f64) * (i_b - 0.2)).floor() as u32;
        let size_c = 1usize << ((n as f64) * (i_b - 0.2)).ceil() as u32;
        let mut mean_f = 0.0;
        let mut mean_c = 0.0;
        for seed in 0..25u64 {
            mean_f += sample_hsw_code(&src, n, 0.1, size_f, DecoderStyle::Plain, &mut stream_rng(seed, 0)).unwrap().avg_success;
            mean_c += sample_hsw_code(&src, n, 0.1, size_c, DecoderStyle::Plain, &mut stream_rng(seed, 0)).unwrap().avg_success;
        }
        println!("n={n}: floor size={size_f} mean={:.6} | ceil size={size_c} mean={:.6}", mean_f/25.0, mean_c/25.0);
    }
}
