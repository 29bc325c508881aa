//! Greedy versus beam search on a hand-written next-token table where the
//! locally best first token leads to a worse answer.

use chime::decoder::{beam_decode, greedy_decode, GenerationConfig};

fn main() -> chime::Result<()> {
    // tokens: 0 = end, 1 = "good", 2 = "tempting", 3 = "filler"
    let table = |prefix: &[u32]| -> Vec<f64> {
        match prefix {
            [] => vec![0.0, 0.4, 0.5, 0.1],
            [1] => vec![0.9, 0.05, 0.0, 0.05],
            [2] => vec![0.3, 0.3, 0.1, 0.3],
            _ => vec![0.7, 0.1, 0.1, 0.1],
        }
    };
    let model = (4usize, table);
    let cfg = GenerationConfig {
        max_len: 4,
        end_token: 0,
        ..GenerationConfig::default()
    };
    let g = greedy_decode(&model, &cfg)?;
    println!("greedy : {:?} logp {:.4} score {:.4}", g.tokens, g.log_prob, g.score);
    for width in [1, 2, 3, 8] {
        let hyps = beam_decode(&model, &GenerationConfig { beam_width: width, ..cfg.clone() })?;
        let best = &hyps[0];
        println!("beam {width}: {:?} logp {:.4} score {:.4}", best.tokens, best.log_prob, best.score);
    }
    Ok(())
}
