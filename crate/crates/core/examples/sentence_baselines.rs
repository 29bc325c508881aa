//! Random and retrieval sentence baselines over a handful of reviews.

use chime::baselines::{random_sentence_baseline, retrieval_sentence_baseline, BagOfWords};
use chime::data::{build_vocab, split_sentences};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> chime::Result<()> {
    let question = "how long does the battery last?";
    let reviews = [
        "Great speaker. The battery lasts about ten hours on a charge.",
        "Sound is muddy at high volume.",
        "Pairs quickly with my phone. Shipping was slow.",
    ];
    let sentences: Vec<String> = reviews.iter().flat_map(|r| split_sentences(r)).collect();
    let mut corpus: Vec<&str> = reviews.to_vec();
    corpus.push(question);
    let vocab = build_vocab(&corpus, 200)?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    println!("random   : {}", random_sentence_baseline(&reviews, &mut rng));
    let embedder = BagOfWords { vocab: &vocab };
    println!("retrieval: {}", retrieval_sentence_baseline(question, &sentences, &embedder));
    Ok(())
}
