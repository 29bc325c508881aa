//! Filters raw review-QA lines, builds a vocabulary and maps the survivors
//! to token ids.

use chime::data::{build_vocab, clean_record, FilterConfig, QaRecord, RawAnswer, RawRecord};

fn main() -> chime::Result<()> {
    let cfg = FilterConfig { passages: 2, ..FilterConfig::default() };
    let answer = |text: &str, up, total| RawAnswer { text: text.into(), helpful_votes: [up, total] };
    let raw = vec![
        RawRecord {
            id: Some("a1".into()),
            question_text: "Does it work with a Mac? See https://example.com".into(),
            review_snippets: vec!["Works fine on my MacBook.".into(), "Setup took two minutes.".into()],
            answers: vec![answer("Yes, plug and play.", 4, 5), answer("yes", 1, 1)],
            is_answerable: true,
            question_type: "descriptive".into(),
        },
        RawRecord {
            id: Some("a2".into()),
            question_text: "Is it blue?".into(),
            review_snippets: vec!["Nice color.".into(), "Blue.".into()],
            answers: vec![answer("yes", 1, 1)],
            is_answerable: true,
            question_type: "yesno".into(),
        },
    ];

    let mut kept = Vec::new();
    for r in &raw {
        match clean_record(r, &cfg) {
            Ok(c) => kept.push(c),
            Err(why) => println!("dropped {:?}: {why}", r.id),
        }
    }
    let corpus: Vec<String> = kept
        .iter()
        .flat_map(|r| {
            std::iter::once(r.question_text.clone())
                .chain(r.review_snippets.iter().cloned())
                .chain(r.answers.iter().map(|a| a.text.clone()))
        })
        .collect();
    let vocab = build_vocab(&corpus, 1000)?;
    println!("vocabulary: {} entries", vocab.len());
    for r in &kept {
        let rec = QaRecord::from_raw(r, &cfg, &vocab, "unnamed").expect("already cleaned");
        println!("{}: question {:?}", rec.id, vocab.decode(&rec.question));
        println!("  best answer: {:?}", vocab.decode(rec.best_answer()?));
    }
    Ok(())
}
