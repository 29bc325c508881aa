//! Sentence-level BLEU and ROUGE-L plus a corpus report.

use chime::metrics::{bleu_n, evaluate_pairs, rouge_l_f1, GoldAnswers, Prediction, Report};

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn main() -> chime::Result<()> {
    let cand = toks("the battery lasts about two days");
    let refs = vec![toks("battery lasts two days"), toks("the battery lasts around two full days")];
    for n in 1..=4 {
        println!("BLEU-{n}: {:.4}", bleu_n(&cand, &refs, n)?);
    }
    println!("ROUGE-L F1: {:.4}", rouge_l_f1(&cand, &refs));

    let gold = vec![
        GoldAnswers { id: "q1".into(), references: vec!["it fits a queen bed".into()] },
        GoldAnswers { id: "q2".into(), references: vec!["yes it is waterproof".into(), "waterproof".into()] },
    ];
    let preds = vec![
        Prediction { id: "q1".into(), text: "it fits a full bed".into() },
        Prediction { id: "q2".into(), text: "yes waterproof".into() },
    ];
    let report = evaluate_pairs("demo", &preds, &gold, 1)?;
    println!("{}", Report::to_table(&[report]));
    Ok(())
}
