//! Prints the encoder's attention pattern for a short instance: Part 1 is
//! fully visible, Part 2 sees Part 1 plus its own past, pads are hidden.

use chime::encoder::seq2seq_mask;

fn main() -> chime::Result<()> {
    let (n1, n2) = (5, 4);
    // last Part-1 slot and last Part-2 slot are padding
    let pad = [true, true, true, true, false, true, true, true, false];
    let m = seq2seq_mask(n1, n2, &pad)?;
    println!("rows = queries, cols = keys, '#' = may attend");
    for i in 0..m.rows {
        let row: String = (0..m.cols)
            .map(|j| {
                let c = if m.allowed(i, j) { '#' } else { '.' };
                if j == n1 - 1 { format!("{c}|") } else { c.to_string() }
            })
            .collect();
        println!("{i:>2} {row}");
        if i == n1 - 1 {
            println!("   {}", "-".repeat(m.cols + 1));
        }
    }
    Ok(())
}
