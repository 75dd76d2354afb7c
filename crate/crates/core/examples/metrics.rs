//! Scores one answer with every evaluation metric.

use spread_rag::metrics::{copy_rate, redundancy, rouge1, rougeL, rsd, token_prf, HashSentenceEncoder};

fn main() -> spread_rag::Result<()> {
    let gold = "the zorp likes mud.";
    let answer = "the zorp likes mud. the blick eats sand.";
    let context = "the zorp likes mud. the zorp hates rain.";
    let prf = token_prf(answer, gold);
    println!("precision {:.3} recall {:.3} f1 {:.3}", prf.precision, prf.recall, prf.f1);
    println!("rouge-1 f {:.3}  rouge-L f {:.3}", rouge1(answer, gold).f1, rougeL(answer, gold).f1);
    println!("copy rate {:.3}  redundancy {:.3}", copy_rate(answer, context), redundancy(answer));
    match rsd(answer, &HashSentenceEncoder::default())? {
        Some(d) => println!("semantic drift {d:.3}"),
        None => println!("semantic drift undefined for a single sentence"),
    }
    Ok(())
}
