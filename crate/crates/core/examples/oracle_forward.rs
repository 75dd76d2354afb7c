//! Builds a lookup-table model by hand and inspects one forward pass.

use spread_rag::model::{DenoisingModel, TableOracleModel};
use spread_rag::sampling::argmax;
use spread_rag::tokenizer::{Tokenizer, MASK};

fn main() -> spread_rag::Result<()> {
    let tok = Tokenizer::fit(["the zorp likes mud"]);
    let mut model = TableOracleModel::new(tok.vocab_size(), 4, 32, MASK)?;
    let mud = tok.id("mud").unwrap();
    let mut row = vec![0.0; tok.vocab_size()];
    row[mud as usize] = 5.0;
    model.set_token_logits(MASK, row)?;

    let mut seq = tok.encode("the zorp likes");
    seq.push(MASK);
    let out = model.forward(&seq)?;
    let last = seq.len() - 1;
    println!("prediction at the masked slot: {}", tok.piece(argmax(out.logit_row(last)) as u32)?);
    println!("hidden state: {:?}", out.hidden_row(last));
    Ok(())
}
