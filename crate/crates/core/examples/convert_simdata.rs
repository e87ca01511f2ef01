//! Normalizes upstream similarity files to the common TSV.
//!
//! cargo run --example convert_simdata -- [format] [file] [lang]
//!
//! Without arguments it converts a few built-in lines of each format.

use mmlstm::data::Lang;
use mmlstm::simeval::convert::{convert, SimFormat};

const SAMPLES: [(SimFormat, &str); 4] = [
    (SimFormat::SimLex, "word1\tword2\tPOS\tSimLex999\nold\tnew\tA\t1.58\nsmart\tintelligent\tA\t9.2\n"),
    (SimFormat::Men, "sun-n sunlight-n 50.000000\nautomobile-n car-n 50.000000\n"),
    (SimFormat::WordSim, "Word 1,Word 2,Human (mean)\nlove,sex,6.77\ntiger,cat,7.35\n"),
    (SimFormat::Rg65, "cord;smile;0.02\nrooster;voyage;0.04\n"),
];

fn main() -> mmlstm::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if let [format, file, rest @ ..] = args.as_slice() {
        let lang = rest.first().and_then(|c| Lang::from_code(c)).unwrap_or(Lang::En);
        let text = std::fs::read_to_string(file).expect("readable input file");
        print!("{}", convert(format.parse()?, &text, lang)?.to_tsv());
        return Ok(());
    }
    for (format, text) in SAMPLES {
        let d = convert(format, text, Lang::En)?;
        println!("== {} ({} pairs)", d.name, d.len());
        print!("{}", d.to_tsv());
    }
    Ok(())
}
