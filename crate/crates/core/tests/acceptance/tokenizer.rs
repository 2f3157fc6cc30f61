//! Piece sequences for four clinical sentences under a general vocabulary
//! and an in-domain one that adds five abbreviations.

use ehdiscrim_core::vocab::{display_pieces, tokenize, Vocab};

use crate::Check;

const SENTENCES: [(&str, &str, &str); 4] = [
    (
        "免疫组化IHC测定TSHR阳性",
        "免, 疫, 组, 化, i, ##hc, 测, 定, ts, ##hr, 阳, 性",
        "免, 疫, 组, 化, ihc, 测, 定, tshr, 阳, 性",
    ),
    ("ECOG评分4分者", "eco, ##g, 评, 分, 4, 分, 者", "ecog, 评, 分, 4, 分, 者"),
    ("但不包括HIV/AIDS", "但, 不, 包, 括, hiv, /, ai, ##ds", "但, 不, 包, 括, hiv, /, aids"),
    (
        "胸部增强CT及头颅MRI",
        "胸, 部, 增, 强, ct, 及, 头, 颅, mr, ##i",
        "胸, 部, 增, 强, ct, 及, 头, 颅, mri",
    ),
];

const DOMAIN_TERMS: [&str; 5] = ["ihc", "tshr", "ecog", "aids", "mri"];

fn general_tokens() -> Vec<String> {
    let mut toks: Vec<String> = "免疫组化测定阳性评分者但不包括胸部增强及头颅".chars().map(String::from).collect();
    for t in ["i", "##hc", "ts", "##hr", "eco", "##g", "ai", "##ds", "mr", "##i", "hiv", "ct", "4", "/", "h", "##h", "##c", "##s"] {
        toks.push(t.to_string());
    }
    toks
}

pub fn run() -> Vec<Check> {
    let general = Vocab::with_tokens(general_tokens()).unwrap();
    let domain = Vocab::with_tokens(general_tokens().into_iter().chain(DOMAIN_TERMS.map(String::from))).unwrap();
    let lacks = DOMAIN_TERMS.iter().all(|t| !general.contains(t));
    let mut out = vec![Check::new(
        "vocabularies",
        lacks && DOMAIN_TERMS.iter().all(|t| domain.contains(t)),
        format!("general {} tokens without the five terms, in-domain {} tokens with them", general.len(), domain.len()),
    )];
    for (i, (text, want_general, want_domain)) in SENTENCES.iter().enumerate() {
        for (label, vocab, want) in [("general", &general, want_general), ("in-domain", &domain, want_domain)] {
            let got = display_pieces(&tokenize(text, vocab), vocab);
            out.push(Check::new(format!("sentence-{}/{label}", i + 1), got == *want, format!("{text} -> {got}")));
        }
    }
    out
}
