use std::fs;
use std::path::{Path, PathBuf};

use structparse::treeconv::{convert, ConstituencyTree, Lexicon};
use structparse::Error;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/treeconv")
}

fn cases() -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| {
            let name = e.unwrap().file_name().into_string().unwrap();
            name.strip_suffix(".tree.json").map(str::to_owned)
        })
        .collect();
    names.sort();
    names
}

#[test]
fn golden_corpus_converts_byte_exactly() {
    let dir = fixture_dir();
    let lex = Lexicon::load(dir.join("lexicon.json")).unwrap();
    let vocab = lex.vocabulary();
    let names = cases();
    assert!(names.len() >= 10, "only {} fixtures", names.len());
    for name in names {
        let tree = ConstituencyTree::load(dir.join(format!("{name}.tree.json"))).unwrap();
        let expected = fs::read_to_string(dir.join(format!("{name}.expected.json"))).unwrap();
        let got = convert(&tree, &lex).unwrap().to_json_string(&vocab).unwrap();
        assert_eq!(got, expected, "fixture {name}");
    }
}

#[test]
fn conversion_is_deterministic() {
    let dir = fixture_dir();
    let lex = Lexicon::load(dir.join("lexicon.json")).unwrap();
    let tree = ConstituencyTree::load(dir.join("11_four_entities.tree.json")).unwrap();
    let a = convert(&tree, &lex).unwrap();
    let b = convert(&tree, &lex).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sentence_without_known_nouns_is_empty() {
    let lex = Lexicon::load(fixture_dir().join("lexicon.json")).unwrap();
    let tree: ConstituencyTree = serde_json::from_str(
        r#"{"label":"S","children":[{"word":"grass","pos":"NN"},{"word":"grows","pos":"VBZ"}]}"#,
    )
    .unwrap();
    assert!(matches!(convert(&tree, &lex), Err(Error::EmptyTree)));
}
