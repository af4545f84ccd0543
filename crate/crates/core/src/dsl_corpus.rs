//! Prompt corpora for exercising the parser: random well-formed ASTs and a
//! fixed list of malformed prompts with the error each must produce.

use rand::Rng;

use crate::dsl::{CameraClause, DslError, MoveKind, ObjectClause, PromptAst, RelationClause, RelationKind};

const RESERVED: &[&str] = &["a", "scene", "lighting", "camera", "material"];
const WORD_TAIL: &[u8] = b"abcdefghijklmnopqrstuvwxyz0123456789_.-";

fn random_word<R: Rng>(rng: &mut R) -> String {
    loop {
        let len = rng.random_range(1..=8);
        let mut w = String::with_capacity(len);
        w.push(rng.random_range(b'a'..=b'z') as char);
        for _ in 1..len {
            w.push(WORD_TAIL[rng.random_range(0..WORD_TAIL.len())] as char);
        }
        if !RESERVED.contains(&w.as_str()) {
            return w;
        }
    }
}

fn words<R: Rng>(rng: &mut R, range: std::ops::RangeInclusive<usize>) -> Vec<String> {
    let n = rng.random_range(range);
    (0..n).map(|_| random_word(rng)).collect()
}

/// A random AST inside the grammar. Categories are distinct so that every
/// relation names its objects unambiguously.
pub fn random_ast<R: Rng>(rng: &mut R) -> PromptAst {
    let count = rng.random_range(1..=5);
    let mut objects: Vec<ObjectClause> = Vec::with_capacity(count);
    while objects.len() < count {
        let category = random_word(rng);
        if objects.iter().any(|o| o.category == category) {
            continue;
        }
        objects.push(ObjectClause {
            category,
            adjectives: words(rng, 0..=3),
            material: rng.random_bool(0.3).then(|| random_word(rng)),
        });
    }
    let mut relations = Vec::new();
    if count >= 2 {
        for _ in 0..rng.random_range(0..=3) {
            let subject = rng.random_range(0..count);
            let object = (subject + rng.random_range(1..count)) % count;
            let relation = RelationKind::ALL[rng.random_range(0..RelationKind::ALL.len())];
            relations.push(RelationClause {
                subject,
                relation,
                object,
            });
        }
    }
    let lighting_tags = if rng.random_bool(0.6) {
        words(rng, 1..=3)
    } else {
        Vec::new()
    };
    let camera = rng.random_bool(0.6).then(|| {
        let move_kind = MoveKind::ALL[rng.random_range(0..MoveKind::ALL.len())];
        let params = (0..rng.random_range(0..=3))
            .map(|_| {
                (
                    random_word(rng),
                    rng.random_range(-100_000i64..=100_000) as f64 / 1000.0,
                )
            })
            .collect();
        CameraClause { move_kind, params }
    });
    PromptAst {
        objects,
        relations,
        lighting_tags,
        camera,
    }
}

fn syntax(position: usize) -> DslError {
    DslError::SyntaxError {
        position,
        expected: Vec::new(),
        found: String::new(),
    }
}

/// Malformed prompts paired with the error they must raise. Syntax errors
/// are compared by variant and byte offset only.
pub fn malformed_cases() -> Vec<(&'static str, DslError)> {
    let s = |t: &str| t.to_string();
    vec![
        ("", DslError::EmptyPrompt),
        ("   \t\n", DslError::EmptyPrompt),
        ("cup", syntax(0)),
        ("scene a cup", syntax(6)),
        ("scene:", syntax(6)),
        ("scene: ;", syntax(7)),
        ("scene: a cup;", syntax(13)),
        ("scene: a cup # b", syntax(13)),
        ("scene: a cup material", syntax(21)),
        ("scene: a material cup", syntax(9)),
        ("scene: a cup material clay glazed", syntax(27)),
        ("scene: a cup | weather: rain", syntax(15)),
        ("scene: a cup | lighting:", syntax(24)),
        ("scene: a cup | lighting noon", syntax(24)),
        ("scene: a cup | camera: orbit span=fast", syntax(34)),
        ("scene: a cup | camera: orbit span 3", syntax(34)),
        ("scene: a cup | camera: orbit span=1e3", syntax(34)),
        ("scene: a cup | camera:", syntax(22)),
        ("scene: a cup | camera: static | lighting: noon", syntax(32)),
        ("scene: a cup; a plate; cup left_of plate; a fork", syntax(42)),
        (
            "scene: a cup; a plate; cup floats_above plate",
            DslError::UnknownRelation {
                position: 27,
                token: s("floats_above"),
            },
        ),
        (
            "scene: a cup; cup left_of plate",
            DslError::DanglingReference {
                position: 26,
                category: s("plate"),
            },
        ),
        (
            "scene: a cup; a plate; saucer next_to plate",
            DslError::DanglingReference {
                position: 23,
                category: s("saucer"),
            },
        ),
        (
            "scene: a cup; cup left_of cup",
            DslError::SelfRelation {
                position: 26,
                category: s("cup"),
            },
        ),
        (
            "scene: a cup | camera: whip_pan speed=2",
            DslError::UnknownMove {
                position: 23,
                token: s("whip_pan"),
            },
        ),
    ]
}

/// Compare an actual error with a corpus expectation.
pub fn error_matches(actual: &DslError, expected: &DslError) -> bool {
    match (actual, expected) {
        (DslError::SyntaxError { position: a, .. }, DslError::SyntaxError { position: b, .. }) => a == b,
        _ => actual == expected,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_prompt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn generated_prompts_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..200 {
            let ast = random_ast(&mut rng);
            let text = ast.to_string();
            assert_eq!(parse_prompt(&text).as_ref(), Ok(&ast), "{text}");
        }
    }

    #[test]
    fn malformed_prompts_raise_documented_errors() {
        for (text, expected) in malformed_cases() {
            let err = parse_prompt(text).expect_err(text);
            assert!(error_matches(&err, &expected), "{text}: got {err:?}, want {expected:?}");
        }
    }
}
